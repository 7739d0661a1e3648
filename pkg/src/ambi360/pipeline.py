"""Stage wiring: representation -> embedding -> prediction -> volume -> sources.

The CLI and the closed-loop check both run through here. Stage outputs are
plain values so any stage can be swapped or rerun on its own.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .embedding import DEFAULT_SEED, EmbeddingParams, embed_audio, embed_visual, oracle_embed_visual, zero_audio_feature
from .encoder import DetectedSource
from .geometry import Projection, SphericalDirection
from .media_io import (
    AudioSignal,
    count_frame_seconds,
    ensure_dir,
    read_frame_second,
    read_volume,
    resample_linear,
    write_json,
    write_volume,
)
from .prediction import Model, PlanarProbMap, empty_scene_map, normalize_map, predict
from .volume import (
    DEFAULT_RESOLUTION,
    DegenerateDirectionError,
    ProbabilityVolume,
    SourceRegion,
    extract_sources,
    lift_to_volume,
    threshold,
)

log = logging.getLogger(__name__)

SOURCES_FORMAT = "ambi360-sources/1"
RUN_FORMAT = "ambi360-run/1"
DEFAULT_EPSILON = 0.5

PROJECTION_LABEL = {Projection.EQUIRECT: "EquiR", Projection.CUBEMAP: "Cubical"}


@dataclass(frozen=True)
class PipelineConfig:
    model: Model = Model.SSM
    projection: Projection = Projection.EQUIRECT
    seed: int = DEFAULT_SEED
    epsilon: float = DEFAULT_EPSILON
    resolution: int = DEFAULT_RESOLUTION
    oracle: bool = False
    normalize: bool = True
    jobs: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "model", Model(self.model))
        object.__setattr__(self, "projection", Projection.parse(self.projection))
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon {self.epsilon} outside [0, 1]")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


@dataclass
class SecondPrediction:
    second: int
    raw_map: PlanarProbMap
    volume: ProbabilityVolume  # lifted, not thresholded
    regions: list[SourceRegion]

    def sources(self) -> list[DetectedSource]:
        """Regions with a usable direction (degenerate centroids are dropped)."""
        out = []
        for r in self.regions:
            try:
                out.append(DetectedSource(r.direction, r.mass))
            except DegenerateDirectionError:
                log.warning("second %d: dropping region with centroid at the origin", self.second)
        return out


@dataclass
class ClipPrediction:
    config: PipelineConfig
    seconds: list[SecondPrediction] = field(default_factory=list)


def predict_second(frames_dir, audio: AudioSignal, k: int, cfg: PipelineConfig,
                   params: EmbeddingParams | None) -> SecondPrediction:
    fs = read_frame_second(frames_dir, k)
    if cfg.oracle:
        v, a = oracle_embed_visual(fs), zero_audio_feature()
    else:
        v, a = embed_visual(fs, params), embed_audio(audio.second(k), params)
    raw = predict(cfg.model, v, a, cfg.seed, cfg.projection)
    if cfg.normalize:
        m = normalize_map(raw, empty_scene_map(cfg.model, a, cfg.seed, cfg.projection))
    else:
        m = raw
    vol = lift_to_volume(m, cfg.projection, cfg.resolution, second_index=k)
    return SecondPrediction(k, raw, vol, extract_sources(threshold(vol, cfg.epsilon)))


def predict_clip(frames_dir, audio: AudioSignal, cfg: PipelineConfig) -> ClipPrediction:
    frames_dir = Path(frames_dir)
    n_frames = count_frame_seconds(frames_dir)
    audio = resample_linear(audio)
    if n_frames != audio.n_seconds:
        raise ValueError(f"{frames_dir} holds {n_frames} seconds of frames but audio lasts {audio.n_seconds} s")
    params = None if cfg.oracle else EmbeddingParams.from_seed(cfg.seed)
    run = lambda k: predict_second(frames_dir, audio, k, cfg, params)  # noqa: E731
    if cfg.jobs == 1:
        seconds = [run(k) for k in range(n_frames)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            seconds = list(pool.map(run, range(n_frames)))
    return ClipPrediction(cfg, seconds)


# ---------------------------------------------------------------------------
# on-disk layout of a prediction run


def volume_file(out_dir, k: int) -> Path:
    return Path(out_dir) / "volumes" / f"second_{k:04d}.f32"


def run_metadata(cfg: PipelineConfig, n_seconds: int) -> dict:
    return {
        "format": RUN_FORMAT,
        "model": cfg.model.value,
        "projection": cfg.projection.value,
        "seed": cfg.seed,
        "epsilon": cfg.epsilon,
        "resolution": cfg.resolution,
        "oracle_embedding": cfg.oracle,
        "normalize": cfg.normalize,
        "seconds": n_seconds,
    }


def sources_document(pred: ClipPrediction) -> dict:
    return {
        "format": SOURCES_FORMAT,
        "model": pred.config.model.value,
        "projection": pred.config.projection.value,
        "epsilon": pred.config.epsilon,
        "seconds": [
            {
                "second": s.second,
                "sources": [{"phi": d.direction.phi, "theta": d.direction.theta, "mass": d.mass}
                            for d in s.sources()],
            }
            for s in pred.seconds
        ],
    }


def write_prediction(pred: ClipPrediction, out_dir) -> None:
    out_dir = ensure_dir(out_dir)
    ensure_dir(out_dir / "volumes")
    for s in pred.seconds:
        write_volume(s.volume, volume_file(out_dir, s.second))
    write_json(out_dir / "sources.json", sources_document(pred))
    write_json(out_dir / "run.json", run_metadata(pred.config, len(pred.seconds)))


def read_sources(doc: dict) -> list[list[DetectedSource]]:
    if doc.get("format") != SOURCES_FORMAT:
        raise ValueError(f"not a sources file: format={doc.get('format')!r}")
    seconds = sorted(doc["seconds"], key=lambda e: e["second"])
    if [e["second"] for e in seconds] != list(range(len(seconds))):
        raise ValueError("sources file must list consecutive seconds from 0")
    return [
        [DetectedSource(SphericalDirection(s["phi"], s["theta"]), float(s["mass"])) for s in e["sources"]]
        for e in seconds
    ]


def read_prediction_volumes(out_dir) -> list[ProbabilityVolume]:
    """Volumes of a prediction run in second order (empty if none were written)."""
    vdir = Path(out_dir) / "volumes"
    if not vdir.is_dir():
        return []
    vols = [read_volume(p) for p in sorted(vdir.glob("second_*.f32"))]
    resolutions = {v.resolution for v in vols}
    if len(resolutions) > 1:
        raise ValueError(f"{out_dir}: volumes with mixed resolutions {sorted(resolutions)}")
    return vols
