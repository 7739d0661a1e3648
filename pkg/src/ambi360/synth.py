"""Synthetic 360 scenes with known source directions.

Each source is a white Gaussian-falloff blob on a black background plus a sine
tone in the mono mix. The background is exactly zero so that the oracle
visual feature carries nothing but the blobs. The annotation stores the projected blob centers, so
the whole pipeline can be checked against analytic ground truth.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import (
    ImageDims,
    Projection,
    SphericalDirection,
    angular_distance,
    cell_angular_diameter,
    cell_index,
    pixel_grid_vectors,
    sphere_to_pixel,
    vectors_to_normalized,
)
from .media_io import (
    FRAMES_PER_SECOND,
    TARGET_RATE,
    AnnotatedSecond,
    ClipAnnotation,
    ensure_dir,
    frame_path,
    read_wav,
    write_annotations,
    write_ppm,
    write_wav,
)

MAX_SOURCES = 4
BACKGROUND = 0
DEFAULT_RADIUS_DEG = 8.0
DEFAULT_AMPLITUDE = 0.25
DITHER = 1e-4
MAP_SHAPE = (7, 7)


@dataclass
class SourceSpec:
    trajectory: list[SphericalDirection]  # one per second, or a single static one
    frequency: float
    radius: float = math.radians(DEFAULT_RADIUS_DEG)  # Gaussian falloff scale
    amplitude: float = DEFAULT_AMPLITUDE

    def direction_at(self, second: int) -> SphericalDirection:
        return self.trajectory[0] if len(self.trajectory) == 1 else self.trajectory[second]


@dataclass
class SceneSpec:
    projection: Projection
    dims: ImageDims
    duration: int
    sources: list[SourceSpec] = field(default_factory=list)
    sample_rate: int = TARGET_RATE
    video_id: str = "synth"

    def __post_init__(self) -> None:
        self.projection = Projection.parse(self.projection)
        if self.duration < 1:
            raise ValueError("duration must be at least one second")
        if len(self.sources) > MAX_SOURCES:
            raise ValueError(f"at most {MAX_SOURCES} sources, got {len(self.sources)}")
        freqs = [s.frequency for s in self.sources]
        if len(set(freqs)) != len(freqs):
            raise ValueError("source frequencies must be distinct")
        for s in self.sources:
            if not 0 < s.frequency < self.sample_rate / 2:
                raise ValueError(f"frequency {s.frequency} Hz outside (0, Nyquist)")
            if s.radius <= 0:
                raise ValueError("blob radius must be positive")
            if len(s.trajectory) not in (1, self.duration):
                raise ValueError("trajectory needs one direction or one per second")
        for k in range(self.duration):
            for a, b in combinations(self.sources, 2):
                gap = angular_distance(a.direction_at(k), b.direction_at(k))
                if gap < a.radius + b.radius:
                    raise ValueError(f"second {k}: blobs overlap ({math.degrees(gap):.1f} deg apart)")


def _direction_from_json(d: dict) -> SphericalDirection:
    return SphericalDirection.from_degrees(float(d["phi_deg"]), float(d["theta_deg"]))


def scene_from_dict(doc: dict) -> SceneSpec:
    try:
        sources = []
        for s in doc.get("sources", []):
            if "trajectory" in s:
                traj = [_direction_from_json(d) for d in s["trajectory"]]
            else:
                traj = [_direction_from_json(s["direction"])]
            sources.append(SourceSpec(
                traj,
                float(s["frequency"]),
                math.radians(float(s.get("radius_deg", DEFAULT_RADIUS_DEG))),
                float(s.get("amplitude", DEFAULT_AMPLITUDE)),
            ))
        return SceneSpec(
            Projection.parse(doc["projection"]),
            ImageDims(int(doc["width"]), int(doc["height"])),
            int(doc["duration"]),
            sources,
            int(doc.get("sample_rate", TARGET_RATE)),
            str(doc.get("video_id", "synth")),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"invalid scene spec: {exc}") from None


def read_scene(path) -> SceneSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None
    return scene_from_dict(doc)


def scene_to_dict(spec: SceneSpec) -> dict:
    def deg(d: SphericalDirection) -> dict:
        return {"phi_deg": math.degrees(d.phi), "theta_deg": math.degrees(d.theta)}

    return {
        "projection": spec.projection.value,
        "width": spec.dims.width,
        "height": spec.dims.height,
        "duration": spec.duration,
        "sample_rate": spec.sample_rate,
        "video_id": spec.video_id,
        "sources": [
            {
                "trajectory": [deg(d) for d in s.trajectory],
                "frequency": s.frequency,
                "radius_deg": math.degrees(s.radius),
                "amplitude": s.amplitude,
            }
            for s in spec.sources
        ],
    }


@dataclass
class SceneFiles:
    root: Path

    @property
    def frames_dir(self) -> Path:
        return self.root / "frames"

    @property
    def audio(self) -> Path:
        return self.root / "audio.wav"

    @property
    def annotations(self) -> Path:
        return self.root / "annotations.json"


def render_frame(spec: SceneSpec, second: int, vecs: np.ndarray | None = None) -> np.ndarray:
    if vecs is None:
        vecs = pixel_grid_vectors(spec.dims, spec.projection)
    glow = np.zeros(vecs.shape[:2])
    for s in spec.sources:
        cos = np.clip(vecs @ s.direction_at(second).to_vector(), -1.0, 1.0)
        ang = np.arccos(cos)
        glow = np.maximum(glow, np.exp(-0.5 * (ang / s.radius) ** 2))
    lum = np.round(BACKGROUND + (255 - BACKGROUND) * glow).astype(np.uint8)
    return np.repeat(lum[..., None], 3, axis=2)


def render_audio(spec: SceneSpec, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = spec.duration * spec.sample_rate
    t = np.arange(n) / spec.sample_rate
    out = np.zeros(n)
    for s in spec.sources:
        phase = rng.uniform(0.0, 2.0 * math.pi)
        out += s.amplitude * np.sin(2.0 * math.pi * s.frequency * t + phase)
    out += DITHER * rng.standard_normal(n)
    return np.clip(out, -1.0, 1.0)


def scene_annotation(spec: SceneSpec) -> ClipAnnotation:
    seconds = [
        AnnotatedSecond(k, [sphere_to_pixel(s.direction_at(k), spec.dims, spec.projection) for s in spec.sources])
        for k in range(spec.duration)
    ]
    return ClipAnnotation(spec.video_id, spec.projection, spec.dims, seconds)


def render_scene(spec: SceneSpec, seed: int, out_dir) -> SceneFiles:
    """Write frames/frame_%06d.ppm, audio.wav and annotations.json."""
    files = SceneFiles(ensure_dir(out_dir))
    ensure_dir(files.frames_dir)
    vecs = pixel_grid_vectors(spec.dims, spec.projection)
    for k in range(spec.duration):
        frame = render_frame(spec, k, vecs)
        for i in range(FRAMES_PER_SECOND):
            write_ppm(frame_path(files.frames_dir, k * FRAMES_PER_SECOND + i), frame)
    write_wav(files.audio, render_audio(spec, seed), spec.sample_rate)
    write_annotations(scene_annotation(spec), files.annotations)
    return files


# ---------------------------------------------------------------------------
# closed loop


def localization_bound(d: SphericalDirection, projection: Projection, shape=MAP_SHAPE) -> float:
    """Angular diameter of the coarse map cell containing ``d``."""
    xn, yn = vectors_to_normalized(d.to_vector()[None, :], projection)
    r, c = cell_index(xn, yn, shape)
    return cell_angular_diameter(int(r[0]), int(c[0]), shape, projection)


@dataclass
class SecondCheck:
    second: int
    expected: list[SphericalDirection]
    found: list[SphericalDirection]
    errors: list[float]  # radians, per expected source (inf if unmatched)
    bounds: list[float]

    @property
    def passed(self) -> bool:
        return all(e <= b for e, b in zip(self.errors, self.bounds))


@dataclass
class ClosedLoopReport:
    seconds: list[SecondCheck]

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.seconds)

    @property
    def max_error(self) -> float:
        return max((e for s in self.seconds for e in s.errors), default=0.0)


def _match_directions(expected: Sequence[SphericalDirection], found: Sequence[SphericalDirection]) -> list[float]:
    errors, left = [], list(found)
    for d in expected:
        if not left:
            errors.append(math.inf)
            continue
        dist = [angular_distance(d, f) for f in left]
        i = int(np.argmin(dist))
        errors.append(dist[i])
        left.pop(i)
    return errors


def closed_loop_check(spec: SceneSpec, scene_dir, model="ssm", seed: int = 42,
                      epsilon: float = 0.5, resolution: int = 64, render_seed: int = 0) -> ClosedLoopReport:
    """Render ``spec`` into ``scene_dir``, run the oracle-embedding pipeline and
    compare extracted directions (heaviest regions first) with the truth."""
    from .pipeline import PipelineConfig, predict_clip

    files = render_scene(spec, render_seed, scene_dir)
    cfg = PipelineConfig(model=model, projection=spec.projection, seed=seed, epsilon=epsilon,
                         resolution=resolution, oracle=True)
    pred = predict_clip(files.frames_dir, read_wav(files.audio), cfg)
    checks = []
    for s in pred.seconds:
        expected = [src.direction_at(s.second) for src in spec.sources]
        found = [d.direction for d in s.sources()][: max(len(expected), 1)]
        checks.append(SecondCheck(
            s.second, expected, found, _match_directions(expected, found),
            [localization_bound(d, spec.projection) for d in expected],
        ))
    return ClosedLoopReport(checks)
