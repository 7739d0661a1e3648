"""Command line front end.

    ambi360 synth SCENE.json --out DIR
    ambi360 predict --frames DIR --audio WAV --out DIR [--model ssm|att] ...
    ambi360 encode --audio WAV (--sources JSON | --annotations JSON) --out WAV [--ambix]
    ambi360 evaluate --pred DIR --annotations JSON [...] --out DIR [--epsilons 0.6,0.5,0.4]
    ambi360 info [PATH]

Exit codes: 0 success, 1 internal failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .embedding import DEFAULT_SEED
from .encoder import DetectedSource, encode_clip
from .geometry import Projection, pixel_to_sphere
from .media_io import (
    MediaError,
    ensure_dir,
    read_annotations,
    read_volume,
    read_wav,
    read_wav_frames,
    write_bformat_wav,
    write_json,
)
from .metrics import REPORT_FORMAT, ClipVolumes, EvalReport, evaluate_corpus
from .pipeline import (
    DEFAULT_EPSILON,
    PROJECTION_LABEL,
    RUN_FORMAT,
    PipelineConfig,
    predict_clip,
    read_prediction_volumes,
    read_sources,
    write_prediction,
)
from .prediction import Model
from .synth import read_scene, render_scene
from .volume import DEFAULT_RESOLUTION, DEFAULT_SPREAD_DEG, annotation_to_volume

log = logging.getLogger("ambi360")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
TABLE_EPSILONS = "0.6,0.5,0.4"


class UsageError(Exception):
    pass


def _epsilon(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"epsilon {value} outside [0, 1]")
    return value


def _epsilon_list(text: str) -> list[float]:
    return [_epsilon(t) for t in text.split(",") if t.strip()]


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


@dataclass(frozen=True)
class RunConfig:
    """Validated flags of one invocation."""

    command: str
    args: argparse.Namespace

    def pipeline(self) -> PipelineConfig:
        a = self.args
        return PipelineConfig(model=a.model, projection=a.projection, seed=a.seed, epsilon=a.epsilon,
                              resolution=a.resolution, oracle=a.oracle_embedding,
                              normalize=not a.no_normalize, jobs=a.jobs)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ambi360", description="First-order Ambisonics for 360 video.")
    ap.add_argument("--verbose", "-v", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic scene")
    p.add_argument("spec", type=Path, help="scene spec JSON")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)

    p = sub.add_parser("predict", help="localize sources and write probability volumes")
    p.add_argument("--frames", type=Path, required=True, help="directory of frame_%%06d.ppm")
    p.add_argument("--audio", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--projection", choices=[x.value for x in Projection], default="equirect")
    p.add_argument("--model", choices=[m.value for m in Model], default="ssm")
    p.add_argument("--epsilon", type=_epsilon, default=DEFAULT_EPSILON)
    p.add_argument("--resolution", type=_positive_int, default=DEFAULT_RESOLUTION)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--oracle-embedding", action="store_true",
                   help="luminance oracle for the visual map and a neutral audio vector")
    p.add_argument("--no-normalize", action="store_true",
                   help="threshold the raw head output instead of its rise over the empty-scene map")
    p.add_argument("--jobs", type=_positive_int, default=1)

    p = sub.add_parser("encode", help="encode B-format from detected or annotated sources")
    p.add_argument("--audio", type=Path, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--sources", type=Path, help="sources.json written by predict")
    src.add_argument("--annotations", type=Path, help="ground-truth annotation JSON")
    p.add_argument("--out", type=Path, required=True, help="output 4-channel WAV")
    p.add_argument("--ambix", action="store_true", help="write W,Y,Z,X with W scaled by sqrt(2)")

    p = sub.add_parser("evaluate", help="score predictions with 360-SSD and 360-OvErr")
    p.add_argument("--pred", type=Path, action="append", required=True, help="predict output dir (repeatable)")
    p.add_argument("--annotations", type=Path, action="append", required=True,
                   help="annotation JSON paired with each --pred, in order")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epsilons", type=_epsilon_list, default=_epsilon_list(TABLE_EPSILONS))
    p.add_argument("--spread-deg", type=float, default=DEFAULT_SPREAD_DEG)

    p = sub.add_parser("info", help="print conventions or describe a file")
    p.add_argument("path", type=Path, nargs="?")
    return ap


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(cfg: RunConfig) -> int:
    a = cfg.args
    spec = read_scene(a.spec)
    files = render_scene(spec, a.seed, a.out)
    print(f"scene written to {files.root} ({spec.duration} s, {len(spec.sources)} sources)")
    return EXIT_OK


def cmd_predict(cfg: RunConfig) -> int:
    a = cfg.args
    if not a.frames.is_dir():
        raise UsageError(f"frames directory not found: {a.frames}")
    pcfg = cfg.pipeline()
    pred = predict_clip(a.frames, read_wav(a.audio), pcfg)
    write_prediction(pred, a.out)
    for s in pred.seconds:
        desc = ", ".join(f"({math.degrees(d.direction.phi):.1f}, {math.degrees(d.direction.theta):.1f}) deg"
                         for d in s.sources())
        print(f"second {s.second}: N={len(s.regions)} {desc}")
    return EXIT_OK


def _annotation_sources(path: Path, n_seconds: int) -> list[list[DetectedSource]]:
    ann = read_annotations(path)
    last = max((s.second_index for s in ann.seconds), default=-1)
    if last >= n_seconds:
        raise UsageError(f"{path} annotates second {last} but the audio lasts {n_seconds} s")
    return [
        [DetectedSource(pixel_to_sphere(p, ann.dims, ann.projection), 1.0) for p in ann.sources_at(k)]
        for k in range(n_seconds)
    ]


def cmd_encode(cfg: RunConfig) -> int:
    a = cfg.args
    audio = read_wav(a.audio)
    if a.sources is not None:
        per_second = read_sources(json.loads(a.sources.read_text()))
        if len(per_second) != audio.n_seconds:
            raise UsageError(f"{a.sources} covers {len(per_second)} s but the audio lasts {audio.n_seconds} s")
    else:
        per_second = _annotation_sources(a.annotations, audio.n_seconds)
    b = encode_clip(audio, per_second)
    write_bformat_wav(b, a.out, ambix=a.ambix)
    print(f"wrote {a.out} ({'AmbiX W,Y,Z,X' if a.ambix else 'B-format W,X,Y,Z'}, {len(b)} samples)")
    print("sources per second: " + " ".join(f"{k}:{len(s)}" for k, s in enumerate(per_second)))
    return EXIT_OK


def _row_labels(meta: dict) -> tuple[str, str]:
    return Model(meta["model"]).label, PROJECTION_LABEL[Projection.parse(meta["projection"])]


def cmd_evaluate(cfg: RunConfig) -> int:
    a = cfg.args
    if len(a.pred) != len(a.annotations):
        raise UsageError("--pred and --annotations must be given the same number of times")
    clips = []
    spread = math.radians(a.spread_deg)
    for pred_dir, ann_path in zip(a.pred, a.annotations):
        if not pred_dir.is_dir():
            raise UsageError(f"prediction directory not found: {pred_dir}")
        vols = read_prediction_volumes(pred_dir)
        if not vols:
            log.warning("%s holds no volumes; skipped", pred_dir)
            continue
        meta = json.loads((pred_dir / "run.json").read_text())
        if meta.get("format") != RUN_FORMAT:
            raise UsageError(f"{pred_dir}/run.json is not a prediction run")
        ann = read_annotations(ann_path)
        gt = [
            annotation_to_volume(ann.sources_at(v.second_index), ann.projection, ann.dims,
                                 v.resolution, spread, v.second_index)
            for v in vols
        ]
        model, proj = _row_labels(meta)
        clips.append(ClipVolumes(ann.video_id, model, proj, vols, gt))
    report = evaluate_corpus(clips, a.epsilons)
    out = ensure_dir(a.out)
    write_json(out / "report.json", report.to_dict())
    table = report.to_table()
    (out / "report.txt").write_text(table)
    print(table, end="")
    return EXIT_OK


def cmd_info(cfg: RunConfig) -> int:
    path = cfg.args.path
    if path is None:
        print(f"ambi360 {__version__}")
        print("axes: X front, Y left, Z up; phi in (-pi, pi], theta in [-pi/2, pi/2]")
        print("B-format: W = s/sqrt(2), X/Y/Z first order; output channel order W,X,Y,Z (--ambix: W,Y,Z,X)")
        print("projections: equirect; cubemap3x2 with faces front,right,back / left,top,bottom")
        print(f"defaults: seed {DEFAULT_SEED}, epsilon {DEFAULT_EPSILON}, resolution {DEFAULT_RESOLUTION}, "
              f"spread {DEFAULT_SPREAD_DEG} deg")
        return EXIT_OK
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    if path.suffix == ".wav":
        samples, rate = read_wav_frames(path)
        print(f"{path}: WAV {samples.shape[1]} ch, {rate} Hz, {samples.shape[0]} samples "
              f"({samples.shape[0] / rate:.3f} s)")
    elif path.suffix == ".f32":
        v = read_volume(path)
        print(f"{path}: volume R={v.resolution}, projection={v.projection.value if v.projection else None}, "
              f"second={v.second_index}, nonzero={int((v.data != 0).sum())}")
    elif path.suffix == ".json":
        doc = json.loads(path.read_text())
        kind = doc.get("format", "annotation" if "video_id" in doc else "scene" if "duration" in doc else "unknown")
        print(f"{path}: {kind}")
        if kind == "annotation":
            ann = read_annotations(path)
            print(f"  {ann.video_id}: {ann.projection.value} {ann.dims.width}x{ann.dims.height}, "
                  f"{len(ann.seconds)} seconds")
        elif kind == REPORT_FORMAT:
            print(EvalReport.from_dict(doc).to_table(), end="")
    else:
        raise UsageError(f"don't know how to describe {path}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "predict": cmd_predict,
    "encode": cmd_encode,
    "evaluate": cmd_evaluate,
    "info": cmd_info,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = RunConfig(args.command, args)
    try:
        return COMMANDS[args.command](cfg)
    except (UsageError, FileNotFoundError, MediaError, ValueError) as exc:
        print(f"ambi360 {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.exception("internal failure")
        print(f"ambi360 {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
