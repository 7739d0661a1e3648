"""360-SSD, 360-OvErr and corpus aggregation.

360-SSD    Euclidean distance between matched predicted and ground-truth
           source centroids inside the radius-0.5 ball, so it lies in [0, 1].
360-OvErr  1 - |P & G| / |P | G| over the nonzero voxels of the two volumes
           after both are thresholded at the same epsilon.

Aggregates are population mean and standard deviation, computed with exact
(``math.fsum``) summation so they do not depend on clip order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .volume import BALL_RADIUS, ProbabilityVolume, SourceRegion, extract_sources, threshold

REPORT_FORMAT = "ambi360-eval/1"
_BALL_SLACK = 1e-12


def _as_point(c) -> np.ndarray:
    p = np.asarray(c, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError(f"expected a 3D point, got shape {p.shape}")
    if float(np.linalg.norm(p)) > BALL_RADIUS + _BALL_SLACK:
        raise ValueError(f"point {tuple(p)} lies outside the radius-0.5 ball")
    return p


def ssd(c_g, c_p) -> float:
    return float(np.linalg.norm(_as_point(c_g) - _as_point(c_p)))


def overlap_error(s_p: ProbabilityVolume, s_g: ProbabilityVolume, epsilon: float) -> float:
    if s_p.resolution != s_g.resolution:
        raise ValueError(f"resolution mismatch: {s_p.resolution} vs {s_g.resolution}")
    p = threshold(s_p, epsilon).nonzero_mask()
    g = threshold(s_g, epsilon).nonzero_mask()
    union = int(np.count_nonzero(p | g))
    if union == 0:
        return 0.0
    return 1.0 - int(np.count_nonzero(p & g)) / union


@dataclass
class MatchResult:
    pairs: list[tuple[int, int, float]]  # (pred index, gt index, distance)
    missed: list[int]  # unmatched ground-truth indices
    false_alarms: list[int]  # unmatched prediction indices


def match_sources(pred: Sequence[SourceRegion], gt: Sequence[SourceRegion]) -> MatchResult:
    """Greedy matching: repeatedly pair the globally closest unmatched centroids."""
    cand = sorted(
        (ssd(g.centroid, p.centroid), i, j)
        for i, p in enumerate(pred)
        for j, g in enumerate(gt)
    )
    used_p, used_g, pairs = set(), set(), []
    for dist, i, j in cand:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        pairs.append((i, j, dist))
    return MatchResult(
        pairs,
        [j for j in range(len(gt)) if j not in used_g],
        [i for i in range(len(pred)) if i not in used_p],
    )


# ---------------------------------------------------------------------------
# corpus evaluation


@dataclass
class ClipVolumes:
    """Predicted and ground-truth volumes of one clip, second by second."""

    video_id: str
    model: str  # row label part, e.g. "SsM"
    projection: str  # row label part, e.g. "EquiR"
    pred: list[ProbabilityVolume]
    gt: list[ProbabilityVolume]

    @property
    def row(self) -> str:
        return f"{self.model}-{self.projection}"


def summarize(values: Sequence[float]) -> dict:
    n = len(values)
    if n == 0:
        return {"mean": None, "std": None, "n": 0}
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return {"mean": mean, "std": math.sqrt(var), "n": n}


def evaluate_second(pred: ProbabilityVolume, gt: ProbabilityVolume, epsilon: float) -> dict:
    p_regions = extract_sources(threshold(pred, epsilon))
    g_regions = extract_sources(threshold(gt, epsilon))
    match = match_sources(p_regions, g_regions)
    return {
        "ssd": [d for _, _, d in match.pairs],
        "overlap_error": overlap_error(pred, gt, epsilon),
        "n_pred": len(p_regions),
        "n_gt": len(g_regions),
        "missed": len(match.missed),
        "false_alarms": len(match.false_alarms),
    }


ROW_ORDER = ("SsM-Cubical", "SsM-EquiR", "Att-Cubical", "Att-EquiR")


def _row_key(row: str) -> tuple:
    return (ROW_ORDER.index(row), "") if row in ROW_ORDER else (len(ROW_ORDER), row)


def aggregate(records: Sequence[dict], epsilons: Sequence[float]) -> dict:
    """Per row and epsilon: pooled-over-seconds and over-clip-means summaries."""
    out = {}
    for row in sorted({rec["row"] for rec in records}, key=_row_key):
        out[row] = {}
        for eps in epsilons:
            sel = [r for r in records if r["row"] == row and r["epsilon"] == eps]
            ssd_sec = [math.fsum(r["ssd"]) / len(r["ssd"]) for r in sel if r["ssd"]]
            ov_sec = [r["overlap_error"] for r in sel]
            by_clip_ssd, by_clip_ov = {}, {}
            for r in sel:
                by_clip_ov.setdefault(r["clip"], []).append(r["overlap_error"])
                if r["ssd"]:
                    by_clip_ssd.setdefault(r["clip"], []).append(math.fsum(r["ssd"]) / len(r["ssd"]))
            out[row][_eps_key(eps)] = {
                "ssd": summarize(ssd_sec),
                "overlap_error": summarize(ov_sec),
                "ssd_by_clip": summarize([summarize(v)["mean"] for _, v in sorted(by_clip_ssd.items())]),
                "overlap_error_by_clip": summarize([summarize(v)["mean"] for _, v in sorted(by_clip_ov.items())]),
            }
    return out


def _eps_key(eps: float) -> str:
    return repr(float(eps))


@dataclass
class EvalReport:
    epsilons: list[float]
    records: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not self.records

    @classmethod
    def from_records(cls, records: list[dict], epsilons: Sequence[float]) -> "EvalReport":
        eps = [float(e) for e in epsilons]
        return cls(eps, list(records), aggregate(records, eps))

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "std": "population",
            "empty": self.empty,
            "epsilons": self.epsilons,
            "records": self.records,
            "aggregates": self.aggregates,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        if doc.get("format") != REPORT_FORMAT:
            raise ValueError(f"not an evaluation report: format={doc.get('format')!r}")
        return cls([float(e) for e in doc["epsilons"]], list(doc["records"]), dict(doc["aggregates"]))

    def to_table(self) -> str:
        return format_table(self)


def evaluate_corpus(clips: Sequence[ClipVolumes], epsilons: Sequence[float]) -> EvalReport:
    eps_list = [float(e) for e in epsilons]
    for e in eps_list:
        if not 0.0 <= e <= 1.0:
            raise ValueError(f"epsilon {e} outside [0, 1]")
    records = []
    for clip in clips:
        if len(clip.pred) != len(clip.gt):
            raise ValueError(f"clip {clip.video_id}: {len(clip.pred)} predicted vs {len(clip.gt)} annotated seconds")
        for k, (p, g) in enumerate(zip(clip.pred, clip.gt)):
            if p.resolution != g.resolution:
                raise ValueError(f"clip {clip.video_id} second {k}: resolution mismatch "
                                 f"{p.resolution} vs {g.resolution}")
            second = p.second_index if p.second_index is not None else k
            for eps in eps_list:
                rec = {"row": clip.row, "clip": clip.video_id, "second": second, "epsilon": eps}
                rec.update(evaluate_second(p, g, eps))
                records.append(rec)
    return EvalReport.from_records(records, eps_list)


def _cell(s: dict) -> str:
    if s["n"] == 0:
        return "n/a"
    return f"{s['mean']:.2f} ± {s['std']:.2f}"


def format_table(report: EvalReport) -> str:
    """Fixed-width text table: rows are model-projection, columns epsilon per metric."""
    if report.empty:
        return "EMPTY REPORT: no evaluated seconds\n"
    eps = report.epsilons
    w_row, w_cell = 14, 13
    sub = "".join(f"{'ε=' + format(e, 'g'):>{w_cell}}" for e in eps)
    lines = [
        "# population std over seconds; *_by_clip summaries are in the JSON report",
        f"{'Models':<{w_row}}|{'360-SSD':^{w_cell * len(eps)}}|{'360-OvErr':^{w_cell * len(eps)}}",
        f"{'':<{w_row}}|{sub}|{sub}",
        "-" * (w_row + 2 + 2 * w_cell * len(eps)),
    ]
    for row, by_eps in report.aggregates.items():
        ssd_cells = "".join(f"{_cell(by_eps[_eps_key(e)]['ssd']):>{w_cell}}" for e in eps)
        ov_cells = "".join(f"{_cell(by_eps[_eps_key(e)]['overlap_error']):>{w_cell}}" for e in eps)
        lines.append(f"{row:<{w_row}}|{ssd_cells}|{ov_cells}")
    return "\n".join(lines) + "\n"
