"""Search the SsM/Att sub-stream constants used by ``ambi360.prediction``.

Untrained heads do not localize anything. For a given user seed (default 42)
this script scans stream constants and scores each head on unit channel-0
impulses (zero audio), one per cell. A stream qualifies when every impulse
raises its own cell the most above the empty-scene map. Qualifying streams
are scored by the worst deviation: after baseline normalization, lifting,
thresholding at each ``--epsilons`` value and extraction, the angle from the
heaviest region's direction to the farthest point of the impulse cell,
divided by that cell's angular diameter, maximized over cells, epsilons and
both projections. The scan stops at the first stream scoring at most
``--max-deviation`` and otherwise reports the best one seen.

    python tools/select_head_streams.py --head ssm --start 0x55D4000000000001
"""

from __future__ import annotations

import argparse

import numpy as np
from scipy.ndimage import label
from scipy.sparse.csgraph import connected_components
from scipy.special import expit, softmax

from ambi360.embedding import GRID
from ambi360.geometry import Projection, cell_angular_diameter, normalized_to_vectors
from ambi360.prediction import ATT_HIDDEN, SSM_CHANNELS, AttParams, SsmParams
from ambi360.prng import GOLDEN_GAMMA, SplitMix64, derive_seed
from ambi360.volume import ball_mask, ray_cells, voxel_centers

EPSILONS = (0.5,)


def _conv_batch(x, w, b):
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    return np.tensordot(win, w, axes=([3, 4, 5], [1, 2, 3])) + b


def ssm_impulse_responses(p: SsmParams, cells=None) -> np.ndarray:
    """(n, 7, 7) SsM maps for unit channel-0 impulses at ``cells`` (default all 49)."""
    cells = np.arange(GRID * GRID) if cells is None else np.asarray(cells)
    x = np.zeros((len(cells), GRID, GRID, 1))
    x[np.arange(len(cells)), cells // GRID, cells % GRID, 0] = 1.0
    (w1, b1), (w2, b2), (w3, b3) = p.convs
    h = np.maximum(_conv_batch(x, w1[:, :1], b1), 0.0)
    h = np.maximum(_conv_batch(h, w2, b2), 0.0)
    out = _conv_batch(h, w3, b3)[..., 0]
    return expit(p.gain * out + p.bias)


def att_impulse_responses(p: AttParams) -> np.ndarray:
    on = np.tanh(p.visual_weight[:, 0] + p.visual_bias) @ p.omega
    off = np.tanh(p.visual_bias) @ p.omega
    n = GRID * GRID
    scores = np.full((n, n), off)
    scores[np.arange(n), np.arange(n)] = on
    return softmax(scores, axis=1).reshape(n, GRID, GRID)


def _uniform_at(seed: int, offsets: np.ndarray) -> np.ndarray:
    """Values the seeded stream would produce at the given 0-based positions."""
    k = offsets.astype(np.uint64) + np.uint64(1)
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + k * np.uint64(GOLDEN_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    u = (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
    return -0.05 + 0.1 * u


def ssm_params_channel0(rng_seed: int) -> SsmParams:
    """SsM params with only the channel-0 slice of the first conv populated
    (all an impulse probe can see); identical values to ``SsmParams.from_seed``."""
    c0, c1, c2, c3 = SSM_CHANNELS
    o = np.arange(c1)[:, None] * (c0 * 9) + np.arange(9)[None, :]
    w1 = np.zeros((c1, c0, 3, 3))
    w1[:, 0] = _uniform_at(rng_seed, o.ravel()).reshape(c1, 3, 3)
    pos = c1 * c0 * 9
    w2 = _uniform_at(rng_seed, np.arange(pos, pos + c2 * c1 * 9)).reshape(c2, c1, 3, 3)
    pos += c2 * c1 * 9
    w3 = _uniform_at(rng_seed, np.arange(pos, pos + c3 * c2 * 9)).reshape(c3, c2, 3, 3)
    pos += c3 * c2 * 9
    gain = float(_uniform_at(rng_seed, np.arange(pos, pos + 1))[0])
    convs = ((w1, np.zeros(c1)), (w2, np.zeros(c2)), (w3, np.zeros(c3)))
    return SsmParams(convs, gain, 0.0)


def worst_ratio(resp: np.ndarray, base: float, cells=None) -> float:
    """Largest (best off-cell evidence) / (own-cell evidence) over all impulses.

    Evidence is the map minus the empty-scene map ``base``, clipped at zero,
    which is what the pipeline thresholds. Below ``eps`` every impulse keeps
    only its own cell at threshold ``eps``; inf if some impulse lacks a peak.
    """
    cells = np.arange(len(resp)) if cells is None else np.asarray(cells)
    ev = resp.reshape(len(resp), -1) - base
    rows = np.arange(len(ev))
    own = ev[rows, cells]
    if np.any(own <= 0):
        return np.inf
    other = ev.copy()
    other[rows, cells] = 0.0
    return float(np.max(np.maximum(other, 0.0).max(axis=1) / own))


def _cell_points(k: int, projection: Projection, samples: int = 9) -> np.ndarray:
    eps = 1e-9
    row, col = divmod(k, GRID)
    xs = np.linspace(col / GRID, (col + 1) / GRID - eps, samples)
    ys = np.linspace(row / GRID, (row + 1) / GRID - eps, samples)
    gx, gy = np.meshgrid(xs, ys)
    return normalized_to_vectors(gx.ravel(), gy.ravel(), projection)


class CellLift:
    """Exact cell-level model of normalize -> lift -> threshold -> extract.

    A lifted volume is constant on each cell's cone of voxels, so regions,
    masses and centroids follow from the cones' connected pieces (an atlas
    cell that straddles two faces can fall apart), their voxel counts and
    center sums, and which pieces touch under 26-connectivity.
    """

    def __init__(self, projection: Projection, resolution: int = 64):
        r, c = ray_cells(resolution, projection, (GRID, GRID))
        ball = ball_mask(resolution)
        cells = np.full((resolution,) * 3, -1)
        cells[ball] = r * GRID + c
        pieces = np.full(cells.shape, -1)
        self.piece_cell = []
        for k in range(GRID * GRID):
            lab, n = label(cells == k, structure=np.ones((3, 3, 3), bool))
            pieces[lab > 0] = lab[lab > 0] - 1 + len(self.piece_cell)
            self.piece_cell += [k] * n
        self.piece_cell = np.array(self.piece_cell)
        n = len(self.piece_cell)
        flat, pts = pieces[ball], voxel_centers(resolution)[ball]
        self.count = np.bincount(flat, minlength=n).astype(float)
        self.possum = np.stack([np.bincount(flat, pts[:, k], minlength=n) for k in range(3)], axis=1)
        self.adjacent = np.zeros((n, n), bool)
        R = resolution
        for dz, dy, dx in [o for o in np.ndindex(3, 3, 3) if o > (1, 1, 1)]:
            a = pieces[max(0, 1 - dz):R + min(0, 1 - dz), max(0, 1 - dy):R + min(0, 1 - dy),
                       max(0, 1 - dx):R + min(0, 1 - dx)]
            b = pieces[max(0, dz - 1):R + min(0, dz - 1), max(0, dy - 1):R + min(0, dy - 1),
                       max(0, dx - 1):R + min(0, dx - 1)]
            both = (a >= 0) & (b >= 0) & (a != b)
            self.adjacent[a[both], b[both]] = True
        self.adjacent |= self.adjacent.T
        self.cell_points = [_cell_points(k, projection) for k in range(GRID * GRID)]
        self.diameter = np.array([cell_angular_diameter(k // GRID, k % GRID, (GRID, GRID), projection)
                                  for k in range(GRID * GRID)])

    def heaviest_direction(self, values: np.ndarray, eps: float) -> np.ndarray | None:
        """Direction of the heaviest region for per-cell ``values`` (49,)."""
        keep = np.flatnonzero(values[self.piece_cell] > eps)
        if len(keep) == 0:
            return None
        v = values[self.piece_cell[keep]]
        _, comp = connected_components(self.adjacent[np.ix_(keep, keep)], directed=False)
        mass = np.bincount(comp, v * self.count[keep])
        top = comp == np.argmax(mass)
        c = (v[top, None] * self.possum[keep[top]]).sum(axis=0)
        return c / np.linalg.norm(c)

    def worst_deviation(self, resp: np.ndarray, base: float, epsilons) -> float:
        """Worst (farthest point of the impulse cell from the heaviest region's
        direction) / (cell diameter) over all impulses and epsilons.

        At most 1 means the extracted direction lies within one cell diameter
        of every direction the cell contains. inf if an impulse does not
        raise its own cell the most.
        """
        ev = resp.reshape(len(resp), -1) - base
        worst = 0.0
        for k, e in enumerate(ev):
            if np.argmax(e) != k or e[k] <= 0:
                return np.inf
            values = np.clip(e / e[k], 0.0, 1.0)
            for eps in epsilons:
                d = self.heaviest_direction(values, eps)
                err = np.arccos(np.clip(self.cell_points[k] @ d, -1.0, 1.0)).max()
                worst = max(worst, err / self.diameter[k])
        return worst


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--head", choices=["ssm", "att"], default="ssm")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--start", type=lambda s: int(s, 0), default=0x55D4000000000001)
    ap.add_argument("--tries", type=int, default=1_000_000)
    ap.add_argument("--max-deviation", type=float, default=1.0)
    ap.add_argument("--epsilons", type=lambda s: tuple(float(e) for e in s.split(",")), default=EPSILONS)
    args = ap.parse_args()

    lifts = [CellLift(p) for p in Projection]
    center = np.array([GRID * GRID // 2])
    best = (np.inf, None)
    for i in range(args.tries):
        stream = args.start + i
        rng_seed = derive_seed(args.seed, stream)
        if args.head == "ssm":
            p = ssm_params_channel0(rng_seed)
            # the center impulse sees the whole kernel, so it rejects most streams cheaply
            if worst_ratio(ssm_impulse_responses(p, center), 0.5, center) >= 1.0:
                continue
            resp, base = ssm_impulse_responses(p), 0.5
        else:
            rng = SplitMix64(rng_seed)
            l_v, l_a = rng.uniform((ATT_HIDDEN, 512)), rng.uniform((ATT_HIDDEN, 128))
            zeros = np.zeros(ATT_HIDDEN)
            p = AttParams(l_v, zeros, l_a, zeros, rng.uniform(ATT_HIDDEN))
            resp, base = att_impulse_responses(p), 1.0 / (GRID * GRID)
        if worst_ratio(resp, base) >= 1.0:
            continue
        dev = max(lift.worst_deviation(resp, base, args.epsilons) for lift in lifts)
        print(f"try {i}: stream {stream:#018x} worst deviation {dev:.4f}", flush=True)
        if dev < best[0]:
            best = (dev, stream)
        if dev <= args.max_deviation:
            break
    print(f"selected stream {best[1]:#018x} worst deviation {best[0]:.4f}")


if __name__ == "__main__":
    main()
