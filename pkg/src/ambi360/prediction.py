"""SsM and Att prediction heads: (visual map, audio vector) -> 7x7 planar map.

SsM  tile audio over the grid, concatenate with the visual map, three 3x3
     convolutions (ReLU, ReLU, linear), a scalar affine, then a sigmoid.
Att  per cell, omega . tanh(l_v(v_i)) plus a shared audio bias
     mean(l_a(a)); softmax over the 49 cells.

The spherical mapping of the planar map happens downstream
(``geometry.map_to_sphere_samples`` / ``volume.lift_to_volume``).

Weights are untrained and drawn from SplitMix64; biases start at zero, so on
a zero background the SsM stack is positively homogeneous and an impulse
response does not depend on the impulse's brightness. Each head draws from
its own sub-stream of the user seed. For the default seed the stream
constants were picked by ``tools/select_head_streams.py``: a unit impulse in
any cell must raise that cell the most above the empty-scene map, and after
lifting and thresholding at 0.5 the heaviest region must point within one
cell diameter of every direction in the impulse's cell. Both constants meet
this for all 49 cells in both projections.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, softmax

from .embedding import AUDIO_DIM, DEFAULT_SEED, GRID, VISUAL_CHANNELS, AudioFeature, VisualFeature, conv3x3
from .geometry import Projection
from .prng import SplitMix64, derive_seed

SSM_CHANNELS = (VISUAL_CHANNELS + AUDIO_DIM, 128, 64, 1)
ATT_HIDDEN = 128

SSM_STREAM = 0x55D4_0000_0005_6647
ATT_STREAM = 0xA77E_0000_0000_0001

_OPEN_LO = np.nextafter(0.0, 1.0)
_OPEN_HI = np.nextafter(1.0, 0.0)


class Model(str, enum.Enum):
    SSM = "ssm"
    ATT = "att"

    @property
    def label(self) -> str:
        return "SsM" if self is Model.SSM else "Att"


@dataclass(frozen=True)
class PlanarProbMap:
    grid: np.ndarray  # (7, 7)
    projection: Projection | None = None

    def __post_init__(self) -> None:
        g = np.asarray(self.grid, dtype=np.float64)
        if g.ndim != 2:
            raise ValueError(f"planar map must be 2D, got {g.shape}")
        if np.any(g < 0.0) or np.any(g > 1.0) or not np.all(np.isfinite(g)):
            raise ValueError("planar map values must lie in [0, 1]")
        object.__setattr__(self, "grid", g)
        if self.projection is not None:
            object.__setattr__(self, "projection", Projection.parse(self.projection))


@dataclass(frozen=True)
class SsmParams:
    convs: tuple[tuple[np.ndarray, np.ndarray], ...]  # (Cout, Cin, 3, 3), (Cout,)
    gain: float
    bias: float

    @classmethod
    def from_seed(cls, seed: int = DEFAULT_SEED) -> "SsmParams":
        rng = SplitMix64(derive_seed(seed, SSM_STREAM))
        convs = []
        for c_in, c_out in zip(SSM_CHANNELS[:-1], SSM_CHANNELS[1:]):
            convs.append((rng.uniform((c_out, c_in, 3, 3)), np.zeros(c_out)))
        return cls(tuple(convs), float(rng.uniform(1)[0]), 0.0)


@dataclass(frozen=True)
class AttParams:
    visual_weight: np.ndarray  # l_v: (128, 512)
    visual_bias: np.ndarray
    audio_weight: np.ndarray  # l_a: (128, 128)
    audio_bias: np.ndarray
    omega: np.ndarray  # (128,)

    @classmethod
    def from_seed(cls, seed: int = DEFAULT_SEED) -> "AttParams":
        rng = SplitMix64(derive_seed(seed, ATT_STREAM))
        l_v = rng.uniform((ATT_HIDDEN, VISUAL_CHANNELS))
        l_a = rng.uniform((ATT_HIDDEN, AUDIO_DIM))
        omega = rng.uniform(ATT_HIDDEN)
        return cls(l_v, np.zeros(ATT_HIDDEN), l_a, np.zeros(ATT_HIDDEN), omega)


def _check_inputs(v: VisualFeature, a: AudioFeature) -> None:
    if np.shape(v.grid) != (GRID, GRID, VISUAL_CHANNELS):
        raise ValueError(f"visual feature shape {np.shape(v.grid)} != (7, 7, 512)")
    if np.shape(a.vector) != (AUDIO_DIM,):
        raise ValueError(f"audio feature shape {np.shape(a.vector)} != (128,)")


def ssm_activation(v: VisualFeature, a: AudioFeature, p: SsmParams) -> np.ndarray:
    """Pre-sigmoid 7x7 map (after the scalar affine)."""
    _check_inputs(v, a)
    tiled = np.broadcast_to(a.vector, (GRID, GRID, AUDIO_DIM))
    x = np.concatenate([v.grid, tiled], axis=-1)
    last = len(p.convs) - 1
    for i, (w, b) in enumerate(p.convs):
        if w.shape[1] != x.shape[-1]:
            raise ValueError(f"conv {i} expects {w.shape[1]} channels, got {x.shape[-1]}")
        x = conv3x3(x, w, b)
        if i < last:
            x = np.maximum(x, 0.0)
    return p.gain * x[:, :, 0] + p.bias


def predict_ssm(v: VisualFeature, a: AudioFeature, p: SsmParams,
                projection: Projection | None = None) -> PlanarProbMap:
    # clipping keeps saturated cells inside the open interval
    probs = np.clip(expit(ssm_activation(v, a, p)), _OPEN_LO, _OPEN_HI)
    return PlanarProbMap(probs, projection)


def attention_scores(v: VisualFeature, a: AudioFeature, p: AttParams) -> np.ndarray:
    """Raw 49 cell scores in row-major order, before the softmax."""
    _check_inputs(v, a)
    cells = v.grid.reshape(GRID * GRID, VISUAL_CHANNELS)
    visual = np.tanh(cells @ p.visual_weight.T + p.visual_bias) @ p.omega
    audio = float(np.mean(p.audio_weight @ a.vector + p.audio_bias))
    return visual + audio


def predict_att(v: VisualFeature, a: AudioFeature, p: AttParams,
                projection: Projection | None = None) -> PlanarProbMap:
    probs = softmax(attention_scores(v, a, p))
    return PlanarProbMap(probs.reshape(GRID, GRID), projection)


def predict(model, v: VisualFeature, a: AudioFeature, seed: int = DEFAULT_SEED,
            projection: Projection | None = None) -> PlanarProbMap:
    model = Model(model)
    if model is Model.SSM:
        return predict_ssm(v, a, ssm_params(seed), projection)
    return predict_att(v, a, att_params(seed), projection)


@functools.lru_cache(maxsize=4)
def ssm_params(seed: int) -> SsmParams:
    return SsmParams.from_seed(seed)


@functools.lru_cache(maxsize=4)
def att_params(seed: int) -> AttParams:
    return AttParams.from_seed(seed)


def empty_scene_map(model, a: AudioFeature, seed: int = DEFAULT_SEED,
                    projection: Projection | None = None) -> PlanarProbMap:
    """The head's map for the same audio and an all-zero visual feature."""
    return predict(model, VisualFeature(np.zeros((GRID, GRID, VISUAL_CHANNELS))), a, seed, projection)


def normalize_map(m: PlanarProbMap, baseline: PlanarProbMap) -> PlanarProbMap:
    """Visual evidence relative to ``baseline``, rescaled so the peak is 1.

    Cells at or below the baseline carry no evidence and become 0, so a fixed
    threshold keeps cells that gained more than that fraction of the peak's
    gain. A map with no cell above the baseline becomes all zero.
    """
    gain = m.grid - baseline.grid
    hi = float(gain.max())
    if hi <= 0.0:
        return PlanarProbMap(np.zeros_like(gain), m.projection)
    return PlanarProbMap(np.clip(gain / hi, 0.0, 1.0), m.projection)
