"""Per-second visual (7x7x512) and audio (128-d) embeddings.

Two visual embedders are provided: a seeded toy convolutional stack that
stands in for a pretrained image network, and an oracle that writes mean
cell luminance into channel 0. Both satisfy the same shape contract, so a
real pretrained network can be dropped in behind ``embed_visual``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .media_io import FRAMES_PER_SECOND, TARGET_RATE, AudioSignal, FrameSecond
from .prng import SplitMix64

GRID = 7
VISUAL_CHANNELS = 512
AUDIO_DIM = 128
INPUT_SIZE = 224
STAGE_WIDTHS = (16, 32, 64, 128, 512)

N_MELS = 64
WIN_SECONDS = 0.025
HOP_SECONDS = 0.010
N_FFT = 2048
LOG_FLOOR = 1e-10
DEFAULT_SEED = 42


@dataclass(frozen=True)
class VisualFeature:
    grid: np.ndarray  # (7, 7, 512)

    def __post_init__(self) -> None:
        g = np.asarray(self.grid, dtype=np.float64)
        if g.shape != (GRID, GRID, VISUAL_CHANNELS):
            raise ValueError(f"visual feature must be 7x7x512, got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("visual feature has non-finite values")
        object.__setattr__(self, "grid", g)


@dataclass(frozen=True)
class AudioFeature:
    vector: np.ndarray  # (128,)

    def __post_init__(self) -> None:
        v = np.asarray(self.vector, dtype=np.float64)
        if v.shape != (AUDIO_DIM,):
            raise ValueError(f"audio feature must have 128 values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("audio feature has non-finite values")
        object.__setattr__(self, "vector", v)


def audio_frame_layout(rate: int = TARGET_RATE) -> tuple[int, int, int]:
    """(window, hop, n_frames) for one second of audio."""
    win = int(round(WIN_SECONDS * rate))
    hop = int(round(HOP_SECONDS * rate))
    return win, hop, 1 + (rate - win) // hop


@dataclass(frozen=True)
class EmbeddingParams:
    seed: int
    conv: tuple[tuple[np.ndarray, np.ndarray], ...]
    audio_weight: np.ndarray  # (128, n_frames * 64)
    audio_bias: np.ndarray

    @classmethod
    def from_seed(cls, seed: int = DEFAULT_SEED) -> "EmbeddingParams":
        """Weights drawn from the seeded stream in declaration order; biases start at zero."""
        rng = SplitMix64(seed)
        conv, c_in = [], 3
        for c_out in STAGE_WIDTHS:
            conv.append((rng.uniform((c_out, c_in, 3, 3)), np.zeros(c_out)))
            c_in = c_out
        n_frames = audio_frame_layout()[2]
        aw = rng.uniform((AUDIO_DIM, n_frames * N_MELS))
        ab = np.zeros(AUDIO_DIM)
        for arr in (aw, ab, *(a for pair in conv for a in pair)):
            arr.flags.writeable = False
        return cls(int(seed), tuple(conv), aw, ab)


class VisualEmbedder(Protocol):
    def __call__(self, fs: FrameSecond) -> VisualFeature: ...


# ---------------------------------------------------------------------------
# visual


def _resize_axis(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Half-pixel-center bilinear resize of an (H, W, C) float image."""
    r0, r1, fr = _resize_axis(img.shape[0], height)
    c0, c1, fc = _resize_axis(img.shape[1], width)
    rows = img[r0] * (1.0 - fr)[:, None, None] + img[r1] * fr[:, None, None]
    return rows[:, c0] * (1.0 - fc)[None, :, None] + rows[:, c1] * fc[None, :, None]


def conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> np.ndarray:
    """Zero-padded 3x3 convolution, (H, W, Cin) -> (H', W', Cout)."""
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(0, 1))[::stride, ::stride]
    return np.tensordot(win, w, axes=([2, 3, 4], [1, 2, 3])) + b


def adaptive_average(x: np.ndarray, out: int = GRID) -> np.ndarray:
    h, w, _ = x.shape
    rows = [x[(i * h) // out:-(-(i + 1) * h // out)] for i in range(out)]
    return np.stack([
        np.stack([r[:, (j * w) // out:-(-(j + 1) * w // out)].mean(axis=(0, 1)) for j in range(out)])
        for r in rows
    ])


def frame_feature(frame: np.ndarray, params: EmbeddingParams) -> np.ndarray:
    x = resize_bilinear(frame.astype(np.float64) / 255.0, INPUT_SIZE, INPUT_SIZE)
    for w, b in params.conv:
        x = np.maximum(conv3x3(x, w, b, stride=2), 0.0)
    return adaptive_average(x)


def _check_frames(fs: FrameSecond) -> None:
    if len(fs.frames) != FRAMES_PER_SECOND:
        raise ValueError(f"expected {FRAMES_PER_SECOND} frames, got {len(fs.frames)}")


def embed_visual(fs: FrameSecond, params: EmbeddingParams) -> VisualFeature:
    _check_frames(fs)
    acc = np.zeros((GRID, GRID, VISUAL_CHANNELS))
    for frame in fs.frames:
        acc += frame_feature(frame, params)
    return VisualFeature(acc / len(fs.frames))


def _region_weights(n: int, cells: int = GRID) -> np.ndarray:
    """(cells, n) fraction of each pixel falling in each of ``cells`` equal bands."""
    edges = np.arange(cells + 1) * (n / cells)
    px = np.arange(n)
    lo = np.maximum(px[None, :], edges[:-1, None])
    hi = np.minimum(px[None, :] + 1, edges[1:, None])
    return np.clip(hi - lo, 0.0, None)


def luminance(frame: np.ndarray) -> np.ndarray:
    """Rec. 601 luma in [0, 1]; integer weights keep pure white at exactly 1."""
    f = frame.astype(np.int64)
    return (299 * f[..., 0] + 587 * f[..., 1] + 114 * f[..., 2]) / (1000.0 * 255.0)


def oracle_embed_visual(fs: FrameSecond) -> VisualFeature:
    """Channel 0 of each cell = mean luminance of its image region."""
    _check_frames(fs)
    h, w, _ = fs.frames[0].shape
    wr, wc = _region_weights(h), _region_weights(w)
    area = np.outer(wr.sum(axis=1), wc.sum(axis=1))
    lum = sum(luminance(f) for f in fs.frames) / len(fs.frames)
    grid = np.zeros((GRID, GRID, VISUAL_CHANNELS))
    grid[:, :, 0] = (wr @ lum @ wc.T) / area
    return VisualFeature(grid)


# ---------------------------------------------------------------------------
# audio


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(rate: int = TARGET_RATE, n_fft: int = N_FFT, n_mels: int = N_MELS) -> np.ndarray:
    """(n_mels, n_fft // 2 + 1) triangular HTK-mel filters from 0 Hz to Nyquist."""
    freqs = np.arange(n_fft // 2 + 1) * rate / n_fft
    edges = _mel_to_hz(np.linspace(0.0, _hz_to_mel(rate / 2), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs[None, :] - lo) / (mid - lo)
    down = (hi - freqs[None, :]) / (hi - mid)
    return np.clip(np.minimum(up, down), 0.0, None)


def log_mel_spectrogram(mono: np.ndarray, rate: int = TARGET_RATE) -> np.ndarray:
    """(n_frames, 64) natural-log mel energies, floored at 1e-10."""
    win, hop, _ = audio_frame_layout(rate)
    if len(mono) < win:
        raise ValueError("signal shorter than one analysis window")
    frames = sliding_window_view(mono, win)[::hop]
    window = 0.5 - 0.5 * np.cos(2.0 * math.pi * np.arange(win) / win)
    power = np.abs(np.fft.rfft(frames * window, n=N_FFT, axis=1)) ** 2
    mel = power @ mel_filterbank(rate).T
    return np.log(np.maximum(mel, LOG_FLOOR))


def embed_audio(a: AudioSignal, params: EmbeddingParams) -> AudioFeature:
    if a.sample_rate != TARGET_RATE:
        raise ValueError(f"audio must be at {TARGET_RATE} Hz, got {a.sample_rate}")
    n = len(a)
    if abs(n - TARGET_RATE) > 1:
        raise ValueError(f"expected one second ({TARGET_RATE} samples), got {n}")
    mono = a.mono()
    if n < TARGET_RATE:
        mono = np.concatenate([mono, np.zeros(TARGET_RATE - n)])
    spec = log_mel_spectrogram(mono[:TARGET_RATE]).ravel()
    return AudioFeature(params.audio_weight @ spec + params.audio_bias)


def zero_audio_feature() -> AudioFeature:
    return AudioFeature(np.zeros(AUDIO_DIM))
