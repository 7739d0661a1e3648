"""First-order Ambisonics (B-format) encoding.

For sources s_i with directions (phi_i, theta_i)::

    W = sum_i s_i / sqrt(2)
    X = sum_i s_i cos(phi_i) cos(theta_i)
    Y = sum_i s_i sin(phi_i) cos(theta_i)
    Z = sum_i s_i sin(theta_i)

There is no source separation: every detected source receives the full mono
mix scaled by its share of the total probability mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .geometry import SphericalDirection
from .media_io import AudioSignal, BFormatSignal

CROSSFADE_SECONDS = 0.020
SQRT2 = math.sqrt(2.0)


class Localized(Protocol):
    """Anything with a direction and a probability mass (e.g. SourceRegion)."""

    @property
    def direction(self) -> SphericalDirection: ...

    mass: float


@dataclass(frozen=True)
class DetectedSource:
    direction: SphericalDirection
    mass: float


@dataclass
class LocalizedSource:
    signal: np.ndarray
    direction: SphericalDirection
    weight: float


def split_sources(a: AudioSignal, regions: Sequence[Localized]) -> list[LocalizedSource]:
    if not regions:
        return []
    mono = a.mono()
    masses = [float(r.mass) for r in regions]
    total = math.fsum(masses)
    if total <= 0.0:
        raise ValueError("source masses must sum to a positive value")
    return [LocalizedSource(mono * (m / total), r.direction, m / total) for r, m in zip(regions, masses)]


def encode_bformat(sources: Sequence[LocalizedSource], length: int, rate: int) -> BFormatSignal:
    w = np.zeros(length)
    x = np.zeros(length)
    y = np.zeros(length)
    z = np.zeros(length)
    for src in sources:
        s = np.asarray(src.signal, dtype=np.float64)
        if s.shape != (length,):
            raise ValueError(f"source signal has {s.shape[0] if s.ndim else 0} samples, expected {length}")
        phi, theta = src.direction.phi, src.direction.theta
        w += s
        x += s * (math.cos(phi) * math.cos(theta))
        y += s * (math.sin(phi) * math.cos(theta))
        z += s * math.sin(theta)
    return BFormatSignal(w / SQRT2, x, y, z, rate)


def decode_direction(b: BFormatSignal) -> SphericalDirection:
    """Direction of a single-source B-format signal from channel/W correlations."""
    ww = float(np.dot(b.w, b.w))
    if ww == 0.0:
        raise ValueError("zero-energy signal has no direction")
    xw, yw, zw = (float(np.dot(c, b.w)) for c in (b.x, b.y, b.z))
    return SphericalDirection(math.atan2(yw, xw), math.atan2(zw, math.hypot(xw, yw)))


def encode_clip(audio: AudioSignal, per_second: Sequence[Sequence[Localized]],
                crossfade: float = CROSSFADE_SECONDS) -> BFormatSignal:
    """Encode second by second with a linear crossfade centered on each boundary.

    ``per_second`` holds one list of sources for every (possibly partial)
    second of ``audio``.
    """
    n, rate = len(audio), audio.sample_rate
    if len(per_second) != audio.n_seconds:
        raise ValueError(f"{len(per_second)} seconds of sources for {audio.n_seconds} seconds of audio")
    half = int(round(crossfade * rate)) // 2
    out = np.zeros((n, 4))
    prev = None
    for k, regions in enumerate(per_second):
        start, stop = k * rate, min((k + 1) * rate, n)
        lo, hi = max(start - half, 0), min(stop + half, n)
        seg = AudioSignal(audio.samples[lo:hi], rate)
        cur = encode_bformat(split_sources(seg, regions), hi - lo, rate).as_array()
        body_lo = start + half if k > 0 else start
        out[body_lo:stop] = cur[body_lo - lo:stop - lo]
        if prev is not None:
            p_arr, p_lo = prev
            f_lo, f_hi = start - half, min(start + half, n)
            alpha = ((np.arange(f_lo, f_hi) - f_lo + 0.5) / (2 * half))[:, None]
            old = p_arr[f_lo - p_lo:f_hi - p_lo]
            new = cur[f_lo - lo:f_hi - lo]
            # old + alpha * (new - old) is exact wherever both agree
            out[f_lo:f_hi] = old + alpha * (new - old)
        prev = (cur, lo)
    return BFormatSignal.from_array(out, rate)

