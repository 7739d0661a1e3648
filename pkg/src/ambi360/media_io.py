"""Readers and writers for frames, audio, annotations and volumes.

Every reader rejects malformed input instead of repairing it, and every
writer is byte-deterministic.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import ImageDims, PixelCoord, Projection
from .volume import ProbabilityVolume

FRAMES_PER_SECOND = 15
MAX_CLIP_SECONDS = 10
TARGET_RATE = 48000

_FMT_PCM = 1
_FMT_FLOAT = 3
_FMT_EXTENSIBLE = 0xFFFE


class MediaError(ValueError):
    """Malformed or unsupported input file."""


class UnsupportedFormatError(MediaError):
    pass


class TruncatedFileError(MediaError):
    pass


# ---------------------------------------------------------------------------
# data types


@dataclass
class FrameSecond:
    frames: list[np.ndarray]  # each (H, W, 3) uint8
    second_index: int

    def __post_init__(self) -> None:
        if len(self.frames) != FRAMES_PER_SECOND:
            raise ValueError(f"expected {FRAMES_PER_SECOND} frames, got {len(self.frames)}")
        shapes = {f.shape for f in self.frames}
        if len(shapes) != 1:
            raise ValueError(f"inconsistent frame dims: {sorted(shapes)}")
        shape = next(iter(shapes))
        if len(shape) != 3 or shape[2] != 3:
            raise ValueError(f"frames must be (H, W, 3), got {shape}")
        if self.second_index < 0:
            raise ValueError("second_index must be >= 0")

    @property
    def dims(self) -> ImageDims:
        h, w, _ = self.frames[0].shape
        return ImageDims(w, h)


@dataclass
class AudioSignal:
    samples: np.ndarray  # (n, channels) float64
    sample_rate: int

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[1] not in (1, 2):
            raise ValueError(f"audio must have 1 or 2 channels, got shape {s.shape}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self.samples = s

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def n_seconds(self) -> int:
        return math.ceil(len(self) / self.sample_rate)

    def mono(self) -> np.ndarray:
        if self.channels == 1:
            return self.samples[:, 0].copy()
        return 0.5 * (self.samples[:, 0] + self.samples[:, 1])

    def second(self, k: int) -> "AudioSignal":
        """One-second slice; the final partial second is zero padded."""
        start = k * self.sample_rate
        if not 0 <= start < max(len(self), 1):
            raise IndexError(f"second {k} outside signal of {len(self)} samples")
        chunk = self.samples[start:start + self.sample_rate]
        if len(chunk) < self.sample_rate:
            pad = np.zeros((self.sample_rate - len(chunk), self.channels))
            chunk = np.vstack([chunk, pad])
        return AudioSignal(chunk, self.sample_rate)


@dataclass
class BFormatSignal:
    w: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        chans = [np.asarray(c, dtype=np.float64) for c in (self.w, self.x, self.y, self.z)]
        if len({c.shape for c in chans}) != 1 or chans[0].ndim != 1:
            raise ValueError("B-format channels must be equal-length 1D arrays")
        self.w, self.x, self.y, self.z = chans

    def __len__(self) -> int:
        return len(self.w)

    def as_array(self) -> np.ndarray:
        return np.stack([self.w, self.x, self.y, self.z], axis=1)

    @classmethod
    def from_array(cls, arr: np.ndarray, sample_rate: int) -> "BFormatSignal":
        arr = np.asarray(arr)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], sample_rate)


@dataclass
class AnnotatedSecond:
    second_index: int
    sources: list[PixelCoord]


@dataclass
class ClipAnnotation:
    video_id: str
    projection: Projection
    dims: ImageDims
    seconds: list[AnnotatedSecond]

    def __post_init__(self) -> None:
        self.projection = Projection.parse(self.projection)
        idx = [s.second_index for s in self.seconds]
        if any(i < 0 for i in idx):
            raise MediaError("negative second index")
        if len(set(idx)) != len(idx):
            raise MediaError(f"duplicate second in annotation {self.video_id!r}")
        if idx != sorted(idx):
            raise MediaError("annotated seconds must be ascending")
        if len(idx) > MAX_CLIP_SECONDS:
            raise MediaError(f"clip has {len(idx)} seconds, at most {MAX_CLIP_SECONDS} allowed")
        for s in self.seconds:
            for p in s.sources:
                try:
                    p.check_within(self.dims)
                except ValueError as exc:
                    raise MediaError(f"second {s.second_index}: {exc}") from None

    def sources_at(self, second_index: int) -> list[PixelCoord]:
        for s in self.seconds:
            if s.second_index == second_index:
                return list(s.sources)
        return []


# ---------------------------------------------------------------------------
# frames


def _ppm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise MediaError("malformed PPM header")
        tokens.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise MediaError("malformed PPM header")
    return tokens, pos + 1


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:2] != b"P6":
        raise MediaError(f"{path}: not a binary PPM (P6)")
    (width, height, maxval), offset = _ppm_tokens(data, 3)
    if width <= 0 or height <= 0 or maxval != 255:
        raise MediaError(f"{path}: unsupported PPM geometry {width}x{height} maxval {maxval}")
    n = width * height * 3
    if len(data) - offset < n:
        raise TruncatedFileError(f"{path}: PPM payload truncated")
    return np.frombuffer(data, dtype=np.uint8, count=n, offset=offset).reshape(height, width, 3).copy()


def write_ppm(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("PPM writer expects (H, W, 3) uint8")
    h, w, _ = image.shape
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(image).tobytes())


def frame_path(directory, index: int) -> Path:
    return Path(directory) / f"frame_{index:06d}.ppm"


def count_frame_seconds(directory) -> int:
    """Number of complete 15-frame seconds available from frame 0 on."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frames directory not found: {directory}")
    n = 0
    while frame_path(directory, n).exists():
        n += 1
    return n // FRAMES_PER_SECOND


def read_frame_second(directory, second_index: int) -> FrameSecond:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"frames directory not found: {directory}")
    frames = []
    first = second_index * FRAMES_PER_SECOND
    for i in range(first, first + FRAMES_PER_SECOND):
        path = frame_path(directory, i)
        if not path.exists():
            raise FileNotFoundError(f"missing frame {path}")
        frames.append(read_ppm(path))
    try:
        return FrameSecond(frames, second_index)
    except ValueError as exc:
        raise MediaError(f"{directory} second {second_index}: {exc}") from None


# ---------------------------------------------------------------------------
# WAV


def read_wav_frames(path) -> tuple[np.ndarray, int]:
    """(frames, channels) float64 samples and the sample rate, any channel count."""
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise TruncatedFileError(f"{path}: too short for a RIFF header")
    if data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnsupportedFormatError(f"{path}: not a RIFF/WAVE file")
    pos, fmt, payload = 12, None, None
    while pos + 8 <= len(data):
        cid, size = data[pos:pos + 4], struct.unpack_from("<I", data, pos + 4)[0]
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise TruncatedFileError(f"{path}: chunk {cid!r} truncated")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None or len(fmt) < 16:
        raise UnsupportedFormatError(f"{path}: missing fmt chunk")
    if payload is None:
        raise TruncatedFileError(f"{path}: missing data chunk")
    tag, channels, rate, _, block, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == _FMT_EXTENSIBLE and len(fmt) >= 40:
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if (tag, bits) == (_FMT_PCM, 16):
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif (tag, bits) == (_FMT_FLOAT, 32):
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedFormatError(f"{path}: unsupported encoding tag={tag} bits={bits}")
    if channels == 0 or rate == 0 or block != channels * dtype.itemsize:
        raise UnsupportedFormatError(f"{path}: inconsistent fmt chunk")
    if len(payload) % block:
        raise TruncatedFileError(f"{path}: data chunk is not a whole number of frames")
    samples = np.frombuffer(payload, dtype=dtype).reshape(-1, channels).astype(np.float64)
    return samples * scale if scale != 1.0 else samples, rate


def read_wav(path) -> AudioSignal:
    samples, rate = read_wav_frames(path)
    if samples.shape[1] not in (1, 2):
        raise UnsupportedFormatError(f"{path}: {samples.shape[1]} channels; only mono or stereo accepted")
    return AudioSignal(samples, rate)


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """IEEE float32 WAV, any channel count, samples shaped (n, channels)."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    n, channels = samples.shape
    payload = samples.astype("<f4").tobytes()
    fmt = struct.pack("<HHIIHHH", _FMT_FLOAT, channels, sample_rate,
                      sample_rate * channels * 4, channels * 4, 32, 0)
    fact = struct.pack("<I", n)
    body = (b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
            + b"fact" + struct.pack("<I", len(fact)) + fact
            + b"data" + struct.pack("<I", len(payload)) + payload)
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


def write_bformat_wav(b: BFormatSignal, path, ambix: bool = False) -> None:
    """Four float32 channels, W X Y Z (or AmbiX W Y Z X with W * sqrt(2))."""
    arr = b.as_array()
    if ambix:
        arr = np.stack([b.w * math.sqrt(2.0), b.y, b.z, b.x], axis=1)
    write_wav(path, arr, b.sample_rate)


def read_bformat_wav(path) -> BFormatSignal:
    samples, rate = read_wav_frames(path)
    if samples.shape[1] != 4:
        raise UnsupportedFormatError(f"{path}: expected 4 channels, got {samples.shape[1]}")
    return BFormatSignal.from_array(samples, rate)


def resample_linear(signal: AudioSignal, rate: int = TARGET_RATE) -> AudioSignal:
    if signal.sample_rate == rate:
        return signal
    n_out = int(round(len(signal) * rate / signal.sample_rate))
    t_out = np.arange(n_out) * (signal.sample_rate / rate)
    t_in = np.arange(len(signal))
    cols = [np.interp(t_out, t_in, signal.samples[:, c]) for c in range(signal.channels)]
    return AudioSignal(np.stack(cols, axis=1), rate)


# ---------------------------------------------------------------------------
# annotations


def annotation_to_dict(a: ClipAnnotation) -> dict:
    return {
        "video_id": a.video_id,
        "projection": a.projection.value,
        "width": a.dims.width,
        "height": a.dims.height,
        "seconds": [
            {"second": s.second_index, "sources": [{"x": p.x, "y": p.y} for p in s.sources]}
            for s in a.seconds
        ],
    }


def annotation_from_dict(doc: dict) -> ClipAnnotation:
    try:
        if not isinstance(doc, dict):
            raise TypeError("top level must be an object")
        video_id = doc["video_id"]
        if not isinstance(video_id, str):
            raise TypeError("video_id must be a string")
        width, height = doc["width"], doc["height"]
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (width, height)):
            raise TypeError("width/height must be integers")
        seconds = []
        for entry in doc["seconds"]:
            k = entry["second"]
            if not isinstance(k, int) or isinstance(k, bool):
                raise TypeError("second must be an integer")
            pts = []
            for src in entry["sources"]:
                x, y = src["x"], src["y"]
                if not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in (x, y)):
                    raise TypeError("source coordinates must be numbers")
                pts.append(PixelCoord(float(x), float(y)))
            seconds.append(AnnotatedSecond(k, pts))
        return ClipAnnotation(video_id, Projection.parse(doc["projection"]), ImageDims(width, height), seconds)
    except MediaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MediaError(f"annotation schema violation: {exc}") from None


def read_annotations(path) -> ClipAnnotation:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MediaError(f"{path}: invalid JSON ({exc})") from None
    return annotation_from_dict(doc)


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_annotations(a: ClipAnnotation, path) -> None:
    write_json(path, annotation_to_dict(a))


# ---------------------------------------------------------------------------
# volumes


def volume_sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_volume(v: ProbabilityVolume, path) -> None:
    path = Path(path)
    path.write_bytes(v.data.astype("<f4", copy=False).tobytes(order="C"))
    write_json(volume_sidecar_path(path), {
        "resolution": v.resolution,
        "projection": v.projection.value if v.projection is not None else None,
        "second_index": v.second_index,
    })


def read_volume(path) -> ProbabilityVolume:
    path = Path(path)
    side = volume_sidecar_path(path)
    try:
        meta = json.loads(side.read_text())
        res = int(meta["resolution"])
    except FileNotFoundError:
        raise MediaError(f"{path}: missing sidecar {side}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MediaError(f"{side}: bad sidecar ({exc})") from None
    payload = path.read_bytes()
    if len(payload) != 4 * res ** 3:
        raise MediaError(f"{path}: {len(payload)} bytes, sidecar resolution {res} needs {4 * res ** 3}")
    data = np.frombuffer(payload, dtype="<f4").reshape(res, res, res).astype(np.float32)
    return ProbabilityVolume(data, meta.get("projection"), meta.get("second_index"))


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path


def load_frames_dims(directory) -> ImageDims:
    h, w, _ = read_ppm(frame_path(directory, 0)).shape
    return ImageDims(w, h)

