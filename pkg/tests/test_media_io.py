import json
import wave

import numpy as np
import pytest

from ambi360.geometry import ImageDims, PixelCoord, Projection
from ambi360.media_io import (
    AnnotatedSecond,
    AudioSignal,
    BFormatSignal,
    ClipAnnotation,
    MediaError,
    TruncatedFileError,
    UnsupportedFormatError,
    annotation_from_dict,
    annotation_to_dict,
    count_frame_seconds,
    frame_path,
    read_annotations,
    read_bformat_wav,
    read_frame_second,
    read_ppm,
    read_volume,
    read_wav,
    resample_linear,
    write_annotations,
    write_bformat_wav,
    write_ppm,
    write_volume,
    write_wav,
)
from ambi360.volume import ProbabilityVolume


def write_frames(directory, n, h=4, w=6):
    directory.mkdir(exist_ok=True)
    for i in range(n):
        write_ppm(frame_path(directory, i), np.full((h, w, 3), i % 256, dtype=np.uint8))


class TestFrames:
    def test_ppm_round_trip(self, tmp_path):
        img = np.random.default_rng(0).integers(0, 256, (5, 7, 3), dtype=np.uint8)
        write_ppm(tmp_path / "a.ppm", img)
        np.testing.assert_array_equal(read_ppm(tmp_path / "a.ppm"), img)

    def test_ppm_header_comments(self, tmp_path):
        (tmp_path / "c.ppm").write_bytes(b"P6\n# made by hand\n2 1\n255\n" + bytes(range(6)))
        np.testing.assert_array_equal(read_ppm(tmp_path / "c.ppm").ravel(), np.arange(6))

    def test_ppm_truncated(self, tmp_path):
        (tmp_path / "t.ppm").write_bytes(b"P6\n2 2\n255\n" + bytes(5))
        with pytest.raises(TruncatedFileError):
            read_ppm(tmp_path / "t.ppm")

    def test_not_ppm(self, tmp_path):
        (tmp_path / "x.ppm").write_bytes(b"P3\n1 1\n255\n0 0 0\n")
        with pytest.raises(MediaError):
            read_ppm(tmp_path / "x.ppm")

    def test_naming(self, tmp_path):
        assert frame_path(tmp_path, 17).name == "frame_000017.ppm"

    def test_second_zero_uses_frames_0_to_14(self, tmp_path):
        write_frames(tmp_path / "f", 30)
        fs = read_frame_second(tmp_path / "f", 0)
        assert len(fs.frames) == 15
        assert [int(f[0, 0, 0]) for f in fs.frames] == list(range(15))

    def test_second_one_uses_frames_15_to_29(self, tmp_path):
        write_frames(tmp_path / "f", 30)
        fs = read_frame_second(tmp_path / "f", 1)
        assert [int(f[0, 0, 0]) for f in fs.frames] == list(range(15, 30))
        assert fs.second_index == 1

    def test_fourteen_frames_is_missing_frame(self, tmp_path):
        write_frames(tmp_path / "f", 14)
        with pytest.raises(FileNotFoundError, match="frame_000014"):
            read_frame_second(tmp_path / "f", 0)

    def test_missing_directory_named(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nowhere"):
            read_frame_second(tmp_path / "nowhere", 0)

    def test_count_seconds_ignores_partial(self, tmp_path):
        write_frames(tmp_path / "f", 40)
        assert count_frame_seconds(tmp_path / "f") == 2

    def test_inconsistent_dims(self, tmp_path):
        write_frames(tmp_path / "f", 15)
        write_ppm(frame_path(tmp_path / "f", 3), np.zeros((5, 6, 3), np.uint8))
        with pytest.raises(MediaError):
            read_frame_second(tmp_path / "f", 0)


class TestWav:
    def test_float_round_trip(self, tmp_path):
        x = np.random.default_rng(1).uniform(-1, 1, (1000, 2)).astype(np.float32).astype(np.float64)
        write_wav(tmp_path / "a.wav", x, 48000)
        a = read_wav(tmp_path / "a.wav")
        assert a.sample_rate == 48000
        np.testing.assert_array_equal(a.samples, x)

    def test_reads_pcm16_from_stdlib_writer(self, tmp_path):
        pcm = np.array([0, 16384, -32768, 32767], dtype="<i2")
        with wave.open(str(tmp_path / "p.wav"), "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(44100)
            w.writeframes(pcm.tobytes())
        a = read_wav(tmp_path / "p.wav")
        assert a.sample_rate == 44100
        np.testing.assert_array_equal(a.samples[:, 0], pcm / 32768.0)

    def test_three_channels_rejected(self, tmp_path):
        write_wav(tmp_path / "3.wav", np.zeros((10, 3)), 48000)
        with pytest.raises(UnsupportedFormatError):
            read_wav(tmp_path / "3.wav")

    def test_truncated(self, tmp_path):
        write_wav(tmp_path / "a.wav", np.zeros(100), 48000)
        data = (tmp_path / "a.wav").read_bytes()
        (tmp_path / "b.wav").write_bytes(data[:-10])
        with pytest.raises(TruncatedFileError):
            read_wav(tmp_path / "b.wav")

    def test_not_riff(self, tmp_path):
        (tmp_path / "n.wav").write_bytes(b"OggS" + bytes(40))
        with pytest.raises(UnsupportedFormatError):
            read_wav(tmp_path / "n.wav")

    def test_bformat_silence_in_silence_out(self, tmp_path):
        z = np.zeros(480)
        write_bformat_wav(BFormatSignal(z, z, z, z, 48000), tmp_path / "s.wav")
        b = read_bformat_wav(tmp_path / "s.wav")
        assert b.as_array().shape == (480, 4)
        assert not b.as_array().any()

    def test_bformat_round_trip(self, tmp_path):
        arr = np.random.default_rng(2).uniform(-0.5, 0.5, (300, 4)).astype(np.float32).astype(np.float64)
        write_bformat_wav(BFormatSignal.from_array(arr, 48000), tmp_path / "b.wav")
        np.testing.assert_array_equal(read_bformat_wav(tmp_path / "b.wav").as_array(), arr)

    def test_ambix_order_and_scale(self, tmp_path):
        w, x, y, z = (np.full(4, v) for v in (0.25, 0.5, -0.125, 0.0625))
        write_bformat_wav(BFormatSignal(w, x, y, z, 48000), tmp_path / "a.wav", ambix=True)
        out = read_bformat_wav(tmp_path / "a.wav").as_array()[0]
        np.testing.assert_allclose(out, [0.25 * np.sqrt(2), -0.125, 0.0625, 0.5], rtol=1e-7)

    def test_resample_keeps_duration(self):
        a = AudioSignal(np.sin(np.arange(44100) / 10.0), 44100)
        b = resample_linear(a)
        assert b.sample_rate == 48000 and len(b) == 48000

    def test_resample_noop(self):
        a = AudioSignal(np.zeros(10), 48000)
        assert resample_linear(a) is a


class TestAudioSignal:
    def test_mono_of_stereo_is_mean(self):
        a = AudioSignal(np.array([[1.0, 0.0], [0.5, 0.5]]), 48000)
        np.testing.assert_array_equal(a.mono(), [0.5, 0.5])

    def test_partial_last_second_is_padded(self):
        a = AudioSignal(np.ones(48000 + 10), 48000)
        assert a.n_seconds == 2
        last = a.second(1)
        assert len(last) == 48000 and last.samples.sum() == 10

    def test_second_out_of_range(self):
        with pytest.raises(IndexError):
            AudioSignal(np.ones(48000), 48000).second(1)


def clip(n_seconds=10, width=64, height=32, sources_per_second=1):
    seconds = [AnnotatedSecond(k, [PixelCoord(k + 0.5, 3.0)] * sources_per_second) for k in range(n_seconds)]
    return ClipAnnotation("vid", Projection.EQUIRECT, ImageDims(width, height), seconds)


class TestAnnotations:
    def test_ten_seconds_one_source_each(self, tmp_path):
        write_annotations(clip(), tmp_path / "a.json")
        a = read_annotations(tmp_path / "a.json")
        assert len(a.seconds) == 10
        assert all(len(s.sources) == 1 for s in a.seconds)

    def test_round_trip_through_dict(self):
        a = clip(3)
        assert annotation_from_dict(annotation_to_dict(a)) == a

    def test_source_at_width_is_out_of_bounds(self):
        with pytest.raises(MediaError):
            ClipAnnotation("v", "equirect", ImageDims(64, 32), [AnnotatedSecond(0, [PixelCoord(64.0, 0.0)])])

    def test_empty_second_is_valid(self):
        a = ClipAnnotation("v", "equirect", ImageDims(64, 32), [AnnotatedSecond(0, [])])
        assert a.sources_at(0) == []

    def test_unannotated_second_has_no_sources(self):
        assert clip(2).sources_at(5) == []

    def test_more_than_ten_seconds(self):
        with pytest.raises(MediaError):
            clip(11)

    def test_duplicate_seconds(self):
        with pytest.raises(MediaError):
            ClipAnnotation("v", "equirect", ImageDims(8, 4), [AnnotatedSecond(0, []), AnnotatedSecond(0, [])])

    @pytest.mark.parametrize("doc", [
        {"video_id": "v", "projection": "equirect", "width": 8, "seconds": []},
        {"video_id": "v", "projection": "fisheye", "width": 8, "height": 4, "seconds": []},
        {"video_id": 3, "projection": "equirect", "width": 8, "height": 4, "seconds": []},
        {"video_id": "v", "projection": "equirect", "width": 8, "height": 4,
         "seconds": [{"second": 0, "sources": [{"x": "1", "y": 0}]}]},
    ])
    def test_schema_violations(self, doc):
        with pytest.raises(MediaError):
            annotation_from_dict(doc)

    def test_invalid_json(self, tmp_path):
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(MediaError):
            read_annotations(tmp_path / "bad.json")


class TestVolumeFiles:
    def test_payload_size(self, tmp_path):
        v = ProbabilityVolume(np.zeros((64, 64, 64), np.float32), "equirect", 3)
        write_volume(v, tmp_path / "v.f32")
        # 262,144 float32 values, 1 MiB
        assert (tmp_path / "v.f32").stat().st_size == 262_144 * 4 == 2 ** 20

    def test_round_trip(self, tmp_path):
        data = np.random.default_rng(0).random((16, 16, 16)).astype(np.float32)
        write_volume(ProbabilityVolume(data, "cubemap3x2", 2), tmp_path / "v.f32")
        v = read_volume(tmp_path / "v.f32")
        np.testing.assert_array_equal(v.data, data)
        assert v.projection is Projection.CUBEMAP and v.second_index == 2

    def test_x_is_fastest_axis(self, tmp_path):
        data = np.zeros((8, 8, 8), np.float32)
        data[0, 0, 1] = 1.0  # z=0, y=0, x=1
        write_volume(ProbabilityVolume(data), tmp_path / "v.f32")
        assert np.frombuffer((tmp_path / "v.f32").read_bytes(), "<f4")[1] == 1.0

    def test_truncated_payload(self, tmp_path):
        write_volume(ProbabilityVolume(np.zeros((8, 8, 8), np.float32)), tmp_path / "v.f32")
        (tmp_path / "v.f32").write_bytes(bytes(8 ** 3 * 4 - 4))
        with pytest.raises(MediaError):
            read_volume(tmp_path / "v.f32")

    def test_missing_sidecar(self, tmp_path):
        (tmp_path / "v.f32").write_bytes(bytes(8 ** 3 * 4))
        with pytest.raises(MediaError):
            read_volume(tmp_path / "v.f32")

    def test_sidecar_contents(self, tmp_path):
        write_volume(ProbabilityVolume(np.zeros((8, 8, 8)), "equirect", 0), tmp_path / "v.f32")
        meta = json.loads((tmp_path / "v.f32.json").read_text())
        assert meta == {"resolution": 8, "projection": "equirect", "second_index": 0}
