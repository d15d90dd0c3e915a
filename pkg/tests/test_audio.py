import numpy as np
import pytest
from synth import write_stereo_wav, write_wav

from whistlekit.audio import WavFormatError, load_audio, partition


def test_three_minute_file_sample_count(tmp_path):
    # 180 s at 48 kHz must ingest to 180 * 48000 samples
    path = write_wav(tmp_path / "rec.wav", np.zeros(180 * 48000), 48000)
    clip = load_audio(str(path))
    assert len(clip.samples) == 8_640_000
    assert clip.sample_rate == 48000


def test_all_zero_wav_is_valid(tmp_path):
    path = write_wav(tmp_path / "silence.wav", np.zeros(1000))
    clip = load_audio(str(path))
    assert np.all(clip.samples == 0.0)


def test_stereo_downmix_averages_channels(tmp_path):
    left = np.full(500, 0.5)
    right = np.full(500, -0.5)
    path = write_stereo_wav(tmp_path / "st.wav", left, right)
    clip = load_audio(str(path))
    assert np.allclose(clip.samples, 0.0, atol=1e-4)


@pytest.mark.parametrize("bit_depth,atol", [(8, 1 / 127), (16, 1 / 32767), (24, 1e-6)])
def test_bit_depths_normalize_to_unit_range(tmp_path, bit_depth, atol):
    ramp = np.linspace(-1.0, 1.0, 101)
    path = write_wav(tmp_path / f"d{bit_depth}.wav", ramp, bit_depth=bit_depth)
    clip = load_audio(str(path))
    assert np.all(clip.samples >= -1.0) and np.all(clip.samples <= 1.0)
    assert np.allclose(clip.samples, ramp, atol=2 * atol)


def test_float32_wav(tmp_path):
    from scipy.io import wavfile

    wavfile.write(tmp_path / "f.wav", 48000, np.array([0.25, -0.75, 0.0], np.float32))
    clip = load_audio(str(tmp_path / "f.wav"))
    assert np.allclose(clip.samples, [0.25, -0.75, 0.0])


def test_missing_file_raises():
    with pytest.raises(FileNotFoundError):
        load_audio("/nonexistent/file.wav")


def test_garbage_file_raises(tmp_path):
    path = tmp_path / "junk.wav"
    path.write_bytes(b"not a riff file at all")
    with pytest.raises(WavFormatError):
        load_audio(str(path))


def test_zero_length_audio_raises(tmp_path):
    path = write_wav(tmp_path / "empty.wav", np.zeros(0))
    with pytest.raises(WavFormatError):
        load_audio(str(path))


def test_partition_three_minute_file(tmp_path):
    path = write_wav(tmp_path / "rec.wav", np.zeros(180 * 48000), 48000)
    snippets = partition(load_audio(str(path)), 3.0)
    assert len(snippets) == 60
    assert all(len(s.samples) == 144_000 for s in snippets)
    assert [s.snippet_index for s in snippets] == list(range(60))
    assert snippets[7].offset_seconds == pytest.approx(21.0)


def test_partition_exact_single_window(tmp_path):
    path = write_wav(tmp_path / "one.wav", np.zeros(3 * 48000), 48000)
    snippets = partition(load_audio(str(path)), 3.0)
    assert len(snippets) == 1
    assert snippets[0].offset_seconds == 0.0


def test_partition_drops_partial_tail(tmp_path):
    path = write_wav(tmp_path / "tail.wav", np.zeros(int(4.5 * 48000)), 48000)
    snippets = partition(load_audio(str(path)), 3.0)
    assert len(snippets) == 1


def test_partition_too_short_clip_gives_empty(tmp_path):
    path = write_wav(tmp_path / "short.wav", np.zeros(48000), 48000)
    assert partition(load_audio(str(path)), 3.0) == []


def test_partition_concat_is_prefix_of_clip(tmp_path):
    rng = np.random.default_rng(5)
    path = write_wav(tmp_path / "noise.wav", rng.uniform(-0.8, 0.8, 7 * 8000), 8000)
    clip = load_audio(str(path))
    snippets = partition(clip, 2.0)
    assert len(snippets) == 7 * 8000 // (2 * 8000)
    joined = np.concatenate([s.samples for s in snippets])
    assert np.array_equal(joined, clip.samples[: len(joined)])


def test_partition_rejects_bad_window(tmp_path):
    path = write_wav(tmp_path / "x.wav", np.zeros(100), 8000)
    with pytest.raises(ValueError):
        partition(load_audio(str(path)), 0.0)
