import numpy as np
import pytest
from synth import tone

from whistlekit.audio import AudioSnippet
from whistlekit.spectrogram import Spectrogram, StftConfig, compute_spectrogram


def snippet_from(samples, rate=48000):
    return AudioSnippet(samples=np.asarray(samples, float), sample_rate=rate,
                        source_path="synth.wav", offset_seconds=0.0, snippet_index=0)


def loop_frame_count(n, window, hop):
    # independent oracle: count frames a naive loop would emit
    count = 0
    start = 0
    while start + window <= n:
        count += 1
        start += hop
    return count


def test_frame_and_bin_counts_for_default_config():
    spec = compute_spectrogram(snippet_from(np.random.default_rng(0).normal(0, 0.1, 144_000)))
    assert spec.intensity.shape == (1124, 129)
    assert loop_frame_count(144_000, 256, 128) == 1124


@pytest.mark.parametrize("n,window,hop", [(1000, 256, 128), (256, 256, 128), (999, 128, 64), (5000, 256, 256)])
def test_frame_count_matches_loop_oracle(n, window, hop):
    cfg = StftConfig(window_length=window, hop=hop)
    spec = compute_spectrogram(snippet_from(np.random.default_rng(1).normal(0, 0.1, n)), cfg)
    assert spec.n_frames == loop_frame_count(n, window, hop)
    assert spec.n_bins == window // 2 + 1


def test_silence_renders_all_white():
    spec = compute_spectrogram(snippet_from(np.zeros(4096)))
    assert np.all(spec.intensity == 1.0)


def test_pure_tone_darkest_at_expected_bin():
    # 10 kHz at 48 kHz with 256-point window -> bin round(10000 / 187.5) = 53
    spec = compute_spectrogram(snippet_from(tone(0.5, 10_000.0, amp=0.5)))
    col_means = spec.intensity.mean(axis=0)
    assert np.argmin(col_means) == 53
    assert 53 == round(10_000 / (48_000 / 256))


def test_single_frequency_dft_oracle():
    # direct DFT of one windowed frame locates the same peak bin
    samples = tone(0.1, 10_000.0, amp=0.5)
    frame = samples[:256] * np.hanning(256)
    mags = np.abs(np.fft.rfft(frame))
    assert np.argmax(mags) == 53


def test_intensity_bounds_exhaustive():
    rng = np.random.default_rng(2)
    spec = compute_spectrogram(snippet_from(rng.normal(0, 0.3, 20_000)))
    assert np.all(spec.intensity >= 0.0)
    assert np.all(spec.intensity <= 1.0)
    assert isinstance(spec, Spectrogram)


def test_positive_scaling_invariance():
    rng = np.random.default_rng(3)
    samples = rng.normal(0, 0.2, 30_000) + tone(30_000 / 48_000, 5000, amp=0.3)[:30_000]
    a = compute_spectrogram(snippet_from(samples))
    b = compute_spectrogram(snippet_from(samples * 2.5))
    assert np.allclose(a.intensity, b.intensity, atol=1e-6)


def test_shape_depends_only_on_length_and_config():
    rng = np.random.default_rng(4)
    a = compute_spectrogram(snippet_from(rng.normal(0, 1, 10_000)))
    b = compute_spectrogram(snippet_from(rng.uniform(-1, 1, 10_000)))
    assert a.intensity.shape == b.intensity.shape


def test_axis_metadata():
    spec = compute_spectrogram(snippet_from(np.zeros(48_000)))
    assert spec.bin_width == pytest.approx(187.5)
    assert spec.frame_duration == pytest.approx(128 / 48_000)


def test_too_short_snippet_raises():
    with pytest.raises(ValueError):
        compute_spectrogram(snippet_from(np.zeros(100)))


def test_config_validation():
    with pytest.raises(ValueError):
        StftConfig(window_length=256, hop=0)
    with pytest.raises(ValueError):
        StftConfig(window_length=256, hop=512)
    with pytest.raises(ValueError):
        StftConfig(window_function="kaiser")
