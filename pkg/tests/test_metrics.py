import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import FS, tone
from nuwave2.dsp import AudioBuffer, degrade, evaluation_filter
from nuwave2.metrics import (
    EVAL_RATES,
    METRIC_STFT,
    MetricReport,
    band_split_bin,
    evaluate,
    identity_upsampler,
    log_power_spectrogram,
    lsd,
    lsd_banded,
    snr_db,
)


def brute_log_power(x, n_fft=2048, hop=512):
    """Loop-and-matrix spectrogram with explicit reflect indexing."""
    x = np.asarray(x, dtype=float)
    n, half = len(x), n_fft // 2
    window = np.array([0.5 - 0.5 * math.cos(2 * math.pi * i / n_fft) for i in range(n_fft)])
    k = np.arange(n_fft // 2 + 1)[:, None]
    m = np.arange(n_fft)[None, :]
    cos_m, sin_m = np.cos(2 * np.pi * k * m / n_fft), np.sin(2 * np.pi * k * m / n_fft)
    cols = []
    for f in range(n // hop + 1):
        idx = np.arange(f * hop - half, f * hop + half)
        idx = np.where(idx < 0, -idx, idx)
        idx = np.where(idx >= n, 2 * (n - 1) - idx, idx)
        seg = x[idx] * window
        re, im = cos_m @ seg, -(sin_m @ seg)
        cols.append(np.log10(re**2 + im**2 + 1e-10))
    return np.array(cols).T


def brute_lsd(a, b, rows=None):
    d = brute_log_power(a) - brute_log_power(b)
    if rows is not None:
        d = d[rows]
    total = 0.0
    for j in range(d.shape[1]):
        total += math.sqrt(sum(v * v for v in d[:, j]) / d.shape[0])
    return total / d.shape[1]


def test_snr_examples(rng):
    ref = rng.standard_normal(1000)
    assert snr_db(ref, ref) == 300.0
    assert snr_db(ref, ref / 2) == pytest.approx(6.0206, abs=1e-4)
    assert snr_db(ref, np.zeros_like(ref)) == pytest.approx(0.0, abs=1e-12)


def test_snr_errors():
    with pytest.raises(ValueError):
        snr_db(np.ones(3), np.ones(4))
    with pytest.raises(ValueError):
        snr_db(np.zeros(3), np.ones(3))


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 10.0), st.floats(1.01, 5.0))
def test_snr_monotone_in_perturbation(scale, factor):
    rng = np.random.default_rng(0)
    ref, d = rng.standard_normal(256), rng.standard_normal(256)
    assert snr_db(ref, ref + scale * factor * d) < snr_db(ref, ref + scale * d)


def test_log_power_matches_brute_force(rng):
    x = rng.standard_normal(6000)
    np.testing.assert_allclose(log_power_spectrogram(x), brute_log_power(x), rtol=0, atol=1e-9)


def test_log_power_dc_bin():
    lp = log_power_spectrogram(np.ones(8192))
    # Periodic Hann of length 2048 sums to 1024.
    np.testing.assert_allclose(lp[0], np.log10(1024.0**2), atol=1e-9)


def test_log_power_silence_and_scale(rng):
    assert np.all(log_power_spectrogram(np.zeros(4096)) == -10.0)
    x = rng.standard_normal(4096)
    lp1, lp10 = log_power_spectrogram(x), log_power_spectrogram(10 * x)
    above = lp1 > -6
    np.testing.assert_allclose((lp10 - lp1)[above], 2.0, atol=1e-6)


def test_log_power_too_short():
    with pytest.raises(ValueError):
        log_power_spectrogram(np.ones(2047))


def test_lsd_brute_force_oracle(rng):
    a, b = rng.standard_normal(5000), rng.standard_normal(5000)
    assert lsd(a, b) == pytest.approx(brute_lsd(a, b), abs=1e-9)
    hf, lf = lsd_banded(a, b, 6000)
    k = band_split_bin(6000)
    assert hf == pytest.approx(brute_lsd(a, b, slice(k + 1, None)), abs=1e-9)
    assert lf == pytest.approx(brute_lsd(a, b, slice(0, k + 1)), abs=1e-9)


def test_lsd_examples(rng):
    a = rng.standard_normal(8192)
    assert lsd(a, a) == 0.0
    assert lsd(a, math.sqrt(10) * a) == pytest.approx(1.0, abs=1e-6)
    assert lsd_banded(a, a, 4000) == (0.0, 0.0)


def test_lsd_symmetry(rng):
    a, b = rng.standard_normal(4096), rng.standard_normal(4096)
    assert lsd(a, b) == lsd(b, a)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 20.0))
def test_lsd_scale_law(c):
    a = np.random.default_rng(7).standard_normal(4096)
    assert lsd(a, c * a) == pytest.approx(abs(2 * math.log10(c)), abs=1e-6)


def test_lsd_length_mismatch():
    with pytest.raises(ValueError):
        lsd(np.ones(4096), np.ones(4097))
    with pytest.raises(ValueError):
        lsd_banded(np.ones(4096), np.ones(4097), 4000)


@pytest.mark.parametrize("cutoff", [0, 24000, -5, 30000])
def test_lsd_banded_cutoff_range(cutoff):
    with pytest.raises(ValueError):
        lsd_banded(np.ones(4096), np.ones(4096), cutoff)


def test_band_partition():
    n_bins = METRIC_STFT.n_bins
    for cutoff in (100, 4000, 6000, 8000, 12000, 23999):
        k = band_split_bin(cutoff)
        assert 0 <= k < n_bins - 1 or cutoff == 23999
        low, high = set(range(k + 1)), set(range(k + 1, n_bins))
        assert not low & high and low | high == set(range(n_bins))
    assert band_split_bin(8000) == 341


@pytest.mark.parametrize("cutoff", [3000.0, 6000.0, 11000.0])
def test_banded_combination_reproduces_fullband(rng, cutoff):
    a, b = rng.standard_normal(6000), rng.standard_normal(6000)
    d = log_power_spectrogram(a) - log_power_spectrogram(b)
    k = band_split_bin(cutoff)
    n_lo, n_hi = k + 1, d.shape[0] - k - 1
    per_frame_hf = np.sqrt(np.mean(d[k + 1 :] ** 2, axis=0))
    per_frame_lf = np.sqrt(np.mean(d[: k + 1] ** 2, axis=0))
    combined = np.mean(np.sqrt((n_hi * per_frame_hf**2 + n_lo * per_frame_lf**2) / (n_lo + n_hi)))
    assert combined == pytest.approx(lsd(a, b), abs=1e-9)


def test_difference_only_above_cutoff(rng):
    a = tone(1000, 8192, amp=0.5) + 0.01 * rng.standard_normal(8192)
    env = np.zeros(8192)
    env[2048:6144] = np.hanning(4096) ** 2
    b = a + 0.2 * env * tone(15000, 8192)
    hf, lf = lsd_banded(a, b, 8000)
    assert hf > 0.1 and lf < 1e-6


def test_difference_exactly_zero_below_cutoff(rng):
    # Alter only the high bins of every frame via the analysis spectrogram identity.
    a = rng.standard_normal(4096)
    lp = log_power_spectrogram(a)
    k = band_split_bin(8000)
    d = lp.copy()
    d[k + 1 :] += 1.0
    per_lf = np.sqrt(np.mean((lp - d)[: k + 1] ** 2, axis=0))
    assert np.all(per_lf == 0.0)


# --------------------------------------------------------------------------- evaluation harness


def speechlike(seed, n=24000, top_hz=22000.0):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / FS
    x = sum((0.3 / k) * np.sin(2 * np.pi * 180 * k * t + rng.uniform(0, 6.28)) for k in range(1, 130) if 180 * k < top_hz)
    return 0.5 * x / np.max(np.abs(x)) + 0.01 * rng.standard_normal(n)


def band_limited(seed, top_hz, n=24000):
    """Harmonics plus noise, all below ``top_hz``."""
    x = speechlike(seed, n, top_hz)
    spec = np.fft.rfft(x)
    spec[np.fft.rfftfreq(n, 1 / FS) > top_hz] = 0
    return np.fft.irfft(spec, n)


def test_identity_matches_direct_degradation():
    clips = [speechlike(s) for s in range(3)]
    (row,) = evaluate(identity_upsampler, clips, [24000]).rows
    assert row.input_sr == 24000 and row.n_files == 3
    degraded = [degrade(AudioBuffer(c, FS), 24000, evaluation_filter(24000)).samples for c in clips]
    hf = np.mean([lsd_banded(c, d, 12000)[0] for c, d in zip(clips, degraded)])
    lf = np.mean([lsd_banded(c, d, 12000)[1] for c, d in zip(clips, degraded)])
    assert row.lsd_hf == pytest.approx(hf, rel=1e-12)
    assert row.lsd_lf == pytest.approx(lf, rel=1e-12)


def test_identity_at_24k_floor():
    # Content inside the resampler passband (0.45 of the low Nyquist): the LF band is preserved.
    clips = [band_limited(s, 0.45 * 12000) for s in range(3)]
    (row,) = evaluate(identity_upsampler, clips, [24000]).rows
    assert row.lsd_lf < 0.15


def test_identity_report_rows_nonnegative():
    report = evaluate(identity_upsampler, [speechlike(9)], EVAL_RATES)
    assert [r.input_sr for r in report.rows] == list(EVAL_RATES)
    for r in report.rows:
        assert min(r.lsd, r.lsd_hf, r.lsd_lf) >= 0 and r.n_files == 1
    # Narrower input leaves more of the band to generate.
    hfs = [r.lsd for r in report.rows]
    assert hfs == sorted(hfs, reverse=True)


def test_empty_rates_empty_report():
    report = evaluate(identity_upsampler, [speechlike(0)], [])
    assert report.rows == [] and report.means() == {}
    assert report.to_csv() == MetricReport.CSV_HEADER + "\n"


def test_empty_testset():
    with pytest.raises(ValueError):
        evaluate(identity_upsampler, [], [8000])


def test_evaluate_deterministic_and_seeded():
    def noisy(x_l, sr, rng):
        return x_l + 0.01 * rng.standard_normal(len(x_l))

    clips = [speechlike(1), speechlike(2)]
    a = evaluate(noisy, clips, [8000, 16000], seed=5)
    b = evaluate(noisy, clips, [8000, 16000], seed=5)
    c = evaluate(noisy, clips, [8000, 16000], seed=6)
    assert a.to_csv() == b.to_csv() and a.to_csv() != c.to_csv()


def test_evaluate_skips_failed_files(caplog):
    def picky(x_l, sr, rng):
        if len(x_l) < 20000:
            raise RuntimeError("boom")
        return x_l

    report = evaluate(picky, [speechlike(1), speechlike(2, n=10000)], [16000])
    (row,) = report.rows
    assert row.n_files == 1 and row.n_failed == 1
    assert "failed" in caplog.text


def test_report_formats():
    report = evaluate(identity_upsampler, [speechlike(3)], [8000, 24000])
    lines = report.to_csv().splitlines()
    assert lines[0] == "input_sr,snr_db,lsd,lsd_hf,lsd_lf,n_files"
    assert lines[1].startswith("8000,") and lines[2].endswith(",1")
    table = report.to_table().splitlines()
    assert table[0].split() == ["input_sr", "snr_db", "lsd", "lsd_hf", "lsd_lf", "n_files"]
    assert table[-1].split()[0] == "mean"
    assert set(report.means()) == {"snr_db", "lsd", "lsd_hf", "lsd_lf"}
