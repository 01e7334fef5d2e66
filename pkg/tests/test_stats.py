import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mesure.errors import EmptySet, InsufficientSamples, SampleSizeOutOfRange, ZeroVariance
from mesure.stats import (
    MeasurementSet,
    Peak,
    PeakReport,
    RawSample,
    detect_peaks,
    estimate_step,
    mean,
    shapiro_wilk,
    shapiro_weights,
    std_dev,
)

from .conftest import DATA

durations = st.lists(st.integers(0, 10**10), min_size=2, max_size=60)


def test_mean_examples():
    assert mean([10, 10, 10, 50]) == 20.0
    assert mean([7] * 13) == 7.0
    assert mean([0]) == 0.0
    with pytest.raises(EmptySet):
        mean([])


def test_mean_is_not_truncated():
    assert mean([1, 2]) == 1.5


def test_std_dev_examples():
    assert std_dev([10, 10, 10, 50]) == 20.0
    assert std_dev([4, 4, 4]) == 0.0
    with pytest.raises(InsufficientSamples):
        std_dev([4])


def test_std_dev_recovers_generator_sigma():
    x = np.random.default_rng(11).normal(1e6, 2500.0, 10_000)
    assert abs(std_dev(x) - 2500.0) / 2500.0 < 0.03


def test_measurement_set_stats_follow_mutation():
    mset = MeasurementSet("sadd", 1681)
    with pytest.raises(EmptySet):
        mset.stats
    for i, d in enumerate([10, 10, 10]):
        mset.add(RawSample(d, i, i))
    assert mset.stats.mean == 10.0 and mset.stats.std_dev == 0.0 and mset.stats.count == 3
    mset.add(RawSample(50, 3, 3))
    assert mset.stats.mean == 20.0 and mset.stats.std_dev == 20.0 and mset.stats.count == 4


def test_measurement_set_rejects_bad_samples():
    mset = MeasurementSet("x", 1)
    mset.add(RawSample(1, 0, 0))
    with pytest.raises(ValueError):
        mset.add(RawSample(2, 0, 1))
    with pytest.raises(ValueError):
        mset.add(RawSample(-1, 1, 1))


@given(durations, st.randoms(use_true_random=False))
def test_mean_and_std_permutation_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert mean(xs) == mean(ys)
    assert std_dev(xs) == pytest.approx(std_dev(ys), rel=1e-12, abs=1e-12)


@given(durations, st.integers(-10**9, 10**9))
def test_shift_moves_mean_only(xs, c):
    shifted = [x + c for x in xs]
    assert mean(shifted) == pytest.approx(mean(xs) + c, rel=1e-9, abs=1e-6)
    assert std_dev(shifted) == pytest.approx(std_dev(xs), rel=1e-9, abs=1e-6)


# Shapiro-Wilk

def test_shapiro_weights_are_antisymmetric_unit_vectors():
    for n in (3, 4, 5, 6, 11, 200, 5000):
        a = shapiro_weights(n)
        assert np.allclose(a, -a[::-1])
        assert math.isclose(float(np.dot(a, a)), 1.0, rel_tol=1e-12)


def test_shapiro_normal_sample_scores_high():
    x = np.random.default_rng(7).normal(0, 1, 50)
    assert shapiro_wilk(x).w_statistic >= 0.95


def test_shapiro_two_point_sample_scores_low():
    # scipy.stats.shapiro gives 0.636824 for this sample
    rep = shapiro_wilk([0] * 25 + [1000] * 25)
    assert rep.w_statistic < 0.8
    assert rep.w_statistic == pytest.approx(0.636823649737928, abs=1e-6)
    assert rep.sample_count == 50


def test_shapiro_three_points_matches_reference():
    # scipy.stats.shapiro([1, 2, 4]).statistic
    assert shapiro_wilk([1, 2, 4]).w_statistic == pytest.approx(0.9642857142857142, abs=1e-9)


def test_shapiro_errors():
    with pytest.raises(ZeroVariance):
        shapiro_wilk([5, 5, 5])
    with pytest.raises(SampleSizeOutOfRange):
        shapiro_wilk([1, 2])
    with pytest.raises(SampleSizeOutOfRange):
        shapiro_wilk(np.arange(5001))


def test_shapiro_matches_frozen_reference():
    ref = json.loads((DATA / "shapiro_reference.json").read_text())
    for ds in ref["datasets"]:
        assert shapiro_wilk(ds["values"]).w_statistic == pytest.approx(ds["w_ref"], abs=1e-6), ds["kind"]


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e6), st.floats(-1e3, 1e3))
def test_shapiro_affine_invariance(seed, scale, rel_offset):
    # offset bounded relative to scale: beyond that the shifted floats no longer
    # represent the same sample to 1e-9
    x = np.random.default_rng(seed).normal(0, 1, 40)
    w0 = shapiro_wilk(x).w_statistic
    w1 = shapiro_wilk(scale * x + rel_offset * scale).w_statistic
    assert abs(w0 - w1) <= 1e-9


def test_shapiro_normal_samples_mostly_above_090():
    passes = sum(shapiro_wilk(np.random.default_rng(s).normal(5e6, 1e4, 50)).w_statistic >= 0.9
                 for s in range(100))
    assert passes >= 95


# peaks

MS = 1_000_000


def test_detect_peaks_three_steps():
    rng = np.random.default_rng(5)
    x = np.concatenate([rng.normal(c * MS, 0.01 * MS, 400) for c in (1.0, 1.2, 1.4)])
    rep = detect_peaks(x, bin_width=0.05 * MS)
    assert len(rep.peaks) == 3
    for peak, c in zip(rep.peaks, (1.0, 1.2, 1.4)):
        assert abs(peak.center - c * MS) <= 0.05 * MS
        assert peak.mass == pytest.approx(1 / 3)
    assert rep.step_estimate == pytest.approx(0.2 * MS)


def test_detect_peaks_single_cluster():
    x = np.random.default_rng(1).normal(5 * MS, 1000, 300)
    assert len(detect_peaks(x).peaks) == 1


def test_detect_peaks_uniform_within_one_bin():
    x = np.random.default_rng(2).uniform(1000, 1099, 40)
    rep = detect_peaks(x, bin_width=100)
    assert len(rep.peaks) == 1
    assert rep.peaks[0].mass == 1.0
    assert x.min() <= rep.peaks[0].center <= x.min() + 100


def test_detect_peaks_constant_values():
    rep = detect_peaks([42] * 12)
    assert rep.peaks == [Peak(42.5, 1.0)]


def test_detect_peaks_needs_ten_samples():
    with pytest.raises(InsufficientSamples):
        detect_peaks(range(9))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.floats(5.0, 20.0))
def test_detect_peaks_counts_separated_components(seed, k, sep_bins):
    rng = np.random.default_rng(seed)
    width = 1000.0
    centers = [i * sep_bins * width for i in range(k)]
    x = np.concatenate([rng.normal(c, 0.3 * width, 200) for c in centers])
    rep = detect_peaks(x, bin_width=width)
    assert len(rep.peaks) == k
    assert all(p.mass > 0 for p in rep.peaks)
    assert sum(p.mass for p in rep.peaks) <= 1 + 1e-12
    assert [p.center for p in rep.peaks] == sorted(p.center for p in rep.peaks)


def _report(centers):
    return PeakReport([Peak(c, 0.1) for c in centers], None, 1.0)


def test_estimate_step_examples():
    assert estimate_step(_report([1.0 * MS, 1.2 * MS, 1.4 * MS])) == pytest.approx(0.2 * MS)
    assert estimate_step(_report([5.0])) is None
    assert estimate_step(_report([0, 100 * MS, 500 * MS])) == 100 * MS


@given(st.integers(-10**6, 10**6), st.integers(1, 10**6), st.integers(2, 12))
def test_estimate_step_arithmetic_progression(start, d, n):
    assert estimate_step(_report([start + i * d for i in range(n)])) == d
