"""Statistical primitives: summary statistics, Shapiro-Wilk W and histogram peaks.

Durations are integer nanoseconds; every statistic is computed in double
precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import NamedTuple

import numpy as np

from .errors import EmptySet, InsufficientSamples, SampleSizeOutOfRange, ZeroVariance
from .validation import check_durations

DEFAULT_PEAK_MASS = 0.05
_MAX_BINS = 10_000


class RawSample(NamedTuple):
    duration: int
    sequence_index: int
    wall_time: int


@dataclass(frozen=True)
class MeasurementStats:
    mean: float
    std_dev: float
    count: int


@dataclass
class MeasurementSet:
    """Timed exchanges of one test case at one loop size.

    ``stats`` is cached and dropped on every mutation through :meth:`add`
    or :meth:`extend`; mutate ``samples`` directly only via those methods.
    """

    test_id: str
    loop_size: int
    samples: list[RawSample] = field(default_factory=list)
    _stats: MeasurementStats | None = field(default=None, init=False, repr=False, compare=False)

    def add(self, sample: RawSample) -> None:
        if sample.duration < 0:
            raise ValueError(f"negative duration {sample.duration}")
        if any(s.sequence_index == sample.sequence_index for s in self.samples):
            raise ValueError(f"duplicate sequence_index {sample.sequence_index}")
        self.samples.append(sample)
        self._stats = None

    def extend(self, samples) -> None:
        for s in samples:
            self.add(s)

    @classmethod
    def from_durations(cls, test_id, loop_size, durations, wall_times=None):
        mset = cls(test_id, loop_size)
        wall_times = wall_times if wall_times is not None else range(len(durations))
        mset.samples = [RawSample(int(d), i, int(t)) for i, (d, t) in enumerate(zip(durations, wall_times))]
        for s in mset.samples:
            if s.duration < 0:
                raise ValueError(f"negative duration {s.duration}")
        return mset

    @property
    def durations(self) -> np.ndarray:
        return np.fromiter((s.duration for s in self.samples), dtype=float, count=len(self.samples))

    @property
    def stats(self) -> MeasurementStats:
        if self._stats is None:
            x = self.durations
            if x.size == 0:
                raise EmptySet(f"measurement set {self.test_id!r} has no samples")
            sd = _std(x) if x.size > 1 else 0.0
            self._stats = MeasurementStats(_mean(x), sd, int(x.size))
        return self._stats

    def __len__(self):
        return len(self.samples)


def _mean(x: np.ndarray) -> float:
    return math.fsum(x.tolist()) / x.size


def _std(x: np.ndarray) -> float:
    mu = _mean(x)
    return math.sqrt(math.fsum(((x - mu) ** 2).tolist()) / (x.size - 1))


def mean(durations) -> float:
    """Arithmetic mean in nanoseconds (not truncated)."""
    x = check_durations(durations)
    if x.size == 0:
        raise EmptySet("mean of an empty set")
    return _mean(x)


def std_dev(durations) -> float:
    """Sample standard deviation (divisor ``count - 1``)."""
    x = check_durations(durations)
    if x.size < 2:
        raise InsufficientSamples(f"standard deviation needs at least 2 samples, got {x.size}")
    return _std(x)


# Shapiro-Wilk, Royston (1995) algorithm AS R94

@dataclass(frozen=True)
class NormalityReport:
    w_statistic: float
    sample_count: int


_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)


def _poly(coefs, x):
    return sum(c * x**i for i, c in enumerate(coefs))


def shapiro_weights(n: int) -> np.ndarray:
    """Royston's approximation of the Shapiro-Wilk coefficients for ``n`` ordered values.

    The returned vector is antisymmetric and has unit norm.
    """
    if n == 3:
        return np.array([-math.sqrt(0.5), 0.0, math.sqrt(0.5)])
    inv = NormalDist().inv_cdf
    m = np.array([inv((i - 0.375) / (n + 0.25)) for i in range(1, n + 1)])
    summ2 = float(np.dot(m, m))
    ssumm2 = math.sqrt(summ2)
    u = 1.0 / math.sqrt(n)
    an = _poly(_C1, u) + m[-1] / ssumm2
    if n > 5:
        an1 = _poly(_C2, u) + m[-2] / ssumm2
        fac = math.sqrt((summ2 - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * an**2 - 2 * an1**2))
        a = m / fac
        a[-1], a[0] = an, -an
        a[-2], a[1] = an1, -an1
    else:
        fac = math.sqrt((summ2 - 2 * m[-1] ** 2) / (1 - 2 * an**2))
        a = m / fac
        a[-1], a[0] = an, -an
    return a


def shapiro_wilk(durations) -> NormalityReport:
    """Shapiro-Wilk W for 3 <= n <= 5000 values (order of input irrelevant)."""
    x = np.sort(check_durations(durations))
    n = x.size
    if n < 3 or n > 5000:
        raise SampleSizeOutOfRange(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    centered = x - _mean(x)
    ss = math.fsum((centered**2).tolist())
    if ss == 0.0 or x[0] == x[-1]:
        raise ZeroVariance("all values are identical")
    a = shapiro_weights(n)
    num = math.fsum((a * centered).tolist())
    w = num * num / ss
    return NormalityReport(min(w, 1.0), n)


# Histogram peaks

class Peak(NamedTuple):
    center: float
    mass: float


@dataclass(frozen=True)
class PeakReport:
    peaks: list[Peak]
    step_estimate: float | None
    bin_width: float


def freedman_diaconis_width(x: np.ndarray) -> float:
    q75, q25 = np.percentile(x, [75, 25])
    iqr = q75 - q25
    if iqr > 0:
        return 2.0 * iqr / x.size ** (1.0 / 3.0)
    span = x.max() - x.min()
    if span > 0:
        return span / math.ceil(math.sqrt(x.size))
    return 1.0


def _basins(counts: np.ndarray):
    """Split a histogram into hills: returns list of [lo, hi, peak_index] (hi exclusive)."""
    maxima = []
    i, nb = 0, counts.size
    while i < nb:
        j = i
        while j + 1 < nb and counts[j + 1] == counts[i]:
            j += 1
        left_ok = i == 0 or counts[i - 1] < counts[i]
        right_ok = j == nb - 1 or counts[j + 1] < counts[i]
        if left_ok and right_ok and counts[i] > 0:
            maxima.append((i + j) // 2)
        i = j + 1
    basins = []
    lo = 0
    for k, p in enumerate(maxima):
        if k + 1 < len(maxima):
            nxt = maxima[k + 1]
            hi = p + 1 + int(np.argmin(counts[p + 1:nxt]))
        else:
            hi = nb
        basins.append([lo, hi, p])
        lo = hi
    return basins


def detect_peaks(durations, bin_width="auto", min_mass=DEFAULT_PEAK_MASS) -> PeakReport:
    """Find the modes of a latency distribution.

    The histogram is cut into hills at the lowest bin between adjacent
    local maxima. Hills lighter than ``min_mass`` are absorbed into the
    neighbour across the shallower valley until every surviving hill
    reaches the threshold. Each peak is reported at its tallest bin's
    midpoint with the fraction of samples in its hill.
    """
    x = check_durations(durations)
    if x.size < 10:
        raise InsufficientSamples(f"peak detection needs at least 10 samples, got {x.size}")
    if bin_width == "auto":
        width = float(freedman_diaconis_width(x))
    else:
        width = float(bin_width)
        if not width > 0:
            raise ValueError(f"bin_width must be > 0, got {bin_width}")
    lo = float(x.min())
    nbins = int((x.max() - lo) // width) + 1
    if nbins > _MAX_BINS:
        width = float(x.max() - lo) / (_MAX_BINS - 1)
        nbins = _MAX_BINS
    idx = np.minimum(((x - lo) // width).astype(np.int64), nbins - 1)
    counts = np.bincount(idx, minlength=nbins)

    hills = _basins(counts)
    masses = [int(counts[a:b].sum()) for a, b, _ in hills]
    threshold = min_mass * x.size
    while len(hills) > 1:
        k = min(range(len(hills)), key=lambda i: (masses[i], i))
        if masses[k] >= threshold:
            break
        left_valley = counts[hills[k][0]] if k > 0 else -1
        right_valley = counts[hills[k + 1][0]] if k + 1 < len(hills) else -1
        if left_valley > right_valley or (left_valley == right_valley and masses[k - 1] >= masses[k + 1]):
            j = k - 1
        else:
            j = k + 1
        a, b = sorted((j, k))
        peak = hills[a][2] if counts[hills[a][2]] >= counts[hills[b][2]] else hills[b][2]
        hills[a:b + 1] = [[hills[a][0], hills[b][1], peak]]
        masses[a:b + 1] = [masses[a] + masses[b]]

    peaks = [Peak(float(lo + (p + 0.5) * width), m / x.size) for (_, _, p), m in zip(hills, masses)]
    report = PeakReport(peaks, None, width)
    return PeakReport(peaks, estimate_step(report), width)


def estimate_step(report: PeakReport) -> float | None:
    """Median gap between consecutive peak centres; lower middle for an even count."""
    centers = sorted(p.center for p in report.peaks)
    if len(centers) < 2:
        return None
    gaps = sorted(b - a for a, b in zip(centers, centers[1:]))
    return float(gaps[(len(gaps) - 1) // 2])
