"""Host-side measurement: loop-size calibration and repeated benching."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .apdu import PHASE_CLEANUP, PHASE_RUN, PHASE_SETUP, bench_command
from .errors import CalibrationFailed, DeviceError
from .stats import MeasurementSet, RawSample, _mean, _std
from .suite import Suite, TestCaseSpec
from .transport import Channel

logger = logging.getLogger(__name__)

MIN_P2, MAX_P2 = 1, 255
RECOMMENDED_REPETITIONS = 30


@dataclass(frozen=True)
class LoopSize:
    """Loop count sent on the card as ``P2``; the card loops ``P2**2`` times."""

    p2: int

    def __post_init__(self):
        if isinstance(self.p2, bool) or not isinstance(self.p2, int) or not MIN_P2 <= self.p2 <= MAX_P2:
            raise ValueError(f"P2 must be an integer in [{MIN_P2}, {MAX_P2}], got {self.p2!r}")

    @property
    def l(self) -> int:  # noqa: E743
        return self.p2 * self.p2


@dataclass(frozen=True)
class CalibrationPolicy:
    ratio: float = 0.02
    min_duration: int = 1_000_000_000
    probe_reps: int = 10
    confirm_reps: int = 30

    def __post_init__(self):
        if not self.ratio > 0:
            raise ValueError(f"ratio must be > 0, got {self.ratio}")
        if self.min_duration < 0:
            raise ValueError(f"min_duration must be >= 0, got {self.min_duration}")
        if self.probe_reps < 2 or self.confirm_reps < 2:
            raise ValueError("probe_reps and confirm_reps must be >= 2")

    def accepts(self, mean: float, std: float) -> bool:
        return mean >= self.min_duration and _spread_ratio(mean, std) <= self.ratio


@dataclass
class BenchPlan:
    loop_size: LoopSize
    repetitions: int = RECOMMENDED_REPETITIONS

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.repetitions < RECOMMENDED_REPETITIONS:
            warnings.warn(f"{self.repetitions} repetitions is below the recommended {RECOMMENDED_REPETITIONS}",
                          stacklevel=2)


@dataclass
class CaseMeasurements:
    """A case and its empty-loop reference, both measured at the same loop size."""

    case: MeasurementSet
    reference: MeasurementSet
    loop_size: LoopSize
    spec: TestCaseSpec = field(repr=False, default=None)

    def __post_init__(self):
        if not self.case.loop_size == self.reference.loop_size == self.loop_size.l:
            raise ValueError("case and reference must be measured at the same loop size")


def _spread_ratio(mean, std):
    if std == 0:
        return 0.0
    return std / mean if mean > 0 else math.inf


def _check(exchange, case_id):
    if not exchange.response.success:
        raise DeviceError(exchange.response.sw, case_id)
    return exchange


def _timed_runs(channel: Channel, case: TestCaseSpec, p2: int, reps: int) -> list[int]:
    command = bench_command(case.ins, PHASE_RUN, p2)
    out = [0] * reps
    for i in range(reps):
        out[i] = _check(channel.exchange(command), case.id).elapsed
    return out


def calibrate(channel: Channel, case: TestCaseSpec, policy: CalibrationPolicy = CalibrationPolicy()) -> LoopSize:
    """Smallest loop size whose measurements meet the duration and spread policy.

    Binary search over P2 for the first mean above ``min_duration`` (the
    mean grows with the loop count), confirm both criteria there with more
    repetitions, then step P2 up one at a time until they hold.
    """
    _check(channel.exchange(bench_command(case.ins, PHASE_SETUP)), case.id)

    def probe_ok(p2):
        return _mean_of(_timed_runs(channel, case, p2, policy.probe_reps)) >= policy.min_duration

    if not probe_ok(MAX_P2):
        raise CalibrationFailed(
            f"mean at the largest loop size (P2={MAX_P2}, L={MAX_P2 ** 2}) is below "
            f"min_duration={policy.min_duration} ns", case.id)
    lo, hi = MIN_P2, MAX_P2
    while lo < hi:
        mid = (lo + hi) // 2
        if probe_ok(mid):
            hi = mid
        else:
            lo = mid + 1

    for p2 in range(lo, MAX_P2 + 1):
        durations = _timed_runs(channel, case, p2, policy.confirm_reps)
        mu, sd = _mean_of(durations), _std_of(durations)
        logger.debug("calibrate %s: P2=%d mean=%.0f sd=%.0f", case.id, p2, mu, sd)
        if policy.accepts(mu, sd):
            _check(channel.exchange(bench_command(case.ins, PHASE_CLEANUP)), case.id)
            return LoopSize(p2)
    raise CalibrationFailed(
        f"spread ratio {_spread_ratio(mu, sd):.4g} still above {policy.ratio} at P2={MAX_P2}", case.id)


def _mean_of(durations):
    return _mean(np.asarray(durations, dtype=float))


def _std_of(durations):
    return _std(np.asarray(durations, dtype=float))


def run_bench(channel: Channel, case: TestCaseSpec, plan: BenchPlan) -> MeasurementSet:
    """Time ``plan.repetitions`` run-phase exchanges between one setUp and one cleanUp."""
    p2, reps = plan.loop_size.p2, plan.repetitions
    _check(channel.exchange(bench_command(case.ins, PHASE_SETUP, p2)), case.id)
    command = bench_command(case.ins, PHASE_RUN, p2)
    elapsed = [0] * reps
    stamps = [0] * reps
    for i in range(reps):
        ex = channel.exchange(command)
        stamps[i] = channel.now()
        if not ex.response.success:
            raise DeviceError(ex.response.sw, case.id)
        elapsed[i] = ex.elapsed
    _check(channel.exchange(bench_command(case.ins, PHASE_CLEANUP, p2)), case.id)
    mset = MeasurementSet(case.id, plan.loop_size.l)
    mset.samples = [RawSample(d, i, t) for i, (d, t) in enumerate(zip(elapsed, stamps))]
    return mset


def run_suite(channel: Channel, suite: Suite, case_ids=None, policy: CalibrationPolicy = CalibrationPolicy(),
              repetitions: int = RECOMMENDED_REPETITIONS, loop_size: LoopSize | None = None,
              ) -> dict[str, CaseMeasurements]:
    """Calibrate and bench every requested case plus its auxiliaries.

    Each case is calibrated on its own unless ``loop_size`` pins one for
    all; its reference is benched right after it at the same loop size.
    Errors carry the failing case id in a ``case_id`` attribute.
    """
    suite.validate()
    wanted = suite.features() if case_ids is None else list(case_ids)
    results: dict[str, CaseMeasurements] = {}
    for cid in suite.closure(wanted):
        case = suite[cid]
        if case.is_reference:
            continue
        try:
            size = loop_size or calibrate(channel, case, policy)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                plan = BenchPlan(size, repetitions)
            case_set = run_bench(channel, case, plan)
            ref_set = run_bench(channel, suite[case.reference_id], plan)
        except Exception as exc:
            if getattr(exc, "case_id", None) is None:
                exc.case_id = cid
            raise
        logger.info("%s: L=%d mean=%.1f ns, reference mean=%.1f ns", cid, size.l,
                    case_set.stats.mean, ref_set.stats.mean)
        results[cid] = CaseMeasurements(case_set, ref_set, size, case)
    return results
