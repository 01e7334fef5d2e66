"""Outlier filtering and empty-loop subtraction.

The isolated cost of an operation measured in a loop of ``L`` iterations is

    (mean(case) - mean(empty loop)) / L - sum(isolated cost of each auxiliary)

so auxiliaries have to be isolated before the operations that depend on them.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_is_fitted

from .errors import (
    CycleDetected,
    InsufficientSamples,
    LoopSizeMismatch,
    MissingMeasurement,
    NegativeIsolation,
    OverFiltered,
    ZeroReference,
)
from .stats import MeasurementSet, _mean, _std
from .validation import check_durations, check_positive


@dataclass(frozen=True)
class FilterPolicy:
    n_sigma: float = 2.0
    min_retained: int = 2

    def __post_init__(self):
        check_positive(self.n_sigma, "n_sigma", allow_inf=True)
        if self.min_retained < 1:
            raise ValueError(f"min_retained must be >= 1, got {self.min_retained}")


class ConfidenceFilter(OutlierMixin, BaseEstimator):
    """Flag samples outside ``[mean - n_sigma * std, mean + n_sigma * std]``.

    ``fit`` learns the interval from the sample mean and sample standard
    deviation; ``predict`` returns ``1`` for retained samples and ``-1``
    for rejected ones, as sklearn's outlier detectors do. Bounds are
    inclusive, so a zero-variance set is kept whole.
    """

    def __init__(self, n_sigma=2.0):
        self.n_sigma = n_sigma

    def fit(self, X, y=None):
        check_positive(self.n_sigma, "n_sigma", allow_inf=True)
        x = check_durations(X)
        if x.size < 2:
            raise InsufficientSamples(f"filtering needs at least 2 samples, got {x.size}")
        self.mean_ = _mean(x)
        self.std_ = _std(x)
        half = self.n_sigma * self.std_ if self.std_ > 0 else 0.0
        self.lower_ = self.mean_ - half
        self.upper_ = self.mean_ + half
        self.n_samples_fit_ = x.size
        return self

    def predict(self, X):
        check_is_fitted(self, "mean_")
        x = check_durations(X)
        return np.where((x >= self.lower_) & (x <= self.upper_), 1, -1)


def filter_confidence(mset: MeasurementSet, policy: FilterPolicy = FilterPolicy()) -> MeasurementSet:
    """Single-pass confidence-interval filter; returns a new set with fresh stats."""
    est = ConfidenceFilter(policy.n_sigma).fit(mset.durations)
    keep = est.predict(mset.durations) == 1
    retained = [s for s, k in zip(mset.samples, keep) if k]
    if len(retained) < policy.min_retained:
        raise OverFiltered(
            f"{mset.test_id}: only {len(retained)} of {len(mset)} samples inside "
            f"[{est.lower_:.1f}, {est.upper_:.1f}], need {policy.min_retained}")
    out = MeasurementSet(mset.test_id, mset.loop_size)
    out.samples = retained
    return out


@dataclass(frozen=True)
class IsolatedTime:
    feature_id: str
    mean: float
    spread: float
    loop_size: int
    sample_count: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "spread": self.spread, "loop_size": self.loop_size,
                "sample_count": self.sample_count}

    @classmethod
    def from_dict(cls, feature_id, doc) -> "IsolatedTime":
        return cls(feature_id, float(doc["mean"]), float(doc["spread"]), int(doc["loop_size"]),
                   int(doc["sample_count"]))


@dataclass
class OpDependencyGraph:
    """Maps each feature to the auxiliaries executed before it (repeats kept)."""

    edges: dict[str, list[str]] = field(default_factory=dict)

    @classmethod
    def from_suite(cls, suite) -> "OpDependencyGraph":
        return cls({c.id: list(c.auxiliaries) for c in suite if not c.is_reference})

    @property
    def nodes(self) -> list[str]:
        return list(self.edges)

    def order(self) -> list[str]:
        sorter = TopologicalSorter({k: set(v) for k, v in self.edges.items()})
        try:
            return list(sorter.static_order())
        except CycleError as exc:
            raise CycleDetected(f"auxiliary cycle: {' -> '.join(exc.args[1])}") from None


def _variance(mset):
    return _std(mset.durations) ** 2 if len(mset) > 1 else 0.0


def isolate_one(op_set: MeasurementSet, ref_set: MeasurementSet, aux_means=(), loop_size=None,
                feature_id=None) -> IsolatedTime:
    L = op_set.loop_size if loop_size is None else loop_size
    if not op_set.loop_size == ref_set.loop_size == L:
        raise LoopSizeMismatch(
            f"loop sizes differ: case {op_set.loop_size}, reference {ref_set.loop_size}, expected {L}")
    if L < 1:
        raise LoopSizeMismatch(f"loop size must be >= 1, got {L}")
    per_loop = (op_set.stats.mean - ref_set.stats.mean) / L
    value = per_loop - math.fsum(aux_means)
    fid = feature_id or op_set.test_id
    if value < 0:
        warnings.warn(f"{fid}: isolated mean is negative ({value:.3f} ns)", NegativeIsolation, stacklevel=2)
    spread = math.sqrt(_variance(op_set) + _variance(ref_set)) / L
    return IsolatedTime(fid, value, spread, L, op_set.stats.count)


def _pair(entry):
    if isinstance(entry, (tuple, list)):
        return entry[0], entry[1]
    return entry.case, entry.reference


def isolate_all(results, graph: OpDependencyGraph, policy: FilterPolicy = FilterPolicy(),
                ) -> dict[str, IsolatedTime]:
    """Filter every set, then isolate features auxiliaries-first.

    ``results`` maps feature id to a ``CaseMeasurements`` or a
    ``(case_set, reference_set)`` pair.
    """
    order = graph.order()
    for fid in order:
        if fid not in results:
            raise MissingMeasurement(f"no measurements for feature {fid!r}")
    isolated: dict[str, IsolatedTime] = {}
    for fid in order:
        op_set, ref_set = _pair(results[fid])
        op_f, ref_f = filter_confidence(op_set, policy), filter_confidence(ref_set, policy)
        aux = [isolated[a].mean for a in graph.edges.get(fid, ())]
        isolated[fid] = isolate_one(op_f, ref_f, aux, op_set.loop_size, feature_id=fid)
    return isolated


class EmptyLoopIsolator(BaseEstimator):
    """Estimator wrapper around :func:`isolate_all`.

    ``fit(results, graph)`` stores ``isolated_`` (feature id to
    :class:`IsolatedTime`); ``predict(feature_ids)`` returns their means.
    """

    def __init__(self, n_sigma=2.0, min_retained=2):
        self.n_sigma = n_sigma
        self.min_retained = min_retained

    def fit(self, results, graph=None):
        if graph is None:
            graph = OpDependencyGraph({fid: [] for fid in results})
        self.isolated_ = isolate_all(results, graph, FilterPolicy(self.n_sigma, self.min_retained))
        self.feature_names_ = list(self.isolated_)
        return self

    def predict(self, feature_ids=None):
        check_is_fitted(self, "isolated_")
        ids = self.feature_names_ if feature_ids is None else feature_ids
        missing = [f for f in ids if f not in self.isolated_]
        if missing:
            raise MissingMeasurement(f"features were not fitted: {missing}")
        return np.array([self.isolated_[f].mean for f in ids])


def relative_deviation(measured: float, reference: float) -> float:
    """``|measured - reference| / reference``."""
    if not reference > 0:
        raise ZeroReference(f"reference must be > 0, got {reference}")
    return abs(measured - reference) / reference
