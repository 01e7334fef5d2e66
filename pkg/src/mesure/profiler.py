"""Domain profiling and scoring.

Execution traces of representative applets give how often each feature is
used in a domain; those counts become weights. A card's mark for a feature
is ``reference_time / card_time``; its domain mark is the weight-averaged
sum of feature marks, and its overall mark is the mean over domains.

Trace format, one event per line::

    # comment
    ENTER <method>
    BC <bytecode> [key=value ...]
    EXIT
"""
from __future__ import annotations

import math
import shlex
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import (
    FeatureWithoutMark,
    MissingFeature,
    NonPositiveInput,
    NonPositiveMean,
    NoTraces,
    TraceParseError,
    UnbalancedTrace,
    ZeroUsage,
)


class TraceEvent(NamedTuple):
    kind: str  # "enter" | "exit" | "bytecode"
    name: str | None = None
    attributes: tuple[tuple[str, str], ...] = ()


@dataclass
class InvocationNode:
    name: str
    attributes: tuple[tuple[str, str], ...] = ()
    children: list["InvocationNode"] = field(default_factory=list)
    is_bytecode: bool = False

    @property
    def counts(self) -> Counter:
        """Occurrences of every feature in this node's subtree (itself excluded)."""
        total = Counter()
        for child in self.children:
            total[child.name] += 1
            total.update(child.counts)
        return total

    def events(self):
        if self.is_bytecode:
            yield TraceEvent("bytecode", self.name, self.attributes)
            return
        yield TraceEvent("enter", self.name, self.attributes)
        for child in self.children:
            yield from child.events()
        yield TraceEvent("exit")

    def render(self, depth=0) -> list[str]:
        pad = "  " * depth
        if self.is_bytecode:
            return [f"{pad}{self.name}"]
        lines = [f"{pad}{self.name}()"]
        # collapse runs of identical bytecodes into "name xN"
        run_name, run_len = None, 0
        for child in self.children + [None]:
            if child is not None and child.is_bytecode and child.name == run_name and not child.attributes:
                run_len += 1
                continue
            if run_name is not None:
                lines.append(f"{pad}  {run_name}" + (f" x{run_len}" if run_len > 1 else ""))
                run_name, run_len = None, 0
            if child is None:
                break
            if child.is_bytecode and not child.attributes:
                run_name, run_len = child.name, 1
            else:
                lines.extend(child.render(depth + 1))
        return lines


@dataclass
class InvocationTree:
    roots: list[InvocationNode] = field(default_factory=list)

    def events(self) -> list[TraceEvent]:
        return [e for root in self.roots for e in root.events()]

    def counts(self) -> Counter:
        total = Counter()
        for root in self.roots:
            total[root.name] += 1
            total.update(root.counts)
        return total

    def render(self) -> str:
        return "\n".join(line for root in self.roots for line in root.render())


def _parse_attributes(tokens, lineno):
    attrs = []
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or not key:
            raise TraceParseError(lineno, f"attribute {tok!r} is not key=value")
        attrs.append((key, value))
    return tuple(attrs)


def parse_events(text: str) -> list[TraceEvent]:
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            tokens = shlex.split(line)
        except ValueError as exc:
            raise TraceParseError(lineno, str(exc)) from None
        op, args = tokens[0], tokens[1:]
        if op == "ENTER":
            if not args:
                raise TraceParseError(lineno, "ENTER needs a method name")
            events.append(TraceEvent("enter", args[0], _parse_attributes(args[1:], lineno)))
        elif op == "BC":
            if not args:
                raise TraceParseError(lineno, "BC needs a bytecode name")
            events.append(TraceEvent("bytecode", args[0], _parse_attributes(args[1:], lineno)))
        elif op == "EXIT":
            if args:
                raise TraceParseError(lineno, "EXIT takes no arguments")
            events.append(TraceEvent("exit"))
        else:
            raise TraceParseError(lineno, f"unknown event {op!r}")
    return events


def build_tree(events) -> InvocationTree:
    tree = InvocationTree()
    stack: list[InvocationNode] = []
    for ev in events:
        if ev.kind == "exit":
            if not stack:
                raise UnbalancedTrace("EXIT without a matching ENTER")
            stack.pop()
            continue
        node = InvocationNode(ev.name, ev.attributes, is_bytecode=ev.kind == "bytecode")
        (stack[-1].children if stack else tree.roots).append(node)
        if ev.kind == "enter":
            stack.append(node)
    if stack:
        raise UnbalancedTrace(f"{len(stack)} method(s) never exited: {[n.name for n in stack]}")
    return tree


def parse_trace(document: str) -> tuple[InvocationTree, Counter]:
    """Parse one trace log into its invocation tree and per-feature occurrence counts."""
    tree = build_tree(parse_events(document))
    return tree, tree.counts()


@dataclass(frozen=True)
class FeatureUsage:
    domain: str
    beta: dict[str, int]
    trace_count: int


def aggregate_usage(traces, domain: str = "") -> FeatureUsage:
    """Sum per-trace feature counts for one domain."""
    traces = list(traces)
    if not traces:
        raise NoTraces(f"domain {domain!r} has no traces")
    beta = Counter()
    for counts in traces:
        beta.update(counts)
    if not any(v > 0 for v in beta.values()):
        raise NoTraces(f"domain {domain!r}: traces contain no feature occurrences")
    return FeatureUsage(domain, dict(sorted(beta.items())), len(traces))


@dataclass(frozen=True)
class DomainWeights:
    domain: str
    alpha: dict[str, float]

    @property
    def feature_count(self) -> int:
        return len(self.alpha)

    def to_dict(self) -> dict:
        return {"domain": self.domain, "feature_count": self.feature_count, "alpha": dict(self.alpha)}

    @classmethod
    def from_dict(cls, doc) -> "DomainWeights":
        return cls(doc["domain"], {k: float(v) for k, v in doc["alpha"].items()})


def compute_weights(usage: FeatureUsage) -> DomainWeights:
    total = sum(usage.beta.values())
    if total <= 0:
        raise ZeroUsage(f"domain {usage.domain!r} has no feature usage")
    return DomainWeights(usage.domain, {f: b / total for f, b in usage.beta.items()})


@dataclass(frozen=True)
class ReferenceBase:
    r: dict[str, float]
    source_card_count: int

    def to_dict(self) -> dict:
        return {"r": dict(self.r), "source_card_count": self.source_card_count}

    @classmethod
    def from_dict(cls, doc) -> "ReferenceBase":
        return cls({k: float(v) for k, v in doc["r"].items()}, int(doc["source_card_count"]))


def build_reference(cards, features=None, aggregation: str = "arithmetic") -> ReferenceBase:
    """Reference time per feature from the isolated means of several cards.

    ``cards`` is a sequence of mappings feature id to isolated mean. Every
    listed feature (all features of the first card by default) must be
    present and positive on every card.
    """
    cards = [dict(c) for c in cards]
    if not cards:
        raise MissingFeature("no cards given")
    if aggregation not in ("arithmetic", "geometric"):
        raise ValueError(f"aggregation must be 'arithmetic' or 'geometric', got {aggregation!r}")
    features = list(cards[0]) if features is None else list(features)
    r = {}
    for f in features:
        values = []
        for i, card in enumerate(cards):
            if f not in card:
                raise MissingFeature(f"feature {f!r} missing on card {i}")
            if not card[f] > 0:
                raise NonPositiveMean(f"feature {f!r} has non-positive mean {card[f]} on card {i}")
            values.append(float(card[f]))
        if aggregation == "geometric":
            r[f] = math.exp(math.fsum(math.log(v) for v in values) / len(values))
        else:
            r[f] = math.fsum(values) / len(values)
    return ReferenceBase(r, len(cards))


def compute_mark(r_f: float, m_cf: float) -> float:
    if not r_f > 0 or not m_cf > 0:
        raise NonPositiveInput(f"reference and measured times must be > 0, got {r_f} and {m_cf}")
    return r_f / m_cf


@dataclass
class ScoreCard:
    card_id: str
    marks: dict[str, float]
    weighted: dict[tuple[str, str], float]
    domain_marks: dict[str, float]
    overall: float
    alpha: dict[tuple[str, str], float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        domains = {}
        for d, p in self.domain_marks.items():
            feats = {f: {"alpha": self.alpha[(f, dd)], "W": w}
                     for (f, dd), w in self.weighted.items() if dd == d}
            domains[d] = {"P": p, "features": feats}
        return {"card_id": self.card_id, "marks": dict(self.marks), "domains": domains, "overall": self.overall}

    @classmethod
    def from_dict(cls, doc) -> "ScoreCard":
        weighted, alpha, pmarks = {}, {}, {}
        for d, entry in doc["domains"].items():
            pmarks[d] = float(entry["P"])
            for f, fe in entry["features"].items():
                weighted[(f, d)] = float(fe["W"])
                alpha[(f, d)] = float(fe["alpha"])
        return cls(doc["card_id"], {k: float(v) for k, v in doc["marks"].items()}, weighted, pmarks,
                   float(doc["overall"]), alpha)


def score(marks, weights, card_id: str = "card") -> ScoreCard:
    """Combine per-feature marks with per-domain weights.

    Features with zero weight in a domain need no mark there.
    """
    weights = list(weights)
    weighted, alpha, pmarks = {}, {}, {}
    for dw in weights:
        terms = []
        for f, a in dw.alpha.items():
            if a == 0:
                continue
            if f not in marks:
                raise FeatureWithoutMark(f, dw.domain)
            w = marks[f] * a
            weighted[(f, dw.domain)] = w
            alpha[(f, dw.domain)] = a
            terms.append(w)
        pmarks[dw.domain] = math.fsum(terms)
    overall = math.fsum(pmarks.values()) / len(pmarks) if pmarks else math.nan
    return ScoreCard(card_id, dict(marks), weighted, pmarks, overall, alpha)


def load_domain_traces(traces_dir) -> dict[str, list[Counter]]:
    """Read ``<traces_dir>/<domain>/*`` trace files, sorted for determinism."""
    root = Path(traces_dir)
    out = {}
    for ddir in sorted(p for p in root.iterdir() if p.is_dir()):
        counts = []
        for f in sorted(p for p in ddir.iterdir() if p.is_file() and not p.name.startswith(".")):
            try:
                _, c = parse_trace(f.read_text())
            except TraceParseError as exc:
                raise TraceParseError(exc.line, f"{f}: {exc.reason}") from None
            except UnbalancedTrace as exc:
                raise UnbalancedTrace(f"{f}: {exc}") from None
            counts.append(c)
        out[ddir.name] = counts
    if not out or not any(out.values()):
        raise NoTraces(f"no traces found under {root}")
    return out


class UsageWeighter(BaseEstimator):
    """Learns per-domain feature weights from trace counts.

    ``fit`` takes a mapping domain to an iterable of per-trace counts (or
    raw trace texts) and stores ``usage_`` and ``weights_``. When
    ``features`` is given, only those features are counted, so the weights
    are proportions among the features actually benchmarked.
    """

    def __init__(self, features=None):
        self.features = features

    def fit(self, traces_by_domain, y=None):
        self.usage_, self.weights_ = {}, {}
        keep = None if self.features is None else set(self.features)
        for domain, traces in traces_by_domain.items():
            counts = [parse_trace(t)[1] if isinstance(t, str) else t for t in traces]
            if keep is not None:
                counts = [Counter({f: n for f, n in c.items() if f in keep}) for c in counts]
            usage = aggregate_usage(counts, domain)
            self.usage_[domain] = usage
            self.weights_[domain] = compute_weights(usage)
        return self

    @property
    def domains_(self):
        check_is_fitted(self, "weights_")
        return list(self.weights_)


class ReferenceMarker(TransformerMixin, BaseEstimator):
    """Fits a reference base on several cards and turns a card's isolated times into marks.

    ``transform`` maps a card (feature id to isolated mean) to its marks;
    given a list of cards it returns a list of mark dicts.
    """

    def __init__(self, aggregation="arithmetic", features=None):
        self.aggregation = aggregation
        self.features = features

    def fit(self, cards, y=None):
        self.reference_ = build_reference(cards, self.features, self.aggregation)
        return self

    def _marks(self, card):
        r = self.reference_.r
        return {f: compute_mark(r[f], card[f]) for f in r if f in card}

    def transform(self, X):
        check_is_fitted(self, "reference_")
        if isinstance(X, dict):
            return self._marks(X)
        return [self._marks(card) for card in X]

    def mark_vector(self, card) -> np.ndarray:
        check_is_fitted(self, "reference_")
        return np.array([compute_mark(v, card[f]) for f, v in self.reference_.r.items()])
