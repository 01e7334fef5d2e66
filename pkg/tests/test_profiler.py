import math
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from mesure.errors import (
    FeatureWithoutMark,
    MissingFeature,
    NonPositiveInput,
    NonPositiveMean,
    NoTraces,
    TraceParseError,
    UnbalancedTrace,
    ZeroUsage,
)
from mesure.profiler import (
    DomainWeights,
    FeatureUsage,
    ReferenceMarker,
    UsageWeighter,
    aggregate_usage,
    build_reference,
    build_tree,
    compute_mark,
    compute_weights,
    load_domain_traces,
    parse_events,
    parse_trace,
    score,
)

TRACE = """\
# one invocation
ENTER m
BC sadd
BC sadd
EXIT
"""


def test_parse_trace_hand_example():
    tree, counts = parse_trace(TRACE)
    assert counts == Counter({"m": 1, "sadd": 2})
    assert [r.name for r in tree.roots] == ["m"]
    assert tree.roots[0].counts == Counter({"sadd": 2})
    assert tree.render() == "m()\n  sadd x2"


def test_parse_trace_empty():
    tree, counts = parse_trace("")
    assert tree.roots == [] and counts == Counter()


def test_parse_trace_nested_and_attributes():
    text = 'ENTER A.process aid="A0 00"\nENTER Util.arrayCompare\nBC sload\nEXIT\nBC sstore idx=3\nEXIT\n'
    tree, counts = parse_trace(text)
    assert counts == Counter({"A.process": 1, "Util.arrayCompare": 1, "sload": 1, "sstore": 1})
    assert tree.roots[0].attributes == (("aid", "A0 00"),)


@pytest.mark.parametrize("text", ["ENTER m\nBC x\n", "EXIT\n", "ENTER a\nENTER b\nEXIT\n"])
def test_unbalanced(text):
    with pytest.raises(UnbalancedTrace):
        parse_trace(text)


@pytest.mark.parametrize("line, reason", [("JUMP x", "unknown event"), ("ENTER", "method name"),
                                           ("BC", "bytecode name"), ("EXIT now", "no arguments"),
                                           ("BC sadd nokey", "key=value"), ('ENTER "open', "quotation")])
def test_parse_error_reports_line(line, reason):
    text = "ENTER m\n" + "BC sadd\n" * 5 + line + "\nEXIT\n"
    with pytest.raises(TraceParseError, match=reason) as info:
        parse_trace(text)
    assert info.value.line == 7
    assert "line 7" in str(info.value)


names = st.sampled_from(["m", "n", "sadd", "sload", "Util.arrayCopy"])


@st.composite
def event_streams(draw, depth=0):
    events = []
    for _ in range(draw(st.integers(0, 4))):
        if depth < 3 and draw(st.booleans()):
            events.append(("ENTER", draw(names)))
            events.extend(draw(event_streams(depth + 1)))
            events.append(("EXIT", None))
        else:
            events.append(("BC", draw(names)))
    return events


@given(event_streams())
def test_tree_flattening_round_trip(stream):
    text = "\n".join(op if name is None else f"{op} {name}" for op, name in stream)
    events = parse_events(text)
    tree = build_tree(events)
    assert tree.events() == events
    expected = Counter(name for op, name in stream if name is not None)
    assert tree.counts() == expected


def test_aggregate_usage_examples():
    assert aggregate_usage([{"a": 2}, {"a": 1, "b": 1}], "d").beta == {"a": 3, "b": 1}
    one = aggregate_usage([Counter({"x": 4})])
    assert one.beta == {"x": 4} and one.trace_count == 1
    with pytest.raises(NoTraces):
        aggregate_usage([], "d")
    with pytest.raises(NoTraces):
        aggregate_usage([Counter(), Counter({"a": 0})], "d")


@pytest.mark.parametrize("beta, alpha", [
    ({"a": 30, "b": 10}, {"a": 0.75, "b": 0.25}),
    ({"f": 7}, {"f": 1.0}),
    ({"a": 1, "b": 1, "c": 2}, {"a": 0.25, "b": 0.25, "c": 0.5}),
])
def test_compute_weights_examples(beta, alpha):
    w = compute_weights(FeatureUsage("d", beta, 1))
    assert w.alpha == alpha and w.feature_count == len(alpha)


def test_compute_weights_zero_usage():
    with pytest.raises(ZeroUsage):
        compute_weights(FeatureUsage("d", {"a": 0}, 1))


@given(st.dictionaries(names, st.integers(0, 10**9), min_size=1).filter(lambda b: sum(b.values()) > 0),
       st.integers(1, 10**6))
def test_weights_normalised_and_scale_free(beta, k):
    a = compute_weights(FeatureUsage("d", beta, 1)).alpha
    assert abs(math.fsum(a.values()) - 1) <= 1e-12
    scaled = compute_weights(FeatureUsage("d", {f: v * k for f, v in beta.items()}, 1)).alpha
    assert all(abs(a[f] - scaled[f]) <= 1e-12 for f in a)


def test_build_reference_examples():
    assert build_reference([{"sadd": 9000.0}]).r == {"sadd": 9000.0}
    ref = build_reference([{"sadd": 8000.0}, {"sadd": 12000.0}])
    assert ref.r == {"sadd": 10000.0} and ref.source_card_count == 2
    geo = build_reference([{"sadd": 8000.0}, {"sadd": 12000.0}], aggregation="geometric")
    assert geo.r["sadd"] == pytest.approx(math.sqrt(8000 * 12000))
    with pytest.raises(MissingFeature, match="sload"):
        build_reference([{"sadd": 1.0, "sload": 1.0}, {"sadd": 1.0}])
    with pytest.raises(NonPositiveMean):
        build_reference([{"sadd": -5.0}])


def test_compute_mark_examples():
    assert compute_mark(5.0, 5.0) == 1.0
    assert compute_mark(12000, 10000) == 1.2
    assert compute_mark(10000, 20000) == 0.5
    for r, m in ((0, 1), (1, 0), (-1, 1)):
        with pytest.raises(NonPositiveInput):
            compute_mark(r, m)


def test_score_worked_example():
    card = score({"a": 1.2, "b": 0.8}, [DomainWeights("d", {"a": 0.75, "b": 0.25})], "c1")
    assert card.weighted == {("a", "d"): pytest.approx(0.9), ("b", "d"): pytest.approx(0.2)}
    assert card.domain_marks["d"] == pytest.approx(1.1, abs=1e-12)
    assert card.overall == card.domain_marks["d"]


def test_score_overall_is_domain_mean():
    card = score({"a": 1.1, "b": 0.9}, [DomainWeights("x", {"a": 1.0}), DomainWeights("y", {"b": 1.0})])
    assert card.domain_marks == {"x": 1.1, "y": 0.9}
    assert card.overall == pytest.approx(1.0, abs=1e-12)


@given(st.dictionaries(names, st.integers(1, 100), min_size=1))
def test_identical_card_scores_one(beta):
    w = compute_weights(FeatureUsage("d", beta, 1))
    card = score({f: 1.0 for f in beta}, [w])
    assert abs(card.overall - 1) <= 1e-12


def test_score_missing_mark():
    with pytest.raises(FeatureWithoutMark) as info:
        score({"a": 1.0}, [DomainWeights("bank", {"a": 0.5, "b": 0.5})])
    assert (info.value.feature, info.value.domain) == ("b", "bank")
    # zero weight needs no mark
    assert score({"a": 1.0}, [DomainWeights("bank", {"a": 1.0, "b": 0.0})]).overall == 1.0


@given(st.floats(0.01, 100), st.floats(1.0001, 10))
def test_faster_card_scores_higher(mark, factor):
    w = [DomainWeights("d", {"a": 0.6, "b": 0.4})]
    slow = score({"a": mark, "b": 1.0}, w)
    fast = score({"a": mark * factor, "b": 1.0}, w)
    assert fast.overall > slow.overall


def test_load_domain_traces(tmp_path):
    (tmp_path / "bank").mkdir()
    (tmp_path / "bank" / "t1.trace").write_text(TRACE)
    (tmp_path / "bank" / "t2.trace").write_text("BC sadd\n")
    (tmp_path / "empty").mkdir()
    traces = load_domain_traces(tmp_path)
    assert traces["bank"] == [Counter({"m": 1, "sadd": 2}), Counter({"sadd": 1})]
    assert traces["empty"] == []


def test_load_domain_traces_errors(tmp_path):
    with pytest.raises(NoTraces):
        load_domain_traces(tmp_path)
    (tmp_path / "d").mkdir()
    (tmp_path / "d" / "bad").write_text("ENTER m\nBOGUS\nEXIT\n")
    with pytest.raises(TraceParseError, match="line 2"):
        load_domain_traces(tmp_path)


def test_usage_weighter_estimator():
    est = UsageWeighter(features=["sadd", "sload"])
    fitted = est.fit({"bank": [TRACE, "BC sload\nBC sadd\n"]})
    assert fitted.usage_["bank"].beta == {"sadd": 3, "sload": 1}
    assert fitted.weights_["bank"].alpha == {"sadd": 0.75, "sload": 0.25}
    assert fitted.domains_ == ["bank"]
    assert clone(est).get_params() == {"features": ["sadd", "sload"]}


def test_reference_marker_estimator():
    marker = ReferenceMarker().fit([{"a": 8000.0, "b": 1.0}, {"a": 12000.0, "b": 3.0}])
    assert marker.reference_.r == {"a": 10000.0, "b": 2.0}
    assert marker.transform({"a": 10000.0, "b": 4.0}) == {"a": 1.0, "b": 0.5}
    assert marker.transform([{"a": 5000.0, "b": 2.0}]) == [{"a": 2.0, "b": 1.0}]
    assert list(marker.mark_vector({"a": 20000.0, "b": 1.0})) == [0.5, 2.0]
    assert clone(marker).get_params() == {"aggregation": "arithmetic", "features": None}
