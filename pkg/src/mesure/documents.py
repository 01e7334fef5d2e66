"""JSON documents exchanged between commands, plus the per-sample CSV."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import IsolatedTime
from .harness import LoopSize
from .profiler import DomainWeights, ReferenceBase, ScoreCard
from .stats import MeasurementSet, MeasurementStats, NormalityReport, Peak, PeakReport, RawSample

SCHEMA_VERSION = 1


class DocumentError(ValueError):
    pass


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_json(path, doc: dict) -> None:
    Path(path).write_text(_dump(doc))


def read_json(path, kind: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise DocumentError(f"{path}: not a version {SCHEMA_VERSION} document")
    if doc.get("kind") != kind:
        raise DocumentError(f"{path}: expected a {kind!r} document, found {doc.get('kind')!r}")
    return doc


def _envelope(kind, body):
    return {"schema_version": SCHEMA_VERSION, "kind": kind, **body}


def set_to_dict(mset: MeasurementSet) -> dict:
    return {"test_id": mset.test_id, "loop_size": mset.loop_size,
            "samples": [[s.sequence_index, s.duration, s.wall_time] for s in mset.samples]}


def set_from_dict(doc) -> MeasurementSet:
    mset = MeasurementSet(doc["test_id"], int(doc["loop_size"]))
    mset.samples = [RawSample(int(d), int(i), int(t)) for i, d, t in doc["samples"]]
    return mset


def _stats_to_dict(st: MeasurementStats):
    return {"mean": st.mean, "std_dev": st.std_dev, "count": st.count}


def _stats_from_dict(doc):
    return MeasurementStats(float(doc["mean"]), float(doc["std_dev"]), int(doc["count"]))


def _normality_to_dict(rep):
    return None if rep is None else {"w_statistic": rep.w_statistic, "sample_count": rep.sample_count}


def _normality_from_dict(doc):
    return None if doc is None else NormalityReport(float(doc["w_statistic"]), int(doc["sample_count"]))


def _peaks_to_dict(rep):
    if rep is None:
        return None
    return {"peaks": [[p.center, p.mass] for p in rep.peaks], "step_estimate": rep.step_estimate,
            "bin_width": rep.bin_width}


def _peaks_from_dict(doc):
    if doc is None:
        return None
    return PeakReport([Peak(float(c), float(m)) for c, m in doc["peaks"]], doc["step_estimate"],
                      float(doc["bin_width"]))


@dataclass
class CaseRecord:
    loop_size: LoopSize
    case: MeasurementSet
    reference: MeasurementSet
    case_filtered: MeasurementStats
    reference_filtered: MeasurementStats
    normality: dict = field(default_factory=dict)  # "case"/"reference" -> NormalityReport | None
    peaks: dict = field(default_factory=dict)  # "case"/"reference" -> PeakReport | None


@dataclass
class ResultsDocument:
    metadata: dict
    cases: dict[str, CaseRecord]
    isolated: dict[str, IsolatedTime]

    def to_dict(self) -> dict:
        cases = {}
        for cid, rec in self.cases.items():
            cases[cid] = {
                "loop_size": {"p2": rec.loop_size.p2, "l": rec.loop_size.l},
                "raw": {"case": set_to_dict(rec.case), "reference": set_to_dict(rec.reference)},
                "filtered": {"case": _stats_to_dict(rec.case_filtered),
                             "reference": _stats_to_dict(rec.reference_filtered)},
                "normality": {k: _normality_to_dict(v) for k, v in rec.normality.items()},
                "peaks": {k: _peaks_to_dict(v) for k, v in rec.peaks.items()},
            }
        return _envelope("results", {
            "metadata": self.metadata,
            "cases": cases,
            "isolated": {f: t.to_dict() for f, t in self.isolated.items()},
        })

    @classmethod
    def from_dict(cls, doc) -> "ResultsDocument":
        cases = {}
        for cid, c in doc["cases"].items():
            cases[cid] = CaseRecord(
                LoopSize(int(c["loop_size"]["p2"])),
                set_from_dict(c["raw"]["case"]),
                set_from_dict(c["raw"]["reference"]),
                _stats_from_dict(c["filtered"]["case"]),
                _stats_from_dict(c["filtered"]["reference"]),
                {k: _normality_from_dict(v) for k, v in c.get("normality", {}).items()},
                {k: _peaks_from_dict(v) for k, v in c.get("peaks", {}).items()},
            )
        isolated = {f: IsolatedTime.from_dict(f, v) for f, v in doc["isolated"].items()}
        missing = sorted(set(isolated) - set(cases))
        if missing:
            raise DocumentError(f"isolated times without raw measurements: {missing}")
        return cls(doc["metadata"], cases, isolated)

    def dumps(self) -> str:
        return _dump(self.to_dict())

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "ResultsDocument":
        return cls.from_dict(read_json(path, "results"))

    def samples_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["case", "rep", "L", "duration_ns"])
        for cid, rec in self.cases.items():
            for label, mset in ((cid, rec.case), (f"{cid}/{rec.reference.test_id}", rec.reference)):
                for s in mset.samples:
                    writer.writerow([label, s.sequence_index, mset.loop_size, s.duration])
        return buf.getvalue()


def isolated_from_file(path) -> tuple[str, dict[str, IsolatedTime]]:
    """Card id and isolated times from a results or isolated document."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("kind") not in ("results", "isolated"):
        raise DocumentError(f"{path}: expected a results or isolated document")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DocumentError(f"{path}: not a version {SCHEMA_VERSION} document")
    card_id = doc.get("card_id") or doc.get("metadata", {}).get("device") or Path(path).stem
    return card_id, {f: IsolatedTime.from_dict(f, v) for f, v in doc["isolated"].items()}


def isolated_to_dict(card_id: str, isolated: dict[str, IsolatedTime]) -> dict:
    return _envelope("isolated", {"card_id": card_id, "isolated": {f: t.to_dict() for f, t in isolated.items()}})


def weights_to_dict(weights: DomainWeights, beta=None) -> dict:
    body = weights.to_dict()
    if beta is not None:
        body["beta"] = dict(beta)
    return _envelope("weights", body)


def weights_from_file(path) -> DomainWeights:
    return DomainWeights.from_dict(read_json(path, "weights"))


def reference_to_dict(ref: ReferenceBase) -> dict:
    return _envelope("reference", ref.to_dict())


def reference_from_file(path) -> ReferenceBase:
    return ReferenceBase.from_dict(read_json(path, "reference"))


def scorecard_to_dict(card: ScoreCard) -> dict:
    return _envelope("scorecard", card.to_dict())


def scorecard_from_file(path) -> ScoreCard:
    return ScoreCard.from_dict(read_json(path, "scorecard"))


def scorecard_csv(card: ScoreCard) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature", "domain", "N", "alpha", "W"])
    for (f, d), w in card.weighted.items():
        writer.writerow([f, d, repr(card.marks[f]), repr(card.alpha[(f, d)]), repr(w)])
    for d, p in card.domain_marks.items():
        writer.writerow(["P", d, "", "", repr(p)])
    writer.writerow(["overall", "", "", "", repr(card.overall)])
    return buf.getvalue()
