"""Test case descriptions shared by the simulated card and the host harness."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from pathlib import Path

from .errors import CycleDetected, SuiteError

KINDS = ("bytecode", "api", "jcre")
_SUITE_KEYS = {"id", "ins", "kind", "auxiliaries", "reference_id"}


@dataclass(frozen=True)
class TestCaseSpec:
    """One applet test case.

    ``auxiliaries`` lists the operations that run before the operation of
    interest in every loop iteration (with repetition, e.g. two pushes
    before an add). A case whose ``reference_id`` is its own id is an
    empty-loop reference: its run body does nothing.
    """

    __test__ = False  # keep pytest from collecting this class

    id: str
    ins: int
    kind: str = "bytecode"
    auxiliaries: tuple[str, ...] = ()
    reference_id: str = "Emptyloop"

    def __post_init__(self):
        object.__setattr__(self, "auxiliaries", tuple(self.auxiliaries))
        if self.kind not in KINDS:
            raise SuiteError(f"case {self.id!r}: kind must be one of {KINDS}, got {self.kind!r}")
        if isinstance(self.ins, bool) or not isinstance(self.ins, int) or not 0 <= self.ins <= 0xFF:
            raise SuiteError(f"case {self.id!r}: ins must be a byte, got {self.ins!r}")

    @property
    def is_reference(self) -> bool:
        return self.reference_id == self.id

    @property
    def run_body(self) -> tuple[str, ...]:
        if self.is_reference:
            return ()
        return self.auxiliaries + (self.id,)


@dataclass
class Suite:
    cases: dict[str, TestCaseSpec] = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.cases, (list, tuple)):
            self.cases = {c.id: c for c in self.cases}
        self.validate()

    def validate(self):
        seen_ins = {}
        for case in self.cases.values():
            if case.ins in seen_ins:
                raise SuiteError(f"INS 0x{case.ins:02X} used by both {seen_ins[case.ins]!r} and {case.id!r}")
            seen_ins[case.ins] = case.id
            ref = self.cases.get(case.reference_id)
            if ref is None:
                raise SuiteError(f"case {case.id!r}: reference {case.reference_id!r} is not in the suite")
            if not ref.is_reference:
                raise SuiteError(f"case {case.id!r}: reference {ref.id!r} does not have an empty run body")
            for aux in case.auxiliaries:
                if aux not in self.cases:
                    raise SuiteError(f"case {case.id!r}: auxiliary {aux!r} is not in the suite")
        self.topological_order()

    def by_ins(self, ins: int) -> TestCaseSpec | None:
        for case in self.cases.values():
            if case.ins == ins:
                return case
        return None

    def __getitem__(self, case_id):
        return self.cases[case_id]

    def __contains__(self, case_id):
        return case_id in self.cases

    def __iter__(self):
        return iter(self.cases.values())

    def __len__(self):
        return len(self.cases)

    def features(self) -> list[str]:
        return [c.id for c in self.cases.values() if not c.is_reference]

    def closure(self, case_ids) -> list[str]:
        """Requested cases plus every auxiliary they transitively need, auxiliaries first."""
        needed, stack = set(), list(case_ids)
        while stack:
            cid = stack.pop()
            if cid in needed:
                continue
            if cid not in self.cases:
                raise SuiteError(f"case {cid!r} is not in the suite")
            needed.add(cid)
            stack.extend(self.cases[cid].auxiliaries)
        return [cid for cid in self.topological_order() if cid in needed]

    def topological_order(self) -> list[str]:
        sorter = TopologicalSorter({c.id: set(c.auxiliaries) for c in self.cases.values()})
        try:
            return list(sorter.static_order())
        except CycleError as exc:
            raise CycleDetected(f"auxiliary cycle: {' -> '.join(exc.args[1])}") from None


def suite_from_list(items) -> Suite:
    if not isinstance(items, list):
        raise SuiteError("suite document must be a JSON list")
    cases = []
    for pos, item in enumerate(items):
        if not isinstance(item, dict):
            raise SuiteError(f"suite entry {pos} is not an object")
        unknown = set(item) - _SUITE_KEYS
        if unknown:
            raise SuiteError(f"suite entry {pos}: unknown keys {sorted(unknown)}")
        if "id" not in item or "ins" not in item:
            raise SuiteError(f"suite entry {pos}: 'id' and 'ins' are required")
        cases.append(TestCaseSpec(
            id=str(item["id"]),
            ins=item["ins"],
            kind=item.get("kind", "bytecode"),
            auxiliaries=tuple(item.get("auxiliaries", ())),
            reference_id=item.get("reference_id", "Emptyloop"),
        ))
    ids = [c.id for c in cases]
    if len(set(ids)) != len(ids):
        raise SuiteError("duplicate case ids in suite")
    return Suite(cases)


def suite_to_list(suite: Suite) -> list[dict]:
    return [
        {"id": c.id, "ins": c.ins, "kind": c.kind, "auxiliaries": list(c.auxiliaries),
         "reference_id": c.reference_id}
        for c in suite
    ]


def load_suite(path) -> Suite:
    try:
        items = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SuiteError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return suite_from_list(items)
