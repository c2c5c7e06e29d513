"""The delegation workflow: change problem exploration, problem
validation, solution exploration, solution validation, implementation.

State is a pure fold over an append-only event log, one log per
workflow tree.  The fold is the gatekeeper: replaying a log either
reconstructs the identical state or fails at the first illegal event.
Validation verdicts are records that may later go stale when the
environment or need drifts; stale validations regress the workflow to
the step that must be redone, and are never deleted.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace

from . import model as m
from .artifacts import ValidationRecord, ValidationStatus, ValidationTarget
from .dsl import Model


class MacroError(Exception):
    kind = "MacroError"


class IllegalTransition(MacroError):
    kind = "IllegalTransition"

    def __init__(self, state, event, detail=""):
        extra = f" ({detail})" if detail else ""
        super().__init__(f"event {event!r} is not legal in state {state}{extra}")
        self.state = state
        self.event = event


class WrongStakeholder(MacroError):
    kind = "WrongStakeholder"


class TrustMissing(MacroError):
    kind = "TrustMissing"


class UnknownWorkflow(MacroError):
    kind = "UnknownWorkflow"

    def __init__(self, workflow_id):
        super().__init__(f"no workflow {workflow_id!r} in this log")
        self.workflow_id = workflow_id


class BadLog(MacroError):
    kind = "BadLog"


class CpsState(str, enum.Enum):
    CPS1 = "CPS1"  # change problem exploration
    CPS2 = "CPS2"  # change problem validation
    CPS3 = "CPS3"  # change solution exploration
    CPS4 = "CPS4"  # change solution validation
    CPS5 = "CPS5"  # change solution implementation
    DONE = "Done"


EVENT_KINDS = (
    "create",
    "submit-view",
    "request-validation",
    "record-validation",
    "submit-solution",
    "begin-implementation",
    "complete",
    "delegate",
    "drift",
)

ORG = "*"  # workflow field of org-level (drift) events


@dataclass(frozen=True)
class Event:
    sequence: int
    workflow: str
    kind: str
    payload: dict

    def to_line(self) -> str:
        return json.dumps(
            {
                "sequence": self.sequence,
                "workflow": self.workflow,
                "event": self.kind,
                "payload": self.payload,
            },
            separators=(", ", ": "),
        )


def render_log(events: list[Event]) -> str:
    return "".join(e.to_line() + "\n" for e in events)


def parse_log(text: str) -> list[Event]:
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            events.append(
                Event(raw["sequence"], raw["workflow"], raw["event"], raw["payload"])
            )
        except (json.JSONDecodeError, KeyError, TypeError) as err:
            raise BadLog(f"line {lineno}: {err}")
    return events


@dataclass(frozen=True)
class ProblemRefs:
    """The names a problem mentions, used to key staleness on drift."""

    text: str
    domains: frozenset[str]
    phenomena: frozenset[str]
    needs: frozenset[str]

    def touched_by(self, touched: frozenset[str]) -> bool:
        return bool((self.domains | self.phenomena | self.needs) & touched)

    def to_payload(self) -> dict:
        return {
            "text": self.text,
            "domains": sorted(self.domains),
            "phenomena": sorted(self.phenomena),
            "needs": sorted(self.needs),
        }

    @classmethod
    def from_payload(cls, raw: dict) -> "ProblemRefs":
        return cls(
            raw.get("text", ""),
            frozenset(raw.get("domains", ())),
            frozenset(raw.get("phenomena", ())),
            frozenset(raw.get("needs", ())),
        )


def problem_refs(problem: m.Problem, text: str = "") -> ProblemRefs:
    return ProblemRefs(
        text,
        frozenset(problem.env.names()) | m.referenced_domains(problem.change),
        m.phenomena_universe(problem.env),
        m.need_atoms(problem.need),
    )


@dataclass
class Workflow:
    """Folded state of one delegation."""

    id: str
    owner: str
    delegate: str
    problem: ProblemRefs
    state: CpsState = CpsState.CPS1
    derivation: str | None = None
    children: tuple[str, ...] = ()
    parent: str | None = None
    validations: tuple[ValidationRecord, ...] = ()
    solution_refs: frozenset[str] = frozenset()
    solution_text: str = ""
    implementation_mode: str | None = None

    def pending(self) -> ValidationRecord | None:
        for record in self.validations:
            if record.status is ValidationStatus.PENDING:
                return record
        return None

    def effective(self, target: ValidationTarget) -> ValidationRecord | None:
        """Latest granted, non-stale validation for a target."""
        best = None
        for record in self.validations:
            if record.target is target and record.status is ValidationStatus.GRANTED:
                best = record
        return best

    def _replace_record(self, record: ValidationRecord, **changes):
        self.validations = tuple(
            replace(v, **changes) if v.id == record.id else v for v in self.validations
        )


@dataclass(frozen=True)
class StalenessReport:
    sequence: int
    touched: frozenset[str]
    stale: tuple[tuple[str, str, str], ...]  # (workflow, record id, target)
    regressions: tuple[tuple[str, str, str], ...]  # (workflow, from, to)

    @property
    def empty(self) -> bool:
        return not self.stale and not self.regressions


# --- the fold -------------------------------------------------------------------

_GATE_TARGET = {
    CpsState.CPS2: ValidationTarget.PROBLEM_VIEW,
    CpsState.CPS4: ValidationTarget.SOLUTION_PLAN,
}


def _apply_event(workflows: dict[str, Workflow], event: Event) -> StalenessReport | None:
    kind, payload = event.kind, event.payload
    if kind == "drift":
        return _apply_drift(workflows, event)
    if kind == "create":
        if event.workflow in workflows:
            raise IllegalTransition("-", kind, f"workflow {event.workflow!r} already exists")
        workflows[event.workflow] = Workflow(
            id=event.workflow,
            owner=payload["owner"],
            delegate=payload["delegate"],
            problem=ProblemRefs.from_payload(payload.get("problem", {})),
            derivation=payload.get("derivation"),
            parent=payload.get("parent"),
        )
        return None
    if event.workflow not in workflows:
        raise UnknownWorkflow(event.workflow)
    wf = workflows[event.workflow]

    if kind == "submit-view":
        if wf.state is not CpsState.CPS1:
            raise IllegalTransition(wf.state.value, kind)
        wf.state = CpsState.CPS2
        return None

    if kind == "request-validation":
        if wf.state not in _GATE_TARGET:
            raise IllegalTransition(wf.state.value, kind)
        if wf.pending() is not None:
            raise IllegalTransition(wf.state.value, kind, "a validation is already pending")
        wf.validations += (
            ValidationRecord(
                id=f"v{event.sequence}",
                stakeholder=wf.owner,
                target=_GATE_TARGET[wf.state],
                subject=wf.id,
                status=ValidationStatus.PENDING,
                sequence=event.sequence,
            ),
        )
        return None

    if kind == "record-validation":
        if wf.state not in _GATE_TARGET:
            raise IllegalTransition(wf.state.value, kind)
        pending = wf.pending()
        if pending is None:
            raise IllegalTransition(wf.state.value, kind, "no validation is pending")
        by = payload.get("by")
        if by != wf.owner:
            raise WrongStakeholder(
                f"only the owner {wf.owner!r} may validate workflow {wf.id!r}, not {by!r}"
            )
        status = payload.get("status")
        if status not in ("granted", "rejected"):
            raise IllegalTransition(wf.state.value, kind, "status must be granted or rejected")
        granted = status == "granted"
        if granted and wf.state is CpsState.CPS4:
            for child_id in wf.children:
                child = workflows[child_id]
                solution = child.effective(ValidationTarget.SOLUTION_PLAN)
                if child.state not in (CpsState.CPS5, CpsState.DONE) or solution is None:
                    raise IllegalTransition(
                        wf.state.value,
                        kind,
                        f"sub-delegation {child_id!r} has no validated solution yet",
                    )
        wf._replace_record(
            pending,
            status=ValidationStatus.GRANTED if granted else ValidationStatus.REJECTED,
            sequence=event.sequence,
        )
        if wf.state is CpsState.CPS2:
            wf.state = CpsState.CPS3 if granted else CpsState.CPS1
        else:
            wf.state = CpsState.CPS5 if granted else CpsState.CPS3
            wf.implementation_mode = None
        return None

    if kind == "submit-solution":
        if wf.state is not CpsState.CPS3:
            raise IllegalTransition(wf.state.value, kind)
        wf.solution_text = payload.get("solution", "")
        wf.solution_refs = frozenset(payload.get("refs", ()))
        wf.state = CpsState.CPS4
        return None

    if kind == "begin-implementation":
        if wf.state is not CpsState.CPS5:
            raise IllegalTransition(wf.state.value, kind)
        if wf.implementation_mode is not None:
            raise IllegalTransition(wf.state.value, kind, "implementation already begun")
        mode = payload.get("mode")
        if mode not in ("self", "delegate"):
            raise IllegalTransition(wf.state.value, kind, "mode must be self or delegate")
        wf.implementation_mode = mode
        return None

    if kind == "delegate":
        if wf.state not in (CpsState.CPS3, CpsState.CPS5):
            raise IllegalTransition(wf.state.value, kind)
        child_id = payload["child"]
        if child_id in workflows:
            raise IllegalTransition(wf.state.value, kind, f"workflow {child_id!r} already exists")
        delegating = wf.delegate if wf.state is CpsState.CPS3 else wf.owner
        workflows[child_id] = Workflow(
            id=child_id,
            owner=delegating,
            delegate=payload["to"],
            problem=ProblemRefs.from_payload(payload.get("problem", {})),
            parent=wf.id,
        )
        wf.children += (child_id,)
        return None

    if kind == "complete":
        if wf.state is not CpsState.CPS5:
            raise IllegalTransition(wf.state.value, kind)
        if wf.implementation_mode is None:
            raise IllegalTransition(
                wf.state.value, kind, "choose self- or delegated implementation first"
            )
        for child_id in wf.children:
            if workflows[child_id].state is not CpsState.DONE:
                raise IllegalTransition(
                    wf.state.value, kind, f"sub-delegation {child_id!r} is not done"
                )
        wf.state = CpsState.DONE
        return None

    raise IllegalTransition(wf.state.value, kind, "unknown event kind")


def _refs_for(wf: Workflow, target: ValidationTarget) -> frozenset[str]:
    refs = wf.problem.domains | wf.problem.phenomena | wf.problem.needs
    if target is ValidationTarget.SOLUTION_PLAN:
        refs |= wf.solution_refs
    return refs


def _apply_drift(workflows: dict[str, Workflow], event: Event) -> StalenessReport:
    touched = frozenset(event.payload.get("touched", ()))
    if not touched:
        raise IllegalTransition("-", "drift", "a drift event must touch something")
    stale: list[tuple[str, str, str]] = []
    regressions: list[tuple[str, str, str]] = []
    for wf in workflows.values():
        for record in wf.validations:
            if (
                record.status is ValidationStatus.GRANTED
                and record.sequence < event.sequence
                and _refs_for(wf, record.target) & touched
            ):
                wf._replace_record(record, status=ValidationStatus.STALE)
                stale.append((wf.id, record.id, record.target.value))
        if wf.state is CpsState.DONE:
            continue
        before = wf.state
        view_ok = wf.effective(ValidationTarget.PROBLEM_VIEW) is not None
        solution_ok = wf.effective(ValidationTarget.SOLUTION_PLAN) is not None
        if wf.state in (CpsState.CPS3, CpsState.CPS4, CpsState.CPS5) and not view_ok:
            wf.state = CpsState.CPS2
        elif wf.state is CpsState.CPS5 and not solution_ok:
            wf.state = CpsState.CPS4
        if wf.state is not before:
            wf.implementation_mode = None
            regressions.append((wf.id, before.value, wf.state.value))
    return StalenessReport(event.sequence, touched, tuple(stale), tuple(regressions))


def fold(events: list[Event]) -> dict[str, Workflow]:
    """Replay a log into workflow states, validating every event."""
    workflows: dict[str, Workflow] = {}
    last = 0
    for event in events:
        if event.sequence <= last:
            raise BadLog(
                f"sequence {event.sequence} does not increase (after {last})"
            )
        last = event.sequence
        _apply_event(workflows, event)
    return workflows


def verify_gates(events: list[Event]) -> None:
    """Assert the validation gates over every prefix of a log: CPS3 and
    beyond require a live problem-view validation, CPS5 and beyond a live
    solution validation."""
    workflows: dict[str, Workflow] = {}
    for event in events:
        _apply_event(workflows, event)
        for wf in workflows.values():
            if wf.state in (CpsState.CPS3, CpsState.CPS4, CpsState.CPS5, CpsState.DONE):
                assert wf.effective(ValidationTarget.PROBLEM_VIEW) is not None, (
                    f"{wf.id} in {wf.state.value} without problem-view validation"
                )
            if wf.state in (CpsState.CPS5, CpsState.DONE):
                assert wf.effective(ValidationTarget.SOLUTION_PLAN) is not None, (
                    f"{wf.id} in {wf.state.value} without solution validation"
                )
            for v in wf.validations:
                if v.status is ValidationStatus.GRANTED:
                    assert v.stakeholder == wf.owner


# --- appending --------------------------------------------------------------------

def next_sequence(events: list[Event]) -> int:
    return events[-1].sequence + 1 if events else 1


def _validated_append(events: list[Event], event: Event):
    return fold(events + [event])


def create_workflow(
    events: list[Event],
    workflow_id: str,
    owner: str,
    delegate: str,
    problem: ProblemRefs,
    derivation: str | None = None,
) -> Event:
    payload = {"owner": owner, "delegate": delegate, "problem": problem.to_payload()}
    if derivation:
        payload["derivation"] = derivation
    event = Event(next_sequence(events), workflow_id, "create", payload)
    _validated_append(events, event)
    return event


def advance(
    events: list[Event],
    workflow_id: str,
    kind: str,
    payload: dict | None = None,
) -> tuple[Event, Workflow]:
    """Validate and produce the next event; returns it with the workflow
    state after application."""
    event = Event(next_sequence(events), workflow_id, kind, payload or {})
    state = _validated_append(events, event)
    return event, state[workflow_id]


def delegate(
    events: list[Event],
    workflow_id: str,
    to: str,
    child_id: str,
    problem: ProblemRefs,
    stakeholders: Model | dict,
) -> tuple[Event, Workflow]:
    """Create a sub-delegation; the delegating party must trust the new
    delegate."""
    workflows = fold(events)
    if workflow_id not in workflows:
        raise UnknownWorkflow(workflow_id)
    wf = workflows[workflow_id]
    delegating = wf.delegate if wf.state is CpsState.CPS3 else wf.owner
    trusts = _trusts_of(stakeholders, delegating)
    if to not in trusts:
        raise TrustMissing(f"no trust edge {delegating} -> {to}")
    payload = {"to": to, "child": child_id, "problem": problem.to_payload()}
    event = Event(next_sequence(events), workflow_id, "delegate", payload)
    state = _validated_append(events, event)
    return event, state[child_id]


def _trusts_of(stakeholders, name: str) -> frozenset[str]:
    if isinstance(stakeholders, Model):
        try:
            return stakeholders.stakeholder(name).trusts
        except KeyError:
            return frozenset()
    return frozenset(stakeholders.get(name, ()))


def drift(
    events: list[Event],
    touched: frozenset[str],
    description: str = "",
    origin: str = "environment",
) -> tuple[Event, StalenessReport]:
    """Record an external change of context and mark what it invalidates."""
    if origin not in ("environment", "need"):
        raise MacroError(f"drift origin must be environment or need, not {origin!r}")
    payload = {"touched": sorted(touched), "description": description, "origin": origin}
    event = Event(next_sequence(events), ORG, "drift", payload)
    workflows = fold(events)
    report = _apply_drift(workflows, event)
    return event, report
