import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltapoe import macro
from deltapoe.artifacts import ValidationStatus, ValidationTarget
from deltapoe.macro import (
    CpsState,
    Event,
    IllegalTransition,
    ProblemRefs,
    TrustMissing,
    WrongStakeholder,
    advance,
    create_workflow,
    delegate,
    drift,
    fold,
    parse_log,
    render_log,
    verify_gates,
)

REFS = ProblemRefs(
    "[OldAPI] (+) ?F |= G : UpdateAPI",
    frozenset({"OldAPI"}),
    frozenset({"api.call", "build.run"}),
    frozenset({"UpdateAPI"}),
)

TRUSTS = {"G": {"D"}, "D": {"Impl"}}


def log_with(*steps, start=None):
    """Build a log by applying (workflow, kind, payload) steps in order."""
    events = list(start or [])
    for workflow_id, kind, payload in steps:
        event = Event(macro.next_sequence(events), workflow_id, kind, payload)
        fold(events + [event])
        events.append(event)
    return events


@pytest.fixture
def created():
    return [create_workflow([], "w1", "G", "D", REFS)]


def granted_to_cps3(events):
    return log_with(
        ("w1", "submit-view", {}),
        ("w1", "request-validation", {}),
        ("w1", "record-validation", {"by": "G", "status": "granted"}),
        start=events,
    )


def granted_to_cps5(events):
    return log_with(
        ("w1", "submit-solution", {"solution": "!OldAPI", "refs": ["OldAPI", "OldAPI'"]}),
        ("w1", "request-validation", {}),
        ("w1", "record-validation", {"by": "G", "status": "granted"}),
        start=granted_to_cps3(events),
    )


def state_of(events, workflow_id="w1"):
    return fold(events)[workflow_id].state


# --- basic transitions ----------------------------------------------------------

def test_fresh_workflow_starts_in_cps1(created):
    assert state_of(created) is CpsState.CPS1


def test_submit_view_reaches_cps2(created):
    events = log_with(("w1", "submit-view", {}), start=created)
    assert state_of(events) is CpsState.CPS2


def test_rejection_at_cps2_returns_to_cps1(created):
    events = log_with(
        ("w1", "submit-view", {}),
        ("w1", "request-validation", {}),
        ("w1", "record-validation", {"by": "G", "status": "rejected"}),
        start=created,
    )
    assert state_of(events) is CpsState.CPS1


def test_granted_cps4_reaches_cps5(created):
    events = granted_to_cps5(created)
    assert state_of(events) is CpsState.CPS5


def test_rejection_at_cps4_returns_to_cps3(created):
    events = log_with(
        ("w1", "submit-solution", {"solution": "!OldAPI", "refs": []}),
        ("w1", "request-validation", {}),
        ("w1", "record-validation", {"by": "G", "status": "rejected"}),
        start=granted_to_cps3(created),
    )
    assert state_of(events) is CpsState.CPS3


def test_complete_requires_cps5(created):
    events = granted_to_cps3(created)
    with pytest.raises(IllegalTransition):
        advance(events, "w1", "complete")


def test_complete_requires_mode_choice(created):
    events = granted_to_cps5(created)
    with pytest.raises(IllegalTransition):
        advance(events, "w1", "complete")
    events = log_with(("w1", "begin-implementation", {"mode": "self"}), start=events)
    events = log_with(("w1", "complete", {}), start=events)
    assert state_of(events) is CpsState.DONE


def test_validation_by_non_owner_rejected(created):
    events = log_with(
        ("w1", "submit-view", {}),
        ("w1", "request-validation", {}),
        start=created,
    )
    with pytest.raises(WrongStakeholder):
        advance(events, "w1", "record-validation", {"by": "D", "status": "granted"})


def test_record_without_pending_rejected(created):
    events = log_with(("w1", "submit-view", {}), start=created)
    with pytest.raises(IllegalTransition):
        advance(events, "w1", "record-validation", {"by": "G", "status": "granted"})


# --- delegation --------------------------------------------------------------------

def test_delegation_creates_child_owned_by_delegating_party(created):
    events = granted_to_cps3(created)
    event, child = delegate(events, "w1", "Impl", "w1/1", REFS, TRUSTS)
    assert child.state is CpsState.CPS1
    assert child.owner == "D"  # the CPS3 delegating party is the delegate
    assert child.delegate == "Impl"


def test_delegation_without_trust_rejected(created):
    events = granted_to_cps3(created)
    with pytest.raises(TrustMissing):
        delegate(events, "w1", "Nobody", "w1/1", REFS, TRUSTS)


def test_delegation_only_during_solving_or_implementation(created):
    with pytest.raises(IllegalTransition):
        log_with(("w1", "delegate", {"to": "D", "child": "w1/1", "problem": {}}), start=created)


def test_parent_cps4_grant_blocked_by_unsolved_child(created):
    events = granted_to_cps3(created)
    events = log_with(
        ("w1", "delegate", {"to": "Impl", "child": "w1/1", "problem": REFS.to_payload()}),
        ("w1", "submit-solution", {"solution": "?F1", "refs": []}),
        ("w1", "request-validation", {}),
        start=events,
    )
    with pytest.raises(IllegalTransition) as err:
        advance(events, "w1", "record-validation", {"by": "G", "status": "granted"})
    assert "w1/1" in str(err.value)


def child_through(events, child_id, owner, *steps):
    return log_with(*[(child_id, kind, payload) for kind, payload in steps], start=events)


def test_three_level_implementation_chain(created):
    # w1 delegates implementation; each level must finish before its parent can
    events = granted_to_cps5(created)
    events = log_with(
        ("w1", "begin-implementation", {"mode": "delegate"}),
        ("w1", "delegate", {"to": "Impl", "child": "w1/i", "problem": REFS.to_payload()}),
        start=events,
    )
    with pytest.raises(IllegalTransition):
        advance(events, "w1", "complete")
    events = child_through(
        events, "w1/i", "G",
        ("submit-view", {}),
        ("request-validation", {}),
        ("record-validation", {"by": "G", "status": "granted"}),
        ("submit-solution", {"solution": "skip", "refs": []}),
        ("request-validation", {}),
        ("record-validation", {"by": "G", "status": "granted"}),
        ("begin-implementation", {"mode": "self"}),
        ("complete", {}),
    )
    events = log_with(("w1", "complete", {}), start=events)
    workflows = fold(events)
    assert workflows["w1"].state is CpsState.DONE
    assert workflows["w1/i"].state is CpsState.DONE


# --- drift and staleness --------------------------------------------------------------

def test_drift_untouched_model_is_empty(created):
    events = granted_to_cps5(created)
    _, report = drift(events, frozenset({"Unrelated"}))
    assert report.empty


def test_drift_on_solution_only_reference_regresses_to_cps4(created):
    events = granted_to_cps5(created)
    event, report = drift(events, frozenset({"OldAPI'"}))
    # OldAPI' appears only in the submitted solution, not the problem view
    assert ("w1", "CPS5", "CPS4") in report.regressions
    events = events + [event]
    workflows = fold(events)
    assert workflows["w1"].state is CpsState.CPS4
    assert workflows["w1"].effective(ValidationTarget.PROBLEM_VIEW) is not None


def test_drift_on_problem_reference_regresses_to_cps2(created):
    events = granted_to_cps5(created)
    event, report = drift(events, frozenset({"OldAPI"}))
    assert ("w1", "CPS5", "CPS2") in report.regressions
    stale_targets = {target for _, _, target in report.stale}
    assert stale_targets == {"problem-view", "solution+plan"}
    assert fold(events + [event])["w1"].state is CpsState.CPS2


def test_two_drifts_accumulate_and_regrant_has_later_sequence(created):
    events = granted_to_cps5(created)
    e1, _ = drift(events, frozenset({"OldAPI"}))
    events = events + [e1]
    e2, second = drift(events, frozenset({"api.call"}))
    events = events + [e2]
    workflows = fold(events)
    stale = [v for v in workflows["w1"].validations if v.status is ValidationStatus.STALE]
    assert len(stale) == 2
    # re-validate the problem view; the new grant postdates both drifts
    events = log_with(
        ("w1", "request-validation", {}),
        ("w1", "record-validation", {"by": "G", "status": "granted"}),
        start=events,
    )
    fresh = fold(events)["w1"].effective(ValidationTarget.PROBLEM_VIEW)
    assert fresh is not None and fresh.sequence > e2.sequence


def test_stale_records_are_kept(created):
    events = granted_to_cps5(created)
    event, _ = drift(events, frozenset({"OldAPI"}))
    workflows = fold(events + [event])
    assert len(workflows["w1"].validations) == 2
    assert all(v.status is ValidationStatus.STALE for v in workflows["w1"].validations)


# --- log round trip and determinism -----------------------------------------------------

def test_log_round_trips(created):
    events = granted_to_cps5(created)
    assert parse_log(render_log(events)) == events


def test_replay_is_deterministic(created):
    events = granted_to_cps5(created)
    assert fold(events) == fold(events)


def test_sequence_must_increase(created):
    events = granted_to_cps5(created)
    bad = events + [Event(1, "w1", "begin-implementation", {"mode": "self"})]
    with pytest.raises(macro.BadLog):
        fold(bad)


# --- randomized gate integrity -----------------------------------------------------------

LEGAL_MOVES = {
    CpsState.CPS1: [("submit-view", {})],
    CpsState.CPS2: [
        ("request-validation", {}),
        ("record-validation", {"by": "G", "status": "granted"}),
        ("record-validation", {"by": "G", "status": "rejected"}),
    ],
    CpsState.CPS3: [("submit-solution", {"solution": "?F", "refs": ["OldAPI'"]})],
    CpsState.CPS4: [
        ("request-validation", {}),
        ("record-validation", {"by": "G", "status": "granted"}),
        ("record-validation", {"by": "G", "status": "rejected"}),
    ],
    CpsState.CPS5: [("begin-implementation", {"mode": "self"}), ("complete", {})],
    CpsState.DONE: [],
}


def legal_moves(wf):
    moves = [m for m in LEGAL_MOVES[wf.state]]
    if wf.state in (CpsState.CPS2, CpsState.CPS4):
        if wf.pending() is None:
            moves = [m for m in moves if m[0] == "request-validation"]
        else:
            moves = [m for m in moves if m[0] == "record-validation"]
    if wf.state is CpsState.CPS5:
        if wf.implementation_mode is None:
            moves = [m for m in moves if m[0] == "begin-implementation"]
        else:
            moves = [m for m in moves if m[0] == "complete"]
    return moves


@given(st.data())
@settings(max_examples=120, deadline=None)
def test_random_legal_walks_keep_gates(data):
    events = [create_workflow([], "w1", "G", "D", REFS)]
    for _ in range(data.draw(st.integers(min_value=0, max_value=25))):
        wf = fold(events)["w1"]
        moves = legal_moves(wf)
        if not moves:
            break
        kind, payload = data.draw(st.sampled_from(moves))
        event, _ = advance(events, "w1", kind, payload)
        events.append(event)
    verify_gates(events)


@given(st.data())
@settings(max_examples=120, deadline=None)
def test_random_illegal_event_always_fails(data):
    events = [create_workflow([], "w1", "G", "D", REFS)]
    for _ in range(data.draw(st.integers(min_value=0, max_value=12))):
        wf = fold(events)["w1"]
        moves = legal_moves(wf)
        if not moves:
            break
        kind, payload = data.draw(st.sampled_from(moves))
        event, _ = advance(events, "w1", kind, payload)
        events.append(event)
    wf = fold(events)["w1"]
    legal_now = {m[0] for m in legal_moves(wf)}
    all_kinds = {
        "submit-view", "submit-solution", "begin-implementation", "complete",
        "request-validation", "record-validation",
    }
    illegal = sorted(all_kinds - legal_now)
    if not illegal:
        return
    kind = data.draw(st.sampled_from(illegal))
    payload = {
        "record-validation": {"by": "G", "status": "granted"},
        "begin-implementation": {"mode": "self"},
    }.get(kind, {})
    with pytest.raises(macro.MacroError):
        advance(events, "w1", kind, payload)
