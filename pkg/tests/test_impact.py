import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltapoe import dsl, impact, model
from deltapoe.impact import NewLink, UnknownDomain, UnknownPhenomenon, bound_check, propagate

from .conftest import FIXTURES
from .strategies import environments


def oracle_behavioural(env, seeds, structural, buffers):
    """Reference result: transitive closure of the observer-then-link
    relation over phenomena, with buffer domains' edges removed."""
    edges = set()
    for dom in env:
        if dom.name in buffers:
            continue
        for link in dom.links:
            if link.cause in dom.observed:
                edges.add((link.cause, link.effect))
    affected = set(seeds)
    while True:
        grown = {q for p, q in edges if p in affected}
        if grown <= affected:
            break
        affected |= grown
    return {
        dom.name
        for dom in env
        if dom.name not in structural and dom.observed & affected
    }


@pytest.fixture
def chain_model():
    return dsl.parse_model((FIXTURES / "chain.poed").read_text())


def test_chain_propagates_through_both_hops(chain_model):
    env = chain_model.environment
    report = propagate(env, NewLink("C", "y", "c"))
    assert report.structural == {"C"}
    assert report.behavioural == {"D", "E"}
    assert report.path_to("D") == ("c", "D")
    assert report.path_to("E") == ("c", "D", "d", "E")


def test_chain_buffer_absorbs(chain_model):
    env = chain_model.environment
    report = propagate(env, NewLink("C", "y", "c"), buffers=frozenset({"D"}))
    assert report.behavioural == {"D"}
    assert report.buffers == {"D"}
    assert "E" not in report.behavioural


def test_isolated_edit_reaches_nothing():
    env = model.Environment(
        (
            model.Domain("Island", controlled=frozenset({"sig"})),
            model.Domain("Elsewhere", observed=frozenset({"other"}),
                         controlled=frozenset({"other2"})),
        )
    )
    report = propagate(env, model.Cancel("Island"))
    assert report.behavioural == frozenset()
    assert report.paths == ()


def test_unknown_domain_rejected(chain_model):
    with pytest.raises(UnknownDomain):
        propagate(chain_model.environment, model.Cancel("Ghost"))
    with pytest.raises(UnknownDomain):
        propagate(chain_model.environment, NewLink("C", "y", "c"), buffers=frozenset({"Ghost"}))


def test_unknown_phenomenon_rejected(chain_model):
    with pytest.raises(UnknownPhenomenon):
        propagate(chain_model.environment, NewLink("C", "ghost", "c"))


def test_refine_seeds_only_unrehomed_phenomena():
    keeper = model.Domain("Keeper", controlled=frozenset({"kept", "lost"}))
    heir = model.Domain("Heir", controlled=frozenset({"kept"}))
    watcher_kept = model.Domain("WatchKept", observed=frozenset({"kept"}))
    watcher_lost = model.Domain("WatchLost", observed=frozenset({"lost"}))
    env = model.Environment((keeper, watcher_kept, watcher_lost))
    report = propagate(env, model.Refine("Keeper", (heir,), ()))
    assert report.seed_phenomena == {"lost"}
    assert report.behavioural == {"WatchLost"}
    assert report.structural == {"Keeper", "Heir"}


def test_bound_check_devenv_pass(devenv):
    report = bound_check(devenv, model.Cancel("OldAPI"), frozenset({"OldAPI", "Docs"}))
    assert report.passed


def test_bound_check_chain_violations(chain_model):
    env = chain_model.environment
    report = bound_check(env, NewLink("C", "y", "c"), frozenset({"C"}))
    assert not report.passed
    assert [v[0] for v in report.violations] == ["D", "E"]
    assert report.violations[0][1] == ("c", "D")
    assert report.violations[1][1] == ("c", "D", "d", "E")


def test_bound_check_superset_always_passes(chain_model):
    env = chain_model.environment
    report = bound_check(env, NewLink("C", "y", "c"), frozenset(env.names()))
    assert report.passed


def test_parse_edit_forms(chain_model):
    assert impact.parse_edit("!C", chain_model) == model.Cancel("C")
    assert impact.parse_edit("C causes y -> c", chain_model) == NewLink("C", "y", "c")
    with pytest.raises(dsl.DslError):
        impact.parse_edit("!C ; !D", chain_model)


# --- randomized agreement with the oracle -------------------------------------------

@st.composite
def impact_cases(draw):
    env = draw(environments(max_domains=10, max_links=30))
    names = list(env.names())
    target = draw(st.sampled_from(names))
    buffers = frozenset(draw(st.sets(st.sampled_from(names), max_size=len(names))))
    dom = env.domain(target)
    link_pool = sorted(dom.phenomena())
    if link_pool and draw(st.booleans()):
        cause = draw(st.sampled_from(link_pool))
        effect = draw(st.sampled_from(link_pool))
        if cause != effect:
            return env, NewLink(target, cause, effect), buffers
    return env, model.Cancel(target), buffers


@given(impact_cases())
@settings(max_examples=150, deadline=None)
def test_propagate_matches_oracle(case):
    env, edit, buffers = case
    report = propagate(env, edit, buffers)
    expected = oracle_behavioural(
        env, report.seed_phenomena, report.structural, buffers
    )
    assert report.behavioural == expected


@given(impact_cases())
@settings(max_examples=80, deadline=None)
def test_buffers_never_enlarge_impact(case):
    env, edit, buffers = case
    wide = propagate(env, edit, frozenset())
    narrow = propagate(env, edit, buffers)
    assert narrow.behavioural <= wide.behavioural
    assert narrow.structural == wide.structural


@given(environments(max_domains=8), st.data())
@settings(max_examples=100, deadline=None)
def test_monotone_in_seeds(env, data):
    # refining away only part of a domain's control seeds a subset of what
    # cancelling it seeds; the impact may not grow when the seeds shrink
    target = data.draw(st.sampled_from(list(env.names())))
    controlled = sorted(env.domain(target).controlled)
    kept = set(data.draw(st.sets(st.sampled_from(controlled)))) if controlled else set()
    heir = model.Domain("heir", controlled=frozenset(kept))
    partial = propagate(env, model.Refine(target, (heir,), ()))
    full = propagate(env, model.Cancel(target))
    assert partial.seed_phenomena <= full.seed_phenomena
    assert partial.behavioural <= full.behavioural


def test_cyclic_links_terminate():
    a = model.Domain(
        "A",
        observed=frozenset({"q"}),
        controlled=frozenset({"p"}),
        links=frozenset({model.CausalLink("q", "p", "A")}),
    )
    b = model.Domain(
        "B",
        observed=frozenset({"p"}),
        controlled=frozenset({"q"}),
        links=frozenset({model.CausalLink("p", "q", "B")}),
    )
    env = model.Environment((a, b))
    report = propagate(env, model.Cancel("A"))
    assert report.behavioural == {"B"}


def test_report_is_deterministic(chain_model):
    env = chain_model.environment
    first = propagate(env, NewLink("C", "y", "c"))
    second = propagate(env, NewLink("C", "y", "c"))
    assert first == second
