"""Phenomena-based change propagation.

A change seeds a set of affected phenomena.  Any domain observing an
affected phenomenon changes behaviourally (new occurrences reach it
without altering its description), and its own causal links carry the
effect onward; the analysis runs this to a fixpoint.  Domains the
analyst declares as change buffers absorb what reaches them: they are
reported, but their outgoing links are not followed.

Classification is by reachability over observed phenomena and causal
links only; no occurrence-level behaviour is modelled.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from . import dsl, model as m
from .printer import change_str


class ImpactError(Exception):
    kind = "ImpactError"


class UnknownDomain(ImpactError):
    kind = "UnknownDomain"

    def __init__(self, name: str):
        super().__init__(f"no domain named {name!r} in the environment")
        self.name = name


class UnknownPhenomenon(ImpactError):
    kind = "UnknownPhenomenon"

    def __init__(self, name: str):
        super().__init__(f"no phenomenon named {name!r} in the environment")
        self.name = name


@dataclass(frozen=True)
class NewLink:
    """A description-level edit: the domain gains a causal link."""

    domain: str
    cause: str
    effect: str


EditSpec = m.Add | m.Cancel | m.Refine | NewLink


def edit_str(edit: EditSpec) -> str:
    if isinstance(edit, NewLink):
        return f"{edit.domain} causes {edit.cause} -> {edit.effect}"
    return change_str(edit)


# A path alternates phenomena and the domains they reach:
# ("c", "D", "d", "E") reads "c -> D -> d -> E".
Path = tuple[str, ...]


def path_text(path: Path) -> str:
    return " -> ".join(path)


@dataclass(frozen=True)
class ImpactReport:
    edit: str
    structural: frozenset[str]
    behavioural: frozenset[str]
    buffers: frozenset[str]  # declared buffers that were actually reached
    declared_buffers: frozenset[str]
    seed_phenomena: frozenset[str]
    paths: tuple[Path, ...]  # one shortest path per reached domain, discovery order

    def path_to(self, domain: str) -> Path | None:
        for path in self.paths:
            if path[-1] == domain:
                return path
        return None


@dataclass(frozen=True)
class BoundReport:
    passed: bool
    impacted: frozenset[str]
    violations: tuple[tuple[str, Path], ...]


def _seed(env: m.Environment, edit: EditSpec) -> tuple[frozenset[str], frozenset[str]]:
    """structural domains and seed phenomena of an edit"""
    if isinstance(edit, m.Cancel):
        if edit.domain_name not in env:
            raise UnknownDomain(edit.domain_name)
        target = env.domain(edit.domain_name)
        return frozenset({target.name}), frozenset(target.controlled)
    if isinstance(edit, m.Refine):
        if edit.target not in env:
            raise UnknownDomain(edit.target)
        target = env.domain(edit.target)
        rehomed = frozenset().union(
            *(d.controlled for d in edit.retained + edit.added)
        ) if edit.retained + edit.added else frozenset()
        structural = {target.name}
        structural.update(d.name for d in edit.retained + edit.added)
        return frozenset(structural), frozenset(target.controlled - rehomed)
    if isinstance(edit, m.Add):
        return frozenset({edit.domain.name}), frozenset(edit.domain.controlled)
    if isinstance(edit, NewLink):
        if edit.domain not in env:
            raise UnknownDomain(edit.domain)
        universe = m.phenomena_universe(env)
        for phen in (edit.cause, edit.effect):
            if phen not in universe:
                raise UnknownPhenomenon(phen)
        return frozenset({edit.domain}), frozenset({edit.effect})
    raise TypeError(f"not an edit: {edit!r}")


def propagate(
    env: m.Environment,
    edit: EditSpec,
    buffers: frozenset[str] = frozenset(),
) -> ImpactReport:
    """Trace an edit's reach through observation and causal links.

    Affected phenomena grow through the links of non-buffer domains that
    observe an affected cause; every domain observing an affected
    phenomenon is behaviourally impacted.  Deterministic: paths are
    discovered breadth-first, ties broken by name.
    """
    for name in buffers:
        if name not in env:
            raise UnknownDomain(name)
    structural, seeds = _seed(env, edit)

    # phenomenon-level edges through observing, non-buffer domains
    edges: dict[str, list[tuple[str, str]]] = {}
    for dom in env:
        if dom.name in buffers:
            continue
        for link in sorted(dom.links):
            if link.cause in dom.observed:
                edges.setdefault(link.cause, []).append((link.effect, dom.name))

    parent: dict[str, tuple[str, str] | None] = {}
    queue: deque[str] = deque()
    for phen in sorted(seeds):
        parent[phen] = None
        queue.append(phen)
    while queue:
        phen = queue.popleft()
        for effect, via in edges.get(phen, ()):
            if effect not in parent:
                parent[effect] = (phen, via)
                queue.append(effect)
    affected = set(parent)

    def chain(phen: str) -> Path:
        out: list[str] = [phen]
        at = phen
        while parent[at] is not None:
            cause, via = parent[at]
            out.extend([via, cause])
            at = cause
        return tuple(reversed(out))

    reached: list[tuple[int, str, Path]] = []
    for dom in env:
        if dom.name in structural:
            continue
        hits = sorted(dom.observed & affected, key=lambda p: (len(chain(p)), p))
        if hits:
            path = chain(hits[0]) + (dom.name,)
            reached.append((len(path), dom.name, path))
    reached.sort(key=lambda item: (item[0], item[1]))

    behavioural = frozenset(name for _, name, _ in reached)
    return ImpactReport(
        edit=edit_str(edit),
        structural=structural,
        behavioural=behavioural,
        buffers=behavioural & buffers,
        declared_buffers=frozenset(buffers),
        seed_phenomena=seeds,
        paths=tuple(path for _, _, path in reached),
    )


def bound_check(
    env: m.Environment,
    edit: EditSpec,
    permitted: frozenset[str],
    buffers: frozenset[str] = frozenset(),
) -> BoundReport:
    """Pass iff every impacted domain is permitted to change."""
    report = propagate(env, edit, buffers)
    impacted = report.structural | report.behavioural
    violations = []
    for name in sorted(impacted - permitted):
        path = report.path_to(name) or (name,)
        violations.append((name, path))
    violations.sort(key=lambda v: (len(v[1]), v[0]))
    return BoundReport(not violations, impacted, tuple(violations))


def parse_edit(text: str, mdl: dsl.Model) -> EditSpec:
    """Parse an edit given on the command line.

    Accepts a change atom (``+X``, ``!X``, ``X ~> d[A](B)``) or a new
    causal link (``X causes y -> c``)."""
    tokens = dsl.tokenize(text)
    if (
        len(tokens) >= 2
        and tokens[0].kind == "ident"
        and tokens[1].kind == "ident"
        and tokens[1].value == "causes"
    ):
        parser = dsl._Parser(tokens, mdl)
        owner = parser.ident("domain name")
        parser.expect_word("causes")
        cause = parser.ident("phenomenon name")
        parser.expect("symbol", "->")
        effect = parser.ident("phenomenon name")
        parser.expect("eof")
        return NewLink(owner.value, cause.value, effect.value)
    change = dsl.parse_change(text, mdl)
    if not isinstance(change, (m.Add, m.Cancel, m.Refine)):
        raise dsl.DslError(
            [dsl.ParseDiagnostic(1, 1, "an impact edit is a single change atom or a new link")]
        )
    return change
