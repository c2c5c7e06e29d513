"""Structured documents and graph-description exports.

Documents are JSON with a stable field layout (conclusion, rule,
premises, evidence, plan, plus justification and validation details);
graphs are DOT text, one node per derivation step or per domain.  Both
are deterministic: equal inputs yield byte-identical output.
"""

from __future__ import annotations

import json

from . import model as m
from .artifacts import Justification, PlanStep, ValidationRecord
from .calculus import DerivationNode
from .dsl import Model
from .impact import ImpactReport
from .printer import change_str, problem_str


def _justification_doc(j: Justification) -> dict:
    out = {}
    for key, value in (
        ("rule", j.rule_rationale),
        ("coordination", j.coordination_rationale),
        ("integration", j.integration_argument),
        ("dependency", j.dependency_argument),
        ("feedback", j.feedback_cadence),
        ("timeline", j.timeline_rationale),
        ("criteria", j.validation_criteria),
        ("resources", j.resource_rationale),
    ):
        if value:
            out[key] = value
    if j.risk_register:
        out["risks"] = [
            {"risk": r.risk, "mitigation": r.mitigation} for r in j.risk_register
        ]
    return out


def _step_doc(step: PlanStep) -> dict:
    out = {
        "id": step.id,
        "action": step.action,
        "installs": change_str(step.installs),
    }
    if step.after:
        out["after"] = list(step.after)
    if step.parallel_ok:
        out["parallel_ok"] = list(step.parallel_ok)
    if step.deadline:
        out["deadline"] = {"kind": step.deadline.kind, "value": step.deadline.value}
    return out


def _validation_doc(v: ValidationRecord) -> dict:
    return {
        "id": v.id,
        "stakeholder": v.stakeholder,
        "target": v.target.value,
        "subject": v.subject,
        "status": v.status.value,
        "sequence": v.sequence,
    }


def derivation_doc(node: DerivationNode) -> dict:
    """Structured-tree document for a derivation node."""
    doc = {
        "conclusion": problem_str(node.conclusion),
        "rule": node.rule.value if node.rule else ("discharged" if node.discharged else "open"),
        "premises": [derivation_doc(p) for p in node.premises],
        "evidence": dict(sorted(node.evidence.items())),
        "plan": [_step_doc(s) for s in node.plan],
    }
    justification = _justification_doc(node.justification)
    if justification:
        doc["justification"] = justification
    if node.validations:
        doc["validations"] = [_validation_doc(v) for v in node.validations]
    if node.greenfield:
        doc["greenfield"] = True
    if node.marker:
        doc["marker"] = node.marker
    if node.alternatives:
        doc["alternatives"] = [derivation_doc(a) for a in node.alternatives]
    return doc


def to_json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def derivation_dot(root: DerivationNode, name: str = "derivation") -> str:
    """Graph description of a derivation tree, one node per step."""
    lines = [f'digraph "{_dot_escape(name)}" {{', "  rankdir=BT;", "  node [shape=box];"]

    def ident(path):
        return "n_" + "_".join(
            str(seg) if isinstance(seg, int) else f"a{seg[1]}" for seg in path
        ) if path else "n_root"

    def walk(node: DerivationNode, path):
        rule = node.rule.value if node.rule else ("discharged" if node.discharged else "open")
        label = f"{rule}\\n{_dot_escape(problem_str(node.conclusion))}"
        attrs = f'label="{label}"'
        if node.greenfield:
            attrs += ', style=filled, fillcolor="lightyellow"'
        elif node.rule is None:
            attrs += ', style=dashed'
        lines.append(f"  {ident(path)} [{attrs}];")
        for i, child in enumerate(node.premises):
            walk(child, path + (i,))
            lines.append(f"  {ident(path + (i,))} -> {ident(path)};")
        for k, alt in enumerate(node.alternatives):
            apath = path + (("alt", k + 1),)
            walk(alt, apath)
            lines.append(f'  {ident(apath)} -> {ident(path)} [style=dotted, label="alt"];')

    walk(root, ())
    lines.append("}")
    return "\n".join(lines) + "\n"


def model_dot(mdl: Model, name: str = "model") -> str:
    """Domains as nodes; an edge from controller to observer for every
    shared phenomenon, plus each domain's own causal links."""
    lines = [f'digraph "{_dot_escape(name)}" {{', "  node [shape=box];"]
    env = mdl.environment
    for dom in env:
        lines.append(f'  "{_dot_escape(dom.name)}";')
    for dom in env:
        for phen in sorted(dom.controlled):
            for other in env:
                if other.name != dom.name and phen in other.observed:
                    lines.append(
                        f'  "{_dot_escape(dom.name)}" -> "{_dot_escape(other.name)}"'
                        f' [label="{_dot_escape(phen)}"];'
                    )
        for link in sorted(dom.links):
            lines.append(
                f'  "{_dot_escape(dom.name)}" -> "{_dot_escape(dom.name)}"'
                f' [label="{_dot_escape(link.cause)} -> {_dot_escape(link.effect)}", style=dashed];'
            )
    lines.append("}")
    return "\n".join(lines) + "\n"


def impact_doc(report: ImpactReport, env: m.Environment) -> dict:
    return {
        "edit": report.edit,
        "structural": sorted(report.structural),
        "behavioural": sorted(report.behavioural),
        "buffers": sorted(report.buffers),
        "declared_buffers": sorted(report.declared_buffers),
        "seed_phenomena": sorted(report.seed_phenomena),
        "paths": [list(p) for p in report.paths],
        "domains": list(env.names()),
    }


def impact_dot(doc: dict, name: str = "impact") -> str:
    """Domains colored by impact class; path hops as edges, buffers marked."""
    structural = set(doc.get("structural", ()))
    behavioural = set(doc.get("behavioural", ()))
    buffers = set(doc.get("buffers", ()))
    lines = [f'digraph "{_dot_escape(name)}" {{', "  node [shape=box, style=filled];"]
    for dom in doc.get("domains", ()):
        if dom in buffers:
            color, extra = "lightblue", ', peripheries=2'
        elif dom in structural:
            color, extra = "lightcoral", ""
        elif dom in behavioural:
            color, extra = "khaki", ""
        else:
            color, extra = "white", ""
        lines.append(f'  "{_dot_escape(dom)}" [fillcolor="{color}"{extra}];')
    seed = sorted(structural)[0] if structural else None
    seen = set()
    for path in doc.get("paths", ()):
        hops = list(path)
        # a path alternates phenomena and the domains they reach:
        # p0, D1, p1, D2, ..., Dk; the seed phenomenon leaves the edit's domain
        previous = seed
        for i in range(0, len(hops) - 1, 2):
            phen, dom = hops[i], hops[i + 1]
            if previous is not None:
                key = (previous, dom, phen)
                if key not in seen:
                    seen.add(key)
                    lines.append(
                        f'  "{_dot_escape(previous)}" -> "{_dot_escape(dom)}"'
                        f' [label="{_dot_escape(phen)}"];'
                    )
            previous = dom
    lines.append("}")
    return "\n".join(lines) + "\n"
