#!/usr/bin/env python3
"""Walk the two-stage API upgrade end to end.

Loads the committed fixture, replays the derivation, shows the design
obligations it leaves open for greenfield work, extracts the delivery
plan, and installs the solution into the organisation.

    python3 scripts/api_upgrade_walkthrough.py [fixture.poed]
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from deltapoe import calculus, dsl, model, printer  # noqa: E402

FIXTURE = pathlib.Path(__file__).resolve().parent.parent / "fixtures" / "api_upgrade.poed"


def main() -> int:
    path = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else FIXTURE
    parsed = dsl.parse_file(path.read_text(), str(path))
    script = parsed.derivations[0]
    problem = parsed.problems[script.problem_name]

    print(f"problem:   {printer.problem_str(problem)}")
    root = calculus.build(script, parsed.model, parsed.problems)
    verdict = calculus.check(root, parsed.model)
    print(f"verdict:   {verdict.kind}")
    if not verdict.solved:
        for diag in verdict.diagnostics:
            print(f"  {diag}")
        for item in verdict.open_items:
            print(f"  open: {item}")
        return 1

    print("design obligations discharged along the way:")
    for env in calculus.discharge_environments(root):
        print(f"  {printer.env_str(env)}")

    solution = calculus.solution_of(root)
    print(f"solution:  {printer.change_str(solution)}")

    print("delivery plan:")
    plan = calculus.extract_plan(root)
    for entry in plan.entries:
        step = entry.step
        deadline = f"  (deadline {printer.deadline_str(step.deadline)})" if step.deadline else ""
        print(f"  stage {entry.stage + 1}: {step.id}: {step.action}{deadline}")

    org = model.Organisation(problem.env, frozenset({problem.need}))
    updated = model.execute_solution(org, problem.need, solution)
    print(f"before:    {printer.env_str(org.state)}, open needs: {len(org.current_problems)}")
    print(f"after:     {printer.env_str(updated.state)}, open needs: {len(updated.current_problems)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
