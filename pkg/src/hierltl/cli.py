"""Command-line surface.

Commands mirror the library layout: `ltl` for formula work, `spec` for
hierarchical specifications, `htt` for task trees, `pipeline` for the
language front end, `plan`/`simulate` for the grid world, and
`gen-tasks`/`evaluate` for the benchmark harness.  Structured inputs are
JSON files; small inputs (formulas, traces) ride on the command line.
Exit status: 0 on success, 1 on a domain failure, 2 on a usage error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import evaluation, fixtures, gridworld, hierarchy, ltl, pipeline
from . import planner as planner_mod
from . import tasktree
from .errors import DomainError
from .gridworld import PlanTrace, Scenario
from .hierarchy import HierSpec
from .tasktree import TaskTree


def _echo_json(data: dict) -> None:
    click.echo(json.dumps(data, indent=2))


def _domain_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DomainError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
    return wrapper


def _read_json_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DomainError(f"no such file: {path}") from None
    except ValueError as exc:
        raise DomainError(f"{path} is not valid JSON: {exc}") from exc


def _load_tree(path: str) -> TaskTree:
    data = _read_json_file(path)
    if "tree" in data and "nodes" not in data:
        data = data["tree"]
    return TaskTree.from_json(data)


def _load_spec(path: str) -> HierSpec:
    return HierSpec.from_json(_read_json_file(path))


def _load_trace(arg: str):
    """Trace argument: inline JSON or @file; accepts a bare step list or
    any object with a "props" list (a recorded plan, for instance)."""
    if arg.startswith("@"):
        data = _read_json_file(arg[1:])
    else:
        try:
            data = json.loads(arg)
        except ValueError as exc:
            raise DomainError(f"trace is not valid JSON: {exc}") from exc
    if isinstance(data, dict):
        data = data.get("props")
    if not isinstance(data, list) or not all(
            isinstance(step, list) for step in data):
        raise DomainError("trace must be a list of step lists")
    return [frozenset(str(p) for p in step) for step in data]


def _write_or_echo(data: dict, out: str | None) -> None:
    if out:
        Path(out).write_text(json.dumps(data, indent=2) + "\n",
                             encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        _echo_json(data)


_MODE = click.option("--mode", type=click.Choice(["overlap", "serial"]),
                     default="overlap", show_default=True,
                     help="Sibling windows may overlap or must be disjoint.")


@click.group()
@click.version_option(package_name="hierltl")
def main() -> None:
    """Hierarchical temporal-logic task planning toolkit."""


# ---------------------------------------------------------------------------
# ltl


@main.group("ltl")
def ltl_group() -> None:
    """Parse, classify, and evaluate co-safe formulas."""


@ltl_group.command("parse")
@click.argument("formula")
@_domain_errors
def ltl_parse(formula: str) -> None:
    """Parse FORMULA and print its canonical form and AST."""
    f = ltl.parse(formula)
    _echo_json({
        "format_version": 1,
        "text": ltl.to_text(f),
        "props": list(ltl.props(f)),
        "co_safe": ltl.is_sc_ltl(f),
        "ast": ltl.formula_to_json(f),
    })


@ltl_group.command("check")
@click.argument("formula")
@_domain_errors
def ltl_check(formula: str) -> None:
    """Exit 0 when FORMULA is syntactically co-safe, 1 otherwise."""
    f = ltl.parse(formula)
    ok = ltl.is_sc_ltl(f)
    _echo_json({"format_version": 1, "co_safe": ok})
    if not ok:
        sys.exit(1)


@ltl_group.command("eval")
@click.argument("formula")
@click.argument("trace")
@_domain_errors
def ltl_eval(formula: str, trace: str) -> None:
    """Evaluate FORMULA on TRACE (JSON list of prop lists, or @file)."""
    f = ltl.parse(formula)
    steps = _load_trace(trace)
    remaining = f
    for step in steps:
        remaining = ltl.progress(remaining, step)
    _echo_json({
        "format_version": 1,
        "satisfied": ltl.evaluate(f, steps),
        "progressed": ltl.to_text(remaining),
    })


# ---------------------------------------------------------------------------
# spec


@main.group("spec")
def spec_group() -> None:
    """Validate and check hierarchical specifications."""


@spec_group.command("validate")
@click.argument("spec_file", type=click.Path())
@_domain_errors
def spec_validate(spec_file: str) -> None:
    """Check SPEC_FILE against the hierarchy rules; exit 1 on violations."""
    spec = _load_spec(spec_file)
    violations = hierarchy.validate(spec)
    _echo_json({
        "format_version": 1,
        "valid": not violations,
        "violations": [
            {"rule": v.rule, "formula": v.formula, "prop": v.prop,
             "message": v.message}
            for v in violations
        ],
    })
    if violations:
        sys.exit(1)


@spec_group.command("satisfies")
@click.argument("spec_file", type=click.Path())
@click.argument("trace")
@_MODE
@_domain_errors
def spec_satisfies(spec_file: str, trace: str, mode: str) -> None:
    """Decide whether TRACE satisfies SPEC_FILE; prints the witness."""
    spec = _load_spec(spec_file)
    steps = _load_trace(trace)
    ok, witness = hierarchy.satisfies(spec, steps, serial=(mode == "serial"))
    _echo_json({"format_version": 1, "satisfied": ok, "witness": witness})


@spec_group.command("dot")
@click.argument("spec_file", type=click.Path())
@click.option("--out", type=click.Path(), help="Write DOT here instead of stdout.")
@_domain_errors
def spec_dot(spec_file: str, out: str | None) -> None:
    """Render SPEC_FILE's dependency structure as Graphviz DOT."""
    spec = _load_spec(spec_file)
    text = spec.to_dot()
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


# ---------------------------------------------------------------------------
# htt


@main.group("htt")
def htt_group() -> None:
    """Validate task trees and compile them into specifications."""


@htt_group.command("validate")
@click.argument("tree_file", type=click.Path())
@_domain_errors
def htt_validate(tree_file: str) -> None:
    """Check TREE_FILE's structure; exit 1 when problems are found."""
    tree = _load_tree(tree_file)
    problems = tasktree.validate_tree(tree)
    _echo_json({"format_version": 1, "valid": not problems,
                "problems": problems})
    if problems:
        sys.exit(1)


@htt_group.command("construct")
@click.argument("tree_file", type=click.Path())
@click.option("--out", type=click.Path(), help="Write the spec JSON here.")
@_domain_errors
def htt_construct(tree_file: str, out: str | None) -> None:
    """Compile TREE_FILE into a hierarchical specification."""
    tree = _load_tree(tree_file)
    spec = tasktree.construct(tree)
    _write_or_echo(spec.to_json(), out)


# ---------------------------------------------------------------------------
# pipeline


def _make_provider(kind: str, fixture_path: str | None,
                   tree_path: str | None, url: str | None) -> pipeline.Provider:
    if kind == "fixture":
        if fixture_path:
            return pipeline.FixtureProvider(fixture_path)
        return pipeline.FixtureProvider(fixtures.pipeline_fixture())
    if kind == "scripted":
        tree = (_load_tree(tree_path) if tree_path
                else fixtures.dishwasher_tree())
        return pipeline.ScriptedProvider(tree)
    if kind == "pattern":
        return pipeline.PatternProvider()
    if kind == "http":
        return pipeline.HttpProvider(url=url)
    raise DomainError(f"unknown provider kind {kind!r}")


_PROVIDER_OPTIONS = [
    click.option("--provider", "provider_kind",
                 type=click.Choice(["fixture", "scripted", "pattern", "http"]),
                 default="fixture", show_default=True,
                 help="Where responses come from."),
    click.option("--fixture", "fixture_path", type=click.Path(),
                 help="Recorded-response file (fixture provider); "
                      "defaults to the bundled dishwasher transcript."),
    click.option("--tree", "tree_path", type=click.Path(),
                 help="Golden tree file (scripted provider)."),
    click.option("--url", help=f"Endpoint (http provider); defaults to "
                               f"${pipeline.ENV_URL}."),
]


def _provider_options(fn):
    for opt in reversed(_PROVIDER_OPTIONS):
        fn = opt(fn)
    return fn


@main.group("pipeline")
def pipeline_group() -> None:
    """Run the language front end against a provider."""


@pipeline_group.command("run")
@click.argument("instruction", required=False)
@_provider_options
@click.option("--record", "record_path", type=click.Path(),
              help="Save the exchanged responses as a replay fixture.")
@click.option("--out", type=click.Path(), help="Write the result JSON here.")
@_domain_errors
def pipeline_run(instruction: str | None, provider_kind: str,
                 fixture_path: str | None, tree_path: str | None,
                 url: str | None, record_path: str | None,
                 out: str | None) -> None:
    """Turn INSTRUCTION into a task tree and specification.

    Without INSTRUCTION the bundled dishwasher request is used, which the
    default fixture provider can answer offline.
    """
    provider = _make_provider(provider_kind, fixture_path, tree_path, url)
    if record_path:
        provider = pipeline.RecordingProvider(provider)
    if instruction is None:
        instruction = fixtures.dishwasher_instruction()
    result = pipeline.run_pipeline(instruction, provider)
    if record_path:
        Path(record_path).write_text(
            json.dumps(provider.fixture(), indent=2) + "\n", encoding="utf-8")
    _write_or_echo({
        "format_version": 1,
        "tree": result.tree.to_json(),
        "spec": result.spec.to_json(),
        "transcript": result.transcript.to_json(),
    }, out)


@pipeline_group.command("translate")
@click.argument("sentence")
@_provider_options
@_domain_errors
def pipeline_translate(sentence: str, provider_kind: str,
                       fixture_path: str | None, tree_path: str | None,
                       url: str | None) -> None:
    """Translate one structured SENTENCE into a formula.

    Arbitrary sentences need the pattern grammar; the fixture default only
    answers sentences from a recorded run, so fall back to the grammar when
    the caller stuck with the default provider.
    """
    if provider_kind == "fixture" and fixture_path is None:
        provider_kind = "pattern"
    provider = _make_provider(provider_kind, fixture_path, tree_path, url)
    text = provider.translate(sentence)
    f = ltl.parse(text)
    _echo_json({"format_version": 1, "sentence": sentence,
                "formula": ltl.to_text(f)})


@pipeline_group.command("diagnose")
@click.argument("tree_file", type=click.Path())
@click.option("--reference", "reference_file", type=click.Path(),
              required=True, help="Golden specification to compare against.")
@click.option("--spec", "spec_file", type=click.Path(),
              help="Candidate spec; defaults to compiling TREE_FILE.")
@_domain_errors
def pipeline_diagnose(tree_file: str, reference_file: str,
                      spec_file: str | None) -> None:
    """Classify where a candidate spec diverges from a golden one."""
    tree = _load_tree(tree_file)
    spec = (_load_spec(spec_file) if spec_file
            else tasktree.construct(tree))
    reference = _load_spec(reference_file)
    report = pipeline.diagnose(tree, spec, reference)
    _echo_json(report.to_json())


# ---------------------------------------------------------------------------
# plan / simulate


@main.command("plan")
@click.option("--scenario", "scenario_file", type=click.Path(), required=True)
@click.option("--tree", "tree_file", type=click.Path(),
              help="Task tree to compile and plan for.")
@click.option("--spec", "spec_file", type=click.Path(),
              help="Pre-compiled specification (alternative to --tree).")
@click.option("--objective", type=click.Choice(planner_mod.OBJECTIVES),
              default="travel", show_default=True)
@_MODE
@click.option("--timeout-s", type=float, default=planner_mod.DEFAULT_TIMEOUT_S,
              show_default=True, help="Search budget in seconds.")
@click.option("--node-cap", type=int, default=planner_mod.DEFAULT_NODE_CAP,
              show_default=True, help="Expansion cap for the search.")
@click.option("--method", type=click.Choice(["optimal", "greedy"]),
              default="optimal", show_default=True)
@click.option("--out", type=click.Path(), help="Write the plan JSON here.")
@_domain_errors
def plan_command(scenario_file: str, tree_file: str | None,
                 spec_file: str | None, objective: str, mode: str,
                 timeout_s: float, node_cap: int, method: str,
                 out: str | None) -> None:
    """Find a plan for a specification in a grid-world scenario."""
    if bool(tree_file) == bool(spec_file):
        raise DomainError("give exactly one of --tree or --spec")
    scenario = Scenario.from_json(_read_json_file(scenario_file))
    spec = (_load_spec(spec_file) if spec_file
            else tasktree.construct(_load_tree(tree_file)))
    serial = mode == "serial"
    if method == "greedy":
        result = planner_mod.greedy_plan(scenario, spec, objective,
                                         serial=serial)
    else:
        result = planner_mod.plan(scenario, spec, objective, serial=serial,
                                  timeout_s=timeout_s, node_cap=node_cap)
    _write_or_echo(result.to_json(), out)


@main.command("simulate")
@click.option("--scenario", "scenario_file", type=click.Path(), required=True)
@click.option("--plan", "plan_file", type=click.Path(), required=True,
              help="Recorded plan JSON (the \"plan\" field of a plan result "
                   "or a bare plan object).")
@click.option("--tree", "tree_file", type=click.Path(),
              help="Check the replay against this tree's specification.")
@click.option("--spec", "spec_file", type=click.Path(),
              help="Check the replay against this specification.")
@_MODE
@_domain_errors
def simulate_command(scenario_file: str, plan_file: str,
                     tree_file: str | None, spec_file: str | None,
                     mode: str) -> None:
    """Replay a recorded plan and report its metrics."""
    scenario = Scenario.from_json(_read_json_file(scenario_file))
    data = _read_json_file(plan_file)
    if "plan" in data and "steps" not in data:
        data = data["plan"]
    trace = PlanTrace.from_json(data, scenario)
    travel, completion = gridworld.metrics(trace, scenario)
    result = {
        "format_version": 1,
        "makespan": trace.makespan,
        "travel_cost": travel,
        "completion_time": completion,
        "props": [sorted(step) for step in trace.props],
        "success": None,
    }
    if tree_file or spec_file:
        spec = (_load_spec(spec_file) if spec_file
                else tasktree.construct(_load_tree(tree_file)))
        result["success"] = gridworld.check_success(
            trace, spec, serial=(mode == "serial"))
    _echo_json(result)
    if result["success"] is False:
        sys.exit(1)


# ---------------------------------------------------------------------------
# gen-tasks / evaluate


def _load_bases(bases_dir: str | None) -> list[tuple[str, TaskTree]]:
    if bases_dir is None:
        return fixtures.base_tasks()
    out = []
    for path in sorted(Path(bases_dir).glob("*.json")):
        data = _read_json_file(str(path))
        tree = TaskTree.from_json(data.get("tree", data))
        out.append((data.get("name", path.stem), tree))
    if not out:
        raise DomainError(f"no base-task files under {bases_dir}")
    return out


@main.command("gen-tasks")
@click.option("--bases", "bases_dir", type=click.Path(),
              help="Directory of base-task files; defaults to the bundled set.")
@click.option("--n-base", type=click.IntRange(1, evaluation.MAX_BASES),
              default=2, show_default=True,
              help="Base tasks combined per derivative tree.")
@click.option("--count", type=click.IntRange(min=1), default=10,
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(),
              help="Write one tree file per derivative here.")
@_domain_errors
def gen_tasks(bases_dir: str | None, n_base: int, count: int, seed: int,
              out_dir: str | None) -> None:
    """Generate derivative task trees from object-disjoint base tasks."""
    bases = _load_bases(bases_dir)
    trees = evaluation.gen_derivative([t for _, t in bases], n_base, count,
                                      seed)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, tree in enumerate(trees, start=1):
            path = out / f"derivative_{i:03d}.json"
            path.write_text(json.dumps(tree.to_json(), indent=2) + "\n",
                            encoding="utf-8")
        click.echo(f"wrote {len(trees)} trees to {out}")
    else:
        _echo_json({"format_version": 1, "seed": seed, "n_base": n_base,
                    "trees": [t.to_json() for t in trees]})


@main.command("evaluate")
@click.option("--suite", "suite_dir", type=click.Path(),
              help="Directory of case files (scenario plus tree); "
                   "defaults to the bundled desk suite.")
@click.option("--objective", type=click.Choice(planner_mod.OBJECTIVES),
              default="travel", show_default=True)
@_MODE
@click.option("--robots", help="Comma-separated robot counts; when given, "
                               "robots are re-seated per count (seeded).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--timeout-s", type=float, default=60.0, show_default=True)
@click.option("--node-cap", type=int, default=planner_mod.DEFAULT_NODE_CAP,
              show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True,
              help="Directory for the report, CSV, and figures.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@_domain_errors
def evaluate_command(suite_dir: str | None, objective: str, mode: str,
                     robots: str | None, seed: int, timeout_s: float,
                     node_cap: int, out_dir: str, figures: bool) -> None:
    """Run conversion and planning over a case suite and write the report."""
    if suite_dir is None:
        cases = fixtures.desk_cases()
    else:
        cases = []
        for path in sorted(Path(suite_dir).glob("*.json")):
            data = _read_json_file(str(path))
            cases.append(evaluation.EvalCase(
                name=data.get("name", path.stem),
                tree=TaskTree.from_json(data["tree"]),
                scenario=Scenario.from_json(data["scenario"]),
                category=data.get("category", "suite"),
            ))
        if not cases:
            raise DomainError(f"no case files under {suite_dir}")
    if robots:
        try:
            counts = [int(part) for part in robots.split(",") if part.strip()]
        except ValueError:
            raise DomainError(f"bad --robots value {robots!r}") from None
        cases = evaluation.build_suite(
            [(c.name, c.tree) for c in cases],
            [(c.name, c.scenario) for c in cases],
            counts, seed=seed)
    report = evaluation.evaluate(cases, objective=objective,
                                 serial=(mode == "serial"),
                                 timeout_s=timeout_s, node_cap=node_cap)
    written = evaluation.write_report(report, out_dir, figures=figures)
    click.echo(report.to_text())
    click.echo("")
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
