"""setspace CLI: Click-based command interface.

Commands:
  setspace run --config FILE        Run a schedule suite through the checkers
  setspace bounds --n N --m M --k K Register bounds (or --sweep 3-6 for a grid)
  setspace refute --config FILE     Covering + splicing against a repeated protocol
  setspace glue --config FILE       Clone gluing against an anonymous protocol
  setspace lemma1 --config FILE     Search for an m-value witness execution (alias: witness)
  setspace history                  Past experiments in the results ledger

Exit codes: 0 ok, 1 safety violation, 2 config error, 3 no refutation/witness.
"""

import json
import logging
from itertools import combinations
from pathlib import Path

import click
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel
from rich.progress import Progress
from rich.table import Table

from . import __version__
from .adversary import Blocked, Stuck, build_covering, build_glued, find_glue_family, splice_and_refute
from .bounds import bounds as compute_bounds, format_lower, gluing_requirement, sweep
from .config import ExperimentConfig, load_config
from .database import Database
from .scheduling import Schedule, write_trace
from .suite import run_suite
from .verification import NotFound, find_m_value_witness

console = Console()

EXIT_OK = 0
EXIT_SAFETY = 1
EXIT_CONFIG = 2
EXIT_NOT_FOUND = 3


def get_db(db_path=None):
    return Database(Path(db_path) if db_path else None)


def _load(ctx, config_path) -> tuple[ExperimentConfig, object]:
    try:
        config = load_config(Path(config_path))
        return config, config.params()
    except (ValidationError, ValueError) as exc:
        console.print(f"[red]Config error:[/red] {escape(str(exc))}")
        ctx.exit(EXIT_CONFIG)


def _record(ctx, command, config, params, outcome, output_path=None) -> int:
    db = get_db(ctx.obj.get("db_path"))
    experiment_id = db.add_experiment(
        command,
        config.protocol.value,
        params.n,
        params.m,
        params.k,
        r=params.r,
        s_instances=params.s_instances,
        snapshot_mode=params.snapshot_mode.value,
        config=config.model_dump(mode="json"),
    )
    db.finish_experiment(experiment_id, outcome, str(output_path) if output_path else None)
    return experiment_id


def _out_dir(config, out_dir) -> Path:
    return Path(out_dir) if out_dir else config.output.dir


@click.group()
@click.version_option(__version__, prog_name="setspace")
@click.option("--db", "db_path", envvar="SETSPACE_DB", help="Results ledger path")
@click.option("-v", "--verbose", is_flag=True, help="Log search and builder progress")
@click.pass_context
def cli(ctx, db_path, verbose):
    """setspace: space bounds for m-obstruction-free set agreement, run and checked."""
    ctx.ensure_object(dict)
    ctx.obj["db_path"] = db_path
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


# --- Suites ---


@cli.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True), help="Experiment JSON")
@click.option("--seed", type=int, default=None, help="Override the suite seed")
@click.option("--out", "out_dir", envvar="SETSPACE_OUT", type=click.Path(), help="Output directory")
@click.option("--trace/--no-trace", "write_traces", default=None, help="Write every trace as JSON lines")
@click.pass_context
def run_command(ctx, config_path, seed, out_dir, write_traces):
    """Run a schedule suite and check every trace."""
    config, params = _load(ctx, config_path)
    out = _out_dir(config, out_dir)

    with Progress(console=console, transient=True) as progress:
        task = progress.add_task(f"{config.protocol.value} n={params.n} m={params.m} k={params.k}",
                                 total=config.suite.count)
        result = run_suite(config, out, write_traces, seed, on_trace=lambda _: progress.advance(task))

    table = Table(title=f"Suite: {config.suite.count} schedules, r={params.r}")
    table.add_column("Check", style="cyan")
    table.add_column("Pass", justify="right", style="green")
    table.add_column("Fail", justify="right", style="red")
    table.add_column("Inconclusive", justify="right", style="yellow")
    for check, counts in result.tally().items():
        table.add_row(check, str(counts["pass"]), str(counts["fail"]), str(counts["inconclusive"]))
    console.print(table)
    console.print(f"Summary: {result.csv_path}")
    if result.trace_path:
        console.print(f"Traces: {result.trace_path}")

    outcome = "safety-fail" if result.safety_failures else "ok"
    experiment_id = _record(ctx, "run", config, params, outcome, result.csv_path)
    get_db(ctx.obj.get("db_path")).add_reports(experiment_id, result.rows)

    if result.safety_failures:
        first = result.safety_failures[0]
        console.print(f"[red]{len(result.safety_failures)} safety failures[/red], first: "
                      f"schedule {first['schedule_index']} {first['check']} at step {first['step_index']}")
        ctx.exit(EXIT_SAFETY)
    console.print("[green]No safety violations[/green]")


@cli.command("bounds")
@click.option("--n", type=int, help="Process count")
@click.option("--m", type=int, help="Obstruction parameter")
@click.option("--k", type=int, help="Agreement bound")
@click.option("--sweep", "sweep_range", help="Tabulate every (n, m, k) for n in a range, e.g. 3-6")
@click.option("--json", "as_json", is_flag=True, help="Print JSON instead of a table")
@click.pass_context
def bounds_command(ctx, n, m, k, sweep_range, as_json):
    """Register lower and upper bounds."""
    try:
        if sweep_range:
            low, _, high = sweep_range.partition("-")
            rows = sweep(range(int(low), int(high or low) + 1))
        elif None in (n, m, k):
            raise ValueError("give --n, --m and --k, or --sweep")
        else:
            rows = [compute_bounds(n, m, k)]
    except ValueError as exc:
        console.print(f"[red]Config error:[/red] {escape(str(exc))}")
        ctx.exit(EXIT_CONFIG)

    if as_json:
        click.echo(json.dumps([b.to_dict() for b in rows], indent=2))
        return

    table = Table(title="Register bounds")
    columns = ("n", "m", "k", "repeated", "one-shot", "anon lower", "anon >", "anon one-shot", "anon repeated", "c",
               "glue r")
    for col in columns:
        table.add_column(col, justify="right")
    for b in rows:
        table.add_row(
            str(b.n),
            str(b.m),
            str(b.k),
            f"{b.repeated_lower}..{b.repeated_upper}",
            f"{b.one_shot_lower}..{b.one_shot_upper}",
            format_lower(b.anonymous_one_shot_lower),
            str(b.anonymous_min_registers),
            str(b.anonymous_one_shot_upper),
            str(b.anonymous_repeated_upper),
            str(b.c),
            f"{b.glue_registers} ({b.glue_processes} procs)",
        )
    console.print(table)


# --- Constructions ---


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True), help="Experiment JSON")
@click.option("--depth-cap", type=int, default=None, help="Search depth cap")
@click.option("--out", "out_dir", envvar="SETSPACE_OUT", type=click.Path(), help="Output directory")
@click.pass_context
def refute(ctx, config_path, depth_cap, out_dir):
    """Build a covering execution and splice in a k-agreement violation."""
    config, params = _load(ctx, config_path)
    if not config.protocol.repeated:
        console.print(f"[red]Config error:[/red] {config.protocol.value} is not a repeated protocol")
        ctx.exit(EXIT_CONFIG)
    depth_cap = config.depth_cap if depth_cap is None else depth_cap

    with console.status("[1/2] Building covering execution..."):
        covering = build_covering(config.protocol, params, depth_cap=depth_cap)
    if isinstance(covering, Stuck):
        console.print(Panel(escape(covering.reason), title=f"Stuck at stage {covering.stage}", border_style="yellow"))
        _record(ctx, "refute", config, params, "stuck")
        ctx.exit(EXIT_NOT_FOUND)

    table = Table(title=f"Covering: {len(covering.stages)} stages")
    table.add_column("j", justify="right")
    table.add_column("Q")
    table.add_column("P")
    table.add_column("A")
    table.add_column("|alpha|", justify="right")
    table.add_column("Exhaustive")
    for stage in covering.stages:
        table.add_row(str(stage.j), str(list(stage.Q)), str(list(stage.P)),
                      ", ".join(map(str, stage.A)), str(len(stage.alpha)), "yes" if stage.exhaustive else "no")
    console.print(table)

    with console.status("[2/2] Splicing..."):
        outcome = splice_and_refute(covering, depth_cap=depth_cap)
    if isinstance(outcome, NotFound):
        console.print(Panel(escape(outcome.reason), title="No refutation", border_style="yellow"))
        _record(ctx, "refute", config, params, "not-found")
        ctx.exit(EXIT_NOT_FOUND)

    path = write_trace(outcome.trace, _out_dir(config, out_dir) / "refutation.jsonl",
                       Schedule.scripted(outcome.schedule))
    console.print(Panel(
        f"Instance {outcome.instance} output {sorted(outcome.outputs)} (k={params.k})\n"
        f"Obliterated after every block write: {all(outcome.obliterated)}\n"
        f"Trace: {path}",
        title="k-agreement violated",
        border_style="green",
    ))
    experiment_id = _record(ctx, "refute", config, params, "refuted", path)
    get_db(ctx.obj.get("db_path")).add_refutation(
        experiment_id,
        "covering",
        instance=outcome.instance,
        outputs=outcome.outputs,
        steps=len(outcome.trace.steps),
        trace_path=str(path),
        stages=[stage.to_dict() for stage in covering.stages],
    )


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True), help="Experiment JSON")
@click.option("--depth-cap", type=int, default=None, help="Search depth cap")
@click.option("--out", "out_dir", envvar="SETSPACE_OUT", type=click.Path(), help="Output directory")
@click.pass_context
def glue(ctx, config_path, depth_cap, out_dir):
    """Glue witness executions with clones into a k-agreement violation."""
    config, params = _load(ctx, config_path)
    if not config.protocol.anonymous:
        console.print(f"[red]Config error:[/red] {config.protocol.value} is not anonymous")
        ctx.exit(EXIT_CONFIG)
    depth_cap = config.depth_cap if depth_cap is None else depth_cap

    with console.status("[1/2] Looking for value sets with a common register sequence..."):
        family = find_glue_family(config.protocol, params, depth_cap)
    if family is None:
        console.print(Panel(f"fewer than c={params.c} disjoint value sets share a register sequence",
                            title="Blocked", border_style="yellow"))
        _record(ctx, "glue", config, params, "blocked")
        ctx.exit(EXIT_NOT_FOUND)
    console.print(f"Registers: {', '.join(map(str, family.registers))} "
                  f"(gluing needs {gluing_requirement(len(family.registers), params.m, params.k)} processes)")

    with console.status("[2/2] Gluing..."):
        chain = build_glued(config.protocol, params, family.value_sets, depth_cap)
    if isinstance(chain, Blocked):
        console.print(Panel(escape(chain.reason), title=f"Blocked at stage {chain.stage}", border_style="yellow"))
        _record(ctx, "glue", config, params, "blocked")
        ctx.exit(EXIT_NOT_FOUND)

    path = write_trace(chain.trace, _out_dir(config, out_dir) / "glued.jsonl", Schedule.scripted(chain.betas[-1]))
    console.print(Panel(
        f"Value sets {[list(v) for v in chain.value_sets]} output {sorted(chain.outputs)} (k={params.k})\n"
        f"Stages: {len(chain.betas)}, trace: {path}",
        title="k-agreement violated",
        border_style="green",
    ))
    experiment_id = _record(ctx, "glue", config, params, "refuted", path)
    get_db(ctx.obj.get("db_path")).add_refutation(
        experiment_id, "gluing", instance=1, outputs=chain.outputs, steps=len(chain.trace.steps), trace_path=str(path)
    )


def _parse_ints(text):
    return [int(x) for x in text.split(",") if x.strip()] if text else []


@cli.command("lemma1")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True), help="Experiment JSON")
@click.option("--q", "q_text", help="Comma-separated pids, e.g. 0,1")
@click.option("--v", "v_text", help="Comma-separated values, e.g. 2,3")
@click.option("--all", "every", is_flag=True, help="Try every (Q, V) pair")
@click.option("--depth-cap", type=int, default=None, help="Search depth cap")
@click.option("--out", "out_dir", envvar="SETSPACE_OUT", type=click.Path(), help="Output directory")
@click.pass_context
def lemma1(ctx, config_path, q_text, v_text, every, depth_cap, out_dir):
    """Find an execution where m processes output m given values (alias: witness)."""
    config, params = _load(ctx, config_path)
    depth_cap = config.depth_cap if depth_cap is None else depth_cap

    if every:
        pairs = [(Q, V) for Q in combinations(range(params.n), params.m)
                 for V in combinations(params.domain, params.m)]
        missing = []
        with Progress(console=console, transient=True) as progress:
            task = progress.add_task("Searching witnesses", total=len(pairs))
            for Q, V in pairs:
                if isinstance(find_m_value_witness(config.protocol, params, Q, V, depth_cap), NotFound):
                    missing.append((Q, V))
                progress.advance(task)
        console.print(f"[green]{len(pairs) - len(missing)}[/green] of {len(pairs)} pairs have a witness")
        for Q, V in missing[:10]:
            console.print(f"  [yellow]not found[/yellow] Q={list(Q)} V={list(V)}")
        _record(ctx, "lemma1", config, params, "not-found" if missing else "ok")
        if missing:
            ctx.exit(EXIT_NOT_FOUND)
        return

    try:
        found = find_m_value_witness(config.protocol, params, _parse_ints(q_text), _parse_ints(v_text), depth_cap)
    except ValueError as exc:
        console.print(f"[red]Config error:[/red] {escape(str(exc))}")
        ctx.exit(EXIT_CONFIG)
    if isinstance(found, NotFound):
        console.print(Panel(escape(found.reason), title="No witness", border_style="yellow"))
        _record(ctx, "lemma1", config, params, "not-found")
        ctx.exit(EXIT_NOT_FOUND)
    path = write_trace(found, _out_dir(config, out_dir) / "witness.jsonl", Schedule.scripted(found.activations()))
    outputs = sorted({e.value for e in found.decisions})
    console.print(f"[green]Witness:[/green] {len(found.steps)} steps output {outputs}, trace {path}")
    _record(ctx, "lemma1", config, params, "ok", path)


cli.add_command(lemma1, name="witness")


# --- Ledger ---


@cli.command()
@click.option("--limit", default=20, help="Experiments to show")
@click.pass_context
def history(ctx, limit):
    """Show past experiments from the results ledger."""
    db = get_db(ctx.obj.get("db_path"))
    experiments = db.list_experiments(limit)
    if not experiments:
        console.print("[yellow]No experiments recorded yet[/yellow]")
        return

    table = Table(title="Experiments")
    table.add_column("ID", style="cyan", justify="right")
    table.add_column("Command")
    table.add_column("Protocol")
    table.add_column("n,m,k", justify="right")
    table.add_column("r", justify="right")
    table.add_column("Outcome")
    table.add_column("When")
    for e in experiments:
        style = "red" if e["outcome"] == "safety-fail" else "green" if e["outcome"] in ("ok", "refuted") else "yellow"
        table.add_row(str(e["id"]), e["command"], e["protocol"], f"{e['n']},{e['m']},{e['k']}",
                      str(e["r"] or "-"), f"[{style}]{e['outcome'] or '-'}[/{style}]", e["created_at"])
    console.print(table)

    stats = db.get_stats()
    console.print(f"{stats['experiments']} experiments, {stats['reports']} check reports "
                  f"({stats['failures']} failed), {stats['refutations']} refutations")
