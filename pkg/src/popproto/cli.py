"""``popproto`` command line.

Exit codes: 0 success, 1 runtime failure (or a failed verdict under
``--strict``), 2 usage or parse error.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from fractions import Fraction
from pathlib import Path

import click

from . import harness
from .bounds import VacuousBoundError, propagate_bounds
from .dsl import DSLError, serialize_protocol
from .engine import AGENTS, COUNTS, AnyOf, RunConfig, Simulation, trace_writer
from .library import BUILTINS, builtin_address, iter_builtins, resolve_protocol
from .protocol import LIMIT_EXCEEDED, STABLE, Configuration, compute_layers, is_stable_consensus

CONTEXT = {"show_default": True, "help_option_names": ["-h", "--help"]}


def _load_protocol(ctx, param, value):
    if value is None:
        return None
    try:
        return resolve_protocol(value)
    except (FileNotFoundError, ValueError, DSLError) as err:
        raise click.BadParameter(str(err), ctx=ctx, param=param) from None


def protocol_option(f):
    return click.option(
        "--protocol", "-p", required=True, callback=_load_protocol,
        help="Protocol file path or builtin:<name>?<k=v>.",
    )(f)


def _state(protocol, name: str | None, what: str = "--start") -> int:
    if name is None:
        return protocol.start_state
    try:
        return protocol.index(name)
    except KeyError:
        raise click.UsageError(f"{what}: unknown state {name!r}") from None


def _initial(protocol, n: int | None, init: str | None, start: str | None) -> Configuration:
    if init:
        mapping = {}
        for part in init.split(","):
            name, sep, count = part.partition("=")
            if not sep:
                raise click.UsageError(f"--init: expected STATE=COUNT, got {part!r}")
            try:
                mapping[_state(protocol, name.strip(), "--init")] = int(count)
            except ValueError:
                raise click.UsageError(f"--init: bad count {count!r}") from None
        try:
            config = Configuration.from_mapping(protocol, mapping)
        except ValueError as err:
            raise click.UsageError(f"--init: {err}") from None
        if n is not None and n != config.n:
            raise click.UsageError(f"--n {n} disagrees with --init total {config.n}")
        return config
    if n is None:
        raise click.UsageError("give --n or --init")
    return Configuration.uniform(protocol, n, _state(protocol, start))


@click.group(context_settings=CONTEXT)
@click.version_option(package_name="artifact")
def main():
    """Simulate population protocols and analyse their reachable states."""


@main.command(context_settings=CONTEXT)
@protocol_option
@click.option("--n", type=click.IntRange(min=1), default=None, help="Population size (all agents in the start state).")
@click.option("--init", default=None, help="Initial counts as STATE=COUNT,...; overrides --start.")
@click.option("--start", default=None, help="Start state (default: the protocol's input state).")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, help="RNG seed.")
@click.option("--mode", type=click.Choice([COUNTS, AGENTS]), default=COUNTS, help="Execution mode.")
@click.option(
    "--stop", "stops", multiple=True, default=(),
    help="single-leader, calls:N, interactions:N, entered:S[,S...] or computation; N may be written Kn for K times n; repeat for 'any of'.",
)
@click.option("--max-calls", type=click.IntRange(min=0), default=None, help="Safety cap on scheduler calls (default 64·n²).")
@click.option("--trace", type=click.Path(dir_okay=False, writable=True), default=None, help="Write one JSON line per call.")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", help="Summary format.")
def run(protocol, n, init, start, seed, mode, stops, max_calls, trace, fmt):
    """Execute one simulation and print a summary."""
    config = _initial(protocol, n, init, start)
    try:
        conds = [harness.parse_stop(s, protocol, config.n) for s in stops]
    except (ValueError, KeyError) as err:
        raise click.BadParameter(str(err), param_hint="--stop") from None
    stop = AnyOf(tuple(conds)) if conds else None
    try:
        sim = Simulation(RunConfig(protocol, config, seed, mode, stop, max_calls=max_calls))
        if trace:
            with open(trace, "w", encoding="utf-8") as fh:
                result = sim.run(trace=trace_writer(fh, protocol))
        else:
            result = sim.run()
    except (ValueError, OSError) as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)
    if fmt == "json":
        click.echo(json.dumps({
            "final": result.final.as_dict(protocol),
            "calls": result.calls_made,
            "interactions": result.interactions_made,
            "stop_reason": result.stop_reason,
            "rng": result.algorithm_id,
            "seed": result.seed,
        }))
    else:
        click.echo(result.summary(protocol))


@main.command(context_settings=CONTEXT)
@click.option("--preset", type=click.Choice(sorted(harness.PRESETS)), default=None, help="Named experiment.")
@click.option("--spec", "spec_file", type=click.Path(exists=True, dir_okay=False), default=None, help="JSON sweep description.")
@click.option("--k", type=click.IntRange(min=1), default=None, help="Computation threshold for protocol1 presets.")
@click.option("--n-max", type=click.IntRange(min=1), default=None, help="Drop schedule entries above this n.")
@click.option("--runs", type=click.IntRange(min=1), default=None, help="Runs per n (default: preset or spec value).")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Master seed (default: spec value, else 0).")
@click.option(
    "--workers", type=click.IntRange(min=1), default=None, envvar=harness.WORKERS_ENV, show_envvar=True,
    help="Worker threads (default: available CPUs).",
)
@click.option("--out", type=click.Path(file_okay=False), default="results", help="Output directory.")
@click.option("--paper-scale", is_flag=True, help="Use the original dense single-run schedule.")
@click.option("--chart", is_flag=True, help="Also write an SVG chart (needs matplotlib).")
@click.option("--strict", is_flag=True, help="Exit 1 if the flagged-row rate exceeds --max-flagged-rate.")
@click.option("--max-flagged-rate", type=click.FloatRange(0, 1), default=0.0, help="Threshold for --strict.")
def sweep(preset, spec_file, k, n_max, runs, seed, workers, out, paper_scale, chart, strict, max_flagged_rate):
    """Run a seeded sweep and write CSV results plus fits.csv."""
    if (preset is None) == (spec_file is None):
        raise click.UsageError("give exactly one of --preset or --spec")
    if preset is not None:
        pre = harness.PRESETS[preset]
        if paper_scale and pre.original_n_values is None:
            raise click.UsageError(f"preset {preset!r} has no original-scale schedule")
        schedule = pre.original_n_values if paper_scale else pre.n_values
        if n_max is not None and not any(x <= n_max for x in schedule):
            raise click.UsageError(f"--n-max {n_max} leaves an empty schedule")
    try:
        if preset is not None:
            result = harness.run_preset(
                preset, k=k, n_max=n_max, runs=runs, master_seed=seed or 0, paper_scale=paper_scale, workers=workers,
            )
        else:
            if paper_scale:
                raise click.UsageError("--paper-scale applies to presets only")
            try:
                sf = harness.parse_sweep_file(json.loads(Path(spec_file).read_text(encoding="utf-8")))
                spec = sf.spec
                if n_max is not None:
                    spec = spec.truncated(n_max)
                if runs is not None or seed is not None:
                    spec = dataclasses.replace(
                        spec, runs_per_n=runs or spec.runs_per_n, master_seed=spec.master_seed if seed is None else seed
                    )
                options = dict(sf.options)
                if k is not None:
                    options["k"] = k
                resolve_protocol(spec.protocol)
            except (ValueError, FileNotFoundError, KeyError) as err:
                raise click.UsageError(f"--spec: {err}") from None
            out = spec.output or out
            result = harness.run_experiment(sf.kind, spec, workers=workers, **options)
    except click.UsageError:
        raise
    except ValueError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)
    try:
        paths = harness.write_outputs(result, out, chart=chart)
    except ImportError:
        click.echo("error: --chart needs matplotlib (pip install 'artifact[plot]')", err=True)
        sys.exit(1)
    for f in result.fits:
        click.echo(f"fit {f.metric}: slope={f.slope:.4f} intercept={f.intercept:.4f} r2={f.r2:.4f} n=[{f.n_min}, {f.n_max}]")
    for metric, rows in result.per_n.items():
        for n, mean, std, count in rows:
            click.echo(f"{metric} n={n}: mean={mean:.6g} sd={std:.4g} runs={count}")
    click.echo(f"flagged rows: {len(result.flagged)} ({result.flagged_rate:.1%})")
    for p in paths:
        click.echo(f"wrote {p}")
    if strict and result.flagged_rate > max_flagged_rate:
        click.echo(f"error: flagged-row rate {result.flagged_rate:.1%} exceeds {max_flagged_rate:.1%}", err=True)
        sys.exit(1)


@main.command(context_settings=CONTEXT)
@protocol_option
@click.option("--start", default=None, help="Start state s_0 (default: the protocol's input state).")
def layers(protocol, start):
    """Print the layers F_0 ⊆ F_1 ⊆ … with their witnesses."""
    s0 = _state(protocol, start)
    click.echo(compute_layers(protocol, s0).render(protocol))


@main.command(context_settings=CONTEXT)
@protocol_option
@click.option("--start", default=None, help="Start state s_0 (default: the protocol's input state).")
@click.option(
    "--fraction", "fractions", multiple=True, default=(),
    help="Initial fraction STATE=F on the start layer (default: 1 on the start state).",
)
@click.option("--n", type=click.IntRange(min=1), default=None, help="Also print concrete agent counts at this n.")
def bounds(protocol, start, fractions, n):
    """Print the occupancy bound report."""
    s0 = _state(protocol, start)
    initial = None
    if fractions:
        initial = {}
        for item in fractions:
            name, sep, value = item.partition("=")
            if not sep:
                raise click.BadParameter(f"expected STATE=F, got {item!r}", param_hint="--fraction")
            try:
                initial[_state(protocol, name, "--fraction")] = Fraction(value)
            except (ValueError, ZeroDivisionError):
                raise click.BadParameter(f"bad fraction {value!r}", param_hint="--fraction") from None
    try:
        report = propagate_bounds(compute_layers(protocol, s0), initial)
    except VacuousBoundError as err:
        click.echo(f"error: vacuous bound in window {err.window}: {err}", err=True)
        sys.exit(1)
    except ValueError as err:
        raise click.BadParameter(str(err), param_hint="--fraction") from None
    click.echo(report.render(protocol, n), nl=False)


@main.command(context_settings=CONTEXT)
@protocol_option
@click.option("--n", type=click.IntRange(min=1), default=None, help="Population size (all agents in the start state).")
@click.option("--init", default=None, help="Initial counts as STATE=COUNT,...")
@click.option("--start", default=None, help="Start state for --n.")
@click.option("--max-configs", type=click.IntRange(min=1), default=100_000, help="Explicit-state exploration limit.")
@click.option("--strict", is_flag=True, help="Exit 1 unless the verdict is stable.")
def check(protocol, n, init, start, max_configs, strict):
    """Decide whether a configuration is a stable consensus."""
    config = _initial(protocol, n, init, start)
    verdict = is_stable_consensus(protocol, config, max_configs)
    click.echo(verdict.render(protocol))
    if verdict.status == LIMIT_EXCEEDED:
        click.echo("note: raise --max-configs or shrink n for a definite answer", err=True)
    if strict and verdict.status != STABLE:
        sys.exit(1)


@main.group(context_settings=CONTEXT)
def protocols():
    """List or print built-in protocols."""


@protocols.command("list", context_settings=CONTEXT)
def protocols_list():
    """Show the built-in protocols with their default parameters."""
    for address, p in iter_builtins():
        click.echo(f"{address}\t{p.size} states, {len(p.rules)} rules")


@protocols.command("emit", context_settings=CONTEXT)
@click.argument("address")
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None, help="Write to a file instead of stdout.")
def protocols_emit(address, out):
    """Print a protocol in the text format (ADDRESS: builtin name or address)."""
    if address in BUILTINS:
        address = builtin_address(address)
    try:
        p = resolve_protocol(address)
    except (FileNotFoundError, ValueError) as err:
        raise click.BadParameter(str(err), param_hint="ADDRESS") from None
    text = serialize_protocol(p)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
