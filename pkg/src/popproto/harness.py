"""Seeded parameter sweeps, log-log fits and CSV output.

Each sweep is a grid of independent rows (one per ``n`` and run). Row ``i``
gets seed ``derive_seed(master_seed, i)``, rows may run on any number of
worker threads, and results are merged by row index, so a spec determines
every output byte regardless of the worker count.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .engine import (
    AGENTS, COUNTS, AnyOf, FixedCalls, FixedInteractions, LeaderCount, ProbeSpec, RunConfig, StateEntered, run,
)
from .library import computing_states, resolve_protocol, state_values
from .protocol import Configuration, ProtocolSpec, reachable_states
from .rng import derive_seed

FINAL_LEADERS_COLUMNS = ("protocol", "variant", "k", "n", "run", "seed", "calls", "interactions", "final_leaders", "stop_reason")
MAX_COUNTER_COLUMNS = ("protocol", "cap", "n", "run", "seed", "calls", "interactions", "max_counter", "saturated")
OCCUPANCY_COLUMNS = ("protocol", "n", "run", "seed", "C", "state", "fraction_at_stop", "first_full_coverage_call")
STABILIZATION_COLUMNS = ("protocol", "n", "run", "seed", "interactions", "stop_reason")
AUDIT_COLUMNS = ("protocol", "state", "n", "run", "seed", "distinct_visitors")
FITS_COLUMNS = ("metric", "slope", "intercept", "r2", "n_min", "n_max")

WORKERS_ENV = "POPPROTO_WORKERS"


class InsufficientDataError(ValueError):
    pass


# -- schedules and specs ------------------------------------------------------


def arithmetic_schedule(start: int, step: int, stop: int) -> tuple[int, ...]:
    """``start, start+step, ...`` up to and including ``stop``."""
    if step <= 0:
        raise ValueError("step must be positive")
    return tuple(range(start, stop + 1, step))


def geometric_schedule(start: int, ratio: float, stop: int) -> tuple[int, ...]:
    if ratio <= 1 or start < 1:
        raise ValueError("geometric schedules need start >= 1 and ratio > 1")
    out = []
    x = Fraction(start)
    r = Fraction(repr(ratio)) if isinstance(ratio, float) else Fraction(ratio)
    while x <= stop:
        out.append(int(x))
        x *= r
    return tuple(dict.fromkeys(out))


@dataclass(frozen=True)
class SweepSpec:
    protocol: str
    n_values: tuple[int, ...]
    runs_per_n: int = 20
    mode: str = COUNTS
    stop: str | None = None
    probes: ProbeSpec | None = None
    master_seed: int = 0
    output: str | None = None

    def __post_init__(self):
        ns = tuple(int(n) for n in self.n_values)
        object.__setattr__(self, "n_values", ns)
        if not ns:
            raise ValueError("n schedule is empty")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("n schedule must be strictly increasing")
        if ns[0] < 1:
            raise ValueError("population sizes must be at least 1")
        if self.runs_per_n < 1:
            raise ValueError("runs_per_n must be at least 1")
        if self.mode not in (COUNTS, AGENTS):
            raise ValueError(f"mode must be {COUNTS!r} or {AGENTS!r}")

    def grid(self) -> list[tuple[int, int, int, int]]:
        """``(row, n, run, seed)`` for every cell, in row order."""
        out = []
        for i, n in enumerate(self.n_values):
            for r in range(self.runs_per_n):
                row = i * self.runs_per_n + r
                out.append((row, n, r, derive_seed(self.master_seed, row)))
        return out

    def truncated(self, n_max: int) -> "SweepSpec":
        return replace(self, n_values=tuple(n for n in self.n_values if n <= n_max))


def parse_stop(text: str, protocol: ProtocolSpec, n: int | None = None):
    """Parse ``single-leader``, ``calls:N``, ``interactions:N``, ``entered:S``
    or ``computation``; ``|`` separates alternatives.

    A count may carry an ``n`` suffix (``calls:10n``) meaning a multiple of
    the population size.
    """
    parts = [p.strip() for p in text.split("|") if p.strip()]
    if not parts:
        raise ValueError("empty stop condition")
    conds = []
    for part in parts:
        kind, _, arg = part.partition(":")
        if kind == "single-leader" and not arg:
            conds.append(LeaderCount(1))
        elif kind == "computation" and not arg:
            states = computing_states(protocol)
            if not states:
                raise ValueError(f"protocol {protocol.name or '?'} has no computation-phase states")
            conds.append(StateEntered(states, reason="computation"))
        elif kind in ("calls", "interactions") and arg:
            count = _count(arg, n)
            conds.append(FixedCalls(count) if kind == "calls" else FixedInteractions(count))
        elif kind == "entered" and arg:
            names = [s for s in arg.split(",") if s]
            conds.append(StateEntered(frozenset(protocol.index(s) for s in names), reason="entered"))
        else:
            raise ValueError(f"bad stop condition {part!r}")
    return conds[0] if len(conds) == 1 else AnyOf(tuple(conds))


def _count(arg: str, n: int | None) -> int:
    if arg.endswith("n"):
        if n is None:
            raise ValueError(f"{arg!r} needs a population size")
        value = math.floor(Fraction(arg[:-1] or "1") * n)
    else:
        value = int(arg)
    if value < 0:
        raise ValueError("counts must be non-negative")
    return value


def protocol_label(protocol: ProtocolSpec) -> str:
    params = "&".join(f"{k}={v}" for k, v in protocol.params)
    return (protocol.name or "protocol") + (f"?{params}" if params else "")


# -- fits ---------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    metric: str
    slope: float
    intercept: float
    r2: float
    n_values: tuple[int, ...]
    means: tuple[float, ...]
    stds: tuple[float, ...]

    @property
    def n_min(self) -> int:
        return self.n_values[0]

    @property
    def n_max(self) -> int:
        return self.n_values[-1]

    def row(self) -> dict:
        return {
            "metric": self.metric, "slope": _num(self.slope), "intercept": _num(self.intercept),
            "r2": _num(self.r2), "n_min": self.n_min, "n_max": self.n_max,
        }


def fit_loglog(n_values: Sequence[int], means: Sequence[float], stds: Sequence[float] | None = None, metric: str = "") -> FitResult:
    """OLS on ``(ln n, ln mean)`` over points with a positive mean."""
    stds = list(stds) if stds is not None else [0.0] * len(means)
    keep = [(int(n), float(m), float(s)) for n, m, s in zip(n_values, means, stds) if m > 0]
    if len({n for n, _, _ in keep}) < 3:
        raise InsufficientDataError(f"need at least 3 distinct n with positive mean, got {len(keep)}")
    keep.sort()
    x = np.log([n for n, _, _ in keep])
    y = np.log([m for _, m, _ in keep])
    fit = stats.linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0:
        r2 = 1.0 if ss_res < 1e-24 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return FitResult(
        metric, float(fit.slope), float(fit.intercept), r2,
        tuple(n for n, _, _ in keep), tuple(m for _, m, _ in keep), tuple(s for _, _, s in keep),
    )


# -- results ------------------------------------------------------------------


@dataclass
class SweepResult:
    kind: str
    columns: tuple[str, ...]
    rows: list[dict]
    flagged: list[dict] = field(default_factory=list)
    fits: list[FitResult] = field(default_factory=list)
    per_n: dict = field(default_factory=dict)  # metric -> [(n, mean, std, count)]

    @property
    def flagged_rate(self) -> float:
        runs = {(r["n"], r["run"], r.get("variant"), r["protocol"]) for r in self.rows}
        return len(self.flagged) / len(runs) if runs else 0.0

    def csv_text(self) -> str:
        return _csv(self.columns, self.rows)

    def write_csv(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.csv_text(), encoding="utf-8")

    def fit(self, metric: str) -> FitResult:
        for f in self.fits:
            if f.metric == metric:
                return f
        raise KeyError(metric)

    def merge(self, other: "SweepResult") -> "SweepResult":
        if other.kind != self.kind:
            raise ValueError("can only merge sweeps of the same kind")
        return SweepResult(
            self.kind, self.columns, self.rows + other.rows, self.flagged + other.flagged,
            self.fits + other.fits, {**self.per_n, **other.per_n},
        )


def fits_csv(fits: Iterable[FitResult]) -> str:
    return _csv(FITS_COLUMNS, [f.row() for f in fits])


def _csv(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _num(x: float) -> str:
    return repr(float(x))


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        value = int(env)
        if value < 1:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer")
        return value
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _execute(spec: SweepSpec, work: Callable[[int, int, int], object], workers: int | None) -> list:
    """Run ``work(n, run, seed)`` over the grid; results come back in row order."""
    cells = spec.grid()
    workers = workers or default_workers()
    if workers == 1:
        return [work(n, r, seed) for _, n, r, seed in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda cell: work(cell[1], cell[2], cell[3]), cells))


def _summarize(rows: Sequence[dict], key: str, flagged_ids: set, group=None) -> list[tuple[int, float, float, int]]:
    by_n: dict[int, list[float]] = {}
    for r in rows:
        if id(r) in flagged_ids or (group is not None and not group(r)):
            continue
        by_n.setdefault(r["n"], []).append(float(r[key]))
    out = []
    for n in sorted(by_n):
        v = np.asarray(by_n[n])
        out.append((n, float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0, int(v.size)))
    return out


def _try_fit(metric: str, summary) -> list[FitResult]:
    try:
        return [fit_loglog([s[0] for s in summary], [s[1] for s in summary], [s[2] for s in summary], metric)]
    except InsufficientDataError:
        return []


# -- experiments --------------------------------------------------------------


def _protocol(spec: SweepSpec, protocol: ProtocolSpec | None) -> ProtocolSpec:
    return protocol if protocol is not None else resolve_protocol(spec.protocol)


def _initial(protocol: ProtocolSpec, n: int) -> Configuration:
    return Configuration.uniform(protocol, n)


def sweep_final_leaders(k: int, spec: SweepSpec, variant: str = "base", workers: int | None = None) -> SweepResult:
    """Leaders left when the first leader enters the computation phase (or one remains)."""
    from .library import improved_protocol_1, protocol_1

    if k < 1:
        raise ValueError("k must be at least 1")
    if variant not in ("base", "improved"):
        raise ValueError("variant must be 'base' or 'improved'")
    p = protocol_1(k) if variant == "base" else improved_protocol_1(k)
    stop = AnyOf((StateEntered(computing_states(p), reason="computation"), LeaderCount(1)))
    label = protocol_label(p)

    def work(n, r, seed):
        res = run(RunConfig(p, _initial(p, n), seed, spec.mode, stop, spec.probes))
        return {
            "protocol": label, "variant": variant, "k": k, "n": n, "run": r, "seed": seed,
            "calls": res.calls_made, "interactions": res.interactions_made,
            "final_leaders": res.leaders(p), "stop_reason": res.stop_reason,
        }

    rows = _execute(spec, work, workers)
    flagged = [r for r in rows if r["stop_reason"] == "cap"]
    summary = _summarize(rows, "final_leaders", {id(r) for r in flagged})
    metric = f"final_leaders_{variant}"
    return SweepResult("final_leaders", FINAL_LEADERS_COLUMNS, rows, flagged, _try_fit(metric, summary), {metric: summary})


def sweep_max_counter(cap: int, spec: SweepSpec, workers: int | None = None) -> SweepResult:
    """Highest timer_count seen in the phase-free variant until one leader remains."""
    from .library import unbounded_counter_variant

    p = unbounded_counter_variant(cap)
    values = state_values(p, "timer_count")
    label = protocol_label(p)

    def work(n, r, seed):
        res = run(RunConfig(p, _initial(p, n), seed, spec.mode, LeaderCount(1), spec.probes, track_value=values))
        return {
            "protocol": label, "cap": cap, "n": n, "run": r, "seed": seed,
            "calls": res.calls_made, "interactions": res.interactions_made,
            "max_counter": res.max_value, "saturated": int(res.max_value >= cap),
            "_stop": res.stop_reason,
        }

    rows = _execute(spec, work, workers)
    flagged = [r for r in rows if r["saturated"] or r["_stop"] == "cap"]
    summary = _summarize(rows, "max_counter", {id(r) for r in flagged})
    return SweepResult("max_counter", MAX_COUNTER_COLUMNS, rows, flagged, _try_fit("max_counter", summary), {"max_counter": summary})


def sweep_occupancy(
    spec: SweepSpec, call_coefficient: float | Fraction = 10, protocol: ProtocolSpec | None = None, workers: int | None = None
) -> SweepResult:
    """Per-state occupancy after ``C·n`` scheduler calls from the all-start configuration."""
    p = _protocol(spec, protocol)
    C = Fraction(repr(call_coefficient)) if isinstance(call_coefficient, float) else Fraction(call_coefficient)
    if C < 0:
        raise ValueError("call coefficient must be non-negative")
    reach = sorted(reachable_states(p, p.start_state))
    label = protocol_label(p)
    c_text = str(call_coefficient)

    def work(n, r, seed):
        calls = math.floor(C * n)
        res = run(RunConfig(p, _initial(p, n), seed, spec.mode, FixedCalls(calls), spec.probes, max_calls=max(calls, 1), cover=tuple(reach)))
        cover = res.first_full_coverage_call
        fracs = [res.final.counts[s] / n for s in reach]
        return [
            {
                "protocol": label, "n": n, "run": r, "seed": seed, "C": c_text, "state": p.states[s],
                "fraction_at_stop": _num(f), "first_full_coverage_call": -1 if cover is None else cover,
                "_fraction": f, "_min": min(fracs),
            }
            for s, f in zip(reach, fracs)
        ]

    per_run = _execute(spec, work, workers)
    rows = [row for group in per_run for row in group]
    mins = [{"n": g[0]["n"], "min_fraction": g[0]["_min"], "covered": int(g[0]["_min"] > 0)} for g in per_run]
    summary = _summarize(mins, "min_fraction", set())
    covered = _summarize(mins, "covered", set())
    return SweepResult(
        "occupancy", OCCUPANCY_COLUMNS, rows, [], _try_fit("min_fraction", summary),
        {"min_fraction": summary, "covered": covered},
    )


def sweep_stabilization(spec: SweepSpec, protocol: ProtocolSpec | None = None, workers: int | None = None) -> SweepResult:
    """Interactions until a single output-1 agent remains."""
    p = _protocol(spec, protocol)
    if not any(p.output):
        raise ValueError("protocol has no leader-flagged (output 1) states")
    label = protocol_label(p)

    def work(n, r, seed):
        res = run(RunConfig(p, _initial(p, n), seed, spec.mode, LeaderCount(1), spec.probes))
        return {"protocol": label, "n": n, "run": r, "seed": seed, "interactions": res.interactions_made, "stop_reason": res.stop_reason}

    rows = _execute(spec, work, workers)
    flagged = [r for r in rows if r["stop_reason"] != "single-leader"]
    summary = _summarize(rows, "interactions", {id(r) for r in flagged})
    metric = f"interactions_{p.name or 'protocol'}"
    return SweepResult("stabilization", STABILIZATION_COLUMNS, rows, flagged, _try_fit(metric, summary), {metric: summary})


def audit_confident_state(
    spec: SweepSpec, state: str, call_coefficient: float | Fraction = 10, protocol: ProtocolSpec | None = None,
    workers: int | None = None,
) -> SweepResult:
    """Distinct agents that ever held ``state``; stop is ``spec.stop`` or ``C·n`` calls."""
    p = _protocol(spec, protocol)
    if spec.mode != AGENTS:
        raise ValueError("the distinct-visitor audit needs agents mode")
    s = p.index(state)
    if s not in reachable_states(p, p.start_state):
        raise ValueError(f"state {state!r} is not reachable from {p.states[p.start_state]!r}")
    label = protocol_label(p)
    C = Fraction(repr(call_coefficient)) if isinstance(call_coefficient, float) else Fraction(call_coefficient)

    def work(n, r, seed):
        stop = parse_stop(spec.stop, p, n) if spec.stop else FixedCalls(math.floor(C * n))
        res = run(RunConfig(p, _initial(p, n), seed, AGENTS, stop, spec.probes, audit=(s,)))
        return {"protocol": label, "state": p.states[s], "n": n, "run": r, "seed": seed, "distinct_visitors": res.visitors[s]}

    rows = _execute(spec, work, workers)
    multi = [{"n": r["n"], "multi": int(r["distinct_visitors"] >= 2)} for r in rows]
    return SweepResult(
        "audit", AUDIT_COLUMNS, rows, [], [],
        {"distinct_visitors": _summarize(rows, "distinct_visitors", set()), "multi_visitor_rate": _summarize(multi, "multi", set())},
    )


def improved_not_worse(base: SweepResult, improved: SweepResult) -> float:
    """Share of ``n`` values where the improved variant's mean final leaders ≤ the base variant's."""
    b = {n: m for n, m, _, _ in base.per_n["final_leaders_base"]}
    i = {n: m for n, m, _, _ in improved.per_n["final_leaders_improved"]}
    common = sorted(set(b) & set(i))
    if not common:
        raise InsufficientDataError("no common n values")
    return sum(i[n] <= b[n] for n in common) / len(common)


# -- presets ------------------------------------------------------------------


@dataclass(frozen=True)
class Preset:
    name: str
    kind: str
    protocols: tuple[str, ...]
    n_values: tuple[int, ...]
    runs_per_n: int
    original_n_values: tuple[int, ...] | None = None
    mode: str = COUNTS
    k: int | None = None
    cap: int | None = None
    C: float | None = None
    state: str | None = None


PRESETS: dict[str, Preset] = {
    "fig3.1": Preset(
        "fig3.1", "final_leaders", ("builtin:protocol1", "builtin:improved1"),
        geometric_schedule(100, 2, 12800), 20, arithmetic_schedule(100, 50, 300000), k=4,
    ),
    "fig5.1": Preset(
        "fig5.1", "max_counter", ("builtin:unbounded",), (16, 64, 256, 1024, 4096), 20,
        arithmetic_schedule(10, 50, 50000), cap=64,
    ),
    "occupancy": Preset("occupancy", "occupancy", ("builtin:ladder?m=4",), (1000, 10000, 100000), 20, C=10),
    "stabilization": Preset(
        "stabilization", "stabilization", ("builtin:elim", "builtin:protocol1"), geometric_schedule(64, 2, 1024), 20, k=4,
    ),
    "audit": Preset("audit", "audit", ("builtin:ladder?m=3",), (100, 1000, 10000), 50, mode=AGENTS, C=10, state="s2"),
}

OUTPUT_FILES = {
    "final_leaders": "final_leaders.csv",
    "max_counter": "max_counter.csv",
    "occupancy": "occupancy.csv",
    "stabilization": "stabilization.csv",
    "audit": "audit.csv",
}


def run_experiment(
    kind: str,
    spec: SweepSpec,
    *,
    k: int | None = None,
    cap: int | None = None,
    C: float | None = None,
    state: str | None = None,
    variants: Sequence[str] = ("base", "improved"),
    workers: int | None = None,
) -> SweepResult:
    """Dispatch one experiment kind over ``spec``."""
    if kind == "final_leaders":
        results = [sweep_final_leaders(k or 4, spec, v, workers) for v in variants]
        out = results[0]
        for r in results[1:]:
            out = out.merge(r)
        return out
    if kind == "max_counter":
        return sweep_max_counter(cap or 64, spec, workers)
    if kind == "occupancy":
        return sweep_occupancy(spec, 10 if C is None else C, workers=workers)
    if kind == "stabilization":
        return sweep_stabilization(spec, workers=workers)
    if kind == "audit":
        if state is None:
            raise ValueError("the audit needs a state")
        return audit_confident_state(spec, state, 10 if C is None else C, workers=workers)
    raise ValueError(f"unknown experiment kind {kind!r}")


def run_preset(
    name: str,
    *,
    k: int | None = None,
    n_max: int | None = None,
    runs: int | None = None,
    master_seed: int = 0,
    paper_scale: bool = False,
    workers: int | None = None,
) -> SweepResult:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    pre = PRESETS[name]
    n_values = pre.n_values
    runs_per_n = pre.runs_per_n
    if paper_scale:
        if pre.original_n_values is None:
            raise ValueError(f"preset {name!r} has no original-scale schedule")
        n_values, runs_per_n = pre.original_n_values, 1
    if n_max is not None:
        n_values = tuple(n for n in n_values if n <= n_max)
    if runs is not None:
        runs_per_n = runs
    k = k if k is not None else pre.k
    if pre.kind == "final_leaders":
        spec = SweepSpec(f"builtin:protocol1?k={k}", n_values, runs_per_n, pre.mode, master_seed=master_seed)
        return run_experiment("final_leaders", spec, k=k, workers=workers)
    out = None
    for address in pre.protocols:
        if address == "builtin:protocol1" and k is not None:
            address = f"builtin:protocol1?k={k}"
        spec = SweepSpec(address, n_values, runs_per_n, pre.mode, master_seed=master_seed)
        res = run_experiment(pre.kind, spec, cap=pre.cap, C=pre.C, state=pre.state, workers=workers)
        out = res if out is None else out.merge(res)
    return out


def write_outputs(result: SweepResult, out_dir: str | os.PathLike, chart: bool = False) -> list[Path]:
    """Write the experiment CSV and ``fits.csv`` (plus an SVG chart on request)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / OUTPUT_FILES[result.kind], out / "fits.csv"]
    result.write_csv(paths[0])
    paths[1].write_text(fits_csv(result.fits), encoding="utf-8")
    if chart:
        paths.append(write_chart(result, out / f"{result.kind}.svg"))
    return paths


def write_chart(result: SweepResult, path: str | os.PathLike) -> Path:
    """Per-n means with deviation bars on log axes, as a standalone SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "popproto"
    fig, ax = plt.subplots(figsize=(6, 4))
    for metric, summary in result.per_n.items():
        pts = [s for s in summary if s[1] > 0]
        if not pts:
            continue
        ax.errorbar([s[0] for s in pts], [s[1] for s in pts], yerr=[s[2] for s in pts], marker="o", capsize=3, label=metric)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.legend()
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


# -- spec files ---------------------------------------------------------------

_SPEC_KEYS = {
    "experiment", "protocol", "n", "runs_per_n", "mode", "stop", "master_seed", "output",
    "k", "cap", "C", "state", "variants",
}


@dataclass(frozen=True)
class SweepFile:
    kind: str
    spec: SweepSpec
    options: dict


def _schedule(value) -> tuple[int, ...]:
    if isinstance(value, list):
        return tuple(int(v) for v in value)
    if isinstance(value, dict):
        keys = set(value)
        if keys == {"start", "step", "stop"}:
            return arithmetic_schedule(int(value["start"]), int(value["step"]), int(value["stop"]))
        if keys == {"start", "ratio", "stop"}:
            return geometric_schedule(int(value["start"]), value["ratio"], int(value["stop"]))
    raise ValueError("'n' must be a list, {start, step, stop} or {start, ratio, stop}")


def parse_sweep_file(data: dict) -> SweepFile:
    """Validate a decoded JSON sweep description (schema in the README)."""
    if not isinstance(data, dict):
        raise ValueError("sweep file must hold a JSON object")
    unknown = set(data) - _SPEC_KEYS
    if unknown:
        raise ValueError(f"unknown keys in sweep file: {', '.join(sorted(unknown))}")
    kind = data.get("experiment")
    if kind not in OUTPUT_FILES:
        raise ValueError(f"'experiment' must be one of {', '.join(OUTPUT_FILES)}")
    if "n" not in data:
        raise ValueError("sweep file needs an 'n' schedule")
    protocol = data.get("protocol", "")
    if kind == "final_leaders":
        protocol = protocol or f"builtin:protocol1?k={data.get('k', 4)}"
    elif kind == "max_counter":
        protocol = protocol or f"builtin:unbounded?cap={data.get('cap', 64)}"
    elif not protocol:
        raise ValueError(f"experiment {kind!r} needs a 'protocol'")
    spec = SweepSpec(
        protocol, _schedule(data["n"]), int(data.get("runs_per_n", 20)),
        data.get("mode", AGENTS if kind == "audit" else COUNTS), data.get("stop"),
        master_seed=int(data.get("master_seed", 0)), output=data.get("output"),
    )
    options = {key: data[key] for key in ("k", "cap", "C", "state") if key in data}
    if "variants" in data:
        options["variants"] = tuple(data["variants"])
    return SweepFile(kind, spec, options)
