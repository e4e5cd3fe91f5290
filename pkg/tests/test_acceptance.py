"""Acceptance criteria, one test per criterion.

Every test records a single PASS/FAIL line with the measured value and the
pinned tolerance; ``conftest.py`` prints them after the run. Run this file
directly (``python tests/test_acceptance.py``) to get just the lines.
"""

from __future__ import annotations

import functools
import itertools
import sys
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from oracles import all_configurations, bfs_states, brute_stable
from popproto.bounds import (
    EXACT, FractionPair, compound_layer_fraction, lemma17_fraction, min_population_threshold, propagate_bounds,
)
from popproto.engine import sample_pairs
from popproto.harness import fits_csv, improved_not_worse, run_preset
from popproto.library import ladder_protocol, pairwise_elimination
from popproto.protocol import (
    STABLE, AgentPopulation, Configuration, ProtocolSpec, compute_layers, is_stable_consensus, reachable_states,
)
from popproto.rng import Rng, derive_seed

pytestmark = pytest.mark.slow

ALPHA = 1e-3
DRAWS = 10**6
MASTER_SEED = 0

RESULTS: dict[int, str] = {}


def record(number: int, ok: bool, text: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} [{number:>2}] {text}"
    RESULTS[number] = line
    print(line)
    return ok


@functools.lru_cache(maxsize=None)
def preset(name: str, workers: int = 1):
    return run_preset(name, master_seed=MASTER_SEED, workers=workers)


def criterion_1() -> bool:
    n = 5
    first, second = sample_pairs(Rng(derive_seed(MASTER_SEED, 1)), AgentPopulation((0,) * n), DRAWS)
    noop = first < 0
    pairs = first[~noop] * n + second[~noop]
    observed = np.bincount(pairs, minlength=n * n)
    ordered = [a * n + b for a, b in itertools.permutations(range(n), 2)]
    assert observed.sum() == observed[ordered].sum()
    p_value = stats.chisquare(observed[ordered]).pvalue
    rate, expected = noop.mean(), 1 / n
    sigma = np.sqrt(expected * (1 - expected) / DRAWS)
    z = abs(rate - expected) / sigma
    ok = p_value > ALPHA and z <= 3
    return record(1, ok, f"scheduler uniformity: chi-square p={p_value:.4g} (> {ALPHA:g}); "
                         f"no-op rate={rate:.5f} vs 1/n={expected:.5f}, |z|={z:.2f} (<= 3)")


def criterion_2() -> bool:
    counts = (3, 2, 1)
    q = len(counts)
    config = Configuration(counts)
    agents = AgentPopulation.from_configuration(config)
    table = []
    for pop, salt in ((config, 2), (agents, 3)):
        first, second = sample_pairs(Rng(derive_seed(MASTER_SEED, salt)), pop, DRAWS)
        keep = first >= 0
        a, b = first[keep], second[keep]
        if pop is agents:
            states = np.asarray(agents.agent_states)
            a, b = states[a], states[b]
        table.append(np.bincount(a * q + b, minlength=q * q))
    table = np.asarray(table)
    table = table[:, table.sum(axis=0) > 0]
    p_value = stats.chi2_contingency(table).pvalue
    return record(2, p_value > ALPHA, f"mode equivalence: contingency chi-square p={p_value:.4g} (> {ALPHA:g}), "
                                      f"n=6, {q} states, {DRAWS} draws per mode")


def criterion_3() -> bool:
    res = preset("fig3.1")
    base = res.fit("final_leaders_base")
    improved = res.fit("final_leaders_improved")
    # the merged result carries both variants' per-n means
    share = improved_not_worse(res, res)
    runs = min(c for _, _, _, c in res.per_n["final_leaders_base"])
    ok = 0.8 <= base.slope <= 1.2 and base.r2 >= 0.95 and share >= 0.7
    return record(3, ok, f"fig3.1 trend: base slope={base.slope:.3f} (in [0.8, 1.2]), r2={base.r2:.4f} (>= 0.95); "
                         f"improved <= base at {share:.0%} of n (>= 70%); improved slope={improved.slope:.3f}; "
                         f"n={base.n_min}..{base.n_max}, {runs} runs/n")


def criterion_4() -> bool:
    res = preset("fig5.1")
    fit = res.fit("max_counter")
    ok = fit.slope <= 0.5
    return record(4, ok, f"fig5.1 trend: max-counter slope={fit.slope:.3f} (<= 0.5); "
                         f"flagged rows={res.flagged_rate:.1%}; n={fit.n_min}..{fit.n_max}")


def criterion_5() -> bool:
    res = preset("stabilization")
    elim, p1 = res.fit("interactions_elim"), res.fit("interactions_protocol1")
    ok = all(1.8 <= f.slope <= 2.2 for f in (elim, p1)) and not res.flagged
    return record(5, ok, f"stabilization: elim slope={elim.slope:.3f}, protocol1 slope={p1.slope:.3f} "
                         f"(both in [1.8, 2.2]); cap-stopped runs={len(res.flagged)}")


def criterion_6() -> bool:
    res = preset("occupancy")
    covered = {n: m for n, m, _, _ in res.per_n["covered"]}
    mins = {n: m for n, m, _, _ in res.per_n["min_fraction"]}
    ratio = mins[10**5] / mins[10**4] if mins[10**4] > 0 else float("inf")
    worst = min(covered.values())
    ok = worst >= 0.95 and 0.5 <= ratio <= 2
    return record(6, ok, f"occupancy: all states nonempty in >= {worst:.0%} of runs at every n (>= 95%); "
                         f"min fraction 1e5/1e4 ratio={ratio:.3f} (in [0.5, 2])")


def criterion_7() -> bool:
    half = lemma17_fraction(FractionPair(Fraction(1, 2), Fraction(1, 2)), EXACT)
    threshold = min_population_threshold(compound_layer_fraction(3))
    p = ladder_protocol(2)
    report = propagate_bounds(compute_layers(p, "s0"))
    ok = (
        half == Fraction(45, 81920)
        and 6.0e9 <= threshold <= 6.1e9
        and report.t_calls == Fraction(1, 8)
        and report.fractions[p.index("s0")] == Fraction(5, 8)
    )
    return record(7, ok, f"bound goldens: lemma17(1/2,1/2)={half} (== 45/81920); compound threshold={threshold} "
                         f"(in [6.0e9, 6.1e9]); ladder m=2 T_calls={report.t_calls} (== 1/8), "
                         f"s0 survivor={report.fractions[0]} (== 5/8)")


def small_fixtures() -> list[tuple[str, ProtocolSpec]]:
    out = [(f"ladder m={m}", ladder_protocol(m)) for m in range(1, 5)]
    out.append(("elim", pairwise_elimination()))
    return [(name, p) for name, p in out if p.size <= 4]


def criterion_8() -> bool:
    problems = []
    checked = 0
    for name, p in small_fixtures():
        for s0 in range(p.size):
            union = set()
            for n in range(2, 7):
                union |= bfs_states(p, s0, n)
            if union | {s0} != set(reachable_states(p, s0)):
                problems.append(f"{name} from {p.states[s0]}: reachable set differs")
        for n in range(2, 7):
            for counts in all_configurations(p.size, n):
                checked += 1
                if (is_stable_consensus(p, Configuration(counts)).status == STABLE) != brute_stable(p, counts):
                    problems.append(f"{name} {counts}: stability differs")
    ok = not problems
    detail = "; ".join(problems[:3]) if problems else f"{len(small_fixtures())} fixtures, {checked} configurations"
    return record(8, ok, f"small-n oracle: reachable_states == union of BFS over n <= 6 and stability == enumeration ({detail})")


def criterion_9() -> bool:
    res = preset("audit")
    rates = [(n, m) for n, m, _, _ in res.per_n["multi_visitor_rate"]]
    nondecreasing = all(b[1] >= a[1] for a, b in zip(rates, rates[1:]))
    last = dict(rates)[10**4]
    ok = nondecreasing and last >= 0.95
    shown = ", ".join(f"n={n}: {m:.2f}" for n, m in rates)
    return record(9, ok, f"distinct-visitor audit: P(visitors >= 2) {shown}; nondecreasing={nondecreasing}; "
                         f"at 1e4 {last:.2f} (>= 0.95)")


def criterion_10() -> bool:
    mismatched = []
    for name in ("fig3.1", "fig5.1", "stabilization", "occupancy", "audit"):
        a, b = preset(name, 1), preset(name, 3)
        if a.csv_text() != b.csv_text() or fits_csv(a.fits) != fits_csv(b.fits):
            mismatched.append(name)
    ok = not mismatched
    return record(10, ok, "determinism: CSVs byte-identical for workers=1 vs workers=3 across all five sweeps"
                          + (f" (mismatch: {', '.join(mismatched)})" if mismatched else ""))


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("check", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 11)])
def test_criterion(check):
    assert check(), RESULTS.get(CRITERIA.index(check) + 1)


if __name__ == "__main__":
    sys.exit(0 if all([check() for check in CRITERIA]) else 1)
