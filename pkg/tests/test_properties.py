"""Property tests over small random protocols."""

from hypothesis import given, settings, strategies as st

from oracles import bfs_states, brute_stable, reference_run
from popproto.dsl import parse_protocol, serialize_protocol
from popproto.engine import AGENTS, COUNTS, FixedCalls, RunConfig, run
from popproto.protocol import Configuration, ProtocolSpec, compute_layers, is_stable_consensus, STABLE


@st.composite
def protocols(draw, max_states=4):
    q = draw(st.integers(1, max_states))
    names = [f"q{i}" for i in range(q)]
    output = {s: draw(st.integers(0, 1)) for s in names}
    pairs = [(a, b) for a in names for b in names]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    rules = {pair: (draw(st.sampled_from(names)), draw(st.sampled_from(names))) for pair in chosen}
    return ProtocolSpec.build(names, output, rules)


@st.composite
def protocol_and_config(draw, max_n=5):
    p = draw(protocols())
    n = draw(st.integers(1, max_n))
    cuts = sorted(draw(st.lists(st.integers(0, n), min_size=p.size - 1, max_size=p.size - 1)))
    counts = [b - a for a, b in zip([0] + cuts, cuts + [n])]
    return p, Configuration(tuple(counts))


def next_layer(p, layer):
    out = set(layer)
    for a in layer:
        for b in layer:
            out.update(p.delta(a, b))
    return frozenset(out)


@given(protocols(), st.data())
def test_layers_match_pairwise_closure(p, data):
    s0 = data.draw(st.integers(0, p.size - 1))
    ls = compute_layers(p, s0)
    assert ls.layers[0] == {s0}
    for prev, cur in zip(ls.layers, ls.layers[1:]):
        assert prev < cur
        assert cur == next_layer(p, prev)
    assert next_layer(p, ls.reachable) == ls.reachable


@given(protocols(), st.data())
def test_witnesses_are_valid(p, data):
    s0 = data.draw(st.integers(0, p.size - 1))
    ls = compute_layers(p, s0)
    for h, new in enumerate(ls.added[1:], start=1):
        for q in new:
            w = ls.witnesses[q]
            assert w.initiator in ls.layers[h - 1] and w.responder in ls.layers[h - 1]
            assert p.delta(w.initiator, w.responder)[w.position] == q
            assert q not in ls.layers[h - 1]


@settings(max_examples=60)
@given(protocols(), st.data(), st.integers(2, 6))
def test_bfs_within_layers(p, data, n):
    s0 = data.draw(st.integers(0, p.size - 1))
    assert bfs_states(p, s0, n) <= compute_layers(p, s0).reachable


@settings(max_examples=80)
@given(protocol_and_config())
def test_stability_matches_enumeration(pc):
    p, c = pc
    if c.n < 2:
        return
    assert (is_stable_consensus(p, c).status == STABLE) == brute_stable(p, c.counts)


@given(protocols())
def test_serialize_round_trip(p):
    assert parse_protocol(serialize_protocol(p)) == p


@settings(max_examples=40)
@given(protocol_and_config(max_n=12), st.integers(0, 2**64 - 1), st.integers(0, 300), st.sampled_from([COUNTS, AGENTS]))
def test_runs_conserve_agents_and_match_reference(pc, seed, calls, mode):
    p, c = pc
    res = run(RunConfig(p, c, seed, mode, FixedCalls(calls), max_calls=max(calls, 1)))
    assert sum(res.final.counts) == c.n
    assert min(res.final.counts) >= 0
    counts, inter, _ = reference_run(p, c.counts, seed, calls, agents_mode=(mode == AGENTS))
    assert res.final.counts == tuple(counts) and res.interactions_made == inter
