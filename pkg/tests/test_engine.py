import io
import json

import pytest
from hypothesis import given, settings, strategies as st

from oracles import reference_run
from popproto.engine import (
    AGENTS, COUNTS, AnyOf, EmptyPopulationError, FixedCalls, FixedInteractions, LeaderCount, MissingAuditError,
    Predicate, ProbeSpec, RunConfig, Simulation, StateEntered, choose_next_pair, distinct_visitors, run, sample_pairs,
    trace_writer,
)
from popproto.library import (
    computing_states, decode_state, ladder_protocol, pairwise_elimination, protocol_1, state_values,
    unbounded_counter_variant,
)
from popproto.protocol import AgentPopulation, Configuration, ProtocolSpec, reachable_states
from popproto.rng import Rng

ELIM = pairwise_elimination()


def uniform(p, n):
    return Configuration.uniform(p, n)


class TestChooseNextPair:
    def test_single_agent_is_always_noop(self):
        rng = Rng(1)
        pop = uniform(ELIM, 1)
        assert all(choose_next_pair(rng, pop) is None for _ in range(50))

    def test_empty_population(self):
        with pytest.raises(EmptyPopulationError):
            choose_next_pair(Rng(1), Configuration((0, 0)))

    def test_agents_mode_returns_distinct_indices(self):
        rng = Rng(5)
        pop = AgentPopulation((0, 0, 1))
        for _ in range(100):
            pair = choose_next_pair(rng, pop)
            if pair is not None:
                a, b = pair
                assert a != b and 0 <= a < 3 and 0 <= b < 3

    def test_two_agents_half_noop(self):
        first, _ = sample_pairs(Rng(9), uniform(ELIM, 2), 200_000)
        rate = (first < 0).mean()
        # four equiprobable index pairs, two of them self-draws
        assert abs(rate - 0.5) < 0.005

    def test_counts_mode_state_pairs(self):
        p = ladder_protocol(2)
        first, second = sample_pairs(Rng(3), Configuration((1, 2)), 100)
        assert set(first[first >= 0]) <= {0, 1}
        # a lone s0 agent can never be drawn against itself
        assert not ((first == 0) & (second == 0)).any()


class TestRun:
    def test_fixed_calls_zero(self):
        res = run(RunConfig(ELIM, uniform(ELIM, 5), stop=FixedCalls(0)))
        assert res.final == uniform(ELIM, 5)
        assert res.calls_made == 0 and res.stop_reason == "calls"

    def test_elim_two_agents(self):
        res = run(RunConfig(ELIM, uniform(ELIM, 2), seed=7, stop=LeaderCount(1)))
        assert res.interactions_made == 1
        assert res.final.as_dict(ELIM) == {"L": 1, "F": 1}
        assert res.stop_reason == "single-leader"

    def test_single_agent_is_already_single_leader(self):
        res = run(RunConfig(ELIM, uniform(ELIM, 1), stop=LeaderCount(1)))
        assert res.calls_made == 0 and res.interactions_made == 0

    def test_protocol1_two_agents(self):
        p = protocol_1(4)
        sim = Simulation(RunConfig(p, uniform(p, 2), seed=3, stop=FixedInteractions(1)))
        res = sim.run()
        assert res.final.as_dict(p) == {"L0_T1_TS0_TR0_C0": 1, "L1_T0_TS1_TR0_C0": 1}

    def test_identity_protocol_never_changes(self):
        p = ladder_protocol(1)
        res = run(RunConfig(p, uniform(p, 10), seed=1, stop=FixedCalls(1000)))
        assert res.final == uniform(p, 10)
        assert res.calls_made == 1000 and res.interactions_made > 0

    def test_cap(self):
        res = run(RunConfig(ELIM, uniform(ELIM, 50), seed=1, stop=LeaderCount(1), max_calls=10))
        assert res.stop_reason == "cap" and res.calls_made == 10

    def test_default_cap(self):
        cfg = RunConfig(ELIM, uniform(ELIM, 7))
        assert cfg.call_cap == 64 * 49

    def test_fixed_interactions(self):
        p = ladder_protocol(1)
        res = run(RunConfig(p, uniform(p, 10), seed=2, stop=FixedInteractions(25)))
        assert res.interactions_made == 25 and res.stop_reason == "interactions"

    def test_state_entered(self):
        p = ladder_protocol(3)
        res = run(RunConfig(p, uniform(p, 20), seed=2, stop=StateEntered(frozenset({2}))))
        assert res.final.counts[2] == 1 and res.stop_reason == "entered"

    def test_any_of_first_wins(self):
        p = ladder_protocol(3)
        res = run(RunConfig(p, uniform(p, 20), seed=2, stop=AnyOf((FixedCalls(1), StateEntered(frozenset({2}))))))
        assert res.calls_made == 1 and res.stop_reason == "calls"
        res = run(RunConfig(p, uniform(p, 20), seed=2, stop=[FixedCalls(10**6), StateEntered(frozenset({2}))]))
        assert res.stop_reason == "entered"

    def test_predicate(self):
        p = ladder_protocol(3)
        stop = Predicate(lambda c: c.counts[1] >= 3, "three-s1")
        res = run(RunConfig(p, uniform(p, 30), seed=4, stop=stop))
        assert res.stop_reason == "three-s1" and res.final.counts[1] >= 3

    def test_predicate_matches_kernel_stop(self):
        p = ladder_protocol(3)
        a = run(RunConfig(p, uniform(p, 30), seed=4, stop=Predicate(lambda c: c.counts[2] > 0)))
        b = run(RunConfig(p, uniform(p, 30), seed=4, stop=StateEntered(frozenset({2}))))
        assert a.calls_made == b.calls_made and a.final == b.final

    def test_determinism(self):
        p = protocol_1(4)
        cfg = RunConfig(p, uniform(p, 200), seed=11, stop=LeaderCount(1), probes=ProbeSpec.linear(1000, 20000))
        assert run(cfg) == run(cfg)

    def test_probes(self):
        p = ladder_protocol(3)
        res = run(RunConfig(p, uniform(p, 100), seed=1, stop=FixedCalls(500), probes=ProbeSpec((0, 100, 250, 1000))))
        assert [pr.calls for pr in res.probes] == [0, 100, 250]
        assert res.probes[0].counts == (100, 0, 0)
        assert all(pr.calls <= res.calls_made for pr in res.probes)
        assert all(sum(pr.counts) == 100 for pr in res.probes)

    def test_geometric_probe_ticks(self):
        assert ProbeSpec.geometric(1, 2, 20).ticks == (1, 2, 4, 8, 16)

    def test_audit_needs_agents_mode(self):
        with pytest.raises(ValueError):
            RunConfig(ELIM, uniform(ELIM, 3), audit=(0,))

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            RunConfig(ELIM, uniform(ELIM, 3), mode="nope")

    def test_leader_count_conflict(self):
        with pytest.raises(ValueError):
            Simulation(RunConfig(ELIM, uniform(ELIM, 3), stop=[LeaderCount(1), LeaderCount(2)]))

    def test_step_after_stop(self):
        sim = Simulation(RunConfig(ELIM, uniform(ELIM, 3), stop=FixedCalls(0)))
        with pytest.raises(RuntimeError):
            sim.step()

    def test_summary(self):
        res = run(RunConfig(ELIM, uniform(ELIM, 2), seed=7, stop=LeaderCount(1)))
        text = res.summary(ELIM)
        assert "interactions: 1" in text and "xoshiro256**" in text


class TestAudit:
    def test_two_agent_ladder(self):
        p = ladder_protocol(2)
        res = run(RunConfig(p, uniform(p, 2), seed=1, mode=AGENTS, stop=StateEntered(frozenset({1})), audit=(1,)))
        assert distinct_visitors(res, 1) == 1

    def test_never_entered(self):
        p = ladder_protocol(3)
        res = run(RunConfig(p, uniform(p, 5), seed=1, mode=AGENTS, stop=FixedCalls(0), audit=(2,)))
        assert distinct_visitors(res, 2) == 0

    def test_missing_audit(self):
        res = run(RunConfig(ELIM, uniform(ELIM, 3), stop=FixedCalls(1)))
        with pytest.raises(MissingAuditError):
            distinct_visitors(res, 0)

    def test_counts_initial_occupants(self):
        p = ladder_protocol(2)
        init = AgentPopulation((0, 1, 1, 0))
        res = run(RunConfig(p, init, seed=1, mode=AGENTS, stop=FixedCalls(0), audit=(1,)))
        assert distinct_visitors(res, 1) == 2

    def test_nondecreasing_within_run(self):
        p = ladder_protocol(3)
        sim = Simulation(RunConfig(p, uniform(p, 40), seed=8, mode=AGENTS, stop=FixedCalls(2000), audit=(1, 2)))
        last = [0, 0]
        while sim.stop_reason is None:
            sim.step()
            now = [int(v) for v in sim.visitors]
            assert now[0] >= last[0] and now[1] >= last[1]
            # a visitor count can never fall below the current occupancy
            assert now[0] >= sim.counts[1] and now[1] >= sim.counts[2]
            last = now

    def test_grows_with_n(self):
        p = ladder_protocol(2)
        res = run(RunConfig(p, uniform(p, 2000), seed=1, mode=AGENTS, stop=FixedCalls(20000), audit=(1,)))
        assert distinct_visitors(res, 1) > 200


class TestTrace:
    def test_events_to_json(self):
        buf = io.StringIO()
        run(RunConfig(ELIM, uniform(ELIM, 2), seed=7, stop=LeaderCount(1)), trace=trace_writer(buf, ELIM))
        lines = [json.loads(x) for x in buf.getvalue().splitlines()]
        assert [x["call"] for x in lines] == list(range(1, len(lines) + 1))
        assert lines[-1] == {"call": len(lines), "noop": False, "initiator": "L", "responder": "L", "result": ["L", "F"]}
        assert all(x["noop"] for x in lines[:-1])


class TestReferenceEquivalence:
    @settings(max_examples=40)
    @given(
        st.integers(0, 2**64 - 1),
        st.sampled_from(["ladder3", "elim", "p1"]),
        st.integers(1, 30),
        st.integers(0, 400),
        st.sampled_from([COUNTS, AGENTS]),
    )
    def test_kernel_matches_python_reference(self, seed, which, n, calls, mode):
        p = {"ladder3": ladder_protocol(3), "elim": ELIM, "p1": protocol_1(2)}[which]
        init = uniform(p, n)
        ev = []
        res = run(RunConfig(p, init, seed, mode, FixedCalls(calls), max_calls=max(calls, 1)), trace=ev.append)
        counts, inter, events = reference_run(p, init.counts, seed, calls, agents_mode=(mode == AGENTS))
        assert res.final.counts == tuple(counts)
        assert res.interactions_made == inter
        got = [None if e.noop else (e.initiator, e.responder, e.new_initiator, e.new_responder) for e in ev]
        assert got == events

    def test_fast_path_matches_stepwise(self):
        p = protocol_1(4)
        cfg = RunConfig(p, uniform(p, 300), seed=5, stop=LeaderCount(1))
        fast = run(cfg)
        slow = run(cfg, trace=lambda e: None)
        assert fast == slow


class TestRunInvariants:
    def _events(self, p, n, seed, calls, mode=COUNTS):
        ev = []
        res = run(RunConfig(p, uniform(p, n), seed, mode, FixedCalls(calls)), trace=ev.append)
        return res, [e for e in ev if not e.noop]

    def test_protocol1_leaders_never_increase(self):
        p = protocol_1(4)
        res, events = self._events(p, 60, 2, 30000)
        reach = reachable_states(p, p.start_state)
        for e in events:
            before = p.output[e.initiator] + p.output[e.responder]
            after = p.output[e.new_initiator] + p.output[e.new_responder]
            assert after <= before
            for s_old, s_new in ((e.initiator, e.new_initiator), (e.responder, e.new_responder)):
                if not decode_state(p.states[s_old]).leader:
                    assert not decode_state(p.states[s_new]).leader
            assert {e.new_initiator, e.new_responder} <= reach
        assert res.final.n == 60

    def test_unbounded_counter_respects_cap(self):
        p = unbounded_counter_variant(3)
        values = state_values(p, "timer_count")
        res = run(RunConfig(p, uniform(p, 200), 3, stop=LeaderCount(1), track_value=values))
        assert res.max_value <= 3

    def test_ladder_growth_only_from_pairs_below(self):
        p = ladder_protocol(4)
        _, events = self._events(p, 50, 6, 5000)
        for e in events:
            for old, new in ((e.initiator, e.new_initiator), (e.responder, e.new_responder)):
                if new != old:
                    assert e.initiator == e.responder and new == e.initiator + 1

    def test_track_value_length(self):
        with pytest.raises(ValueError):
            RunConfig(ELIM, uniform(ELIM, 2), track_value=[0])

    def test_computation_stop(self):
        p = protocol_1(2)
        res = run(RunConfig(p, uniform(p, 300), seed=1, stop=StateEntered(computing_states(p), "computation")))
        assert res.stop_reason == "computation"
        assert any(res.final.counts[s] for s in computing_states(p))

    def test_interactions_at_most_calls(self):
        res = run(RunConfig(ELIM, uniform(ELIM, 40), seed=1, stop=LeaderCount(1)))
        assert res.interactions_made <= res.calls_made


def test_unknown_stop_condition():
    with pytest.raises(TypeError):
        Simulation(RunConfig(ELIM, uniform(ELIM, 3), stop="single-leader"))


def test_mismatched_configuration():
    with pytest.raises(ValueError):
        Simulation(RunConfig(ELIM, Configuration((1, 1, 1))))
