"""Uniformly random scheduler and run driver.

Every scheduler call draws two agent indices ``a, b`` uniformly from
``[0, n)``; ``a == b`` is a no-op, otherwise ``(a, b)`` interacts with
``a`` as initiator. In counts mode agents are implicit: index ``r`` is
mapped to a state by walking the cumulative counts, which yields the same
ordered state-pair distribution as tracking agents explicitly.

Time is counted in scheduler calls; realized interactions are tracked
separately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence, TextIO, Union

import numpy as np
from numba import njit

from .protocol import AgentPopulation, Configuration, ProtocolSpec, StateRef
from .rng import ALGORITHM_ID, Rng, below

COUNTS = "counts"
AGENTS = "agents"

# layout of the int64 stats vector shared with the kernel
_CALLS, _INTER, _WEIGHT, _MAXVAL, _COVERED, _FIRST_COVER, _STOP = range(7)
_RUNNING, _HIT_INTERACTIONS, _HIT_WEIGHT, _HIT_ENTERED = range(4)


class EmptyPopulationError(ValueError):
    pass


class MissingAuditError(KeyError):
    pass


@njit(cache=True, nogil=True)
def _state_at(counts, order, r):
    acc = 0
    for i in range(order.shape[0]):
        s = order[i]
        acc += counts[s]
        if r < acc:
            return s
    return -1


@njit(cache=True, nogil=True)
def _advance(
    counts, agents, use_agents, out_a, out_b, order, rng, stats, until_calls,
    max_interactions, weight, weight_target, enter_mask, value, cover_mask, cover_total,
    audit_slot, visited, visitors, event,
):
    if use_agents:
        n = agents.shape[0]
    else:
        n = counts.sum()
    while stats[_CALLS] < until_calls:
        a = below(rng, n)
        b = below(rng, n)
        stats[_CALLS] += 1
        if a == b:
            event[0] = 1
            continue
        if use_agents:
            sa = agents[a]
            sb = agents[b]
        else:
            sa = _state_at(counts, order, a)
            sb = _state_at(counts, order, b)
        na = out_a[sa, sb]
        nb = out_b[sa, sb]
        event[0] = 0
        event[1] = sa
        event[2] = sb
        event[3] = na
        event[4] = nb
        stats[_INTER] += 1
        if use_agents:
            agents[a] = na
            agents[b] = nb
            slot = audit_slot[na]
            if slot >= 0 and not visited[slot, a]:
                visited[slot, a] = True
                visitors[slot] += 1
            slot = audit_slot[nb]
            if slot >= 0 and not visited[slot, b]:
                visited[slot, b] = True
                visitors[slot] += 1
        if na != sa or nb != sb:
            counts[sa] -= 1
            if counts[sa] == 0 and cover_mask[sa]:
                stats[_COVERED] -= 1
            counts[sb] -= 1
            if counts[sb] == 0 and cover_mask[sb]:
                stats[_COVERED] -= 1
            counts[na] += 1
            if counts[na] == 1 and cover_mask[na]:
                stats[_COVERED] += 1
            counts[nb] += 1
            if counts[nb] == 1 and cover_mask[nb]:
                stats[_COVERED] += 1
            stats[_WEIGHT] += weight[na] + weight[nb] - weight[sa] - weight[sb]
            if value[na] > stats[_MAXVAL]:
                stats[_MAXVAL] = value[na]
            if value[nb] > stats[_MAXVAL]:
                stats[_MAXVAL] = value[nb]
            if stats[_FIRST_COVER] < 0 and cover_total > 0 and stats[_COVERED] == cover_total:
                stats[_FIRST_COVER] = stats[_CALLS]
        if enter_mask[na] or enter_mask[nb]:
            stats[_STOP] = _HIT_ENTERED
            return
        if weight_target >= 0 and stats[_WEIGHT] == weight_target:
            stats[_STOP] = _HIT_WEIGHT
            return
        if max_interactions >= 0 and stats[_INTER] >= max_interactions:
            stats[_STOP] = _HIT_INTERACTIONS
            return


@njit(cache=True, nogil=True)
def _sample_pairs(counts, use_agents, agents, order, rng, size, first, second):
    if use_agents:
        n = agents.shape[0]
    else:
        n = counts.sum()
    for i in range(size):
        a = below(rng, n)
        b = below(rng, n)
        if a == b:
            first[i] = -1
            second[i] = -1
        elif use_agents:
            first[i] = a
            second[i] = b
        else:
            first[i] = _state_at(counts, order, a)
            second[i] = _state_at(counts, order, b)


def _population_arrays(population) -> tuple[np.ndarray, np.ndarray, bool]:
    if isinstance(population, AgentPopulation):
        agents = np.asarray(population.agent_states, dtype=np.int64)
        q = int(agents.max()) + 1 if agents.size else 1
        return np.bincount(agents, minlength=q).astype(np.int64), agents, True
    counts = np.asarray(population.counts, dtype=np.int64)
    return counts, np.zeros(0, dtype=np.int64), False


def choose_next_pair(rng: Rng, population: Configuration | AgentPopulation):
    """One scheduler call: ``None`` for a no-op, else an ordered pair.

    The pair holds agent indices for an :class:`AgentPopulation` and state
    indices for a :class:`Configuration`.
    """
    if population.n == 0:
        raise EmptyPopulationError("cannot schedule an empty population")
    first = np.empty(1, dtype=np.int64)
    second = np.empty(1, dtype=np.int64)
    counts, agents, use_agents = _population_arrays(population)
    order = np.arange(counts.shape[0], dtype=np.int64)
    _sample_pairs(counts, use_agents, agents, order, rng.state, 1, first, second)
    if first[0] < 0:
        return None
    return int(first[0]), int(second[0])


def sample_pairs(rng: Rng, population: Configuration | AgentPopulation, size: int):
    """``size`` scheduler calls without applying them; no-ops come back as ``-1``."""
    if population.n == 0:
        raise EmptyPopulationError("cannot schedule an empty population")
    counts, agents, use_agents = _population_arrays(population)
    order = np.arange(counts.shape[0], dtype=np.int64)
    first = np.empty(size, dtype=np.int64)
    second = np.empty(size, dtype=np.int64)
    _sample_pairs(counts, use_agents, agents, order, rng.state, size, first, second)
    return first, second


# -- stop conditions ---------------------------------------------------------


@dataclass(frozen=True)
class FixedCalls:
    calls: int


@dataclass(frozen=True)
class FixedInteractions:
    interactions: int


@dataclass(frozen=True)
class LeaderCount:
    """Stop once the number of agents in output-1 states equals ``target``."""

    target: int = 1

    @property
    def reason(self) -> str:
        return "single-leader" if self.target == 1 else f"leaders={self.target}"


@dataclass(frozen=True)
class StateEntered:
    states: frozenset
    reason: str = "entered"


@dataclass(frozen=True)
class Predicate:
    test: Callable[[Configuration], bool]
    reason: str = "predicate"


StopCondition = Union[FixedCalls, FixedInteractions, LeaderCount, StateEntered, Predicate]


@dataclass(frozen=True)
class AnyOf:
    conditions: tuple


def _flatten(stop) -> list:
    if stop is None:
        return []
    if isinstance(stop, AnyOf):
        return [c for sub in stop.conditions for c in _flatten(sub)]
    if isinstance(stop, (list, tuple)):
        return [c for sub in stop for c in _flatten(sub)]
    return [stop]


@dataclass(frozen=True)
class ProbeSpec:
    """Call indices at which to snapshot the configuration."""

    ticks: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ticks", tuple(sorted({int(t) for t in self.ticks if t >= 0})))

    @classmethod
    def linear(cls, step: int, stop: int, start: int = 0) -> "ProbeSpec":
        return cls(tuple(range(start, stop + 1, step)))

    @classmethod
    def geometric(cls, start: int, ratio: float, stop: int) -> "ProbeSpec":
        ticks = []
        t = float(start)
        while t <= stop:
            ticks.append(int(t))
            t *= ratio
        return cls(tuple(ticks))


class ProbeRecord(NamedTuple):
    calls: int
    interactions: int
    counts: tuple[int, ...]


class InteractionEvent(NamedTuple):
    call: int
    noop: bool
    initiator: int = -1
    responder: int = -1
    new_initiator: int = -1
    new_responder: int = -1

    def to_json(self, protocol: ProtocolSpec) -> str:
        if self.noop:
            return json.dumps({"call": self.call, "noop": True})
        names = protocol.states
        return json.dumps(
            {
                "call": self.call,
                "noop": False,
                "initiator": names[self.initiator],
                "responder": names[self.responder],
                "result": [names[self.new_initiator], names[self.new_responder]],
            }
        )


@dataclass(frozen=True)
class RunConfig:
    protocol: ProtocolSpec
    initial: Configuration | AgentPopulation
    seed: int = 0
    mode: str = COUNTS
    stop: object = None
    probes: ProbeSpec | None = None
    max_calls: int | None = None
    audit: tuple = ()
    track_value: Sequence[int] | None = None
    cover: tuple = ()

    def __post_init__(self):
        if self.mode not in (COUNTS, AGENTS):
            raise ValueError(f"mode must be {COUNTS!r} or {AGENTS!r}")
        if self.audit and self.mode != AGENTS:
            raise ValueError("distinct-visitor audits need agents mode")
        if self.track_value is not None and len(self.track_value) != self.protocol.size:
            raise ValueError("track_value needs one entry per state")

    @property
    def n(self) -> int:
        return self.initial.n

    @property
    def call_cap(self) -> int:
        return self.max_calls if self.max_calls is not None else 64 * max(self.n, 1) ** 2


@dataclass(frozen=True)
class RunResult:
    final: Configuration
    calls_made: int
    interactions_made: int
    stop_reason: str
    seed: int
    algorithm_id: str = ALGORITHM_ID
    probes: tuple[ProbeRecord, ...] = ()
    visitors: dict = field(default_factory=dict)
    max_value: int | None = None
    first_full_coverage_call: int | None = None
    final_agents: AgentPopulation | None = None

    def leaders(self, protocol: ProtocolSpec) -> int:
        return sum(c for c, o in zip(self.final.counts, protocol.output) if o)

    def summary(self, protocol: ProtocolSpec) -> str:
        lines = [
            f"final: {self.final.format(protocol)}",
            f"calls: {self.calls_made}",
            f"interactions: {self.interactions_made}",
            f"stop_reason: {self.stop_reason}",
            f"rng: {self.algorithm_id} seed={self.seed}",
        ]
        if self.max_value is not None:
            lines.append(f"max_value: {self.max_value}")
        for s, v in self.visitors.items():
            lines.append(f"distinct_visitors[{protocol.states[s]}]: {v}")
        return "\n".join(lines)


class Simulation:
    """Mutable run state; :meth:`step` advances one scheduler call."""

    def __init__(self, config: RunConfig):
        p = config.protocol
        self.config = config
        self.protocol = p
        q = p.size
        init = config.initial
        if isinstance(init, AgentPopulation):
            agents = np.asarray(init.agent_states, dtype=np.int64)
            if agents.size and (agents.min() < 0 or agents.max() >= q):
                raise ValueError("agent state out of range")
            self.counts = np.bincount(agents, minlength=q).astype(np.int64)
        else:
            if len(init.counts) != q:
                raise ValueError("configuration does not match the protocol's state count")
            self.counts = np.asarray(init.counts, dtype=np.int64).copy()
            if (self.counts < 0).any():
                raise ValueError("negative state count")
            agents = np.repeat(np.arange(q, dtype=np.int64), self.counts)
        self.n = int(self.counts.sum())
        if self.n == 0:
            raise EmptyPopulationError("cannot run an empty population")
        self.use_agents = config.mode == AGENTS
        self.agents = agents.copy() if self.use_agents else np.zeros(0, dtype=np.int64)
        self.rng = Rng(config.seed)
        self.out_a, self.out_b = p.table
        self.order = np.arange(q, dtype=np.int64)
        self.weight = np.asarray(p.output, dtype=np.int64)

        conds = _flatten(config.stop)
        self.fixed_calls = min((c.calls for c in conds if isinstance(c, FixedCalls)), default=None)
        fixed_inter = [c.interactions for c in conds if isinstance(c, FixedInteractions)]
        self.max_interactions = min(fixed_inter) if fixed_inter else -1
        leader = [c for c in conds if isinstance(c, LeaderCount)]
        if len({c.target for c in leader}) > 1:
            raise ValueError("at most one leader-count target per run")
        self.leader_stop = leader[0] if leader else None
        self.enter_mask = np.zeros(q, dtype=np.bool_)
        self.enter_reason = "entered"
        for c in conds:
            if isinstance(c, StateEntered):
                for s in c.states:
                    self.enter_mask[p.index(s)] = True
                self.enter_reason = c.reason
        self.predicates = [c for c in conds if isinstance(c, Predicate)]
        unknown = [c for c in conds if not isinstance(c, (FixedCalls, FixedInteractions, LeaderCount, StateEntered, Predicate))]
        if unknown:
            raise TypeError(f"unsupported stop condition {unknown[0]!r}")

        tv = config.track_value
        self.value = np.asarray(tv if tv is not None else np.zeros(q), dtype=np.int64)
        self.cover_mask = np.zeros(q, dtype=np.bool_)
        for s in config.cover:
            self.cover_mask[p.index(s)] = True
        self.cover_total = int(self.cover_mask.sum())

        self.audit_states = [p.index(s) for s in config.audit]
        self.audit_slot = np.full(q, -1, dtype=np.int64)
        for i, s in enumerate(self.audit_states):
            self.audit_slot[s] = i
        n_audit = len(self.audit_states)
        self.visited = np.zeros((n_audit, self.n if self.use_agents else 0), dtype=np.bool_)
        self.visitors = np.zeros(n_audit, dtype=np.int64)
        for i, s in enumerate(self.audit_states):
            self.visited[i] = self.agents == s
            self.visitors[i] = int(self.visited[i].sum())

        self.stats = np.zeros(7, dtype=np.int64)
        self.stats[_WEIGHT] = int(self.counts @ self.weight)
        present = self.counts > 0
        self.stats[_MAXVAL] = int(self.value[present].max()) if tv is not None else 0
        self.stats[_COVERED] = int((present & self.cover_mask).sum())
        self.stats[_FIRST_COVER] = 0 if self.cover_total and self.stats[_COVERED] == self.cover_total else -1
        self.event = np.zeros(5, dtype=np.int64)
        self.probes: list[ProbeRecord] = []
        self.stop_reason: str | None = None
        self._check_initial()

    # -- bookkeeping ------------------------------------------------------

    @property
    def calls_made(self) -> int:
        return int(self.stats[_CALLS])

    @property
    def interactions_made(self) -> int:
        return int(self.stats[_INTER])

    @property
    def configuration(self) -> Configuration:
        return Configuration(tuple(int(c) for c in self.counts))

    def _check_initial(self):
        if self.enter_mask[self.counts > 0].any():
            self.stop_reason = self.enter_reason
        elif self.leader_stop is not None and self.stats[_WEIGHT] == self.leader_stop.target:
            self.stop_reason = self.leader_stop.reason
        elif self.max_interactions == 0:
            self.stop_reason = "interactions"
        elif any(c.test(self.configuration) for c in self.predicates):
            self.stop_reason = next(c.reason for c in self.predicates if c.test(self.configuration))
        elif self.fixed_calls is not None and self.fixed_calls <= 0:
            self.stop_reason = "calls"
        elif self.config.call_cap <= 0:
            self.stop_reason = "cap"

    def _advance(self, until: int):
        _advance(
            self.counts, self.agents, self.use_agents, self.out_a, self.out_b, self.order,
            self.rng.state, self.stats, until, self.max_interactions, self.weight,
            self.leader_stop.target if self.leader_stop is not None else -1,
            self.enter_mask, self.value, self.cover_mask, self.cover_total,
            self.audit_slot, self.visited, self.visitors, self.event,
        )

    def _kernel_reason(self) -> str | None:
        code = int(self.stats[_STOP])
        if code == _HIT_ENTERED:
            return self.enter_reason
        if code == _HIT_WEIGHT:
            return self.leader_stop.reason
        if code == _HIT_INTERACTIONS:
            return "interactions"
        return None

    def _limit_reason(self) -> str | None:
        calls = self.calls_made
        if self.fixed_calls is not None and calls >= self.fixed_calls:
            return "calls"
        if calls >= self.config.call_cap:
            return "cap"
        return None

    # -- driving ----------------------------------------------------------

    def step(self) -> InteractionEvent:
        if self.stop_reason is not None:
            raise RuntimeError(f"run already stopped ({self.stop_reason})")
        self._advance(self.calls_made + 1)
        ev = self.event
        if ev[0]:
            event = InteractionEvent(self.calls_made, True)
        else:
            event = InteractionEvent(self.calls_made, False, int(ev[1]), int(ev[2]), int(ev[3]), int(ev[4]))
        reason = self._kernel_reason()
        if reason is None and self.predicates:
            cfg = self.configuration
            reason = next((c.reason for c in self.predicates if c.test(cfg)), None)
        self.stop_reason = reason or self._limit_reason()
        return event

    def run(self, trace: Callable[[InteractionEvent], None] | None = None) -> RunResult:
        ticks = list(self.config.probes.ticks) if self.config.probes else []
        ti = 0
        while ti < len(ticks) and ticks[ti] < self.calls_made:
            ti += 1
        if ti < len(ticks) and ticks[ti] == self.calls_made:
            self._record()
            ti += 1
        stepwise = trace is not None or bool(self.predicates)
        while self.stop_reason is None:
            target = self.config.call_cap
            if self.fixed_calls is not None:
                target = min(target, self.fixed_calls)
            if ti < len(ticks):
                target = min(target, ticks[ti])
            if stepwise:
                while self.stop_reason is None and self.calls_made < target:
                    ev = self.step()
                    if trace is not None:
                        trace(ev)
            else:
                self._advance(target)
                self.stop_reason = self._kernel_reason() or self._limit_reason()
            if ti < len(ticks) and self.calls_made == ticks[ti]:
                self._record()
                ti += 1
        return self.result()

    def _record(self):
        self.probes.append(ProbeRecord(self.calls_made, self.interactions_made, tuple(int(c) for c in self.counts)))

    def result(self) -> RunResult:
        return RunResult(
            final=self.configuration,
            calls_made=self.calls_made,
            interactions_made=self.interactions_made,
            stop_reason=self.stop_reason or "running",
            seed=self.config.seed,
            probes=tuple(self.probes),
            visitors={s: int(self.visitors[i]) for i, s in enumerate(self.audit_states)},
            max_value=int(self.stats[_MAXVAL]) if self.config.track_value is not None else None,
            first_full_coverage_call=(
                int(self.stats[_FIRST_COVER]) if self.cover_total and self.stats[_FIRST_COVER] >= 0 else None
            ),
            final_agents=AgentPopulation(tuple(int(a) for a in self.agents)) if self.use_agents else None,
        )


def run(config: RunConfig, trace: Callable[[InteractionEvent], None] | None = None) -> RunResult:
    return Simulation(config).run(trace=trace)


def distinct_visitors(result: RunResult, state: int) -> int:
    try:
        return result.visitors[state]
    except KeyError:
        raise MissingAuditError(f"state {state} was not audited in this run") from None


def trace_writer(stream: TextIO, protocol: ProtocolSpec) -> Callable[[InteractionEvent], None]:
    def write(ev: InteractionEvent):
        stream.write(ev.to_json(protocol) + "\n")

    return write
