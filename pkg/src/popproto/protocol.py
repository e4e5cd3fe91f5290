"""Protocols, configurations and the exact (non-random) operations on them.

A protocol is stored as a total transition table over dense state indices.
Pairs without an explicit rule map to themselves, which is the usual
"nothing happens" convention for population protocols. Configurations are
count vectors; agent identity only exists in :class:`AgentPopulation`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

StateRef = int | str


class InvalidDrawError(ValueError):
    """The configuration cannot supply the requested ordered pair of agents."""


@dataclass(frozen=True, eq=False)
class ProtocolSpec:
    """A population protocol ``(Q, Σ, I, O, δ)`` with a total transition table.

    ``rules`` holds only the non-identity entries of δ, keyed by ordered
    index pairs ``(initiator, responder)``. Equality ignores ``name`` and
    ``params``, which are descriptive metadata.
    """

    states: tuple[str, ...]
    output: tuple[int, ...]
    rules: tuple[tuple[tuple[int, int], tuple[int, int]], ...] = ()
    inputs: tuple[tuple[str, int], ...] = ()
    name: str = field(default="", compare=False)
    params: tuple[tuple[str, object], ...] = field(default=(), compare=False)

    def __post_init__(self):
        q = len(self.states)
        if q == 0:
            raise ValueError("a protocol needs at least one state")
        if len(set(self.states)) != q:
            raise ValueError("state names must be unique")
        if len(self.output) != q:
            raise ValueError("output map must cover every state")
        if any(o not in (0, 1) for o in self.output):
            raise ValueError("outputs must be 0 or 1")
        seen = set()
        clean = []
        for (a, b), (c, d) in self.rules:
            for s in (a, b, c, d):
                if not 0 <= s < q:
                    raise ValueError(f"rule references state index {s} outside [0, {q})")
            if (a, b) in seen:
                raise ValueError(f"duplicate rule for ordered pair ({self.states[a]}, {self.states[b]})")
            seen.add((a, b))
            if (c, d) != (a, b):
                clean.append(((a, b), (c, d)))
        object.__setattr__(self, "rules", tuple(sorted(clean)))
        symbols = [sym for sym, _ in self.inputs]
        if len(set(symbols)) != len(symbols):
            raise ValueError("duplicate input symbol")
        for sym, s in self.inputs:
            if not 0 <= s < q:
                raise ValueError(f"input {sym!r} maps to unknown state index {s}")

    @classmethod
    def build(
        cls,
        states: Sequence[str],
        output: Mapping[str, int],
        rules: Mapping[tuple[str, str], tuple[str, str]] | None = None,
        inputs: Mapping[str, str] | None = None,
        name: str = "",
        params: Mapping[str, object] | None = None,
    ) -> "ProtocolSpec":
        """Build from state names rather than indices."""
        idx = {s: i for i, s in enumerate(states)}

        def lookup(s):
            try:
                return idx[s]
            except KeyError:
                raise ValueError(f"unknown state {s!r}") from None

        missing = [s for s in states if s not in output]
        if missing:
            raise ValueError(f"no output given for states {missing}")
        extra = [s for s in output if s not in idx]
        if extra:
            raise ValueError(f"output given for unknown states {extra}")
        table = tuple(
            ((lookup(a), lookup(b)), (lookup(c), lookup(d)))
            for (a, b), (c, d) in (rules or {}).items()
        )
        return cls(
            states=tuple(states),
            output=tuple(int(output[s]) for s in states),
            rules=table,
            inputs=tuple((sym, lookup(s)) for sym, s in (inputs or {}).items()),
            name=name,
            params=tuple((params or {}).items()),
        )

    def _key(self):
        return (self.states, self.output, self.rules, self.inputs)

    def __eq__(self, other):
        if not isinstance(other, ProtocolSpec):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    @property
    def size(self) -> int:
        return len(self.states)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.states)}

    def index(self, state: StateRef) -> int:
        if isinstance(state, str):
            try:
                return self._index[state]
            except KeyError:
                raise KeyError(f"unknown state {state!r}") from None
        state = int(state)
        if not 0 <= state < self.size:
            raise KeyError(f"state index {state} out of range")
        return state

    @cached_property
    def rule_map(self) -> dict[tuple[int, int], tuple[int, int]]:
        return dict(self.rules)

    def delta(self, a: StateRef, b: StateRef) -> tuple[int, int]:
        a, b = self.index(a), self.index(b)
        return self.rule_map.get((a, b), (a, b))

    @cached_property
    def table(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense ``(out_initiator, out_responder)`` arrays of shape ``(Q, Q)``."""
        q = self.size
        out_a = np.repeat(np.arange(q, dtype=np.int64)[:, None], q, axis=1)
        out_b = np.repeat(np.arange(q, dtype=np.int64)[None, :], q, axis=0)
        for (a, b), (c, d) in self.rules:
            out_a[a, b] = c
            out_b[a, b] = d
        out_a.setflags(write=False)
        out_b.setflags(write=False)
        return out_a, out_b

    @property
    def start_state(self) -> int:
        """Default all-agents start state: the first input symbol's state, else index 0."""
        return self.inputs[0][1] if self.inputs else 0

    @property
    def param_dict(self) -> dict[str, object]:
        return dict(self.params)

    def __repr__(self):
        label = self.name or "protocol"
        return f"<ProtocolSpec {label}: {self.size} states, {len(self.rules)} rules>"


@dataclass(frozen=True)
class Configuration:
    """Count vector over a protocol's states (anonymous population snapshot)."""

    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @classmethod
    def uniform(cls, protocol: ProtocolSpec, n: int, state: StateRef | None = None) -> "Configuration":
        """All ``n`` agents in ``state`` (default: the protocol's start state)."""
        s = protocol.start_state if state is None else protocol.index(state)
        counts = [0] * protocol.size
        counts[s] = n
        return cls(tuple(counts))

    @classmethod
    def from_mapping(cls, protocol: ProtocolSpec, mapping: Mapping[StateRef, int]) -> "Configuration":
        counts = [0] * protocol.size
        for s, c in mapping.items():
            counts[protocol.index(s)] += int(c)
        return cls(tuple(counts))

    def as_dict(self, protocol: ProtocolSpec) -> dict[str, int]:
        return {protocol.states[i]: c for i, c in enumerate(self.counts) if c}

    def support(self) -> frozenset[int]:
        return frozenset(i for i, c in enumerate(self.counts) if c)

    def format(self, protocol: ProtocolSpec) -> str:
        return "{" + ", ".join(f"{k}:{v}" for k, v in self.as_dict(protocol).items()) + "}"


@dataclass(frozen=True)
class AgentPopulation:
    """Agent-indexed states; index ``i`` is agent ``i``."""

    agent_states: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.agent_states)

    @classmethod
    def from_configuration(cls, config: Configuration) -> "AgentPopulation":
        agents = []
        for s, c in enumerate(config.counts):
            agents.extend([s] * c)
        return cls(tuple(agents))

    def configuration(self, n_states: int) -> Configuration:
        counts = np.bincount(np.asarray(self.agent_states, dtype=np.int64), minlength=n_states)
        return Configuration(tuple(int(c) for c in counts[:n_states]))


def apply_rule(protocol: ProtocolSpec, config: Configuration, s_a: StateRef, s_b: StateRef) -> Configuration:
    """Apply δ to one initiator in ``s_a`` and one responder in ``s_b``."""
    a, b = protocol.index(s_a), protocol.index(s_b)
    counts = list(config.counts)
    if len(counts) != protocol.size:
        raise ValueError("configuration does not match the protocol's state count")
    need_a = 2 if a == b else 1
    if counts[a] < need_a or counts[b] < 1:
        raise InvalidDrawError(
            f"cannot draw ({protocol.states[a]}, {protocol.states[b]}) from {config.format(protocol)}"
        )
    c, d = protocol.delta(a, b)
    counts[a] -= 1
    counts[b] -= 1
    counts[c] += 1
    counts[d] += 1
    return Configuration(tuple(counts))


def applicable_pairs(config: Configuration) -> Iterable[tuple[int, int]]:
    support = sorted(config.support())
    for a in support:
        for b in support:
            if a != b or config.counts[a] >= 2:
                yield a, b


def successors(protocol: ProtocolSpec, config: Configuration) -> set[Configuration]:
    """Every configuration reachable in exactly one interaction."""
    if config.n < 2:
        raise ValueError("successors need at least two agents")
    return {apply_rule(protocol, config, a, b) for a, b in applicable_pairs(config)}


class Witness(NamedTuple):
    initiator: int
    responder: int
    position: int  # 0: state appears as the initiator's output, 1: responder's


@dataclass(frozen=True)
class LayerStructure:
    """The chain ``F_0 ⊆ F_1 ⊆ …`` of states reachable within ``i`` interactions."""

    start: int
    layers: tuple[frozenset[int], ...]
    witnesses: dict[int, Witness]
    added: tuple[tuple[int, ...], ...]  # per layer, new states in witness discovery order

    @property
    def l_max(self) -> int:
        return len(self.layers) - 1

    @property
    def reachable(self) -> frozenset[int]:
        return self.layers[-1]

    def layer_of(self, state: int) -> int:
        for i, layer in enumerate(self.layers):
            if state in layer:
                return i
        raise KeyError(state)

    def render(self, protocol: ProtocolSpec) -> str:
        names = protocol.states
        lines = [f"start: {names[self.start]}"]
        for i, new in enumerate(self.added):
            lines.append(f"F_{i}: {len(self.layers[i])} states")
            for s in new:
                w = self.witnesses.get(s)
                if w is None:
                    lines.append(f"  + {names[s]}")
                else:
                    lines.append(
                        f"  + {names[s]}  <- ({names[w.initiator]}, {names[w.responder]}) pos {w.position}"
                    )
        lines.append(f"l_max: {self.l_max}")
        lines.append(f"reachable states: {len(self.reachable)}")
        return "\n".join(lines)


def compute_layers(protocol: ProtocolSpec, s_0: StateRef) -> LayerStructure:
    start = protocol.index(s_0)
    layers = [frozenset([start])]
    added = [(start,)]
    witnesses: dict[int, Witness] = {}
    while True:
        current = layers[-1]
        ordered = sorted(current)
        fresh: list[int] = []
        for a, b in product(ordered, ordered):
            for pos, s in enumerate(protocol.delta(a, b)):
                if s not in current and s not in witnesses:
                    witnesses[s] = Witness(a, b, pos)
                    fresh.append(s)
        if not fresh:
            break
        layers.append(current | frozenset(fresh))
        added.append(tuple(fresh))
    return LayerStructure(start, tuple(layers), witnesses, tuple(added))


def reachable_states(protocol: ProtocolSpec, s_0: StateRef) -> frozenset[int]:
    return compute_layers(protocol, s_0).reachable


def is_consensus(protocol: ProtocolSpec, config: Configuration) -> bool:
    if config.n < 1:
        raise ValueError("empty configuration")
    return len({protocol.output[s] for s in config.support()}) == 1


def reachable_configurations(
    protocol: ProtocolSpec, config: Configuration, max_configs: int | None = None
) -> set[Configuration] | None:
    """BFS closure of ``config``; ``None`` if it would exceed ``max_configs``."""
    seen = {config}
    queue = deque([config])
    while queue:
        cur = queue.popleft()
        if cur.n < 2:
            continue
        for nxt in successors(protocol, cur):
            if nxt not in seen:
                seen.add(nxt)
                if max_configs is not None and len(seen) > max_configs:
                    return None
                queue.append(nxt)
    return seen


STABLE = "stable"
UNSTABLE = "unstable"
LIMIT_EXCEEDED = "limit-exceeded"


@dataclass(frozen=True)
class StabilityVerdict:
    status: str
    path: tuple[Configuration, ...] | None = None
    explored: int = 0

    def __bool__(self):
        return self.status == STABLE

    def render(self, protocol: ProtocolSpec) -> str:
        lines = [f"verdict: {self.status} (explored {self.explored} configurations)"]
        if self.path is not None:
            lines.append(f"witness path ({len(self.path) - 1} transitions):")
            lines.extend(f"  {c.format(protocol)}" for c in self.path)
        return "\n".join(lines)


def is_stable_consensus(
    protocol: ProtocolSpec, config: Configuration, max_configs: int = 100_000
) -> StabilityVerdict:
    """Explicit-state check that no reachable configuration changes any output.

    An unstable verdict carries a shortest path from ``config`` to a
    configuration whose outputs are not all equal to ``config``'s output.
    """
    if not is_consensus(protocol, config):
        return StabilityVerdict(UNSTABLE, (config,), 1)
    value = protocol.output[next(iter(config.support()))]

    def bad(c: Configuration) -> bool:
        return any(protocol.output[s] != value for s in c.support())

    parent: dict[Configuration, Configuration | None] = {config: None}
    queue = deque([config])
    while queue:
        cur = queue.popleft()
        if cur.n < 2:
            continue
        for nxt in sorted(successors(protocol, cur), key=lambda c: c.counts):
            if nxt in parent:
                continue
            parent[nxt] = cur
            if bad(nxt):
                path = [nxt]
                while parent[path[-1]] is not None:
                    path.append(parent[path[-1]])
                return StabilityVerdict(UNSTABLE, tuple(reversed(path)), len(parent))
            if len(parent) > max_configs:
                return StabilityVerdict(LIMIT_EXCEEDED, None, len(parent) - 1)
            queue.append(nxt)
    return StabilityVerdict(STABLE, None, len(parent))
