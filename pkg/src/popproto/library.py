"""Built-in protocols: the timer-based leader election, its variants, and fixtures.

Leader-election states are tuples encoded in their names, e.g.
``L1_T0_TS1_TR0_C3`` (leader, timer, timer_set, timer_reset, timer_count),
with ``_CP`` appended for the computation phase and ``_H0``/``_H1`` for the
has-seen-timer bit of the improved variant. :func:`decode_state` parses
these names back, so metrics also work for protocols loaded from files.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterator, Optional
from urllib.parse import parse_qsl, urlsplit

from .dsl import parse_protocol
from .protocol import ProtocolSpec


@dataclass(frozen=True, order=True)
class LeaderTimerState:
    leader: int = 0
    timer: int = 0
    timer_set: int = 0
    timer_reset: int = 0
    timer_count: int = 0
    computing: bool = False
    has_seen_timer: Optional[int] = None

    def __post_init__(self):
        if self.leader and self.timer:
            raise ValueError("an agent cannot be both leader and timer")
        if (self.timer_set or self.timer_reset or self.computing) and not self.leader:
            raise ValueError("timer_set, timer_reset and the computation phase need the leader bit")
        if self.timer_count > 0 and not (self.leader and self.timer_set):
            raise ValueError("a positive timer_count needs a leader with timer_set")

    @property
    def name(self) -> str:
        s = (
            f"L{self.leader}_T{self.timer}_TS{self.timer_set}"
            f"_TR{self.timer_reset}_C{self.timer_count}"
        )
        if self.computing:
            s += "_CP"
        if self.has_seen_timer is not None:
            s += f"_H{self.has_seen_timer}"
        return s

    @property
    def core(self) -> tuple[int, int, int, int, int]:
        return (self.leader, self.timer, self.timer_set, self.timer_reset, self.timer_count)


BLANK = LeaderTimerState()
TIMER = LeaderTimerState(timer=1)
INITIAL_LEADER = LeaderTimerState(leader=1)

_NAME_RE = re.compile(r"^L([01])_T([01])_TS([01])_TR([01])_C(\d+)(_CP)?(?:_H([01]))?$")


def decode_state(name: str) -> LeaderTimerState | None:
    """Parse a tuple-encoded state name; ``None`` for names in another scheme."""
    m = _NAME_RE.match(name)
    if m is None:
        return None
    l, t, ts, tr, tc, cp, h = m.groups()
    try:
        return LeaderTimerState(
            int(l), int(t), int(ts), int(tr), int(tc), cp is not None, None if h is None else int(h)
        )
    except ValueError:
        return None


def _enumerate_states(max_count: int, with_phase: bool) -> list[LeaderTimerState]:
    # non-leaders first: they dominate late in a run, which keeps counts-mode lookups short
    out = [BLANK, TIMER]
    phases = (False, True) if with_phase else (False,)
    for computing in phases:
        for tr in (0, 1):
            out.append(LeaderTimerState(1, 0, 0, tr, 0, computing))
            for tc in range(max_count + 1):
                out.append(LeaderTimerState(1, 0, 1, tr, tc, computing))
    return out


Interact = Callable[[LeaderTimerState, LeaderTimerState], Optional[tuple[LeaderTimerState, LeaderTimerState]]]


def _base_rules(k: int | None, cap: int | None) -> Interact:
    """δ of the timer protocol on core tuples; ``None`` means the dummy transition.

    ``k`` is the computation-phase threshold (``None`` for no phase); ``cap``
    the saturation value of timer_count.
    """
    limit = k if k is not None else cap

    def one_sided(x, y):
        # rules 3 and 4: initiator wins, only in this order
        if x.leader and not x.timer_reset and y.leader and not y.timer_reset and not y.timer:
            if not y.timer_set and y.timer_count == 0:
                winner = LeaderTimerState(1, 0, 1, 0, 0)
                loser = LeaderTimerState(0, 1 - x.timer_set, 0, 0, 0)
                return winner, loser
            if y.timer_set:
                winner = LeaderTimerState(1, 0, x.timer_set, 1, 0)
                return winner, BLANK
        return None

    def symmetric(x, y):
        # rules 1, 2, 5, 6, 7 as written for the pair (x, y)
        if x.core == (1, 0, 0, 0, 0) and y == BLANK:
            return replace(x, timer_set=1), TIMER
        if x.leader and x.timer_set and not x.timer_reset and y == TIMER:
            tc = min(x.timer_count + 1, limit)
            computing = x.computing or (k is not None and tc >= k)
            return replace(x, timer_count=tc, computing=computing), y
        if x.leader and x.timer_reset and x.timer_count == 0 and y == TIMER:
            return replace(x, timer_reset=0), BLANK
        if x.leader and x.timer_set and not x.timer_reset and y.leader and y.timer_reset and y.timer_count == 0:
            return replace(x, timer_count=0), y
        if x.leader and x.timer_set and not x.timer_reset and y == BLANK:
            return replace(x, timer_count=0), y
        return None

    def interact(x, y):
        found = [r for r in (one_sided(x, y), symmetric(x, y)) if r is not None]
        if x != y:
            r = symmetric(y, x)
            if r is not None:
                found.append((r[1], r[0]))
        if len(set(found)) > 1:
            raise AssertionError(f"conflicting rules for {x.name}, {y.name}")
        return found[0] if found else None

    return interact


def _with_seen_timer(base: Interact) -> Interact:
    def interact(x, y):
        if x.has_seen_timer and y.leader and not y.has_seen_timer:
            return x, replace(BLANK, has_seen_timer=0)
        if y.has_seen_timer and x.leader and not x.has_seen_timer:
            return replace(BLANK, has_seen_timer=0), y
        bx = replace(x, has_seen_timer=None)
        by = replace(y, has_seen_timer=None)
        r = base(bx, by)
        nx, ny = r if r is not None else (bx, by)
        hx = 1 if (x.has_seen_timer or y.timer) else 0
        hy = 1 if (y.has_seen_timer or x.timer) else 0
        nx, ny = replace(nx, has_seen_timer=hx), replace(ny, has_seen_timer=hy)
        if (nx, ny) == (x, y):
            return None
        return nx, ny

    return interact


def _from_function(
    states: list[LeaderTimerState], interact: Interact, start: LeaderTimerState, name: str, params: dict
) -> ProtocolSpec:
    names = [s.name for s in states]
    known = set(states)
    rules = {}
    for x in states:
        for y in states:
            r = interact(x, y)
            if r is None or r == (x, y):
                continue
            for s in r:
                if s not in known:
                    raise AssertionError(f"{x.name} + {y.name} produced undeclared state {s.name}")
            rules[(x.name, y.name)] = (r[0].name, r[1].name)
    output = {s.name: s.leader for s in states}
    return ProtocolSpec.build(names, output, rules, inputs={"x": start.name}, name=name, params=params)


def protocol_1(k: int) -> ProtocolSpec:
    """Timer-based leader election with computation threshold ``k``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    states = _enumerate_states(k, with_phase=True)
    return _from_function(states, _base_rules(k, None), INITIAL_LEADER, "protocol1", {"k": k})


def improved_protocol_1(k: int) -> ProtocolSpec:
    """:func:`protocol_1` plus a has-seen-timer bit that lets informed agents
    eliminate leaders that have not met a timer yet."""
    if k < 1:
        raise ValueError("k must be at least 1")
    states = [replace(s, has_seen_timer=h) for h in (0, 1) for s in _enumerate_states(k, with_phase=True)]
    interact = _with_seen_timer(_base_rules(k, None))
    start = replace(INITIAL_LEADER, has_seen_timer=0)
    return _from_function(states, interact, start, "improved1", {"k": k})


def unbounded_counter_variant(cap: int) -> ProtocolSpec:
    """Timer protocol without a computation phase; timer_count saturates at ``cap``."""
    if cap < 1:
        raise ValueError("cap must be at least 1")
    states = _enumerate_states(cap, with_phase=False)
    return _from_function(states, _base_rules(None, cap), INITIAL_LEADER, "unbounded", {"cap": cap})


def ladder_protocol(m: int) -> ProtocolSpec:
    """States ``s0..s{m-1}``; two agents in ``s_i`` push the initiator to ``s_{i+1}``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    names = [f"s{i}" for i in range(m)]
    rules = {(names[i], names[i]): (names[i + 1], names[i]) for i in range(m - 1)}
    return ProtocolSpec.build(names, {s: 1 for s in names}, rules, name="ladder", params={"m": m})


def pairwise_elimination() -> ProtocolSpec:
    """``L L -> L F``: the classic θ(n²) leader elimination baseline."""
    return ProtocolSpec.build(
        ["L", "F"], {"L": 1, "F": 0}, {("L", "L"): ("L", "F")}, inputs={"x": "L"}, name="elim"
    )


BUILTINS: dict[str, tuple[Callable[..., ProtocolSpec], dict[str, int]]] = {
    "protocol1": (protocol_1, {"k": 4}),
    "improved1": (improved_protocol_1, {"k": 4}),
    "unbounded": (unbounded_counter_variant, {"cap": 64}),
    "ladder": (ladder_protocol, {"m": 4}),
    "elim": (pairwise_elimination, {}),
}


def builtin_address(name: str, **params) -> str:
    query = "&".join(f"{k}={v}" for k, v in params.items())
    return f"builtin:{name}" + (f"?{query}" if query else "")


def resolve_protocol(address: str) -> ProtocolSpec:
    """Load ``builtin:<name>?<k=v>`` or a DSL file path."""
    if address.startswith("builtin:"):
        parts = urlsplit(address[len("builtin:"):])
        name = parts.path
        if name not in BUILTINS:
            raise ValueError(f"unknown builtin protocol {name!r}; choose from {', '.join(BUILTINS)}")
        factory, defaults = BUILTINS[name]
        params = dict(defaults)
        for key, value in parse_qsl(parts.query, keep_blank_values=True):
            if key not in defaults:
                raise ValueError(f"builtin {name!r} has no parameter {key!r}")
            try:
                params[key] = int(value)
            except ValueError:
                raise ValueError(f"parameter {key!r} must be an integer, got {value!r}") from None
        return factory(**params)
    path = Path(address)
    if not path.is_file():
        raise FileNotFoundError(f"protocol file not found: {address}")
    return parse_protocol(path.read_text(encoding="utf-8"), name=path.stem)


def iter_builtins() -> Iterator[tuple[str, ProtocolSpec]]:
    for name, (factory, defaults) in BUILTINS.items():
        yield builtin_address(name, **defaults), factory(**defaults)


def state_values(protocol: ProtocolSpec, field: str) -> list[int] | None:
    """Per-state integer field decoded from tuple-encoded names, if every name decodes."""
    out = []
    for name in protocol.states:
        st = decode_state(name)
        if st is None:
            return None
        out.append(int(getattr(st, field)))
    return out


def computing_states(protocol: ProtocolSpec) -> frozenset[int]:
    out = set()
    for i, name in enumerate(protocol.states):
        st = decode_state(name)
        if st is not None and st.computing:
            out.add(i)
    return frozenset(out)
