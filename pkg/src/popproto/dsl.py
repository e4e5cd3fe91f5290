"""Line-oriented text format for protocols.

::

    # comments run to end of line
    states A B C
    input x = A
    output A=1 B = 0
    output C = 1
    A A -> B A
    sym A B -> C C

``sym`` installs the rule for both orders, swapping the outputs for the
reversed pair. A second rule for an ordered pair that already has one is an
error, as is any reference to an undeclared state.
"""

from __future__ import annotations

import re

from .protocol import ProtocolSpec

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_ASSIGN = re.compile(rf"\s*({_IDENT})\s*=\s*(\S+)")
_RULE = re.compile(rf"^\s*(sym\s+)?({_IDENT})\s+({_IDENT})\s*->\s*({_IDENT})\s+({_IDENT})\s*$")
_IDENT_RE = re.compile(rf"^{_IDENT}$")


class DSLError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


def _strip_comment(raw: str) -> str:
    cut = raw.find("#")
    return raw if cut < 0 else raw[:cut]


def _assignments(body: str, offset: int, lineno: int) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    while pos < len(body):
        if not body[pos:].strip():
            break
        m = _ASSIGN.match(body, pos)
        if m is None:
            col = offset + pos + (len(body[pos:]) - len(body[pos:].lstrip())) + 1
            raise DSLError("expected '<name> = <value>'", lineno, col)
        out.append((m.group(1), m.group(2), offset + m.start(1) + 1))
        pos = m.end()
    if not out:
        raise DSLError("expected at least one '<name> = <value>'", lineno, offset + 1)
    return out


def parse_protocol(text: str, name: str = "") -> ProtocolSpec:
    states: list[str] | None = None
    state_line = 0
    outputs: dict[str, int] = {}
    inputs: dict[str, str] = {}
    rules: dict[tuple[str, str], tuple[str, str]] = {}
    refs: list[tuple[str, int, int]] = []  # (state, line, col) checked once states are known

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        head = line.split()[0]
        if head == "states":
            if states is not None:
                raise DSLError(f"states already declared on line {state_line}", lineno, indent + 1)
            names = line.split()[1:]
            if not names:
                raise DSLError("'states' needs at least one name", lineno, indent + 1)
            for nm in names:
                if not _IDENT_RE.match(nm):
                    raise DSLError(f"bad state name {nm!r}", lineno, line.index(nm) + 1)
            if len(set(names)) != len(names):
                raise DSLError("duplicate state name", lineno, indent + 1)
            states, state_line = names, lineno
        elif head in ("output", "input"):
            offset = indent + len(head)
            for key, value, col in _assignments(line[offset:], offset, lineno):
                if head == "output":
                    if value not in ("0", "1"):
                        raise DSLError(f"output must be 0 or 1, got {value!r}", lineno, col)
                    if key in outputs:
                        raise DSLError(f"output for {key!r} given twice", lineno, col)
                    outputs[key] = int(value)
                    refs.append((key, lineno, col))
                else:
                    if key in inputs:
                        raise DSLError(f"input symbol {key!r} given twice", lineno, col)
                    if not _IDENT_RE.match(value):
                        raise DSLError(f"bad state name {value!r}", lineno, col)
                    inputs[key] = value
                    refs.append((value, lineno, col))
        else:
            m = _RULE.match(line)
            if m is None:
                raise DSLError("expected '[sym] <A> <B> -> <C> <D>'", lineno, indent + 1)
            sym, a, b, c, d = m.groups()
            col = m.start(2) + 1
            for k in range(2, 6):
                refs.append((m.group(k), lineno, m.start(k) + 1))
            expanded = [((a, b), (c, d))]
            if sym:
                if a == b and c != d:
                    raise DSLError(f"'sym {a} {a}' would give two different rules for ({a}, {a})", lineno, col)
                if a != b:
                    expanded.append(((b, a), (d, c)))
            for pair, result in expanded:
                if pair in rules:
                    raise DSLError(f"duplicate rule for ordered pair ({pair[0]}, {pair[1]})", lineno, col)
                rules[pair] = result

    if states is None:
        raise DSLError("missing 'states' declaration", 1, 1)
    known = set(states)
    for ref, lineno, col in refs:
        if ref not in known:
            raise DSLError(f"unknown state {ref!r}", lineno, col)
    missing = [s for s in states if s not in outputs]
    if missing:
        raise DSLError(f"no output for states {', '.join(missing)}", state_line, 1)
    return ProtocolSpec.build(states, outputs, rules, inputs, name=name)


def serialize_protocol(protocol: ProtocolSpec) -> str:
    """Render to the DSL; ``parse_protocol(serialize_protocol(p)) == p``."""
    names = protocol.states
    lines = []
    if protocol.name:
        params = " ".join(f"{k}={v}" for k, v in protocol.params)
        lines.append(f"# {protocol.name} {params}".rstrip())
    lines.append("states " + " ".join(names))
    for sym, s in protocol.inputs:
        lines.append(f"input {sym} = {names[s]}")
    for s, o in zip(names, protocol.output):
        lines.append(f"output {s} = {o}")
    rules = protocol.rule_map
    done = set()
    for (a, b), (c, d) in protocol.rules:
        if (a, b) in done:
            continue
        done.add((a, b))
        if a != b and rules.get((b, a), (b, a)) == (d, c):
            done.add((b, a))
            lines.append(f"sym {names[a]} {names[b]} -> {names[c]} {names[d]}")
        else:
            lines.append(f"{names[a]} {names[b]} -> {names[c]} {names[d]}")
    return "\n".join(lines) + "\n"
