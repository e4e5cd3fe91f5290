"""Closed-form occupancy bounds for layered reachability, in exact rationals.

One *window* spends ``min(c_i, c_j) / 4 · n`` scheduler calls to populate a
new state from a witness pair holding fractions ``c_i`` and ``c_j``. The
new state gets a guaranteed fraction, and every already-populated state
shrinks by the share of agents that may have been touched. Chaining windows
in layer order gives per-state fractions and a total call budget linear in
``n``.
"""

from __future__ import annotations

import decimal
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .protocol import LayerStructure, ProtocolSpec

Number = Fraction | int | float | str

EXACT = "exact"
FLOOR = "floor"

# beyond this many bits a fraction is rounded down to a dyadic with this mantissa
_EXACT_BITS = 2048
_MANTISSA_BITS = 256


class VacuousBoundError(ValueError):
    """The requested bound is not positive; ``value`` holds the raw result."""

    def __init__(self, message: str, value: Fraction, window: int | None = None):
        super().__init__(message)
        self.value = value
        self.window = window


def as_fraction(x: Number) -> Fraction:
    if isinstance(x, float):
        # shortest decimal repr, so 0.2 means 1/5 rather than its binary neighbour
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class FractionPair:
    c_i: Fraction
    c_j: Fraction

    def __init__(self, c_i: Number, c_j: Number):
        ci, cj = as_fraction(c_i), as_fraction(c_j)
        for c in (ci, cj):
            if not 0 < c < 1:
                raise ValueError(f"fractions must lie in (0, 1), got {c}")
        object.__setattr__(self, "c_i", ci)
        object.__setattr__(self, "c_j", cj)

    @property
    def low(self) -> Fraction:
        return min(self.c_i, self.c_j)


def _round_down(x: Fraction) -> tuple[Fraction, bool]:
    """Keep ``x`` exact while small; otherwise round toward zero to a dyadic rational.

    Only lower bounds pass through here, so rounding down keeps them valid.
    """
    if x.numerator.bit_length() + x.denominator.bit_length() <= _EXACT_BITS:
        return x, False
    shift = _MANTISSA_BITS - (x.numerator.bit_length() - x.denominator.bit_length())
    if shift >= 0:
        return Fraction((x.numerator << shift) // x.denominator, 1 << shift), True
    return Fraction(x.numerator // (x.denominator << -shift) << -shift), True


def _round_up(x: Fraction) -> tuple[Fraction, bool]:
    y, r = _round_down(x)
    if r and y != x:
        y += Fraction(1, y.denominator)
    return y, r


def window_calls_coefficient(p: FractionPair) -> Fraction:
    """Scheduler calls per agent spent on one window."""
    return p.low / 4


def _marking_constant(p: FractionPair) -> Fraction:
    return Fraction(5, 256) * p.c_i * p.c_j * p.low


def lemma17_fraction(p: FractionPair, form: str = EXACT) -> Fraction:
    """Guaranteed fraction of agents in the produced state after one window.

    ``exact`` is ``c·(3/5 − 3/4·min)``; ``floor`` is the simplified ``9/40·c``,
    valid only while ``min ≤ 1/2``. Both use ``c = 5/256·c_i·c_j·min``.
    """
    c = _marking_constant(p)
    if form == EXACT:
        value = c * (Fraction(3, 5) - Fraction(3, 4) * p.low)
        if value <= 0:
            raise VacuousBoundError(f"exact bound is not positive for min={p.low}", value)
        return value
    if form == FLOOR:
        if p.low > Fraction(1, 2):
            raise VacuousBoundError(f"floor bound needs min <= 1/2, got {p.low}", Fraction(9, 40) * c)
        return Fraction(9, 40) * c
    raise ValueError(f"unknown form {form!r}")


def lemma18_untouched(c_i: Number, t: Number) -> Fraction:
    """Fraction of a state's agents left untouched after ``t·n`` calls."""
    c_i, t = as_fraction(c_i), as_fraction(t)
    if not 0 < c_i <= 1:
        raise ValueError(f"c_i must lie in (0, 1], got {c_i}")
    if t < 0:
        raise ValueError("t must be non-negative")
    value = (1 - 3 * t) * c_i
    if value <= 0:
        raise VacuousBoundError(f"window t={t} leaves no guaranteed survivors", value)
    return value


@dataclass(frozen=True)
class FailureCoefficients:
    const_2: Fraction
    const_3: Fraction
    const_4: Fraction

    def success_bound(self, n: int) -> Fraction:
        """``(1 − const_2/n)(1 − const_3/n) − const_4/n``."""
        n = Fraction(n)
        return (1 - self.const_2 / n) * (1 - self.const_3 / n) - self.const_4 / n

    @property
    def min_n(self) -> int:
        """Smallest integer ``n`` beyond both factor roots with a positive success bound."""
        a, b, d = self.const_2, self.const_3, self.const_4
        s = a + b + d

        def ok(n: int) -> bool:
            # n² − s·n + a·b is the success bound times n², increasing past s/2
            return n > a and n > b and n * n - s * n + a * b > 0

        bits = max(64, math.ceil(s).bit_length())
        ctx = decimal.Context(prec=bits // 3 + 40, Emax=10**15, Emin=-(10**15))

        def dec(x: Fraction) -> decimal.Decimal:
            return ctx.divide(decimal.Decimal(x.numerator), decimal.Decimal(x.denominator))

        # decimal estimate of the larger root, then exact bisection around it;
        # the discriminant is a sum of non-negative terms, so no cancellation
        disc = dec((a - b) ** 2 + d * (2 * a + 2 * b + d))
        root = int(ctx.divide(ctx.add(dec(s), ctx.sqrt(disc)), decimal.Decimal(2)).to_integral_value(decimal.ROUND_FLOOR))
        lo, hi = max(1, root - 4), root + 4
        while not ok(hi):
            lo, hi = hi, 2 * hi
        while lo > 1 and ok(lo):
            lo //= 2
        if ok(lo):
            return lo
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(mid):
                hi = mid
            else:
                lo = mid
        return hi


def failure_coefficients(p: FractionPair, survivors: Sequence[Number]) -> FailureCoefficients:
    """Chebyshev failure coefficients of one window.

    ``survivors`` are the current fractions of the already-populated states.
    Values are reported as computed; nothing is clamped to (0, 1).
    """
    ci, cj, low = p.c_i, p.c_j, p.low
    c = _marking_constant(p)
    deviation = 1024 * (1 - ci * cj / 16) / (low * ci * cj)
    const_2 = 2 * deviation + 8 * (1 - c) / (c * low)
    const_3 = deviation
    const_4 = sum((2 * (1 - s) / (low / 4 * s) for s in map(as_fraction, survivors)), Fraction(0))
    return FailureCoefficients(const_2, const_3, const_4)


@dataclass(frozen=True)
class Window:
    index: int
    layer: int
    state: int
    witness: tuple[int, int]
    pair: FractionPair
    same_state_split: bool
    calls_coefficient: Fraction
    fraction: Fraction
    floor_fraction: Fraction | None
    used_floor: bool
    before: dict
    after: dict
    coefficients: FailureCoefficients


@dataclass(frozen=True)
class BoundReport:
    windows: tuple[Window, ...]
    fractions: dict  # state index -> final guaranteed fraction
    t_calls: Fraction
    layer_of: dict = field(default_factory=dict)
    rounded: bool = False  # some fractions were rounded down to bounded precision

    def threshold(self, state: int) -> int:
        return min_population_threshold(self.fractions[state])

    def render(self, protocol: ProtocolSpec, n: int | None = None) -> str:
        names = protocol.states
        out = []
        for w in self.windows:
            a, b = w.witness
            out.append(f"window {w.index} (layer {w.layer}): {names[w.state]} <- ({names[a]}, {names[b]})")
            split = " [same-state split]" if w.same_state_split else ""
            out.append(f"  pair: c_i={_fmt(w.pair.c_i)} c_j={_fmt(w.pair.c_j)}{split}")
            out.append(f"  calls: {_fmt(w.calls_coefficient)} * n")
            label = "floor" if w.used_floor else "exact"
            out.append(f"  new fraction ({label}): {_fmt(w.fraction)}")
            if w.floor_fraction is not None and not w.used_floor:
                out.append(f"  floor fraction: {_fmt(w.floor_fraction)}")
            for s in w.before:
                out.append(f"  {names[s]}: {_fmt(w.before[s])} -> {_fmt(w.after[s])}")
            k = w.coefficients
            out.append(
                f"  const_2={_fmt(k.const_2)} const_3={_fmt(k.const_3)} const_4={_fmt(k.const_4)} "
                f"min_n={_fmt(k.min_n)}"
            )
        out.append(f"T_calls: {_fmt(self.t_calls)} * n")
        if self.rounded:
            out.append(f"note: fractions beyond {_EXACT_BITS} bits were rounded down to {_MANTISSA_BITS}-bit mantissas")
        out.append("final fractions:")
        for s, f in self.fractions.items():
            line = f"  {names[s]} (layer {self.layer_of.get(s, 0)}): {_fmt(f)}  min_population={_fmt(self.threshold(s))}"
            if n is not None:
                agents = math.floor(f * n)
                flag = "ok" if agents >= 1 else "BELOW 1 AGENT"
                line += f"  at n={n}: {agents} agents [{flag}]"
            out.append(line)
        return "\n".join(out) + "\n"


_DEC = decimal.Context(prec=12, Emin=-(10**15), Emax=10**15)
_WIDE = decimal.Context(prec=60, Emin=-(10**15), Emax=10**15)


def to_decimal(x: Fraction) -> decimal.Decimal:
    """12-significant-digit decimal, without the underflow a float would hit."""
    num, den = x.numerator, x.denominator
    if num == 0:
        return decimal.Decimal(0)
    if num.bit_length() + den.bit_length() < 3000:
        return _DEC.divide(decimal.Decimal(num), decimal.Decimal(den))
    # too wide for a direct conversion: keep 160 bits of mantissa, scale wide, round once
    sign = -1 if num < 0 else 1
    num = abs(num)
    shift = 160 - (num.bit_length() - den.bit_length())
    mantissa = (num << shift) // den if shift >= 0 else num // (den << -shift)
    wide = _WIDE.multiply(decimal.Decimal(sign * mantissa), _WIDE.power(decimal.Decimal(2), -shift))
    return _DEC.plus(wide)


def _fmt(x: Fraction | int) -> str:
    x = Fraction(x)
    if x.denominator == 1:
        if x.numerator.bit_length() > 192:
            return f"~{to_decimal(x)}"
        return str(x.numerator)
    approx = to_decimal(x)
    if x.numerator.bit_length() + x.denominator.bit_length() < 64:
        return f"{x.numerator}/{x.denominator} (~{approx})"
    return f"~{approx}"


def propagate_bounds(layers: LayerStructure, initial_fractions: Mapping[int, Number] | None = None) -> BoundReport:
    """Chain windows over the layer structure in witness order.

    A witness pair drawing both agents from one state with fraction ``f``
    is treated as two disjoint groups of ``f/2`` each.
    """
    if initial_fractions is None:
        initial_fractions = {layers.start: 1}
    fractions = {s: as_fraction(f) for s, f in initial_fractions.items() if as_fraction(f) > 0}
    for s in layers.layers[0]:
        if s not in fractions:
            raise ValueError("initial fractions must be positive on the start layer")
    extra = set(fractions) - set(layers.layers[0])
    if extra:
        raise ValueError(f"initial fractions given outside the start layer: {sorted(extra)}")

    windows = []
    rounded = False
    t_calls = Fraction(0)
    layer_of = {s: 0 for s in fractions}
    for h, new_states in enumerate(layers.added[1:], start=1):
        for q in new_states:
            w = layers.witnesses[q]
            si, sj = w.initiator, w.responder
            split = si == sj
            if split:
                pair = FractionPair(fractions[si] / 2, fractions[si] / 2)
            else:
                pair = FractionPair(fractions[si], fractions[sj])
            t = window_calls_coefficient(pair)
            idx = len(windows)
            try:
                floor = lemma17_fraction(pair, FLOOR)
            except VacuousBoundError:
                floor = None
            try:
                value, used_floor = lemma17_fraction(pair, EXACT), False
            except VacuousBoundError as err:
                if floor is None:
                    raise VacuousBoundError(f"window {idx} ({q}): {err}", err.value, idx) from None
                value, used_floor = floor, True
            before = dict(fractions)
            coeffs = failure_coefficients(pair, list(before.values()))
            try:
                after = {s: lemma18_untouched(f, t) for s, f in before.items()}
            except VacuousBoundError as err:
                raise VacuousBoundError(f"window {idx} ({q}): {err}", err.value, idx) from None
            fractions = {}
            for s, f in list(after.items()) + [(q, value)]:
                fractions[s], r = _round_down(f)
                rounded = rounded or r
            layer_of[q] = h
            t_calls, r = _round_up(t_calls + t)
            rounded = rounded or r
            windows.append(
                Window(idx, h, q, (si, sj), pair, split, t, value, floor, used_floor, before, after, coeffs)
            )
    return BoundReport(tuple(windows), fractions, t_calls, layer_of, rounded)


def min_population_threshold(fraction: Number) -> int:
    """Smallest ``n`` with ``fraction·n ≥ 1``."""
    f = as_fraction(fraction)
    if not 0 < f <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    return math.ceil(1 / f)


def compound_layer_fraction(depth: int, pair: FractionPair | None = None) -> Fraction:
    """Per-layer floor fraction raised to ``depth``.

    This is the optimistic back-of-envelope figure in which every layer
    multiplies the fraction by the same constant; the chained bound from
    :func:`propagate_bounds` is much smaller because each window's inputs
    are themselves earlier outputs.
    """
    pair = pair or FractionPair(Fraction(1, 2), Fraction(1, 2))
    return lemma17_fraction(pair, FLOOR) ** depth
