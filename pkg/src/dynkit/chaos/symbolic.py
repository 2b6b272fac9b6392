"""Symbolic dynamics: tent-map itineraries, Cantor digits, the linear horseshoe and shifts."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..errors import DepthTooLarge, InvalidWord

HALF = Fraction(1, 2)
FLOAT_DEPTH_CAP = 60


@dataclass(frozen=True)
class SymbolSequence:
    """Finite word, periodic word (symbols = one period) or window with an origin.

    ``origin`` is the index of the first symbol to the right of the comma for
    two-sided windows, and None for one-sided sequences.
    """

    symbols: tuple[int, ...]
    alphabet: tuple[int, ...] = (1, -1)
    periodic: bool = False
    origin: int | None = None

    def __post_init__(self):
        bad = [s for s in self.symbols if s not in self.alphabet]
        if bad:
            raise InvalidWord(f"symbols {bad[:3]} not in alphabet {self.alphabet}")
        if self.origin is not None and not 0 <= self.origin <= len(self.symbols):
            raise InvalidWord("origin outside the window")

    def __len__(self) -> int:
        return len(self.symbols)

    def prefix(self, n: int) -> tuple[int, ...]:
        if not self.periodic:
            return self.symbols[:n]
        p = len(self.symbols)
        return tuple(self.symbols[j % p] for j in range(n))

    def __str__(self) -> str:
        ch = "".join("+" if s == 1 else "-" if s == -1 else str(s) for s in self.symbols)
        if self.origin is not None:
            ch = ch[:self.origin] + "," + ch[self.origin:]
        return f"({ch})^inf" if self.periodic else ch


# -- tent map g2 and the logistic map f4


def tent(x):
    """g2 on a Fraction or float; x = 1/2 goes to 1."""
    return 2 * x if x <= HALF else 2 - 2 * x


def tent_iterate(x, n: int):
    for _ in range(n):
        x = tent(x)
    return x


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(float(x))  # exact binary value of the float


def tent_itinerary(x, n: int, exact: bool = True) -> SymbolSequence:
    """Symbols eps_j = +1 iff g2^(j-1)(x) lies in [0, 1/2], j = 1..n."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if exact:
        y = _as_fraction(x)
    else:
        if n > FLOAT_DEPTH_CAP:
            raise DepthTooLarge(f"float itineraries are capped at {FLOAT_DEPTH_CAP} symbols", n=n)
        y = float(x)
    if not 0 <= y <= 1:
        raise ValueError("x must lie in [0, 1]")
    out = []
    for _ in range(n):
        out.append(1 if y <= HALF else -1)
        y = tent(y)
    return SymbolSequence(tuple(out))


def _binary_digits(eps: Sequence[int]) -> list[int]:
    # b_j = (1 - eps_1 ... eps_j) / 2
    out = []
    prod = 1
    for e in eps:
        prod *= e
        out.append((1 - prod) // 2)
    return out


def _digits_value(bits: Sequence[int]) -> int:
    v = 0
    for b in bits:
        v = 2 * v + b
    return v


def itinerary_to_point(seq: SymbolSequence | Sequence[int], periodic: bool | None = None):
    """Point with the given itinerary.

    A periodic sequence gives an exact Fraction. A finite word of length n
    gives the closed dyadic interval (lo, hi) of width 2^-n that contains
    every x whose itinerary starts with the word.
    """
    if not isinstance(seq, SymbolSequence):
        seq = SymbolSequence(tuple(int(s) for s in seq), periodic=bool(periodic))
    eps = list(seq.symbols)
    if seq.periodic:
        if not eps:
            raise InvalidWord("empty period")
        # the digit pattern repeats after one period if the period product is +1, else after two
        word = eps if math.prod(eps) == 1 else eps + eps
        bits = _binary_digits(word)
        L = len(bits)
        return Fraction(_digits_value(bits), 2 ** L - 1)
    bits = _binary_digits(eps)
    n = len(bits)
    lo = Fraction(_digits_value(bits), 2 ** n)
    return lo, lo + Fraction(1, 2 ** n)


def enumerate_periodic_tent(p: int) -> list[tuple[SymbolSequence, Fraction]]:
    """All 2^p period-p words with their points, each checked g2^p(x) = x exactly."""
    if not 1 <= p <= 20:
        raise ValueError("p must be in 1..20")
    out = []
    for word in itertools.product((1, -1), repeat=p):
        s = SymbolSequence(word, periodic=True)
        x = itinerary_to_point(s)
        if tent_iterate(x, p) != x or tent_itinerary(x, p).symbols != word:
            raise AssertionError(f"periodic point check failed for {s}")
        out.append((s, x))
    return out


def h(x):
    """Semiconjugacy from g2 to f4: h(x) = (1 - cos(pi x)) / 2."""
    return 0.5 * (1.0 - np.cos(np.pi * np.asarray(x, dtype=float)))


def h_inv(y):
    return np.arccos(np.clip(1.0 - 2.0 * np.asarray(y, dtype=float), -1.0, 1.0)) / np.pi


def f4(y):
    y = np.asarray(y, dtype=float)
    return 4.0 * y * (1.0 - y)


# -- middle-thirds Cantor set


@dataclass(frozen=True)
class CantorMembership:
    verdict: str  # "in" or "out"
    digits: tuple[int, ...]  # canonical ternary digits, first `depth`
    preperiod: tuple[int, ...]  # canonical expansion = preperiod + period^inf
    period: tuple[int, ...]
    boundary_resolved: bool  # a terminating ...1 0^inf was rewritten to ...0 2^inf


def _ternary(x: Fraction) -> tuple[list[int], list[int]]:
    """Eventually periodic base-3 expansion of x in [0, 1) by long division."""
    num, den = x.numerator, x.denominator
    seen: dict[int, int] = {}
    digits: list[int] = []
    while num not in seen:
        seen[num] = len(digits)
        num *= 3
        digits.append(num // den)
        num %= den
    k = seen[num]
    return digits[:k], digits[k:]


def cantor_membership(x, depth: int = 40) -> CantorMembership:
    """Exact membership of a rational in the middle-thirds Cantor set."""
    x = _as_fraction(x)
    if not 0 <= x <= 1:
        raise ValueError("x must lie in [0, 1]")
    rewritten = False
    if x == 1:
        pre, per = [], [2]
    else:
        pre, per = _ternary(x)
        if per == [0] and pre and pre[-1] == 1:
            pre = pre[:-1] + [0]
            per = [2]
            rewritten = True
    verdict = "out" if 1 in pre or 1 in per else "in"
    digits = tuple((pre + per * (depth // len(per) + 1))[:depth])
    return CantorMembership(verdict, digits, tuple(pre), tuple(per), rewritten)


# -- linear horseshoe on the unit square


@dataclass(frozen=True)
class Rectangle:
    x0: Fraction
    y0: Fraction
    width: Fraction
    height: Fraction

    def contains(self, other: "Rectangle") -> bool:
        return (self.x0 <= other.x0 and other.x0 + other.width <= self.x0 + self.width
                and self.y0 <= other.y0 and other.y0 + other.height <= self.y0 + self.height)

    def to_json(self) -> dict:
        return {k: str(getattr(self, k)) for k in ("x0", "y0", "width", "height")}


def parse_word(word: str) -> tuple[list[int], list[int]]:
    """Split 'e_-m..e_-1,e_0..e_n' over {+,-} into its backward and forward parts."""
    if not isinstance(word, str) or word.count(",") != 1:
        raise InvalidWord("word needs exactly one comma", word=word)
    left, right = word.split(",")
    for ch in left + right:
        if ch not in "+-":
            raise InvalidWord(f"symbol {ch!r} not in {{+,-}}", word=word)
    return [1 if c == "+" else -1 for c in left], [1 if c == "+" else -1 for c in right]


def horseshoe_geometry(word: str, lam, mu) -> Rectangle:
    """Rectangle of points whose iterates visit the strips named by the word.

    Model: H+ = [0,1] x [0,1/mu] maps to V+ = [0,lam] x [0,1] by (lam x, mu y);
    H- = [0,1] x [1-1/mu,1] maps to V- = [1-lam,1] x [0,1] by (1 - lam x, mu (1 - y)).
    """
    lam, mu = _as_fraction(lam), _as_fraction(mu)
    if not (0 < lam < HALF and mu > 2):
        raise ValueError("need 0 < lam < 1/2 and mu > 2")
    back, fwd = parse_word(word)
    # forward symbols fix the height: y-preimages through each strip, innermost last
    ylo, yhi = Fraction(0), Fraction(1)
    for e in reversed(fwd):
        if e == 1:
            ylo, yhi = ylo / mu, yhi / mu
        else:
            ylo, yhi = 1 - yhi / mu, 1 - ylo / mu
    # backward symbols fix the width: x-images, oldest first
    xlo, xhi = Fraction(0), Fraction(1)
    for e in back:
        if e == 1:
            xlo, xhi = lam * xlo, lam * xhi
        else:
            xlo, xhi = 1 - lam * xhi, 1 - lam * xlo
    return Rectangle(xlo, ylo, xhi - xlo, yhi - ylo)


def horseshoe_map(p, lam, mu):
    """The linear model T on a point of H+ or H- (Fractions or floats)."""
    x, y = p
    if y <= 1 / mu:
        return (lam * x, mu * y)
    if y >= 1 - 1 / mu:
        return (1 - lam * x, mu * (1 - y))
    raise ValueError("point not in H+ or H-")


# -- shift map and the sequence metric


def word_sequence(word: str) -> SymbolSequence:
    back, fwd = parse_word(word)
    return SymbolSequence(tuple(back + fwd), origin=len(back))


def shift_map(seq: SymbolSequence) -> SymbolSequence:
    """sigma: the comma moves one place right; one-sided sequences lose their head."""
    if len(seq) < 2 and not seq.periodic:
        raise ValueError("window must hold at least two symbols")
    if seq.origin is not None:
        if seq.origin >= len(seq):
            raise ValueError("no symbol right of the comma")
        return replace(seq, origin=seq.origin + 1)
    if seq.periodic:
        return replace(seq, symbols=seq.symbols[1:] + seq.symbols[:1])
    return replace(seq, symbols=seq.symbols[1:])


def sequence_distance(a: SymbolSequence, b: SymbolSequence) -> float:
    """sum over shared indices i of (1 - delta) 2^-|i|, index 0 right of the comma."""
    oa = a.origin or 0
    ob = b.origin or 0
    lo = max(-oa, -ob)
    hi = min(len(a) - oa, len(b) - ob)
    d = 0.0
    for i in range(lo, hi):
        if a.symbols[oa + i] != b.symbols[ob + i]:
            d += 2.0 ** -abs(i)
    return d
