"""Sparse multivariate polynomials and polynomial maps.

Coefficients may be ``Fraction`` (exact mode), ``float`` or ``complex``; the
arithmetic is generic so the same code path serves exact manifold
computations and floating-point normal forms.

Multi-indices are tuples of non-negative ints. Within a degree, monomials are
ordered descending-lexicographically, so for two variables and degree two the
basis reads y1^2, y1*y2, y2^2.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np
import sympy as sp

from .errors import ResonanceObstruction


def _is_zero(c) -> bool:
    return c == 0


@lru_cache(maxsize=None)
def monomials(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All exponent tuples of length n and total degree k, descending lex."""
    if n == 0:
        return ((),) if k == 0 else ()
    out = []
    for first in range(k, -1, -1):
        for rest in monomials(n - 1, k - first):
            out.append((first,) + rest)
    return tuple(out)


def monomials_upto(n: int, lo: int, hi: int) -> list[tuple[int, ...]]:
    return [a for k in range(lo, hi + 1) for a in monomials(n, k)]


class Poly:
    """Scalar polynomial in ``nvars`` variables stored as {alpha: coeff}."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[tuple[int, ...], object] | None = None):
        self.nvars = nvars
        self.terms = {}
        if terms:
            for a, c in terms.items():
                if not _is_zero(c):
                    self.terms[tuple(a)] = c

    # construction helpers
    @classmethod
    def const(cls, nvars: int, c) -> "Poly":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def var(cls, i: int, nvars: int, c=1) -> "Poly":
        a = [0] * nvars
        a[i] = 1
        return cls(nvars, {tuple(a): c})

    # queries
    @property
    def degree(self) -> int:
        return max((sum(a) for a in self.terms), default=-1)

    @property
    def lowdeg(self) -> int:
        return min((sum(a) for a in self.terms), default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def coeff(self, alpha) -> object:
        return self.terms.get(tuple(alpha), 0)

    def copy(self) -> "Poly":
        p = Poly(self.nvars)
        p.terms = dict(self.terms)
        return p

    # arithmetic
    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            return other
        return Poly.const(self.nvars, other)

    def __add__(self, other) -> "Poly":
        other = self._coerce(other)
        out = dict(self.terms)
        for a, c in other.terms.items():
            v = out.get(a, 0) + c
            if _is_zero(v):
                out.pop(a, None)
            else:
                out[a] = v
        p = Poly(self.nvars)
        p.terms = out
        return p

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        p = Poly(self.nvars)
        p.terms = {a: -c for a, c in self.terms.items()}
        return p

    def __sub__(self, other) -> "Poly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Poly":
        return self._coerce(other) - self

    def scale(self, s) -> "Poly":
        if _is_zero(s):
            return Poly(self.nvars)
        return Poly(self.nvars, {a: c * s for a, c in self.terms.items()})

    def mul(self, other: "Poly", maxdeg: int | None = None) -> "Poly":
        out: dict = {}
        for a, c in self.terms.items():
            da = sum(a)
            for b, d in other.terms.items():
                if maxdeg is not None and da + sum(b) > maxdeg:
                    continue
                key = tuple(x + y for x, y in zip(a, b))
                out[key] = out.get(key, 0) + c * d
        return Poly(self.nvars, out)

    def __mul__(self, other) -> "Poly":
        if isinstance(other, Poly):
            return self.mul(other)
        return self.scale(other)

    __rmul__ = __mul__

    def truncate(self, maxdeg: int) -> "Poly":
        return Poly(self.nvars, {a: c for a, c in self.terms.items() if sum(a) <= maxdeg})

    def homogeneous(self, k: int) -> "Poly":
        return Poly(self.nvars, {a: c for a, c in self.terms.items() if sum(a) == k})

    def drop_below(self, k: int) -> "Poly":
        return Poly(self.nvars, {a: c for a, c in self.terms.items() if sum(a) >= k})

    def diff(self, i: int) -> "Poly":
        out = {}
        for a, c in self.terms.items():
            if a[i]:
                b = list(a)
                b[i] -= 1
                out[tuple(b)] = c * a[i]
        return Poly(self.nvars, out)

    def map_coeffs(self, fn) -> "Poly":
        return Poly(self.nvars, {a: fn(c) for a, c in self.terms.items()})

    def compose(self, subs: Sequence["Poly"], maxdeg: int) -> "Poly":
        """Substitute variable i by subs[i], truncating at ``maxdeg``."""
        if len(subs) != self.nvars:
            raise ValueError("substitution length mismatch")
        m = subs[0].nvars if subs else 0
        powers: dict[tuple[int, int], Poly] = {}

        def power(i: int, e: int) -> Poly:
            if e == 0:
                return Poly.const(m, 1)
            key = (i, e)
            if key not in powers:
                powers[key] = power(i, e - 1).mul(subs[i], maxdeg)
            return powers[key]

        acc = Poly(m)
        for a, c in self.terms.items():
            term = Poly.const(m, c)
            for i, e in enumerate(a):
                if e:
                    term = term.mul(power(i, e), maxdeg)
                    if term.is_zero():
                        break
            acc = acc + term
        return acc

    def __call__(self, x):
        """Evaluate at a point (shape (nvars,)) or a batch (shape (nvars, m))."""
        x = np.asarray(x)
        acc = 0
        for a, c in self.terms.items():
            t = c
            for xi, e in zip(x, a):
                if e:
                    t = t * xi ** e
            acc = acc + t
        if isinstance(acc, int) and x.ndim > 1:
            return np.zeros(x.shape[1:])
        return acc

    def __eq__(self, other) -> bool:
        if not isinstance(other, Poly):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __repr__(self) -> str:
        if not self.terms:
            return "Poly(0)"
        items = sorted(self.terms.items(), key=lambda t: (sum(t[0]), [-e for e in t[0]]))
        return "Poly(" + " + ".join(f"{c}*{a}" for a, c in items) + ")"


def poly_from_sympy(expr, syms: Sequence[sp.Symbol], exact: bool = True) -> Poly:
    """Convert a polynomial sympy expression into a Poly.

    With ``exact`` set, rational coefficients become Fractions and any
    irrational coefficient raises ``ValueError``.
    """
    n = len(syms)
    expr = sp.expand(expr)
    if expr == 0:
        return Poly(n)
    P = sp.Poly(expr, *syms)
    terms = {}
    for monom, c in P.terms():
        if exact:
            if not c.is_Rational:
                raise ValueError(f"non-rational coefficient {c}")
            terms[tuple(monom)] = Fraction(int(c.p), int(c.q))
        else:
            v = complex(c)
            terms[tuple(monom)] = v.real if v.imag == 0 else v
    return Poly(n, terms)


def taylor_exprs(exprs: Sequence, syms: Sequence[sp.Symbol], point: Sequence, order: int):
    """Taylor polynomial of each expression about ``point`` in shifted symbols.

    Returns sympy expressions in ``syms`` (interpreted as offsets y = x - point)
    truncated at total degree ``order``.
    """
    t = sp.Symbol("_t_taylor")
    shifted = {s: p + t * s for s, p in zip(syms, point)}
    out = []
    for e in exprs:
        e2 = sp.sympify(e).xreplace(shifted)
        if e2.is_polynomial(t):
            P = sp.Poly(sp.expand(e2), t)
            ser = sum(P.coeff_monomial(t ** k) for k in range(order + 1))
        else:
            ser = sp.series(e2, t, 0, order + 1).removeO().subs(t, 1)
        out.append(sp.expand(ser))
    return out


@dataclass(frozen=True)
class TaylorMapPoly:
    """Polynomial map R^in_dim -> R^out_dim given componentwise."""

    in_dim: int
    comps: tuple[Poly, ...]
    meta: dict | None = field(default=None, compare=False, repr=False)

    @property
    def out_dim(self) -> int:
        return len(self.comps)

    @property
    def degree(self) -> int:
        return max((c.degree for c in self.comps), default=-1)

    @property
    def terms(self) -> dict[tuple[int, ...], tuple]:
        """Multi-index -> coefficient vector, zero vectors omitted."""
        keys = set()
        for c in self.comps:
            keys.update(c.terms)
        keys = sorted(keys, key=lambda a: (sum(a), [-e for e in a]))
        return {a: tuple(c.coeff(a) for c in self.comps) for a in keys}

    @classmethod
    def zero(cls, in_dim: int, out_dim: int) -> "TaylorMapPoly":
        return cls(in_dim, tuple(Poly(in_dim) for _ in range(out_dim)))

    @classmethod
    def from_terms(cls, in_dim: int, out_dim: int, terms: Mapping) -> "TaylorMapPoly":
        comps = [dict() for _ in range(out_dim)]
        for a, vec in terms.items():
            for j, c in enumerate(vec):
                comps[j][tuple(a)] = c
        return cls(in_dim, tuple(Poly(in_dim, d) for d in comps))

    def coeff(self, alpha) -> tuple:
        return tuple(c.coeff(alpha) for c in self.comps)

    def homogeneous(self, k: int) -> "TaylorMapPoly":
        return TaylorMapPoly(self.in_dim, tuple(c.homogeneous(k) for c in self.comps))

    def truncate(self, k: int) -> "TaylorMapPoly":
        return TaylorMapPoly(self.in_dim, tuple(c.truncate(k) for c in self.comps))

    def __add__(self, other: "TaylorMapPoly") -> "TaylorMapPoly":
        return TaylorMapPoly(self.in_dim, tuple(a + b for a, b in zip(self.comps, other.comps)))

    def __sub__(self, other: "TaylorMapPoly") -> "TaylorMapPoly":
        return TaylorMapPoly(self.in_dim, tuple(a - b for a, b in zip(self.comps, other.comps)))

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.comps)

    def __call__(self, u) -> np.ndarray:
        return np.array([c(u) for c in self.comps])

    def linear_part(self) -> list[list]:
        rows = []
        for c in self.comps:
            rows.append([c.coeff(tuple(1 if j == i else 0 for j in range(self.in_dim)))
                         for i in range(self.in_dim)])
        return rows

    def to_float(self) -> "TaylorMapPoly":
        def cv(c):
            return float(c) if not isinstance(c, complex) else c
        return TaylorMapPoly(self.in_dim, tuple(p.map_coeffs(cv) for p in self.comps))

    def to_json(self) -> dict:
        return {
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "terms": [
                {"alpha": list(a), "coeff": [coeff_to_json(c) for c in vec]}
                for a, vec in self.terms.items()
            ],
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "TaylorMapPoly":
        terms = {tuple(t["alpha"]): tuple(coeff_from_json(c) for c in t["coeff"]) for t in d["terms"]}
        return cls.from_terms(int(d["in_dim"]), int(d["out_dim"]), terms)


def coeff_to_json(c):
    if isinstance(c, Fraction):
        return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"
    if isinstance(c, int):
        return str(c)
    if isinstance(c, complex):
        return [float(c.real), float(c.imag)]
    return float(c)


def coeff_from_json(c):
    if isinstance(c, str):
        return Fraction(c)
    if isinstance(c, list):
        return complex(c[0], c[1])
    return float(c)


def jacobian_polys(comps: Sequence[Poly]) -> list[list[Poly]]:
    n = comps[0].nvars if comps else 0
    return [[c.diff(i) for i in range(n)] for c in comps]


# ---------------------------------------------------------------------------
# homological operators


def homological_matrix(A_in, A_out, k: int):
    """Matrix of h -> Dh(u) A_in u - A_out h(u) on homogeneous degree-k maps.

    The basis is ordered component-major: (j, alpha) with alpha running over
    ``monomials(n_in, k)``. Entries keep the scalar type of the inputs, so
    Fraction matrices yield an exact object array.
    """
    A_in = [list(r) for r in A_in]
    A_out = [list(r) for r in A_out]
    n_in = len(A_in)
    n_out = len(A_out)
    basis = monomials(n_in, k)
    idx = {a: i for i, a in enumerate(basis)}
    M = len(basis)
    dim = n_out * M
    mat = [[0] * dim for _ in range(dim)]
    for j in range(n_out):
        for col_a, p in enumerate(basis):
            col = j * M + col_a
            # Dh . A_in u, with h = u^p e_j
            for i in range(n_in):
                if not p[i]:
                    continue
                for l in range(n_in):
                    a_il = A_in[i][l]
                    if _is_zero(a_il):
                        continue
                    q = list(p)
                    q[i] -= 1
                    q[l] += 1
                    row = j * M + idx[tuple(q)]
                    mat[row][col] += p[i] * a_il
            # - A_out h
            for m in range(n_out):
                a_mj = A_out[m][j]
                if not _is_zero(a_mj):
                    mat[m * M + col_a][col] -= a_mj
    return _as_array(mat)


def _as_array(mat):
    flat = [x for r in mat for x in r]
    if any(isinstance(x, Fraction) for x in flat) and not any(isinstance(x, (float, complex)) for x in flat):
        arr = np.empty((len(mat), len(mat[0]) if mat else 0), dtype=object)
        for i, r in enumerate(mat):
            for j, x in enumerate(r):
                arr[i, j] = Fraction(x)
        return arr
    if any(isinstance(x, complex) for x in flat):
        return np.array(mat, dtype=complex)
    return np.array(mat, dtype=float)


def map_to_vector(h: Sequence[Poly], k: int, n_in: int) -> list:
    basis = monomials(n_in, k)
    return [c.coeff(a) for c in h for a in basis]


def vector_to_map(v: Sequence, k: int, n_in: int, n_out: int) -> list[Poly]:
    basis = monomials(n_in, k)
    M = len(basis)
    return [Poly(n_in, {a: v[j * M + i] for i, a in enumerate(basis)}) for j in range(n_out)]


def solve_exact(M, b) -> list[Fraction]:
    """Gaussian elimination over the rationals; raises on singular M."""
    n = len(b)
    A = [[Fraction(M[i][j]) for j in range(n)] + [Fraction(b[i])] for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if A[r][col] != 0), None)
        if piv is None:
            raise ResonanceObstruction("exact homological operator is singular", column=col)
        A[col], A[piv] = A[piv], A[col]
        inv = 1 / A[col][col]
        rowc = A[col]
        for r in range(n):
            if r != col and A[r][col] != 0:
                f = A[r][col] * inv
                rr = A[r]
                for c in range(col, n + 1):
                    if rowc[c] != 0:
                        rr[c] -= f * rowc[c]
    return [A[i][n] / A[i][i] for i in range(n)]


def solve_float(M: np.ndarray, b: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Solve M x = b, treating singular values below rel_tol*||M|| as fatal."""
    M = np.asarray(M)
    if M.size == 0:
        return np.zeros(0, dtype=M.dtype)
    s = np.linalg.svd(M, compute_uv=False)
    if s[-1] <= rel_tol * max(s[0], 1e-300):
        raise ResonanceObstruction("homological operator singular beyond tolerance",
                                   smallest_singular_value=float(s[-1]))
    return np.linalg.solve(M, b)


def multinomial_weight(alpha: Iterable[int]) -> float:
    """Fischer inner-product weight alpha! for the monomial u^alpha."""
    return float(math.prod(math.factorial(a) for a in alpha))


def all_multi_indices(n: int, maxdeg: int, mindeg: int = 0):
    return itertools.chain.from_iterable(monomials(n, k) for k in range(mindeg, maxdeg + 1))
