"""Invariant-manifold graphs as Taylor polynomials.

The field is expanded about an equilibrium, moved to block coordinates
w = (stable, center, unstable) and the graph of the chosen block is solved
degree by degree. At degree k the unknown homogeneous part h_k satisfies

    Dh_k . (L_in u) - L_out h_k = -[Dh_<k . f_in(u, h_<k) - f_out(u, h_<k)]_k

whose operator is invertible whenever no eigenvalue relation p.a_in = a_out
holds, which is automatic for stable, unstable and center graphs.
Everything runs in exact rationals when the expansion allows it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import sympy as sp

from .errors import (
    IllConditionedSplit,
    OrderTooHigh,
    UnknownParam,
)
from .poly import (
    Poly,
    TaylorMapPoly,
    homological_matrix,
    map_to_vector,
    monomials,
    poly_from_sympy,
    solve_exact,
    solve_float,
    taylor_exprs,
    vector_to_map,
)
from .systems import (
    SystemDef,
    _to_fraction,
    finite_difference_jacobian,
    jacobian_at,
    param_jacobian_at,
    raw_field,
    symbolic_field,
)

MAX_ORDER = 10
FD_MAX_ORDER = 5
ZERO_TOL = 1e-8


# ---------------------------------------------------------------------------
# spectral splitting


@dataclass(frozen=True)
class SpectralSplit:
    """x = transform @ w with w ordered (stable, center, unstable)."""

    transform: np.ndarray
    blocks: tuple[np.ndarray, np.ndarray, np.ndarray]
    block_dims: tuple[int, int, int]
    exact: bool = False
    exact_transform: tuple | None = field(default=None, compare=False, repr=False)
    exact_blocks: tuple | None = field(default=None, compare=False, repr=False)

    @property
    def n_minus(self) -> int:
        return self.block_dims[0]

    @property
    def n_zero(self) -> int:
        return self.block_dims[1]

    @property
    def n_plus(self) -> int:
        return self.block_dims[2]

    def indices(self, which: str) -> list[int]:
        s, c, u = self.block_dims
        return {"stable": list(range(s)), "center": list(range(s, s + c)),
                "unstable": list(range(s + c, s + c + u))}[which]

    def block_diagonal(self) -> np.ndarray:
        return sla.block_diag(*[b for b in self.blocks if b.size]) if any(b.size for b in self.blocks) \
            else np.zeros((0, 0))


def _region(ev: complex, tol: float) -> int:
    return 0 if ev.real < -tol else (2 if ev.real > tol else 1)


def _components(A) -> list[list[int]]:
    n = len(A)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(n):
            if i != j and (A[i][j] != 0 or A[j][i] != 0):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def _permutation_split(A, tol: float, pinned: Sequence[int]):
    """Group coordinates when A is block diagonal up to a permutation."""
    Af = np.array([[float(v) for v in r] for r in A])
    regions: list[list[int]] = [[], [], []]
    for comp in _components(A):
        ev = np.linalg.eigvals(Af[np.ix_(comp, comp)])
        regs = {_region(complex(e), tol) for e in ev}
        if len(regs) != 1:
            return None
        regions[regs.pop()].extend(comp)
    for r in regions:
        r.sort(key=lambda i: (i in pinned, i))
    return regions


def _ordered_schur(A: np.ndarray, tol: float):
    n = A.shape[0]
    T1, Z1, k1 = sla.schur(A, output="real", sort=lambda re, im: re < -tol)
    rest = T1[k1:, k1:]
    if rest.size:
        T2, Z2, k2 = sla.schur(rest, output="real", sort=lambda re, im: abs(re) <= tol)
    else:
        Z2, k2 = np.zeros((0, 0)), 0
    Z = Z1 @ sla.block_diag(np.eye(k1), Z2) if rest.size else Z1
    T = Z.T @ A @ Z
    return T, Z, (k1, k2, n - k1 - k2)


def _block_diagonalize(T: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    """S with S^{-1} T S block diagonal (T block upper triangular)."""
    n = T.shape[0]
    S = np.eye(n)
    cuts = np.cumsum((0,) + tuple(dims))
    nb = len(dims)
    Tw = T.copy()
    # eliminate off-diagonal blocks from the bottom up
    for i in range(nb - 2, -1, -1):
        a0, a1 = cuts[i], cuts[i + 1]
        if a1 == a0 or a1 == n:
            continue
        T11 = Tw[a0:a1, a0:a1]
        T22 = Tw[a1:, a1:]
        T12 = Tw[a0:a1, a1:]
        if not np.any(T12):
            continue
        # T11 X - X T22 = -T12
        X = sla.solve_sylvester(T11, -T22, -T12)
        if not np.all(np.isfinite(X)) or np.linalg.norm(X) > 1e8:
            raise IllConditionedSplit("spectral blocks too close to separate stably",
                                      norm=float(np.linalg.norm(X)))
        Si = np.eye(n)
        Si[a0:a1, a1:] = X
        Si_inv = np.eye(n)
        Si_inv[a0:a1, a1:] = -X
        Tw = Si_inv @ Tw @ Si
        S = S @ Si
    return S


def spectral_split(A, zero_tol: float = ZERO_TOL, pinned: Sequence[int] = ()) -> SpectralSplit:
    """Real block decomposition into stable, center and unstable parts.

    ``pinned`` lists coordinates (e.g. a parameter appended to the state)
    that must survive as identity coordinates of the center block; their
    rows of A must vanish.
    """
    exact_in = isinstance(A, (list, tuple)) or (isinstance(A, np.ndarray) and A.dtype == object)
    rows = [list(r) for r in A]
    n = len(rows)
    Af = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(n, n)
    regions = _permutation_split(rows, zero_tol, pinned)
    if regions is not None:
        order = regions[0] + regions[1] + regions[2]
        P = np.zeros((n, n))
        for col, i in enumerate(order):
            P[i, col] = 1.0
        dims = tuple(len(r) for r in regions)
        blocks = tuple(Af[np.ix_(r, r)] for r in regions)
        ex_T = tuple(tuple(Fraction(int(P[i, j])) for j in range(n)) for i in range(n))
        ex_blocks = None
        if exact_in or all(float(v).is_integer() for r in rows for v in r):
            ex_blocks = tuple(tuple(tuple(_to_fraction(rows[i][j]) for j in r) for i in r) for r in regions)
        return SpectralSplit(P, blocks, dims, exact=True, exact_transform=ex_T, exact_blocks=ex_blocks)
    T, Z, dims = _ordered_schur(Af, zero_tol)
    S = _block_diagonalize(T, dims)
    V = Z @ S
    if pinned:
        V = _pin_coordinates(V, dims, pinned)
    # normalize columns for conditioning (block structure is preserved)
    V = V / np.linalg.norm(V, axis=0)
    if pinned:
        V = _pin_coordinates(V, dims, pinned)
    Vinv = np.linalg.inv(V)
    D = Vinv @ Af @ V
    cuts = np.cumsum((0,) + dims)
    blocks = tuple(D[cuts[i]:cuts[i + 1], cuts[i]:cuts[i + 1]].copy() for i in range(3))
    off = D - sla.block_diag(*[b for b in blocks if b.size])
    if np.max(np.abs(off), initial=0.0) > 1e-8 * max(1.0, np.linalg.norm(Af)):
        raise IllConditionedSplit("residual off-block coupling too large",
                                  residual=float(np.max(np.abs(off))))
    return SpectralSplit(V, blocks, dims)


def _pin_coordinates(V: np.ndarray, dims, pinned: Sequence[int]) -> np.ndarray:
    """Rebase the center columns so pinned coordinates are identity coordinates."""
    V = V.copy()
    s, c, _ = dims
    cen = list(range(s, s + c))
    slots = cen[len(cen) - len(pinned):]
    for slot, p in zip(slots, pinned):
        cand = [j for j in cen if j <= slot]
        j = max(cand, key=lambda j: abs(V[p, j]))
        if abs(V[p, j]) < 1e-12:
            raise IllConditionedSplit("pinned coordinate not in the center subspace", coordinate=p)
        V[:, [j, slot]] = V[:, [slot, j]]
        V[:, slot] = V[:, slot] / V[p, slot]
        for k in cen:
            if k != slot:
                V[:, k] = V[:, k] - V[p, k] * V[:, slot]
    return V


# ---------------------------------------------------------------------------
# Taylor expansion of a field


def _rational_point(eq) -> list[Fraction] | None:
    try:
        return [v if isinstance(v, Fraction) else _to_fraction(v) if isinstance(v, int) else Fraction(float(v))
                for v in eq]
    except (TypeError, ValueError):
        return None


def taylor_polys(sys: SystemDef, eq, order: int, exact: bool | None = None) -> tuple[list[Poly], bool]:
    """Taylor polynomials of f about eq in offset variables, and an exactness flag."""
    n = sys.dim
    syms = sp.symbols(f"y1:{n + 1}", real=True)
    exprs = symbolic_field(sys, syms)
    if exprs is not None:
        if exact is not False:
            pt = _rational_point(eq)
            ok = pt is not None
            if ok:
                ptr = [sp.Rational(v.numerator, v.denominator) for v in pt]
                vals = [sp.simplify(sp.sympify(e).subs(dict(zip(syms, ptr)))) for e in exprs]
                ok = all(v == 0 for v in vals)
            if ok:
                ser = taylor_exprs(exprs, syms, ptr, order)
                try:
                    return [poly_from_sympy(e, syms, exact=True) for e in ser], True
                except (ValueError, sp.PolynomialError):
                    pass
            if exact:
                raise ValueError("exact expansion requested but field is not rational at eq")
        ptf = [sp.Float(float(v), 30) for v in eq]
        ser = taylor_exprs(exprs, syms, ptf, order)
        polys = [poly_from_sympy(sp.N(e, 17), syms, exact=False) for e in ser]
        # constant terms are residual round-off at a numerical equilibrium
        return [p.drop_below(1) for p in polys], False
    if order > FD_MAX_ORDER:
        raise OrderTooHigh(f"finite-difference Taylor mode is capped at order {FD_MAX_ORDER}")
    return _fd_taylor(sys, np.asarray(eq, dtype=float), order), False


def _fd_taylor(sys: SystemDef, eq: np.ndarray, order: int) -> list[Poly]:
    """Least-squares polynomial fit on a symmetric stencil, Richardson-combined."""
    n = sys.dim
    scale = max(1.0, float(np.max(np.abs(eq))))
    alphas = [a for k in range(1, order + 1) for a in monomials(n, k)]

    def fit(h: float):
        m = order // 2 + 2
        grid = np.arange(-m, m + 1) * (h / m)
        pts = np.array(np.meshgrid(*([grid] * n), indexing="ij")).reshape(n, -1).T
        if len(pts) > 4000:
            rng = np.random.default_rng(0)
            pts = rng.uniform(-h, h, size=(4000, n))
        vals = np.array([raw_field(sys, eq + p) - raw_field(sys, eq) for p in pts])
        M = np.array([[np.prod(p ** np.array(a)) for a in alphas] for p in pts])
        coef, *_ = np.linalg.lstsq(M, vals, rcond=None)
        return coef

    h = 1e-2 * scale
    c1 = fit(h)
    c2 = fit(h / 2)
    comps = [dict() for _ in range(n)]
    for row, a in enumerate(alphas):
        q = order + 1 - sum(a)
        w = 2.0 ** q
        c = (w * c2[row] - c1[row]) / (w - 1)
        for j in range(n):
            comps[j][a] = float(c[j])
    return [Poly(n, d) for d in comps]


# ---------------------------------------------------------------------------
# local expansion in block coordinates


@dataclass
class LocalExpansion:
    dim: int
    exact: bool
    split: SpectralSplit
    T: list  # x - eq = T w
    Tinv: list
    field_w: list[Poly]  # f in w coordinates, degree >= 1
    order: int
    eq: np.ndarray

    def block_matrix(self, idx: Sequence[int]):
        return [[self.field_w[i].coeff(tuple(1 if k == j else 0 for k in range(self.dim))) for j in idx]
                for i in idx]


def _linear_subs(T, n: int) -> list[Poly]:
    return [Poly(n, {tuple(1 if k == j else 0 for k in range(n)): T[i][j] for j in range(n)}) for i in range(n)]


def _combine(M, polys: list[Poly]) -> list[Poly]:
    out = []
    for row in M:
        acc = Poly(polys[0].nvars)
        for c, p in zip(row, polys):
            if c != 0:
                acc = acc + p.scale(c)
        out.append(acc)
    return out


def local_expansion(sys: SystemDef, eq, order: int, exact: bool | None = None,
                    zero_tol: float = ZERO_TOL, pinned: Sequence[int] = ()) -> LocalExpansion:
    polys, is_exact = taylor_polys(sys, eq, order, exact)
    n = sys.dim
    A = [[p.coeff(tuple(1 if k == j else 0 for k in range(n))) for j in range(n)] for p in polys]
    if is_exact:
        split = spectral_split(A, zero_tol, pinned)
        if split.exact and split.exact_blocks is not None or (split.exact and all(
                isinstance(v, (Fraction, int)) for r in A for v in r)):
            T = [list(r) for r in split.exact_transform]
            Tinv = [[T[j][i] for j in range(n)] for i in range(n)]  # permutation
        else:
            is_exact = False
            polys = [p.map_coeffs(float) for p in polys]
    if not is_exact:
        Af = np.array([[float(v) for v in r] for r in A]).reshape(n, n)
        split = spectral_split(Af, zero_tol, pinned)
        T = split.transform.tolist()
        Tinv = np.linalg.inv(split.transform).tolist()
        polys = [p.map_coeffs(lambda c: float(c) if not isinstance(c, complex) else c) for p in polys]
    subs = _linear_subs(T, n)
    f_in_w = [p.compose(subs, order) for p in polys]
    field_w = _combine(Tinv, f_in_w)
    if not is_exact:
        # enforce the block-diagonal linear part; removes round-off coupling
        D = sla.block_diag(*[b for b in split.blocks if b.size])
        for i in range(n):
            lin = {tuple(1 if k == j else 0 for k in range(n)): float(D[i, j]) for j in range(n)}
            rest = field_w[i].drop_below(2)
            field_w[i] = Poly(n, lin) + rest
    return LocalExpansion(n, is_exact, split, T, Tinv, field_w, order, np.asarray(eq, dtype=float))


# ---------------------------------------------------------------------------
# manifold graphs


def _graph_subs(n: int, in_idx, out_idx, h_comps: list[Poly]) -> list[Poly]:
    m = len(in_idx)
    subs: list[Poly | None] = [None] * n
    for k, i in enumerate(in_idx):
        subs[i] = Poly.var(k, m)
    for k, i in enumerate(out_idx):
        subs[i] = h_comps[k]
    return subs


def graph_residual(exp: LocalExpansion, in_idx, out_idx, h_comps: list[Poly], maxdeg: int) -> list[Poly]:
    """Dh . f_in(u, h(u)) - f_out(u, h(u)) truncated at maxdeg."""
    subs = _graph_subs(exp.dim, in_idx, out_idx, h_comps)
    f_on = [exp.field_w[i].compose(subs, maxdeg) for i in range(exp.dim)]
    f_in = [f_on[i] for i in in_idx]
    out = []
    for k, j in enumerate(out_idx):
        acc = -f_on[j]
        h = h_comps[k]
        for l in range(len(in_idx)):
            d = h.diff(l)
            if not d.is_zero():
                acc = acc + d.mul(f_in[l], maxdeg)
        out.append(acc)
    return out


def _solve_graph(exp: LocalExpansion, in_idx, out_idx, order: int) -> list[Poly]:
    m = len(in_idx)
    A_in = exp.block_matrix(in_idx)
    A_out = exp.block_matrix(out_idx)
    h = [Poly(m) for _ in out_idx]
    if not out_idx:
        return h
    for k in range(2, order + 1):
        R = graph_residual(exp, in_idx, out_idx, h, k)
        rhs = [-c for c in map_to_vector([r.homogeneous(k) for r in R], k, m)]
        if all(c == 0 for c in rhs):
            continue
        L = homological_matrix(A_in, A_out, k)
        if exp.exact:
            sol = solve_exact(L.tolist(), rhs)
        else:
            sol = solve_float(np.asarray(L, dtype=float), np.array(rhs, dtype=float)).tolist()
        hk = vector_to_map(sol, k, m, len(out_idx))
        h = [a + b for a, b in zip(h, hk)]
    return h


def local_manifold_taylor(sys: SystemDef, eq, which: str, order: int, exact: bool | None = None,
                          zero_tol: float = ZERO_TOL, pinned: Sequence[int] = ()) -> TaylorMapPoly:
    """Taylor coefficients (degrees 2..order) of the graph of W^s, W^u or W^c at eq.

    The graph is expressed in the block coordinates of :func:`spectral_split`
    (the identity coordinates whenever the linearization is already block
    diagonal up to a permutation of variables).
    """
    if which not in ("stable", "unstable", "center"):
        raise ValueError("which must be stable, unstable or center")
    if order > MAX_ORDER:
        raise OrderTooHigh(f"order {order} exceeds {MAX_ORDER}")
    if order < 2:
        raise ValueError("order must be at least 2")
    fx = raw_field(sys, np.asarray(eq, dtype=float))
    if np.linalg.norm(fx) > 1e-8:
        raise ValueError("eq is not an equilibrium (residual > 1e-8)")
    exp = local_expansion(sys, eq, order, exact, zero_tol, pinned)
    in_idx = exp.split.indices(which)
    if not in_idx:
        raise ValueError(f"{which} block is empty")
    out_idx = [i for i in range(sys.dim) if i not in in_idx]
    h = _solve_graph(exp, in_idx, out_idx, order)
    meta = {"which": which, "in_idx": in_idx, "out_idx": out_idx, "exact": exp.exact,
            "expansion": exp, "order": order}
    return TaylorMapPoly(len(in_idx), tuple(h), meta=meta)


def _expansion_for(sys, eq, h: TaylorMapPoly, order: int) -> LocalExpansion:
    meta = h.meta or {}
    exp = meta.get("expansion")
    if exp is None or exp.order < order:
        exp = local_expansion(sys, eq, order, meta.get("exact"),
                              pinned=meta.get("pinned", ()))
    return exp


def reduced_dynamics(sys: SystemDef, eq, h: TaylorMapPoly, order: int) -> TaylorMapPoly:
    """Vector field on the manifold: u' = L u + g_in(u, h(u)), truncated."""
    meta = h.meta or {}
    which = meta.get("which", "center")
    exp = _expansion_for(sys, eq, h, order)
    in_idx = meta.get("in_idx") or exp.split.indices(which)
    out_idx = meta.get("out_idx") or [i for i in range(sys.dim) if i not in in_idx]
    subs = _graph_subs(exp.dim, in_idx, out_idx, list(h.comps))
    comps = tuple(exp.field_w[i].compose(subs, order) for i in in_idx)
    return TaylorMapPoly(len(in_idx), comps, meta={"which": which, "exact": exp.exact})


def verify_invariance(sys: SystemDef, eq, h: TaylorMapPoly, radius: float, n_samples: int = 32,
                      seed: int = 0) -> float:
    """Max invariance residual |Dh(u) f_in - f_out| on the sphere |u| = radius.

    Uses the full nonlinear field, not its truncation.
    """
    meta = h.meta or {}
    which = meta.get("which", "center")
    exp = _expansion_for(sys, eq, h, 2)
    in_idx = meta.get("in_idx") or exp.split.indices(which)
    out_idx = meta.get("out_idx") or [i for i in range(sys.dim) if i not in in_idx]
    T = np.array([[float(v) for v in r] for r in exp.T])
    Tinv = np.array([[float(v) for v in r] for r in exp.Tinv])
    hf = h.to_float()
    m = h.in_dim
    rng = np.random.default_rng(seed)
    if m == 1:
        us = [np.array([radius]), np.array([-radius])]
        us += [np.array([radius * s]) for s in rng.choice([-1.0, 1.0], size=max(0, n_samples - 2))]
    else:
        g = rng.standard_normal((n_samples, m))
        us = list(radius * g / np.linalg.norm(g, axis=1, keepdims=True))
    eqf = np.asarray(eq, dtype=float)
    worst = 0.0
    Dh = [[c.diff(l) for l in range(m)] for c in hf.comps]
    for u in us:
        w = np.zeros(sys.dim)
        w[in_idx] = u
        if out_idx:
            w[out_idx] = [float(c(u)) for c in hf.comps]
        fw = Tinv @ raw_field(sys, eqf + T @ w)
        if not out_idx:
            continue
        J = np.array([[float(d(u)) for d in row] for row in Dh]).reshape(len(out_idx), m)
        res = J @ fw[in_idx] - fw[out_idx]
        worst = max(worst, float(np.linalg.norm(res)))
    return worst


# ---------------------------------------------------------------------------
# parameter extension


def extend_with_parameter(sys: SystemDef, param: str) -> SystemDef:
    """Append the parameter as a state variable with lambda' = 0."""
    if sys.kind != "flow":
        raise ValueError("extend_with_parameter expects a flow")
    if param not in sys.params:
        raise UnknownParam(f"{sys.name} has no parameter {param!r}", param=param)
    n = sys.dim
    base = dict(sys.params)
    sym_base = sys.symbolic
    pf = sys.param_field
    if pf is None:
        raise UnknownParam("system has no parametric form")

    def evaluator(x):
        x = np.asarray(x, dtype=float)
        p = dict(base)
        p[param] = float(x[n])
        return np.concatenate([np.asarray(pf(x[:n], p), dtype=float), [0.0]])

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        p = dict(base)
        p[param] = float(x[n])
        sub = sys.with_params(**{param: p[param]}) if sys.exact_params or sys.name else None
        J = np.zeros((n + 1, n + 1))
        try:
            J[:n, :n] = jacobian_at(sub, x[:n])
            J[:n, n] = param_jacobian_at(sub, x[:n], [param])[:, 0]
        except Exception:
            J[:n, :] = finite_difference_jacobian(lambda y: evaluator(y)[:n], x)
        return J

    symbolic = None
    if sym_base is not None:
        def symbolic(syms, pvals=None):
            pv = dict(pvals or {})
            pv[param] = syms[n]
            return list(sym_base(list(syms[:n]), pv)) + [sp.Integer(0)]

    compiled = None
    if symbolic is not None:
        xs = sp.symbols(f"x1:{n + 2}", real=True)
        exprs = symbolic(list(xs))
        J = sp.Matrix(exprs).jacobian(xs)
        f_l = sp.lambdify([list(xs)], exprs, modules="math")
        j_l = sp.lambdify([list(xs)], J.tolist(), modules="math")
        compiled = (f_l, j_l)

    if compiled is not None:
        f_l, j_l = compiled

        def evaluator(x):  # noqa: F811
            return np.array(f_l(list(map(float, x))), dtype=float)

        def jacobian(x):  # noqa: F811
            return np.array(j_l(list(map(float, x))), dtype=float).reshape(n + 1, n + 1)

    params = {k: v for k, v in sys.params.items() if k != param}
    return SystemDef(
        name=f"{sys.name}+{param}", kind="flow", dim=n + 1, params=params,
        evaluator=evaluator, jacobian=jacobian, periodic_coords=sys.periodic_coords,
        exact_params={k: v for k, v in sys.exact_params.items() if k != param},
        symbolic=symbolic, state_names=tuple(sys.state_names) + (param,),
    )
