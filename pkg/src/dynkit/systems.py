"""Dynamical-system definitions and the builtin catalog.

A :class:`SystemDef` bundles a vector field (flow) or map with its parameters
and optional analytic Jacobian and divergence. Builtins are written once as
sympy expressions; numeric evaluators, Jacobians and divergences are derived
by ``lambdify`` so they always agree with the symbolic form that the
manifold and normal-form code expand exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np
import sympy as sp

from .errors import DimensionMismatch, UnknownParam, UnknownSystem

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ParamSpec:
    name: str
    default: object
    range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.range is not None:
            lo, hi = self.range
            if not lo <= float(self.default) <= hi:
                raise ValueError(f"default of {self.name} outside its range")


@dataclass(frozen=True)
class SystemDef:
    """A flow (x' = f(x)) or a map (x -> F(x)).

    ``evaluator`` returns the raw field; for maps with circle coordinates the
    raw output is not reduced (use :func:`evaluate` for reduced values). For
    non-autonomous flows the evaluator and Jacobian take ``(x, t)``.
    """

    name: str
    kind: str
    dim: int
    params: Mapping[str, float]
    evaluator: Callable
    jacobian: Callable | None = None
    divergence: Callable | None = None
    periodic_coords: tuple[tuple[int, float], ...] = ()
    nonautonomous: bool = False
    breakpoint_period: float | None = None
    exact_params: Mapping[str, Fraction] = field(default_factory=dict)
    symbolic: Callable | None = None
    param_field: Callable | None = None
    param_jacobian: Callable | None = None
    state_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("flow", "map"):
            raise ValueError("kind must be 'flow' or 'map'")
        if self.dim < 1:
            raise ValueError("dim must be positive")

    def with_params(self, **overrides) -> "SystemDef":
        """Fresh system with some parameters replaced."""
        if self.name in BUILTINS:
            merged = dict(self.exact_params) if self.exact_params else dict(self.params)
            for k in overrides:
                if k not in self.params:
                    raise UnknownParam(f"{self.name} has no parameter {k!r}", param=k)
            merged.update(overrides)
            return build_builtin(self.name, merged)
        if self.param_field is None:
            raise UnknownParam("system has no parametric form")
        for k in overrides:
            if k not in self.params:
                raise UnknownParam(f"{self.name} has no parameter {k!r}", param=k)
        p = dict(self.params)
        p.update({k: float(v) for k, v in overrides.items()})
        pf = self.param_field
        return replace(self, params=p, evaluator=lambda x, _p=p: pf(x, _p),
                       jacobian=None, divergence=None, symbolic=None, exact_params={})

    @property
    def has_symbolic(self) -> bool:
        return self.symbolic is not None


# ---------------------------------------------------------------------------
# builtin catalog


@dataclass(frozen=True)
class _Builtin:
    name: str
    kind: str
    dim: int
    params: tuple[ParamSpec, ...]
    field: Callable | None = None  # (x_syms, p_syms, sympy) -> list of exprs
    periodic: tuple[tuple[int, float], ...] = ()
    states: tuple[str, ...] = ()
    custom: Callable | None = None  # (params: dict) -> SystemDef for hand-coded systems


F = Fraction


def _standard_map(x, p, m):
    q, mom = x
    p1 = mom - p["eps"] * m.sin(q)
    return [q + p1, p1]


def _lorenz(x, p, m):
    X, Y, Z = x
    return [p["sigma"] * (Y - X), p["r"] * X - Y - X * Z, -p["b"] * Z + X * Y]


def _logistic(x, p, m):
    return [p["lam"] * x[0] * (1 - x[0])]


def _henon(x, p, m):
    return [1 - p["lam"] * x[0] ** 2 + x[1], p["b"] * x[0]]


def _duffing_forced(x, p, m):
    return [x[1], x[0] - x[0] ** 3 + p["eps"] * m.sin(2 * m.pi * x[2]), 1]


def _duffing(x, p, m):
    return [x[1], x[0] - x[0] ** 3]


def _van_der_pol(x, p, m):
    return [x[1] + p["lam"] * x[0] - x[0] ** 3 / 3, -x[0]]


def _pitchfork_demo(x, p, m):
    return [p["lam"] * x[0] - x[0] ** 3, -x[1]]


def _center_example(x, p, m):
    y, z = x
    return [-y + p["c"] * z ** 2, y * z - z ** 3]


def _unstable_example(x, p, m):
    return [x[0], -x[1] + x[0] ** 2]


def _resonant_example(x, p, m):
    return [2 * x[0] + x[1] ** 2, x[1]]


def _fold_demo(x, p, m):
    return [p["lam"] - x[0] ** 2]


def _hopf_normal(x, p, m):
    u, v = x
    r2 = u ** 2 + v ** 2
    return [p["lam"] * u - v - u * r2, u + p["lam"] * v - v * r2]


def _blowup(x, p, m):
    return [x[0] ** 2]


def _rotation(x, p, m):
    return [-x[1], x[0]]


BUILTINS: dict[str, _Builtin] = {}


def _register(b: _Builtin):
    BUILTINS[b.name] = b


_register(_Builtin("standard_map", "map", 2, (ParamSpec("eps", F(1)),), _standard_map,
                   periodic=((0, TWO_PI),), states=("q", "p")))
_register(_Builtin("lorenz", "flow", 3,
                   (ParamSpec("sigma", F(10)), ParamSpec("b", F(8, 3)), ParamSpec("r", F(28))),
                   _lorenz, states=("X", "Y", "Z")))
_register(_Builtin("logistic", "map", 1, (ParamSpec("lam", F(4), (0.0, 4.0)),), _logistic))
_register(_Builtin("henon", "map", 2, (ParamSpec("lam", F(7, 5)), ParamSpec("b", F(3, 10))), _henon))
_register(_Builtin("duffing_forced", "flow", 3, (ParamSpec("eps", F(1, 10)),), _duffing_forced,
                   periodic=((2, 1.0),)))
_register(_Builtin("duffing", "flow", 2, (), _duffing))
_register(_Builtin("van_der_pol", "flow", 2, (ParamSpec("lam", F(1)),), _van_der_pol))
_register(_Builtin("pitchfork_demo", "flow", 2, (ParamSpec("lam", F(1)),), _pitchfork_demo))
_register(_Builtin("center_example", "flow", 2, (ParamSpec("c", F(1, 2)),), _center_example,
                   states=("y", "z")))
_register(_Builtin("unstable_example", "flow", 2, (), _unstable_example))
_register(_Builtin("resonant_example", "flow", 2, (), _resonant_example))
_register(_Builtin("fold_demo", "flow", 1, (ParamSpec("lam", F(1)),), _fold_demo))
_register(_Builtin("hopf_normal", "flow", 2, (ParamSpec("lam", F(1, 10)),), _hopf_normal))
_register(_Builtin("blowup", "flow", 1, (), _blowup))
_register(_Builtin("rotation", "flow", 2, (), _rotation))


def _tent_custom(slope: int):
    def build(params: dict, name: str) -> SystemDef:
        def f(x):
            x0 = float(x[0])
            return np.array([slope * x0 if x0 <= 0.5 else slope - slope * x0])

        def jac(x):
            return np.array([[float(slope) if float(x[0]) <= 0.5 else -float(slope)]])

        return SystemDef(name=name, kind="map", dim=1, params={}, evaluator=f, jacobian=jac,
                         state_names=("x",))
    return build


def _hill_custom(params: dict, name: str) -> SystemDef:
    T = float(params["T"])
    Om = float(params["Omega"])

    def omega(t: float) -> float:
        # first half of each period uses Omega, second half uses 1
        s = math.fmod(t, T)
        if s < 0:
            s += T
        return Om if s < 0.5 * T else 1.0

    def f(x, t):
        w = omega(t)
        return np.array([x[1], -w * w * x[0]])

    def jac(x, t):
        w = omega(t)
        return np.array([[0.0, 1.0], [-w * w, 0.0]])

    def div(x, t=0.0):
        return 0.0

    def pf(x, p, t=0.0):
        return _hill_custom(p, name).evaluator(x, t)

    return SystemDef(name=name, kind="flow", dim=2, params={"T": T, "Omega": Om}, evaluator=f,
                     jacobian=jac, divergence=div, nonautonomous=True, breakpoint_period=0.5 * T,
                     exact_params={k: _to_fraction(v) for k, v in params.items()},
                     param_field=pf)


BUILTINS["tent"] = _Builtin("tent", "map", 1, (), custom=_tent_custom(2))
BUILTINS["tent3"] = _Builtin("tent3", "map", 1, (), custom=_tent_custom(3))
BUILTINS["hill"] = _Builtin("hill", "flow", 2,
                            (ParamSpec("T", math.pi), ParamSpec("Omega", F(2))),
                            custom=_hill_custom)
BUILTINS["linear"] = _Builtin("linear", "flow", 1, (), custom=None)
BUILTINS["linear_map"] = _Builtin("linear_map", "map", 1, (), custom=None)

BUILTIN_NAMES = tuple(sorted(BUILTINS))


def _to_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, sp.Rational):
        return Fraction(int(v.p), int(v.q))
    # decimal reading of a float is what a user typing 0.1 means
    return Fraction(repr(float(v)))


def _sym(v: Fraction):
    return sp.Rational(v.numerator, v.denominator)


@lru_cache(maxsize=None)
def _compiled(name: str):
    """Lambdified field/Jacobian/divergence for a builtin, params as arguments."""
    b = BUILTINS[name]
    xs = sp.symbols(f"x1:{b.dim + 1}", real=True)
    ps = sp.symbols([f"p_{s.name}" for s in b.params], real=True) if b.params else []
    pmap = {s.name: sym for s, sym in zip(b.params, ps)}
    exprs = [sp.sympify(e) for e in b.field(xs, pmap, sp)]
    J = sp.Matrix(exprs).jacobian(xs)
    div = sp.simplify(sum(J[i, i] for i in range(b.dim)))
    dpar = sp.Matrix(exprs).jacobian(ps) if ps else None
    args = [list(xs), list(ps)]
    f = sp.lambdify(args, exprs, modules="math")
    jf = sp.lambdify(args, J.tolist(), modules="math")
    df = sp.lambdify(args, div, modules="math")
    pf = sp.lambdify(args, dpar.tolist(), modules="math") if dpar is not None else None
    return xs, ps, exprs, f, jf, df, pf


def _linear_system(name: str, params: Mapping) -> SystemDef:
    if "A" in params:
        A = np.atleast_2d(np.array(params["A"], dtype=object))
    else:
        A = np.array([[F(-1)]], dtype=object)
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch("linear system matrix must be square")
    for k in params:
        if k == "A":
            continue
        if len(k) == 3 and k[0] == "a" and k[1:].isdigit():
            i, j = int(k[1]) - 1, int(k[2]) - 1
            if not (0 <= i < n and 0 <= j < n):
                raise UnknownParam(f"{name} has no parameter {k!r}", param=k)
            A[i, j] = params[k]
        else:
            raise UnknownParam(f"{name} has no parameter {k!r}", param=k)
    Aex = [[_to_fraction(v) for v in row] for row in A]
    Af = np.array([[float(v) for v in row] for row in Aex])
    kind = "map" if name == "linear_map" else "flow"
    flat = {f"a{i + 1}{j + 1}": float(Af[i, j]) for i in range(n) for j in range(n)}
    exact = {f"a{i + 1}{j + 1}": Aex[i][j] for i in range(n) for j in range(n)}

    def sym_field(xs, pvals=None):
        pv = pvals or {}

        def entry(i, j):
            v = pv.get(f"a{i + 1}{j + 1}", Aex[i][j])
            return v if isinstance(v, sp.Basic) else _sym(_to_fraction(v))
        M = sp.Matrix([[entry(i, j) for j in range(n)] for i in range(n)])
        return list(M * sp.Matrix(xs))

    def pfield(x, p):
        M = np.array([[p[f"a{i + 1}{j + 1}"] for j in range(n)] for i in range(n)])
        return M @ np.asarray(x, dtype=float)

    def pjac(x, p, names):
        x = np.asarray(x, dtype=float)
        cols = []
        for nm in names:
            i, j = int(nm[1]) - 1, int(nm[2]) - 1
            c = np.zeros(n)
            c[i] = x[j]
            cols.append(c)
        return np.array(cols).T

    tr = float(np.trace(Af))
    return SystemDef(
        name=name, kind=kind, dim=n, params=flat,
        evaluator=lambda x: Af @ np.asarray(x, dtype=float),
        jacobian=lambda x: Af.copy(),
        divergence=lambda x: tr,
        exact_params=exact, symbolic=sym_field, param_field=pfield, param_jacobian=pjac,
        state_names=tuple(f"x{i + 1}" for i in range(n)),
    )


def build_builtin(name: str, overrides: Mapping | None = None) -> SystemDef:
    """Construct a builtin system with optional parameter overrides."""
    overrides = dict(overrides or {})
    if name not in BUILTINS:
        raise UnknownSystem(f"unknown system {name!r}", name=name)
    b = BUILTINS[name]
    if name in ("linear", "linear_map"):
        return _linear_system(name, overrides)
    declared = {s.name: s for s in b.params}
    for k in overrides:
        if k not in declared:
            raise UnknownParam(f"{name} has no parameter {k!r}", param=k)
    exact = {s.name: _to_fraction(overrides.get(s.name, s.default)) for s in b.params}
    for k, v in exact.items():
        rng = declared[k].range
        if rng is not None and not rng[0] <= float(v) <= rng[1]:
            raise UnknownParam(f"parameter {k}={float(v)} outside range {rng}", param=k)
    if b.custom is not None:
        return b.custom(exact, name)

    xs, ps, exprs, f, jf, df, pf = _compiled(name)
    pvals = [float(exact[s.name]) for s in b.params]
    names = [s.name for s in b.params]
    n = b.dim

    def evaluator(x, _p=pvals):
        return np.array(f(list(map(float, x)), _p), dtype=float)

    def jacobian(x, _p=pvals):
        return np.array(jf(list(map(float, x)), _p), dtype=float).reshape(n, n)

    def divergence(x, _p=pvals):
        return float(df(list(map(float, x)), _p))

    def sym_field(syms, pvals_exact=None):
        pe = dict(exact)
        pe.update(pvals_exact or {})
        sub = {sym: (pe[nm] if isinstance(pe[nm], sp.Basic) else _sym(_to_fraction(pe[nm])))
               for sym, nm in zip(ps, names)}
        rep = dict(zip(xs, syms))
        return [sp.sympify(e).xreplace(sub).xreplace(rep) for e in exprs]

    def param_field(x, p):
        return np.array(f(list(map(float, x)), [float(p[nm]) for nm in names]), dtype=float)

    def param_jacobian(x, p, which):
        full = np.array(pf(list(map(float, x)), [float(p[nm]) for nm in names]), dtype=float)
        full = full.reshape(n, len(names))
        return full[:, [names.index(w) for w in which]]

    return SystemDef(
        name=name, kind=b.kind, dim=n,
        params={k: float(v) for k, v in exact.items()},
        evaluator=evaluator, jacobian=jacobian, divergence=divergence,
        periodic_coords=b.periodic, exact_params=exact, symbolic=sym_field,
        param_field=param_field, param_jacobian=param_jacobian if pf else None,
        state_names=b.states or tuple(f"x{i + 1}" for i in range(n)),
    )


def custom_system(name: str, kind: str, dim: int, evaluator: Callable, jacobian: Callable | None = None,
                  params: Mapping[str, float] | None = None, param_field: Callable | None = None,
                  periodic_coords=()) -> SystemDef:
    """Wrap a user-supplied evaluator as a SystemDef."""
    return SystemDef(name=name, kind=kind, dim=dim, params=dict(params or {}), evaluator=evaluator,
                     jacobian=jacobian, param_field=param_field, periodic_coords=tuple(periodic_coords))


# ---------------------------------------------------------------------------
# evaluation helpers


def _check_dim(sys: SystemDef, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.dim,):
        raise DimensionMismatch(f"{sys.name} expects a state of length {sys.dim}, got shape {x.shape}",
                                expected=sys.dim)
    return x


def reduce_state(sys: SystemDef, x) -> np.ndarray:
    """Reduce circle coordinates into [0, period)."""
    x = np.array(x, dtype=float)
    for i, P in sys.periodic_coords:
        v = math.fmod(x[..., i], P) if np.ndim(x[..., i]) == 0 else np.fmod(x[..., i], P)
        v = np.where(v < 0, v + P, v)
        v = np.where(v >= P, v - P, v)
        x[..., i] = v
    return x


def state_difference(sys: SystemDef, a, b) -> np.ndarray:
    """a - b with shortest-arc differences on circle coordinates."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    for i, P in sys.periodic_coords:
        d[..., i] = d[..., i] - P * np.round(d[..., i] / P)
    return d


def state_distance(sys: SystemDef, a, b) -> float:
    return float(np.linalg.norm(state_difference(sys, a, b)))


def raw_field(sys: SystemDef, x, t: float = 0.0) -> np.ndarray:
    if sys.nonautonomous:
        return np.asarray(sys.evaluator(x, t), dtype=float)
    return np.asarray(sys.evaluator(x), dtype=float)


def evaluate(sys: SystemDef, x, t: float = 0.0) -> np.ndarray:
    """f(x) for flows, F(x) for maps with circle coordinates reduced."""
    x = _check_dim(sys, x)
    out = raw_field(sys, x, t)
    if out.shape != (sys.dim,):
        raise DimensionMismatch("evaluator output has wrong dimension")
    if sys.kind == "map" and sys.periodic_coords:
        out = reduce_state(sys, out)
    return out


def fd_steps(x: np.ndarray) -> np.ndarray:
    return np.maximum(1e-6, 1e-6 * np.abs(x))


def finite_difference_jacobian(fun: Callable, x, h=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = fd_steps(x) if h is None else h
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h[i]))
    return np.array(cols).T


def jacobian_at(sys: SystemDef, x, t: float = 0.0) -> np.ndarray:
    """Analytic Jacobian when declared, else central differences."""
    x = _check_dim(sys, x)
    if sys.jacobian is not None:
        J = sys.jacobian(x, t) if sys.nonautonomous else sys.jacobian(x)
        return np.asarray(J, dtype=float).reshape(sys.dim, sys.dim)
    return finite_difference_jacobian(lambda y: raw_field(sys, y, t), x)


def divergence_at(sys: SystemDef, x, t: float = 0.0) -> float:
    if sys.divergence is not None:
        return float(sys.divergence(x, t) if sys.nonautonomous else sys.divergence(x))
    return float(np.trace(jacobian_at(sys, x, t)))


def param_jacobian_at(sys: SystemDef, x, names: Sequence[str]) -> np.ndarray:
    """Columns d f / d p for the named parameters."""
    for nm in names:
        if nm not in sys.params:
            raise UnknownParam(f"{sys.name} has no parameter {nm!r}", param=nm)
    if sys.param_jacobian is not None:
        return np.asarray(sys.param_jacobian(np.asarray(x, dtype=float), sys.params, list(names)))
    if sys.param_field is None:
        raise UnknownParam("system has no parametric form")
    cols = []
    for nm in names:
        v = sys.params[nm]
        h = max(1e-6, 1e-6 * abs(v))
        pp = dict(sys.params)
        pm = dict(sys.params)
        pp[nm] = v + h
        pm[nm] = v - h
        cols.append((np.asarray(sys.param_field(x, pp)) - np.asarray(sys.param_field(x, pm))) / (2 * h))
    return np.array(cols).T


def symbolic_field(sys: SystemDef, syms=None):
    """Exact sympy field (params as rationals) or None for opaque systems."""
    if sys.symbolic is None:
        return None
    if syms is None:
        syms = sp.symbols(f"x1:{sys.dim + 1}", real=True)
    return sys.symbolic(list(syms))


def divergence_exact(sys: SystemDef):
    """Symbolic divergence with exact parameters (flows with symbolic form)."""
    syms = sp.symbols(f"x1:{sys.dim + 1}", real=True)
    exprs = symbolic_field(sys, syms)
    if exprs is None:
        return None
    return sp.simplify(sum(sp.diff(e, s) for e, s in zip(exprs, syms)))


# ---------------------------------------------------------------------------
# conservativity


@dataclass(frozen=True)
class ConservativityReport:
    verdict: str  # conservative | dissipative | neither
    witnesses: tuple[float, ...]
    quantity: str  # "divergence" or "|det DF|"


def conservativity_report(sys: SystemDef, samples: Sequence, tol: float = 1e-10) -> ConservativityReport:
    """Classify a system from divergence (flows) or |det DF| (maps) at samples."""
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    if sys.kind == "flow":
        w = [divergence_at(sys, np.asarray(s, dtype=float)) for s in samples]
        if all(abs(v) <= tol for v in w):
            verdict = "conservative"
        elif all(v < -tol for v in w):
            verdict = "dissipative"
        else:
            verdict = "neither"
        return ConservativityReport(verdict, tuple(w), "divergence")
    w = [abs(float(np.linalg.det(jacobian_at(sys, np.asarray(s, dtype=float))))) for s in samples]
    if all(abs(v - 1.0) <= tol for v in w):
        verdict = "conservative"
    elif all(v < 1.0 - tol for v in w):
        verdict = "dissipative"
    else:
        verdict = "neither"
    return ConservativityReport(verdict, tuple(w), "|det DF|")
