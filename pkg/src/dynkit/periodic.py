"""Poincare sections, periodic orbits, Floquet multipliers and period doubling."""

from __future__ import annotations

import cmath
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import sympy as sp
from scipy.optimize import brentq

from .dynamics import DEFAULT_OPTS, FlowOptions, _require, fmt, make_integrator, variational_flow
from .errors import (
    CascadeLost,
    CollapsedToEquilibrium,
    NoConvergence,
    NonFiniteState,
    NoReturn,
    NotCritical,
    StepLimitExceeded,
    TangentialCrossing,
)
from .systems import SystemDef, _check_dim, jacobian_at, raw_field, reduce_state, state_difference
from .util import max_workers

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# sections and the Poincare map


@dataclass(frozen=True)
class SectionDef:
    anchor: np.ndarray
    normal: np.ndarray
    direction: str = "positive"  # positive | negative | both
    t_min_return: float = 1e-3
    t_max_return: float = 100.0

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        nn = float(np.linalg.norm(n))
        if nn == 0:
            raise ValueError("section normal must be nonzero")
        object.__setattr__(self, "normal", n / nn)
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float))
        if self.direction not in ("positive", "negative", "both"):
            raise ValueError("direction must be positive, negative or both")
        if not 0 < self.t_min_return < self.t_max_return:
            raise ValueError("need 0 < t_min_return < t_max_return")

    def value(self, sys: SystemDef, x) -> float:
        return float(np.dot(state_difference(sys, x, self.anchor), self.normal))


TRANSVERSE_TOL = 1e-8


def poincare_map(sys: SystemDef, sec: SectionDef, x, opts: FlowOptions = DEFAULT_OPTS,
                 on_section_tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """First return of x to the section: (image, return time)."""
    _require(sys, "flow")
    x = _check_dim(sys, x)
    if abs(sec.value(sys, x)) > on_section_tol:
        raise ValueError("initial point is not on the section")
    if abs(float(np.dot(raw_field(sys, x), sec.normal))) <= TRANSVERSE_TOL:
        raise TangentialCrossing("flow is tangent to the section at the initial point")
    integ = make_integrator(sys, opts)
    sgn = {"positive": 1, "negative": -1, "both": 0}[sec.direction]
    jump = 0.25 * min((P for _, P in sys.periodic_coords), default=math.inf)
    try:
        for tp, yp, tn, yn in integ.steps(0.0, x, sec.t_max_return):
            if tn < sec.t_min_return:
                continue
            gp, gn = sec.value(sys, yp), sec.value(sys, yn)
            if abs(gn - gp) > jump:  # wrap of a circle coordinate, not a crossing
                continue
            up = gp < 0 <= gn
            down = gp > 0 >= gn
            if not ((sgn > 0 and up) or (sgn < 0 and down) or (sgn == 0 and (up or down))):
                continue
            if gn == 0:
                s = tn - tp
            else:
                s = brentq(lambda h: sec.value(sys, integ.step_exact(tp, yp, h)), 0.0, tn - tp,
                           xtol=1e-13, rtol=4 * np.finfo(float).eps)
            tc = tp + s
            if tc < sec.t_min_return:
                continue
            xc = integ.step_exact(tp, yp, s)
            if abs(float(np.dot(raw_field(sys, xc, tc), sec.normal))) <= TRANSVERSE_TOL:
                raise TangentialCrossing("tangential crossing of the section", t=tc)
            return reduce_state(sys, xc), float(tc)
    except (StepLimitExceeded, NonFiniteState) as e:
        raise NoReturn(f"orbit left the domain before returning: {e}") from e
    raise NoReturn(f"no return within t_max_return={sec.t_max_return}")


def poincare_jacobian(sys: SystemDef, sec: SectionDef, x, opts: FlowOptions = DEFAULT_OPTS,
                      basis: np.ndarray | None = None, h: float = 1e-6) -> np.ndarray:
    """Jacobian of the section map in an orthonormal basis of the section plane (central differences)."""
    x = np.asarray(x, dtype=float)
    if basis is None:
        basis = section_basis(sec.normal)
    cols = []
    for e in basis:
        xp, _ = poincare_map(sys, sec, x + h * e, opts)
        xm, _ = poincare_map(sys, sec, x - h * e, opts)
        d = state_difference(sys, xp, xm) / (2 * h)
        cols.append([float(np.dot(d, b)) for b in basis])
    return np.array(cols).T


def section_basis(normal: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the plane orthogonal to normal (rows)."""
    n = np.asarray(normal, dtype=float)
    Q, _ = np.linalg.qr(np.column_stack([n, np.eye(len(n))]))
    return Q[:, 1:len(n)].T


# ---------------------------------------------------------------------------
# periodic orbits


@dataclass(frozen=True)
class PeriodicOrbit:
    x0: np.ndarray
    T: float
    residual: float


def find_periodic_orbit(sys: SystemDef, x_guess, T_guess: float, opts: FlowOptions | None = None,
                        tol: float = 1e-9, max_iter: int = 40) -> PeriodicOrbit:
    """Newton on (phi_T(x) - x, <f(x_guess), x - x_guess>) = 0."""
    _require(sys, "flow")
    opts = opts or FlowOptions(abs_tol=1e-12, rel_tol=1e-12)
    xg = _check_dim(sys, x_guess)
    fg = raw_field(sys, xg)
    if float(np.linalg.norm(fg)) < 1e-8:
        raise CollapsedToEquilibrium("guess is an equilibrium", x=list(xg))
    n = sys.dim
    x, T = xg.copy(), _return_time_guess(sys, xg, fg, float(T_guess), opts)

    def G(x, T):
        vr = variational_flow(sys, x, T, opts=opts)
        xT = x + state_difference(sys, vr.x_final, reduce_state(sys, x))
        return np.concatenate([xT - x, [float(np.dot(fg, x - xg))]]), vr, xT

    try:
        r, vr, xT = G(x, T)
        nr = float(np.linalg.norm(r))
        for _ in range(max_iter):
            if nr <= tol:
                break
            if float(np.linalg.norm(raw_field(sys, x))) < 1e-8:
                raise CollapsedToEquilibrium("orbit refinement collapsed to an equilibrium", x=list(x))
            M = np.zeros((n + 1, n + 1))
            M[:n, :n] = vr.U - np.eye(n)
            M[:n, n] = raw_field(sys, xT)
            M[n, :n] = fg
            # families of orbits (centers) make M singular; take the minimum-norm step then
            d = np.linalg.lstsq(M, -r, rcond=1e-12)[0]
            a = 1.0
            for _ in range(20):
                Tn = T + a * d[n]
                if Tn > 0.2 * T_guess:
                    xn = x + a * d[:n]
                    try:
                        rn, vrn, xTn = G(xn, Tn)
                        nrn = float(np.linalg.norm(rn))
                    except (StepLimitExceeded, NonFiniteState):
                        nrn = math.inf
                    if nrn < nr:
                        break
                a *= 0.5
            else:
                raise NoConvergence("orbit refinement stalled", residual=nr)
            x, T, r, vr, xT, nr = xn, Tn, rn, vrn, xTn, nrn
            if T > 50 * max(T_guess, 1.0) or T < 0.25 * T_guess:
                raise NoConvergence("period diverged during refinement", T=T)
    except NoConvergence:
        if _collapses(sys, xg, T_guess, opts):
            raise CollapsedToEquilibrium("trajectory from the guess settles on an equilibrium", x=list(xg))
        raise
    if nr > tol:
        if _collapses(sys, xg, T_guess, opts):
            raise CollapsedToEquilibrium("trajectory from the guess settles on an equilibrium", x=list(xg))
        raise NoConvergence(f"orbit refinement residual {nr:.3g} > {tol}", residual=nr)
    if float(np.linalg.norm(raw_field(sys, x))) < 1e-8:
        raise CollapsedToEquilibrium("converged point is an equilibrium", x=list(x))
    return PeriodicOrbit(reduce_state(sys, x), T, nr)


def _return_time_guess(sys: SystemDef, xg: np.ndarray, fg: np.ndarray, T_guess: float,
                       opts: FlowOptions) -> float:
    """Improve T from the closest return to the phase plane within (0.1 T, 2 T]."""
    from .dynamics import integrate_until_event

    try:
        cr = integrate_until_event(sys, xg, lambda y: float(np.dot(fg, state_difference(sys, y, xg))),
                                   t_max=2 * T_guess, direction=1, t_min=0.1 * T_guess, opts=opts,
                                   max_events=50)
    except (StepLimitExceeded, NonFiniteState):
        return T_guess
    if not cr:
        return T_guess
    best = min(cr, key=lambda c: float(np.linalg.norm(state_difference(sys, c.x, xg))))
    return float(best.t)


def _collapses(sys: SystemDef, x0, T_guess: float, opts: FlowOptions) -> bool:
    """Does the forward orbit settle on an equilibrium (|f| < 1e-8) within a long horizon?"""
    integ = make_integrator(sys, opts)
    y = np.asarray(x0, dtype=float)
    t, horizon = 0.0, max(200.0, 100.0 * T_guess)
    step = max(T_guess, 1.0)
    try:
        while t < horizon:
            y = integ.advance(t, y, t + step)
            t += step
            if float(np.linalg.norm(raw_field(sys, y))) < 1e-8:
                return True
    except (StepLimitExceeded, NonFiniteState):
        return False
    return False


# ---------------------------------------------------------------------------
# monodromy


@dataclass(frozen=True)
class MonodromyResult:
    U_T: np.ndarray
    multipliers: tuple[complex, ...]
    exponents: tuple[complex, ...]
    trivial_residual: float
    T: float

    def to_json(self) -> dict:
        return {
            "T": self.T,
            "U_T": self.U_T.tolist(),
            "multipliers": [{"re": m.real, "im": m.imag} for m in self.multipliers],
            "exponents": [{"re": e.real, "im": e.imag} for e in self.exponents],
            "trivial_residual": self.trivial_residual,
        }


def _principal_exponent(mu: complex, T: float) -> complex:
    mu = complex(mu)
    if mu.imag == 0.0:
        mu = complex(mu.real, 0.0)  # negative reals map to +i*pi
    return cmath.log(mu) / T


def _monodromy_from(U: np.ndarray, T: float, mults=None) -> MonodromyResult:
    mu = np.linalg.eigvals(U) if mults is None else np.asarray(mults)
    mu = tuple(sorted((complex(m) for m in mu), key=lambda z: (-abs(z), -z.real, -z.imag)))
    exps = tuple(_principal_exponent(m, T) for m in mu)
    triv = float(min(abs(m - 1) for m in mu))
    return MonodromyResult(np.asarray(U), mu, exps, triv, float(T))


def monodromy(sys: SystemDef, x0, T: float, opts: FlowOptions | None = None) -> MonodromyResult:
    """Principal solution over one period and its Floquet data."""
    _require(sys, "flow")
    opts = opts or FlowOptions(abs_tol=1e-12, rel_tol=1e-12)
    vr = variational_flow(sys, x0, T, opts=opts)
    return _monodromy_from(vr.U, T)


def _rot(w: float, t: float) -> np.ndarray:
    c, s = math.cos(w * t), math.sin(w * t)
    return np.array([[c, s / w], [-w * s, c]])


def hill_monodromy(T: float, Omega: float) -> MonodromyResult:
    """Closed-form monodromy of x'' + w(t)^2 x = 0 with w = Omega then 1 on half periods."""
    if T <= 0 or Omega <= 0:
        raise ValueError("T and Omega must be positive")
    M = _rot(1.0, T / 2) @ _rot(Omega, T / 2)
    tr = float(np.trace(M))
    det = float(np.linalg.det(M))
    disc = cmath.sqrt(tr * tr - 4 * det)
    mults = ((tr + disc) / 2, (tr - disc) / 2)
    return _monodromy_from(M, T, mults)


def hill_chart(T: float = math.pi, omegas: Sequence[float] | None = None) -> list[tuple]:
    """Rows (Omega, trace, exponents) over a grid of Omega."""
    omegas = np.linspace(0.1, 4.0, 79) if omegas is None else omegas

    def row(om):
        m = hill_monodromy(T, float(om))
        e = m.exponents
        return (float(om), float(np.trace(m.U_T)), e[0].real, e[0].imag, e[1].real, e[1].imag)

    with ThreadPoolExecutor(max_workers()) as ex:
        return list(ex.map(row, omegas))


def hill_chart_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("Omega,trace,exp_re_1,exp_im_1,exp_re_2,exp_im_2\n")
    for r in rows:
        buf.write(",".join(fmt(v) for v in r) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# period-doubling cascade of a 1D family


@dataclass(frozen=True)
class CascadeResult:
    lambdas: tuple[float, ...]
    deltas: tuple[float, ...]
    accumulation_estimate: float | None
    superstable: tuple[float, ...] = ()

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,lambda_n,delta_n\n")
        for i, lam in enumerate(self.lambdas):
            n = i + 1
            d = self.deltas[n - 2] if 2 <= n <= len(self.deltas) + 1 else None
            buf.write(f"{n},{fmt(lam)},{'' if d is None else fmt(d)}\n")
        return buf.getvalue()


class _Family:
    """Fast scalar access to F(x; lam) and dF/dx for a 1D map family."""

    def __init__(self, sys: SystemDef, param: str):
        if sys.kind != "map" or sys.dim != 1:
            raise ValueError("cascade needs a one-dimensional map family")
        if param not in sys.params:
            raise ValueError(f"unknown parameter {param!r}")
        self.sys, self.param = sys, param
        self._cache: dict[float, SystemDef] = {}

    def at(self, lam: float) -> SystemDef:
        s = self._cache.get(lam)
        if s is None:
            s = self.sys.with_params(**{self.param: lam})
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[lam] = s
        return s

    def orbit(self, x: float, lam: float, p: int) -> tuple[np.ndarray, float]:
        """Points x_0..x_{p-1}, the image x_p and the multiplier prod F'(x_i)."""
        s = self.at(lam)
        pts = np.empty(p + 1)
        pts[0] = x
        m = 1.0
        for i in range(p):
            xi = np.array([pts[i]])
            m *= float(jacobian_at(s, xi)[0, 0])
            pts[i + 1] = float(raw_field(s, xi)[0])
        return pts, m


def _cycle_newton(fam: _Family, x: float, lam: float, p: int, tol: float = 1e-14) -> tuple[float, float]:
    """Refine a p-cycle point; returns (x, multiplier)."""
    for _ in range(60):
        pts, m = fam.orbit(x, lam, p)
        r = pts[p] - x
        if not math.isfinite(r) or m == 1.0:
            break
        dx = -r / (m - 1.0)
        x += dx
        if abs(dx) <= tol * max(1.0, abs(x)):
            pts, m = fam.orbit(x, lam, p)
            return x, m
    raise CascadeLost(f"lost the period-{p} cycle at lambda={lam}", period=p, lam=lam)


def _critical_point(fam: _Family, lam: float, x_range: tuple[float, float]) -> float:
    s = fam.at(lam)
    xs = np.linspace(x_range[0], x_range[1], 401)
    d = [float(jacobian_at(s, np.array([v]))[0, 0]) for v in xs]
    for i in range(len(xs) - 1):
        if d[i] == 0:
            return float(xs[i])
        if d[i] * d[i + 1] < 0:
            return brentq(lambda v: float(jacobian_at(s, np.array([v]))[0, 0]), xs[i], xs[i + 1], xtol=1e-15)
    raise CascadeLost("no critical point found in the state range")


def period_doubling_cascade(sys: SystemDef, param: str, lam_range: tuple[float, float], n_max: int = 6,
                            x_range: tuple[float, float] = (0.0, 1.0), critical_point: float | None = None,
                            lam_tol: float = 1e-10) -> CascadeResult:
    """Parameter values where the 2^(n-1)-cycle loses stability through -1.

    Each cycle is picked up at its superstable parameter (the critical
    point lies on it), continued in lambda and bisected on the chain-rule
    multiplier prod F'(x_i) against -1.
    """
    fam = _Family(sys, param)
    lo, hi = map(float, lam_range)
    xc = critical_point if critical_point is not None else _critical_point(fam, 0.5 * (lo + hi), x_range)

    def g(lam, p):
        pts, _ = fam.orbit(xc, lam, p)
        return pts[p] - xc

    def first_root(a, step, p, limit):
        ga = g(a, p)
        while a < limit:
            b = min(a + step, limit)
            gb = g(b, p)
            if ga == 0:
                return a
            if ga * gb < 0:
                return brentq(lambda l: g(l, p), a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            a, ga = b, gb
        raise CascadeLost(f"no superstable period-{p} parameter found", period=p)

    lambdas: list[float] = []
    sup: list[float] = []
    p = 1
    # superstable fixed point
    Lam = first_root(lo, (hi - lo) / 2000, 1, hi)
    for n in range(1, n_max + 1):
        sup.append(Lam)
        # continue the p-cycle from the superstable parameter until the multiplier passes -1
        x, m = _cycle_newton(fam, xc, Lam, p)
        a, xa = Lam, x
        step = (Lam - lambdas[-1]) if lambdas else (hi - lo) / 200
        b = a
        while True:
            b = min(b + step, hi)
            try:
                xb, mb = _cycle_newton(fam, xa, b, p)
            except CascadeLost:
                step *= 0.5
                b = a
                if step < lam_tol:
                    raise
                continue
            if mb < -1.0:
                break
            a, xa = b, xb
            if b >= hi:
                raise CascadeLost(f"period-{p} cycle did not lose stability inside the range", period=p)
            step *= 1.5
        while b - a > lam_tol:
            mid = 0.5 * (a + b)
            xm, mm = _cycle_newton(fam, xa, mid, p)
            if mm < -1.0:
                b = mid
            else:
                a, xa = mid, xm
        lam_n = 0.5 * (a + b)
        lambdas.append(lam_n)
        if n == n_max:
            break
        # next superstable parameter: first root of F^{2p}(xc) = xc after lam_n
        width = lam_n - (lambdas[-2] if len(lambdas) > 1 else sup[-1])
        Lam = first_root(lam_n + lam_tol, width / 64, 2 * p, hi)
        p *= 2
    deltas = tuple((lambdas[i] - lambdas[i - 1]) / (lambdas[i + 1] - lambdas[i]) for i in range(1, len(lambdas) - 1))
    acc = None
    if len(lambdas) >= 3:
        l0, l1, l2 = lambdas[-3:]
        den = (l2 - l1) - (l1 - l0)
        acc = l2 - (l2 - l1) ** 2 / den if den != 0 else l2
    return CascadeResult(tuple(lambdas), deltas, acc, tuple(sup))


# ---------------------------------------------------------------------------
# flip coefficients


@dataclass(frozen=True)
class FlipCoefficients:
    c01: float
    c11: float
    c20: float
    c30: float
    transversal: float  # c11 + c20 c01
    cubic: float  # c30 + c20^2
    transversal_ok: bool
    cubic_ok: bool
    schwartzian: float
    period2_stable: bool | None

    def predicted_u2(self, dlam: float) -> float | None:
        if not (self.transversal_ok and self.cubic_ok):
            return None
        return -self.transversal / self.cubic * dlam


def _derivs_symbolic(sys: SystemDef, param: str | None, x0: float, lam0: float):
    u = sp.Symbol("u")
    lam = sp.Symbol("lam_")
    pv = {param: lam} if param else None
    expr = sys.symbolic([u], pv)[0]
    at = {u: sp.Float(x0, 30), lam: sp.Float(lam0, 30)}
    d = lambda e: float(e.subs(at)) if isinstance(e, sp.Basic) else float(e)
    out = {
        "f1": d(sp.diff(expr, u)), "f2": d(sp.diff(expr, u, 2)), "f3": d(sp.diff(expr, u, 3)),
        "fl": d(sp.diff(expr, lam)) if param else 0.0,
        "ful": d(sp.diff(expr, u, lam)) if param else 0.0,
    }
    return out


def _derivs_fd(sys: SystemDef, param: str | None, x0: float, lam0: float):
    def F(x, lam):
        s = sys.with_params(**{param: lam}) if param else sys
        return float(raw_field(s, np.array([x]))[0])

    def rich(fun, h):
        # two-level Richardson extrapolation of a central-difference formula of order 2
        return (4 * fun(h / 2) - fun(h)) / 3

    h = 1e-2 * max(1.0, abs(x0))
    hl = 1e-3 * max(1.0, abs(lam0))
    f = lambda x: F(x, lam0)
    d1 = rich(lambda k: (f(x0 + k) - f(x0 - k)) / (2 * k), h)
    d2 = rich(lambda k: (f(x0 + k) - 2 * f(x0) + f(x0 - k)) / k ** 2, h)
    d3 = rich(lambda k: (f(x0 + 2 * k) - 2 * f(x0 + k) + 2 * f(x0 - k) - f(x0 - 2 * k)) / (2 * k ** 3), h)
    if param:
        fl = rich(lambda k: (F(x0, lam0 + k) - F(x0, lam0 - k)) / (2 * k), hl)
        ful = rich(lambda k: (F(x0 + k, lam0 + k) - F(x0 + k, lam0 - k) - F(x0 - k, lam0 + k)
                               + F(x0 - k, lam0 - k)) / (4 * k * k), hl)
    else:
        fl = ful = 0.0
    return {"f1": d1, "f2": d2, "f3": d3, "fl": fl, "ful": ful}


def flip_coefficients(sys: SystemDef, x_star: float, param: str | None = None, lam_c: float | None = None,
                      tol: float = 1e-6, generic_tol: float = 1e-8) -> FlipCoefficients:
    """Coefficients of u -> -u + c01 l + c11 u l + c20 u^2 + c30 u^3 at a flip point.

    u is the offset from x_star and l = lambda - lam_c.
    """
    if sys.kind != "map" or sys.dim != 1:
        raise ValueError("flip coefficients need a one-dimensional map")
    if param is not None and lam_c is not None:
        sys = sys.with_params(**{param: lam_c})
    lam0 = float(sys.params[param]) if param else 0.0
    x0 = float(x_star)
    try:
        if sys.symbolic is None:
            raise NotImplementedError
        d = _derivs_symbolic(sys, param, x0, lam0)
    except (NotImplementedError, TypeError, ValueError):
        d = _derivs_fd(sys, param, x0, lam0)
    if abs(d["f1"] + 1.0) > tol:
        raise NotCritical(f"derivative at the fixed point is {d['f1']:.8g}, not -1", derivative=d["f1"])
    c01, c11 = d["fl"], d["ful"]
    c20, c30 = d["f2"] / 2, d["f3"] / 6
    tr = c11 + c20 * c01
    cu = c30 + c20 ** 2
    S = d["f3"] / d["f1"] - 1.5 * (d["f2"] / d["f1"]) ** 2
    cu_ok = abs(cu) > generic_tol
    return FlipCoefficients(c01, c11, c20, c30, tr, cu, abs(tr) > generic_tol, cu_ok, S,
                            (cu > 0) if cu_ok else None)
