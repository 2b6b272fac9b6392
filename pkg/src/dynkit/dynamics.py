"""Time evolution: ODE integration, map iteration, tangent dynamics.

Two integrators are provided: fixed-step classical RK4 (bitwise reproducible
sweeps) and an adaptive Dormand-Prince 5(4) pair. Both expose a step
iterator so callers can watch for section crossings without dense output.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import NonFiniteState, StepLimitExceeded
from .systems import (
    SystemDef,
    _check_dim,
    divergence_at,
    jacobian_at,
    raw_field,
    reduce_state,
    state_distance,
)

BLOWUP_NORM = 1e12
MIN_STEP = 1e-14


@dataclass(frozen=True)
class FlowOptions:
    method: str = "rk45_adaptive"  # or "rk4_fixed"
    dt: float = 1e-2
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.method not in ("rk4_fixed", "rk45_adaptive"):
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.dt > 0 and self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("dt and tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


DEFAULT_OPTS = FlowOptions()

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_BSTAR = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _BSTAR
_ARows = [np.array(r) for r in _A]


class Integrator:
    """Stateful stepper for y' = F(t, y).

    ``segment_period`` marks points t = k*P where the field may jump; steps
    never straddle them and the field is evaluated strictly inside the
    current segment.
    """

    def __init__(self, F: Callable[[float, np.ndarray], np.ndarray], opts: FlowOptions = DEFAULT_OPTS,
                 segment_period: float | None = None):
        self.F = F
        self.opts = opts
        self.P = segment_period
        self.h = opts.dt
        self.nsteps = 0
        self._seg = None

    # -- field evaluation respecting segments
    def _f(self, t: float, y: np.ndarray) -> np.ndarray:
        if self._seg is not None:
            a, b = self._seg
            lo, hi = min(a, b), max(a, b)
            d = 1e-9 * (hi - lo)
            t = min(max(t, lo + d), hi - d)
        return self.F(t, y)

    def _segments(self, t0: float, t1: float) -> list[tuple[float, float]]:
        if self.P is None or t0 == t1:
            return [(t0, t1)]
        P = self.P
        sgn = 1.0 if t1 > t0 else -1.0
        pts = [t0]
        if sgn > 0:
            k = math.floor(t0 / P + 1e-12) + 1
            while k * P < t1 - 1e-12 * max(1.0, abs(t1)):
                if k * P > t0 + 1e-12 * max(1.0, abs(t0)):
                    pts.append(k * P)
                k += 1
        else:
            k = math.ceil(t0 / P - 1e-12) - 1
            while k * P > t1 + 1e-12 * max(1.0, abs(t1)):
                if k * P < t0 - 1e-12 * max(1.0, abs(t0)):
                    pts.append(k * P)
                k -= 1
        pts.append(t1)
        return list(zip(pts[:-1], pts[1:]))

    # -- single steps
    def rk4_step(self, t: float, y: np.ndarray, h: float) -> np.ndarray:
        f = self._f
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    def dp_step(self, t: float, y: np.ndarray, h: float, k1: np.ndarray | None = None):
        f = self._f
        K = np.empty((7, y.size))
        K[0] = f(t, y) if k1 is None else k1
        for i in range(1, 7):
            a = _ARows[i]
            K[i] = f(t + _C[i] * h, y + h * (a @ K[:i]))
        y5 = y + h * (_B[:6] @ K[:6])
        err = h * (_E @ K)
        return y5, err, K[6]

    def step_exact(self, t: float, y: np.ndarray, h: float) -> np.ndarray:
        """One untimed step of size h (used to refine event times)."""
        if self.opts.method == "rk4_fixed":
            return self.rk4_step(t, y, h)
        return self.dp_step(t, y, h)[0]

    # -- main loop
    def steps(self, t0: float, y0: np.ndarray, t1: float) -> Iterator[tuple[float, np.ndarray, float, np.ndarray]]:
        """Yield accepted steps (t_prev, y_prev, t, y) from t0 to t1."""
        y = np.array(y0, dtype=float)
        t = float(t0)
        for a, b in self._segments(float(t0), float(t1)):
            self._seg = (a, b) if self.P is not None else None
            t = a
            for item in self._steps_segment(t, y, b):
                yield item
                y = item[3]
            t = b
        self._seg = None

    def _check(self, y: np.ndarray, t: float):
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"non-finite state at t={t}", t=t)
        if np.linalg.norm(y) > BLOWUP_NORM:
            raise StepLimitExceeded(f"state norm exceeded {BLOWUP_NORM:g} at t={t}", t=t)

    def _steps_segment(self, t: float, y: np.ndarray, t1: float):
        opts = self.opts
        sgn = 1.0 if t1 >= t else -1.0
        span = abs(t1 - t)
        if span == 0:
            return
        if opts.method == "rk4_fixed":
            n = max(1, int(math.ceil(span / opts.dt - 1e-9)))
            h = sgn * span / n
            for i in range(n):
                tn = t1 if i == n - 1 else t + h
                y_new = self.rk4_step(t, y, tn - t)
                self.nsteps += 1
                if self.nsteps > opts.max_steps:
                    raise StepLimitExceeded("max_steps exceeded", t=tn)
                self._check(y_new, tn)
                yield t, y, tn, y_new
                t, y = tn, y_new
            return
        h = min(abs(self.h), span)
        k1 = None
        while sgn * (t1 - t) > 0:
            rem = abs(t1 - t)
            last = h >= rem * (1 - 1e-12)
            hs = sgn * (rem if last else h)
            y_new, err, k7 = self.dp_step(t, y, hs, k1)
            self.nsteps += 1
            if self.nsteps > opts.max_steps:
                raise StepLimitExceeded("max_steps exceeded", t=t)
            if not np.all(np.isfinite(y_new)):
                en = np.inf
            else:
                sc = opts.abs_tol + opts.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
                en = float(np.sqrt(np.mean((err / sc) ** 2)))
            if en <= 1.0:
                tn = t1 if last else t + hs
                self._check(y_new, tn)
                yield t, y, tn, y_new
                t, y, k1 = tn, y_new, k7
                fac = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
                h_next = abs(hs) * fac
                if not last:
                    h = h_next
                    self.h = h
                else:
                    self.h = max(h, h_next) if abs(hs) < h else h_next
            else:
                fac = 0.2 if not np.isfinite(en) else max(0.2, 0.9 * en ** -0.2)
                h = abs(hs) * fac
            if h < MIN_STEP * max(1.0, abs(t)):
                self._check(y, t)
                raise StepLimitExceeded(f"step size underflow at t={t}", t=t)

    def advance(self, t0: float, y0: np.ndarray, t1: float) -> np.ndarray:
        y = np.array(y0, dtype=float)
        for _, _, _, y in self.steps(t0, y0, t1):
            pass
        return y


def _rhs(sys: SystemDef) -> Callable[[float, np.ndarray], np.ndarray]:
    if sys.nonautonomous:
        ev = sys.evaluator
        return lambda t, y: np.asarray(ev(y, t), dtype=float)
    ev = sys.evaluator
    return lambda t, y: np.asarray(ev(y), dtype=float)


def make_integrator(sys: SystemDef, opts: FlowOptions = DEFAULT_OPTS, F=None) -> Integrator:
    return Integrator(F or _rhs(sys), opts, sys.breakpoint_period if sys.nonautonomous else None)


def _require(sys: SystemDef, kind: str):
    if sys.kind != kind:
        raise ValueError(f"{sys.name} is a {sys.kind}, operation needs a {kind}")


def flow_to(sys: SystemDef, x0, t: float, opts: FlowOptions = DEFAULT_OPTS, t0: float = 0.0) -> np.ndarray:
    """phi_t(x0); negative t integrates backwards."""
    _require(sys, "flow")
    x0 = _check_dim(sys, x0)
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    y = make_integrator(sys, opts).advance(t0, x0, t0 + t)
    return reduce_state(sys, y)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    kind: str = "flow"

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self) -> str:
        n = self.states.shape[1]
        first = "k" if self.kind == "map" else "t"
        buf = io.StringIO()
        buf.write(",".join([first] + [f"x{i + 1}" for i in range(n)]) + "\n")
        for t, s in zip(self.times, self.states):
            tt = str(int(t)) if self.kind == "map" else fmt(t)
            buf.write(",".join([tt] + [fmt(v) for v in s]) + "\n")
        return buf.getvalue()


def fmt(v: float) -> str:
    """17-significant-digit decimal, round-trip safe."""
    v = float(v)
    if v == 0.0:
        return "0"
    return format(v, ".17g")


def iterate_map(sys: SystemDef, x0, n: int) -> np.ndarray:
    _require(sys, "map")
    x = reduce_state(sys, _check_dim(sys, x0))
    for _ in range(n):
        x = raw_field(sys, x)
        if sys.periodic_coords:
            x = reduce_state(sys, x)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState("map iterate became non-finite")
    return x


def trajectory(sys: SystemDef, x0, t_end: float | None = None, n_iter: int | None = None,
               sample_every: float | int = 1, opts: FlowOptions = DEFAULT_OPTS) -> Trajectory:
    """Sampled orbit of a flow (up to t_end) or map (n_iter iterates)."""
    x = _check_dim(sys, x0)
    if sys.kind == "map":
        if n_iter is None or n_iter < 0:
            raise ValueError("maps need n_iter >= 0")
        every = max(1, int(sample_every))
        x = reduce_state(sys, x)
        ks, xs = [0], [x.copy()]
        for k in range(1, n_iter + 1):
            x = raw_field(sys, x)
            if sys.periodic_coords:
                x = reduce_state(sys, x)
            if not np.all(np.isfinite(x)):
                raise NonFiniteState(f"non-finite iterate at k={k}", k=k)
            if k % every == 0 or k == n_iter:
                ks.append(k)
                xs.append(x.copy())
        return Trajectory(np.array(ks, dtype=float), np.array(xs), "map")
    if t_end is None:
        raise ValueError("flows need t_end")
    dt = float(sample_every)
    if dt <= 0:
        raise ValueError("sample_every must be positive")
    integ = make_integrator(sys, opts)
    n = int(math.floor(t_end / dt + 1e-9))
    times = [i * dt for i in range(n + 1)]
    if times[-1] < t_end - 1e-12 * max(1.0, t_end):
        times.append(float(t_end))
    states = [x.copy()]
    y = x.copy()
    for a, b in zip(times[:-1], times[1:]):
        y = integ.advance(a, y, b)
        states.append(y.copy())
    st = reduce_state(sys, np.array(states)) if sys.periodic_coords else np.array(states)
    return Trajectory(np.array(times), st, "flow")


# ---------------------------------------------------------------------------
# variational equations


@dataclass(frozen=True)
class VariationalResult:
    """Final state, principal solution U and log|det U|.

    For maps U is stored rescaled: the true product equals U * exp(log_scale).
    """

    x_final: np.ndarray
    U: np.ndarray
    logdetU: float
    log_scale: float = 0.0

    @property
    def U_true(self) -> np.ndarray:
        return self.U * math.exp(self.log_scale)


def variational_rhs(sys: SystemDef) -> Callable:
    n = sys.dim
    ev = sys.evaluator
    na = sys.nonautonomous

    def jac(x, t):
        return jacobian_at(sys, x, t)

    def F(t, y):
        x = y[:n]
        U = y[n:n + n * n].reshape(n, n)
        fx = ev(x, t) if na else ev(x)
        J = jac(x, t)
        out = np.empty_like(y)
        out[:n] = fx
        out[n:n + n * n] = (J @ U).ravel()
        out[-1] = np.trace(J)
        return out

    return F


def variational_flow(sys: SystemDef, x0, t: float | None = None, n: int | None = None,
                     opts: FlowOptions = DEFAULT_OPTS, t0: float = 0.0) -> VariationalResult:
    """State and principal solution U with U(0) = I (flows) or Jacobian products (maps)."""
    x0 = _check_dim(sys, x0)
    d = sys.dim
    if sys.kind == "map":
        if n is None:
            raise ValueError("maps need n")
        x = x0.copy()
        U = np.eye(d)
        logdet = 0.0
        log_scale = 0.0
        for _ in range(int(n)):
            J = jacobian_at(sys, x)
            det = abs(float(np.linalg.det(J)))
            logdet += math.log(det) if det > 0 else -math.inf
            U = J @ U
            nrm = float(np.max(np.abs(U)))
            if nrm > 1e100 or (0 < nrm < 1e-100):
                U = U / nrm
                log_scale += math.log(nrm)
            x = raw_field(sys, x)
            if not np.all(np.isfinite(x)):
                raise NonFiniteState("map iterate became non-finite")
        return VariationalResult(reduce_state(sys, x), U, logdet, log_scale)
    if t is None:
        raise ValueError("flows need t")
    y0 = np.concatenate([x0, np.eye(d).ravel(), [0.0]])
    integ = make_integrator(sys, opts, variational_rhs(sys))
    y = integ.advance(t0, y0, t0 + t)
    return VariationalResult(reduce_state(sys, y[:d]), y[d:d + d * d].reshape(d, d), float(y[-1]))


# ---------------------------------------------------------------------------
# event-aware integration


@dataclass(frozen=True)
class Crossing:
    t: float
    x: np.ndarray


def integrate_until_event(sys: SystemDef, x0, g: Callable[[np.ndarray], float], t_max: float,
                          direction: int = 0, t_min: float = 0.0, opts: FlowOptions = DEFAULT_OPTS,
                          xtol: float = 1e-12, max_events: int = 1,
                          integ: Integrator | None = None) -> list[Crossing]:
    """Integrate from x0 and return the first ``max_events`` zeros of g.

    direction > 0 keeps upward crossings only, < 0 downward, 0 both. Crossing
    times are refined by Brent's method on single steps from the last
    accepted state.
    """
    integ = integ or make_integrator(sys, opts)
    out: list[Crossing] = []
    x0 = np.asarray(x0, dtype=float)
    for tp, yp, tn, yn in integ.steps(0.0, x0, t_max):
        if tn < t_min:
            continue
        gp, gn = g(yp), g(yn)
        hit = (gp < 0 <= gn) if direction > 0 else (gp > 0 >= gn) if direction < 0 else (gp * gn < 0 or (gn == 0 and gp != 0))
        if not hit:
            continue
        if gn == 0:
            tc, xc = tn, yn
        else:
            def gs(s):
                return g(integ.step_exact(tp, yp, s))
            if gp == 0:
                continue
            s = brentq(gs, 0.0, tn - tp, xtol=xtol, rtol=4 * np.finfo(float).eps)
            tc = tp + s
            xc = integ.step_exact(tp, yp, s)
        if tc < t_min:
            continue
        out.append(Crossing(tc, xc))
        if len(out) >= max_events:
            break
    return out


# ---------------------------------------------------------------------------
# omega-limit probing


@dataclass(frozen=True)
class OmegaProbe:
    verdict: str  # fixed_point | periodic_like | torus_like | irregular
    cloud: np.ndarray
    center: np.ndarray
    period: float | None = None
    notes: str = ""


def omega_limit_probe(sys: SystemDef, x0, t_transient: float = 200.0, t_sample: float = 100.0,
                      opts: FlowOptions = DEFAULT_OPTS, sample_every: float = 0.05) -> OmegaProbe:
    """Heuristic classification of the omega-limit set reached from x0.

    Flows: the cloud is sampled after a transient; a tiny cloud means a fixed
    point. Otherwise returns to a transverse plane through the last sample
    decide between periodic and aperiodic recurrence, and a twin orbit
    started 1e-8 away separates torus-like from irregular behaviour.
    For maps ``t_transient``/``t_sample`` are iterate counts.
    """
    x0 = _check_dim(sys, x0)
    if sys.kind == "map":
        xt = iterate_map(sys, x0, int(t_transient))
        tr = trajectory(sys, xt, n_iter=int(t_sample))
        cloud = tr.states
        diam = float(np.max(np.ptp(cloud, axis=0)))
        if diam < 1e-6:
            return OmegaProbe("fixed_point", cloud, cloud[-1])
        last = cloud[-1]
        for p in range(1, min(len(cloud) // 3, 1000)):
            if all(state_distance(sys, cloud[-1 - i], cloud[-1 - i - p]) < 1e-4 for i in range(p)):
                return OmegaProbe("periodic_like", cloud, last, float(p))
        twin = _twin_separation_map(sys, xt, int(t_sample))
        return OmegaProbe("irregular" if twin > 1e-3 else "torus_like", cloud, last,
                          notes=f"twin separation {twin:.3g}")
    integ = make_integrator(sys, opts)
    xt = integ.advance(0.0, x0, t_transient)
    tr = trajectory(sys, xt, t_end=t_sample, sample_every=sample_every, opts=opts)
    cloud = tr.states
    diam = float(np.max(np.ptp(cloud, axis=0)))
    if diam < 1e-6:
        return OmegaProbe("fixed_point", cloud, cloud[-1])
    ref = cloud[-1]
    fr = raw_field(sys, ref)
    nrm = np.linalg.norm(fr)
    if nrm < 1e-12:
        return OmegaProbe("fixed_point", cloud, ref)
    nvec = fr / nrm

    def g(y):
        return float(np.dot(y - ref, nvec))

    crossings = integrate_until_event(sys, ref, g, t_max=t_sample, direction=1, t_min=1e-3,
                                      opts=opts, max_events=12)
    if len(crossings) >= 3:
        ds = [np.linalg.norm(c.x - ref) for c in crossings]
        periods = np.diff([0.0] + [c.t for c in crossings])
        # near-return at the first crossing with consistent spacing
        if ds[0] < 1e-4 and np.ptp(periods) < 1e-3 * periods.mean():
            return OmegaProbe("periodic_like", cloud, ref, float(periods.mean()))
        for m in range(1, len(crossings)):
            if ds[m - 1] < 1e-4:
                return OmegaProbe("periodic_like", cloud, ref, float(crossings[m - 1].t),
                                  notes=f"returns after {m} loops")
    twin = _twin_separation_flow(sys, ref, t_sample, opts)
    verdict = "irregular" if twin > 1e-3 * diam else "torus_like"
    return OmegaProbe(verdict, cloud, ref, notes=f"twin separation {twin:.3g}")


def _twin_separation_flow(sys, x, T, opts) -> float:
    y = x + 1e-8 / math.sqrt(sys.dim)
    a = make_integrator(sys, opts).advance(0.0, x, T)
    b = make_integrator(sys, opts).advance(0.0, y, T)
    return float(np.linalg.norm(a - b))


def _twin_separation_map(sys, x, n) -> float:
    y = x + 1e-8 / math.sqrt(sys.dim)
    return state_distance(sys, iterate_map(sys, x, n), iterate_map(sys, y, n))


def volume_growth(sys: SystemDef, x0, t: float, opts: FlowOptions = DEFAULT_OPTS) -> float:
    """log of the volume expansion factor det U over [0, t] (flows)."""
    return variational_flow(sys, x0, t=t, opts=opts).logdetU
