"""Sensitivity probes, ergodic averages and the Henon/Lorenz attractor experiments."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import mpmath
import numpy as np
import sympy as sp

from ..dynamics import DEFAULT_OPTS, FlowOptions, make_integrator
from ..errors import Escaped, NonFiniteState
from ..systems import SystemDef, _check_dim, build_builtin, raw_field, reduce_state, state_distance
from ..util import max_workers
from .lyapunov import SpectrumResult, lyapunov_spectrum

ESCAPE_NORM = 1e6


# -- sensitive dependence


@dataclass(frozen=True)
class SensitivityResult:
    verdict: str  # "sensitive" or "not_detected"
    divergence_times: tuple[float | None, ...]  # per probe; None if it never reached eps_target
    probes: np.ndarray


def _probe_offsets(dim: int, delta0: float, n_probes: int) -> np.ndarray:
    dirs = []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        dirs += [e, -e]
    rng = np.random.default_rng(0)
    while len(dirs) < n_probes:
        v = rng.standard_normal(dim)
        dirs.append(v / np.linalg.norm(v))
    return delta0 * np.array(dirs[:n_probes])


def _is_tent(sys: SystemDef) -> int | None:
    return {"tent": 2, "tent3": 3}.get(sys.name)


def sensitivity_test(sys: SystemDef, x, delta0: float, eps_target: float, T_max: float,
                     n_probes: int = 4, exact: bool = False, opts: FlowOptions = DEFAULT_OPTS,
                     check_every: float = 0.05) -> SensitivityResult:
    """Run x and nearby probes until they separate by eps_target or time runs out.

    For maps T_max counts iterates. ``exact`` iterates the tent maps in
    rational arithmetic, with x and the probe offsets read as decimals.
    """
    if not delta0 > 0:
        raise ValueError("delta0 must be positive")
    xv = _check_dim(sys, [x] if np.ndim(x) == 0 and not isinstance(x, np.ndarray) else x)
    offs = _probe_offsets(sys.dim, delta0, n_probes)
    slope = _is_tent(sys)

    if sys.kind == "map" and exact and slope is not None:
        x0 = x if isinstance(x, Fraction) else Fraction(repr(float(np.ravel(x)[0])))

        def g(y):
            return slope * y if y <= Fraction(1, 2) else slope - slope * y

        def one(off):
            a = x0
            b = x0 + Fraction(repr(float(off[0])))
            if not 0 <= b <= 1:
                b = x0 - Fraction(repr(float(off[0])))
            for n in range(1, int(T_max) + 1):
                a, b = g(a), g(b)
                if abs(a - b) >= Fraction(repr(float(eps_target))):
                    return float(n)
            return None
    elif sys.kind == "map":
        def one(off):
            a = xv.copy()
            b = reduce_state(sys, xv + off)
            for n in range(1, int(T_max) + 1):
                a, b = raw_field(sys, a), raw_field(sys, b)
                if sys.periodic_coords:
                    a, b = reduce_state(sys, a), reduce_state(sys, b)
                if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                    raise NonFiniteState("map iterate became non-finite", n=n)
                if state_distance(sys, a, b) >= eps_target:
                    return float(n)
            return None
    else:
        def one(off):
            ia, ib = make_integrator(sys, opts), make_integrator(sys, opts)
            a, b = xv.copy(), xv + off
            t = 0.0
            while t < T_max:
                t1 = min(T_max, t + check_every)
                a, b = ia.advance(t, a, t1), ib.advance(t, b, t1)
                t = t1
                if state_distance(sys, a, b) >= eps_target:
                    return t
            return None

    with ThreadPoolExecutor(max_workers()) as ex:
        times = tuple(ex.map(one, offs))
    verdict = "sensitive" if any(t is not None for t in times) else "not_detected"
    return SensitivityResult(verdict, times, offs)


# -- ergodic averages


@dataclass(frozen=True)
class ErgodicAverage:
    mean: float
    stderr: float  # batch-means standard error
    N: int
    reference: float | None = None

    @property
    def z(self) -> float | None:
        if self.reference is None:
            return None
        if self.stderr == 0:
            return 0.0 if self.mean == self.reference else math.inf
        return (self.mean - self.reference) / self.stderr


OBSERVABLES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "one": np.ones_like,
    "x": lambda v: v,
    "x2": lambda v: v * v,
}


def _tent_orbit_from_digits(x0, N: int) -> np.ndarray:
    """g2^n(x0), n < N, from exact binary digits of x0.

    Digit k of g2^n(x) is b_(n+k) xor b_n, so each iterate is read off a
    53-bit window of the expansion instead of a float that loses one bit
    per step.
    """
    L = N + 64
    if isinstance(x0, str):
        expr = sp.sympify(x0)
        with mpmath.workprec(L + 32):
            v = sp.lambdify([], expr, "mpmath")()
            big = int(mpmath.floor(v * mpmath.mpf(2) ** L))
    else:
        q = Fraction(x0)
        big = (q.numerator << L) // q.denominator
    if not 0 <= big <= 1 << L:
        raise ValueError("x0 must lie in [0, 1]")
    if big == 1 << L:  # x0 = 1 maps to 0 and stays
        out = np.zeros(N)
        out[0] = 1.0
        return out
    s = format(big, "b").zfill(L)
    bits = np.concatenate([[0], np.frombuffer(s.encode(), dtype=np.uint8) - 48]).astype(np.uint8)
    base = bits[:N]
    out = np.zeros(N)
    for k in range(1, 54):
        out += (bits[k:k + N] ^ base) * 2.0 ** -k
    return out


def ergodic_average(sys: SystemDef, x0, observable: str | Callable = "x", N: int = 10 ** 6,
                    reference: float | None = None, n_batches: int = 50) -> ErgodicAverage:
    """(1/N) sum of phi(g^n(x0)) for a 1D map on [0, 1].

    The tent map uses exact binary digits of x0 (x0 may be an expression
    string such as "sqrt(2)-1"); other maps iterate in floating point.
    """
    if sys.kind != "map" or sys.dim != 1:
        raise ValueError("ergodic_average needs a one-dimensional map")
    phi = OBSERVABLES[observable] if isinstance(observable, str) else observable
    if sys.name == "tent":
        orbit = _tent_orbit_from_digits(x0, N)
    else:
        x = float(sp.sympify(x0)) if isinstance(x0, str) else float(x0)
        orbit = np.empty(N)
        ev = sys.evaluator
        for n in range(N):
            orbit[n] = x
            x = float(ev(np.array([x]))[0])
        if not np.all(np.isfinite(orbit)):
            raise NonFiniteState("orbit became non-finite")
    vals = np.asarray(phi(orbit), dtype=float)
    mean = float(np.mean(vals))
    nb = max(2, min(n_batches, N))
    m = N // nb
    bm = vals[:m * nb].reshape(nb, m).mean(axis=1)
    stderr = float(np.std(bm, ddof=1) / math.sqrt(nb))
    return ErgodicAverage(mean, stderr, N, reference)


# -- Henon attractor


@dataclass(frozen=True)
class HenonExperiment:
    points: np.ndarray
    spectrum: SpectrumResult
    bbox: tuple[tuple[float, float], tuple[float, float]]
    log_b: float  # expected exponent sum ln|b|

    @property
    def sum_error(self) -> float:
        return abs(self.spectrum.sum - self.log_b) / abs(self.log_b)


def henon_attractor_experiment(lam: float = 1.4, b: float = 0.3, N: int = 100_000,
                               transient: int = 1000, x0=(0.0, 0.0)) -> HenonExperiment:
    sys = build_builtin("henon", {"lam": lam, "b": b})
    x = _check_dim(sys, x0)
    pts = np.empty((N, 2))
    for n in range(transient + N):
        x = raw_field(sys, x)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > ESCAPE_NORM:
            raise Escaped(f"orbit left the ball of radius {ESCAPE_NORM:g}", n=n)
        if n >= transient:
            pts[n - transient] = x
    spec = lyapunov_spectrum(sys, pts[0], N=N, n_discard=0)
    bbox = ((float(pts[:, 0].min()), float(pts[:, 0].max())),
            (float(pts[:, 1].min()), float(pts[:, 1].max())))
    log_b = math.log(abs(b)) if b != 0 else -math.inf
    return HenonExperiment(pts, spec, bbox, log_b)


# -- Lorenz orbit fates


@dataclass(frozen=True)
class OrbitFates:
    r: float
    seeds: np.ndarray
    fates: tuple[str, ...]  # "C+", "C-", "origin" or "wandering"
    switches: tuple[int, ...]  # lobe changes (sign changes of X) after the transient

    def fractions(self) -> dict[str, float]:
        n = len(self.fates)
        return {k: self.fates.count(k) / n for k in ("C+", "C-", "origin", "wandering")}


def lorenz_orbit_fates(r: float, seeds=None, T: float = 100.0, t_transient: float = 10.0,
                       tol: float = 1e-2, sigma: float = 10.0, b: float = 8.0 / 3.0,
                       opts: FlowOptions = DEFAULT_OPTS) -> OrbitFates:
    """Classify where a grid of seeds ends up and how often each orbit switches lobe."""
    sys = build_builtin("lorenz", {"sigma": sigma, "b": b, "r": r})
    if seeds is None:
        g = np.linspace(-10.0, 10.0, 4)
        seeds = np.array([[u, v, 20.0] for u in g for v in g])
    seeds = np.asarray(seeds, dtype=float)
    c = math.sqrt(b * (r - 1)) if r > 1 else 0.0
    cp, cm = np.array([c, c, r - 1]), np.array([-c, -c, r - 1])

    def one(x0):
        integ = make_integrator(sys, opts)
        x = integ.advance(0.0, x0, t_transient)
        sw = 0
        sgn = np.sign(x[0])
        for _, _, _, y in integ.steps(t_transient, x, T):
            s = np.sign(y[0])
            if s != 0 and s != sgn:
                if sgn != 0:
                    sw += 1
                sgn = s
            x = y
        if r > 1 and np.linalg.norm(x - cp) < tol:
            return "C+", sw
        if r > 1 and np.linalg.norm(x - cm) < tol:
            return "C-", sw
        if np.linalg.norm(x) < tol:
            return "origin", sw
        return "wandering", sw

    with ThreadPoolExecutor(max_workers()) as ex:
        res = list(ex.map(one, seeds))
    return OrbitFates(float(r), seeds, tuple(f for f, _ in res), tuple(s for _, s in res))
