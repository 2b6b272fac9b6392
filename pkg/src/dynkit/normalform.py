"""Resonances, homological equations and normal-form steps.

Also hosts the first-order conjugacy of the standard map, the
Neimark-Sacker homological coefficients and a numerical estimate of the
direction of a Hopf bifurcation.
"""

from __future__ import annotations

import cmath
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .dynamics import DEFAULT_OPTS, FlowOptions, integrate_until_event
from .errors import NoConvergence, NoCycleFound, PoorFit, SmallDivisor, StrongResonance, StepLimitExceeded, \
    NonFiniteState
from .poly import (
    Poly,
    TaylorMapPoly,
    homological_matrix,
    map_to_vector,
    monomials,
    multinomial_weight,
    vector_to_map,
)
from .systems import SystemDef, jacobian_at, raw_field
from .util import max_workers

log = logging.getLogger(__name__)

NEAR_RESONANCE = 1e-3


# ---------------------------------------------------------------------------
# resonances and ad_k A


@dataclass(frozen=True)
class ResonanceReport:
    k: int
    hits: tuple[tuple[int, tuple[int, ...], float], ...]  # (component j, 1-based; p; residual)

    @property
    def empty(self) -> bool:
        return not self.hits

    def to_json(self) -> dict:
        return {"k": self.k, "hits": [{"j": j, "p": list(p), "residual": float(r)} for j, p, r in self.hits]}


def _is_exact(v) -> bool:
    return isinstance(v, (int, Fraction))


def resonances(eigs: Sequence, k: int, tol: float = 1e-8) -> ResonanceReport:
    """All (j, p) with |p| = k and |p.a - a_j| <= tol * max|a_i|.

    Integer and Fraction spectra are compared exactly.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    n = len(eigs)
    exact = all(_is_exact(a) for a in eigs)
    scale = max((abs(complex(a)) for a in eigs), default=0.0) or 1.0
    hits = []
    for j in range(n):
        for p in monomials(n, k):
            if exact:
                val = sum(pi * a for pi, a in zip(p, eigs)) - eigs[j]
                if val == 0:
                    hits.append((j + 1, p, 0.0))
            else:
                val = sum(pi * complex(a) for pi, a in zip(p, eigs)) - complex(eigs[j])
                if abs(val) <= tol * scale:
                    hits.append((j + 1, p, abs(val)))
    return ResonanceReport(k, tuple(hits))


@dataclass(frozen=True)
class HomogeneousOperator:
    k: int
    matrix: np.ndarray
    basis: tuple[tuple[int, tuple[int, ...]], ...]  # (component, multi-index), 0-based component

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def adk_operator(A, k: int) -> HomogeneousOperator:
    """Matrix of h -> Dh(y) A y - A h(y) on the monomial basis of H_k."""
    if k < 2:
        raise ValueError("k must be at least 2")
    rows = [list(r) for r in (A.tolist() if isinstance(A, np.ndarray) else A)]
    n = len(rows)
    M = homological_matrix(rows, rows, k)
    basis = tuple((j, a) for j in range(n) for a in monomials(n, k))
    return HomogeneousOperator(k, M, basis)


def exact_rank(M) -> int:
    """Rank over the rationals by fraction-free elimination."""
    A = [[Fraction(x) for x in r] for r in M]
    if not A:
        return 0
    rows, cols = len(A), len(A[0])
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if A[i][c] != 0), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        for i in range(r + 1, rows):
            if A[i][c] != 0:
                f = A[i][c] / A[r][c]
                for cc in range(c, cols):
                    A[i][cc] -= f * A[r][cc]
        r += 1
        if r == rows:
            break
    return r


# ---------------------------------------------------------------------------
# normal-form step


class NormalFormStep(NamedTuple):
    resonant: TaylorMapPoly
    h: TaylorMapPoly
    field: TaylorMapPoly


def _linear_matrix(F: TaylorMapPoly) -> list[list]:
    return F.linear_part()


def _fischer_weights(n: int, k: int) -> np.ndarray:
    w = [math.sqrt(multinomial_weight(a)) for a in monomials(n, k)]
    return np.array(w * n)


def normal_form_step(field_taylor: TaylorMapPoly, k: int, order: int | None = None,
                     tol: float = 1e-10) -> NormalFormStep:
    """Remove the non-resonant degree-k terms by y = z + h_k(z).

    The degree-k part g_k is split into range(ad_k A) plus its orthogonal
    complement in the Fischer inner product (monomial u^a weighted by a!).
    For diagonal A that complement is spanned by the resonant monomials; for
    normal A it is ker ad_k A. The substitution is then applied to the whole
    field up to ``order``.
    """
    n = field_taylor.in_dim
    order = order or max(field_taylor.degree, k)
    A = _linear_matrix(field_taylor)
    gk = [c.homogeneous(k) for c in field_taylor.comps]
    g_vec = map_to_vector(gk, k, n)
    is_diag = all(A[i][j] == 0 for i in range(n) for j in range(n) if i != j)
    exact = is_diag and all(_is_exact(v) for r in A for v in r) and all(_is_exact(v) for v in g_vec)
    if exact:
        diag = [A[i][i] for i in range(n)]
        res_vec, h_vec = [], []
        for (j, a), g in zip(((j, a) for j in range(n) for a in monomials(n, k)), g_vec):
            d = sum(ai * li for ai, li in zip(a, diag)) - diag[j]
            if d == 0:
                res_vec.append(g)
                h_vec.append(Fraction(0))
            else:
                res_vec.append(Fraction(0))
                h_vec.append(Fraction(g) / d)
    else:
        L = np.asarray(homological_matrix(A, A, k), dtype=complex)
        W = _fischer_weights(n, k)
        Lw = (W[:, None] * L) / W[None, :]
        U, s, Vh = np.linalg.svd(Lw)
        smax = s[0] if s.size and s[0] > 0 else 1.0
        keep = s > tol * smax
        gw = W * np.asarray(g_vec, dtype=complex)
        U0 = U[:, ~keep]
        res_w = U0 @ (U0.conj().T @ gw)
        non_w = gw - res_w
        Ur, sr, Vr = U[:, keep], s[keep], Vh[keep, :]
        h_w = Vr.conj().T @ ((Ur.conj().T @ non_w) / sr)
        res_vec = _realify(res_w / W)
        h_vec = _realify(h_w / W)
    resonant = TaylorMapPoly(n, tuple(vector_to_map(res_vec, k, n, n)))
    h = TaylorMapPoly(n, tuple(vector_to_map(h_vec, k, n, n)))
    new_field = apply_near_identity(field_taylor, h, order)
    return NormalFormStep(resonant, h, new_field)


def _realify(v: np.ndarray) -> list:
    v = np.asarray(v)
    if np.iscomplexobj(v) and np.max(np.abs(v.imag), initial=0.0) <= 1e-13 * max(1.0, np.max(np.abs(v), initial=0.0)):
        v = v.real
    out = []
    for x in v.tolist():
        if isinstance(x, complex):
            out.append(x)
        elif abs(x) < 1e-15:
            out.append(0.0)
        else:
            out.append(x)
    return out


def apply_near_identity(F: TaylorMapPoly, h: TaylorMapPoly, order: int) -> TaylorMapPoly:
    """Field in z where y = z + h(z): (I + Dh)^{-1} F(z + h(z)), truncated."""
    n = F.in_dim
    subs = [Poly.var(i, n) + h.comps[i] for i in range(n)]
    w = [c.compose(subs, order) for c in F.comps]
    Dh = [[h.comps[i].diff(j) for j in range(n)] for i in range(n)]
    # Neumann series: (I + Dh)^{-1} w = w - Dh w + Dh Dh w - ...
    result = [p.copy() for p in w]
    term = w
    for _ in range(order):
        nxt = []
        for i in range(n):
            acc = Poly(n)
            for j in range(n):
                if not Dh[i][j].is_zero() and not term[j].is_zero():
                    acc = acc + Dh[i][j].mul(term[j], order)
            nxt.append(-acc)
        if all(p.is_zero() for p in nxt):
            break
        result = [a + b for a, b in zip(result, nxt)]
        term = nxt
    return TaylorMapPoly(n, tuple(result))


def nonresonant_residual(F: TaylorMapPoly, k: int, tol: float = 1e-10) -> float:
    """Size of the part of g_k lying in range(ad_k A) (Fischer norm)."""
    n = F.in_dim
    A = _linear_matrix(F)
    L = np.asarray(homological_matrix(A, A, k), dtype=complex)
    W = _fischer_weights(n, k)
    Lw = (W[:, None] * L) / W[None, :]
    U, s, _ = np.linalg.svd(Lw)
    smax = s[0] if s.size and s[0] > 0 else 1.0
    Ur = U[:, s > tol * smax]
    g = W * np.asarray(map_to_vector([c.homogeneous(k) for c in F.comps], k, n), dtype=complex)
    return float(np.linalg.norm(Ur.conj().T @ g))


# ---------------------------------------------------------------------------
# Neimark-Sacker homological coefficients


@dataclass(frozen=True)
class NeimarkCoefficients:
    h: dict
    nonremovable: tuple[tuple[int, int], ...]
    divisors: dict
    warnings: tuple[str, ...] = ()


def neimark_homological_coeffs(mu: complex, c_pq: Mapping[tuple[int, int], complex],
                               tol: float = 1e-8, strong_tol: float = 1e-8) -> NeimarkCoefficients:
    """h_pq = c_pq / (mu^p conj(mu)^q - mu) where the divisor exceeds tol.

    Divisors at or below tol are listed as non-removable. Strong resonances
    mu^j = 1 (j <= 4, within strong_tol) raise.
    """
    mu = complex(mu)
    for j in range(1, 5):
        if abs(mu ** j - 1) <= strong_tol:
            raise StrongResonance(f"mu^{j} = 1 (strong resonance)", j=j)
    h, bad, divs, warns = {}, [], {}, []
    for (p, q), c in sorted(c_pq.items()):
        d = mu ** p * mu.conjugate() ** q - mu
        divs[(p, q)] = abs(d)
        if abs(d) <= tol:
            bad.append((p, q))
            continue
        if abs(d) < NEAR_RESONANCE:
            warns.append(f"near resonance at (p,q)=({p},{q}): |divisor|={abs(d):.3g}")
        h[(p, q)] = complex(c) / d
    return NeimarkCoefficients(h, tuple(bad), divs, tuple(warns))


# ---------------------------------------------------------------------------
# standard map, first order


@dataclass(frozen=True)
class StandardMapConjugacy:
    omega: float
    a: dict  # Fourier coefficients of f1: k -> complex
    b: dict  # Fourier coefficients of g1

    def f1(self, phi):
        phi = np.asarray(phi, dtype=float)
        return sum((c * np.exp(1j * k * phi)) for k, c in self.a.items()).real

    def g1(self, phi):
        phi = np.asarray(phi, dtype=float)
        return sum((c * np.exp(1j * k * phi)) for k, c in self.b.items()).real

    def f1_closed(self, phi):
        return np.sin(phi) / (4 * math.sin(self.omega / 2) ** 2)

    def g1_closed(self, phi):
        return np.cos(np.asarray(phi) - self.omega / 2) / (2 * math.sin(self.omega / 2))

    def residual(self, phi) -> float:
        """Max violation of the two first-order functional equations."""
        w = self.omega
        phi = np.asarray(phi, dtype=float)
        r1 = self.f1(phi + w) - self.f1(phi) - self.g1(phi + w)
        r2 = self.g1(phi + w) - self.g1(phi) + np.sin(phi)
        return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))


def standard_map_conjugacy_o1(omega: float, tol: float = 1e-9) -> StandardMapConjugacy:
    """Order-eps change of variables straightening the standard map.

    Solves the Fourier-component relations
        a_k e^{ikw} = a_k + b_k e^{ikw},   b_k e^{ikw} = b_k - c_k
    for the forcing sin(phi) (c_{+-1} = +-1/(2i)).
    """
    w = float(omega)
    if abs(cmath.exp(1j * w) - 1) <= tol:
        raise SmallDivisor("omega is a multiple of 2*pi: 1 - e^{i omega} vanishes", omega=w)
    c = {1: 1 / 2j, -1: -1 / 2j}
    a, b = {}, {}
    for k, ck in c.items():
        e = cmath.exp(1j * k * w)
        b[k] = ck / (1 - e)
        a[k] = b[k] * e / (e - 1)
    return StandardMapConjugacy(w, a, b)


# ---------------------------------------------------------------------------
# Hopf direction


@dataclass(frozen=True)
class HopfEstimate:
    verdict: str  # supercritical | subcritical
    lambdas: tuple[float, ...]
    radii: tuple[float, ...]
    K: float
    r2: float
    cycle_stable: bool


def _pair(J: np.ndarray):
    ev, V = np.linalg.eig(J)
    cand = [i for i in range(len(ev)) if ev[i].imag > 1e-10]
    if not cand:
        raise NoCycleFound("no complex eigenvalue pair at the equilibrium")
    i = min(cand, key=lambda i: abs(ev[i].real))
    return ev[i], V[:, i]


def _growth_sign(sys: SystemDef, xs: np.ndarray, e1: np.ndarray, n: np.ndarray, delta: float,
                 opts: FlowOptions, period: float) -> float:
    """Relative change of |x - x*| between the 2nd and 6th section returns."""
    x0 = xs + delta * e1

    def g(y):
        return float(np.dot(y - xs, n))

    try:
        cr = integrate_until_event(sys, x0, g, t_max=12 * period, direction=1, t_min=0.05 * period,
                                   opts=opts, max_events=6)
    except (StepLimitExceeded, NonFiniteState):
        return 1.0
    if len(cr) < 6:
        return 1.0
    d2 = np.linalg.norm(cr[1].x - xs)
    d6 = np.linalg.norm(cr[5].x - xs)
    return (d6 - d2) / max(d2, 1e-300)


def _cycle_amplitude(sys: SystemDef, xs: np.ndarray, opts: FlowOptions, max_amp: float):
    J = jacobian_at(sys, xs)
    mu, v = _pair(J)
    e1 = v.real / np.linalg.norm(v.real)
    w = v.imag - np.dot(v.imag, e1) * e1
    n = w / np.linalg.norm(w)
    # orient the normal with the flow through the starting ray
    if np.dot(J @ e1, n) < 0:
        n = -n
    period = 2 * math.pi / abs(mu.imag)
    deltas = np.geomspace(1e-3 * max_amp, max_amp, 14)
    signs = [_growth_sign(sys, xs, e1, n, d, opts, period) for d in deltas]
    for i in range(len(deltas) - 1):
        s0, s1 = signs[i], signs[i + 1]
        if s0 * s1 < 0:
            lo, hi = deltas[i], deltas[i + 1]
            slo = s0
            for _ in range(30):
                mid = math.sqrt(lo * hi)
                sm = _growth_sign(sys, xs, e1, n, mid, opts, period)
                if sm * slo > 0:
                    lo, slo = mid, sm
                else:
                    hi = mid
                if hi / lo - 1 < 1e-5:
                    break
            stable = s0 > 0  # grows inside, shrinks outside
            return math.sqrt(lo * hi), stable, mu.real
    return None, None, mu.real


def hopf_sign_estimate(sys: SystemDef, param: str, lam_c: float, probe_lams: Sequence[float],
                       x_eq: Sequence[float] | None = None, opts: FlowOptions | None = None,
                       max_amplitude: float | None = None) -> HopfEstimate:
    """Decide super/subcritical by locating small cycles near lam_c.

    At each probe the equilibrium is refined, the radial growth over four
    section returns is measured for initial offsets along the critical
    eigen-plane and a sign change is bisected to find a cycle. Stable cycles
    on the side where the equilibrium is unstable mean supercritical;
    unstable cycles on the stable side mean subcritical. If the given probes
    find nothing, their mirror images about lam_c are tried.
    """
    from .equilibria import newton_solve  # local import avoids a cycle

    opts = opts or FlowOptions(abs_tol=1e-10, rel_tol=1e-10)
    base_x = np.zeros(sys.dim) if x_eq is None else np.asarray(x_eq, dtype=float)

    def probe(lam):
        s = sys.with_params(**{param: lam})
        xs = newton_solve(s, base_x, 1e-12)
        amp_max = max_amplitude or max(1.0, 0.5 * float(np.linalg.norm(xs)))
        r, stable, a = _cycle_amplitude(s, xs, opts, amp_max)
        return lam, r, stable, a

    results = []
    for attempt in (list(probe_lams), [2 * lam_c - l for l in probe_lams]):
        with ThreadPoolExecutor(max_workers()) as ex:
            found = list(ex.map(probe, attempt))
        results = [(l, r, st, a) for (l, r, st, a) in found if r is not None]
        if len(results) >= 2:
            break
    if len(results) < 2:
        raise NoCycleFound("no limit cycle located near the Hopf point")
    lams = np.array([r[0] for r in results])
    rad = np.array([r[1] for r in results])
    stab = [r[2] for r in results]
    x = np.sqrt(np.abs(lams - lam_c))
    K = float(np.dot(x, rad) / np.dot(x, x))
    ss_res = float(np.sum((rad - K * x) ** 2))
    ss_tot = float(np.sum((rad - rad.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res < 1e-20 else 0.0)
    stable = bool(sum(stab) > len(stab) / 2)
    verdict = "supercritical" if stable else "subcritical"
    if r2 < 0.9:
        raise PoorFit(f"radius law fit R^2={r2:.3f} < 0.9", r2=r2, verdict=verdict)
    return HopfEstimate(verdict, tuple(float(v) for v in lams), tuple(float(v) for v in rad), K, r2, stable)
