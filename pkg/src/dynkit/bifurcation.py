"""Equilibrium branches, local bifurcation detection and classification."""

from __future__ import annotations

import io
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import sympy as sp

from .dynamics import fmt
from .equilibria import ZERO_TOL, classify_linear, newton_solve
from .errors import (
    BranchLost,
    Degenerate,
    DynkitError,
    EmptySupport,
    NoConvergence,
    NonFiniteState,
    SingularJacobian,
)
from .systems import SystemDef, jacobian_at, param_jacobian_at, raw_field
from .util import max_workers

log = logging.getLogger(__name__)

COEFF_TOL = 1e-8


# ---------------------------------------------------------------------------
# branches


@dataclass(frozen=True)
class BranchPoint:
    lam: float
    x: np.ndarray
    eigenvalues: tuple[complex, ...]
    stability: str


@dataclass
class Branch:
    sys: SystemDef
    param: str
    points: list[BranchPoint] = field(default_factory=list)
    fold_at_end: tuple[float, np.ndarray] | None = None

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    @property
    def states(self) -> np.ndarray:
        return np.array([p.x for p in self.points])


def _at(sys: SystemDef, param: str, lam: float) -> SystemDef:
    return sys.with_params(**{param: float(lam)})


def _residual_jac(s: SystemDef, x) -> np.ndarray:
    J = jacobian_at(s, x)
    return J if s.kind == "flow" else J - np.eye(s.dim)


def _residual(s: SystemDef, x) -> np.ndarray:
    f = raw_field(s, x)
    return f if s.kind == "flow" else f - np.asarray(x, dtype=float)


def _param_column(s: SystemDef, param: str, x) -> np.ndarray:
    return param_jacobian_at(s, np.asarray(x, dtype=float), [param])[:, 0]


def _point(s: SystemDef, lam: float, x) -> BranchPoint:
    x = np.asarray(x, dtype=float)
    J = jacobian_at(s, x)
    ev = np.linalg.eigvals(J)
    ev = tuple(sorted((complex(e) for e in ev), key=lambda z: (-z.real, -z.imag)))
    cls = classify_linear(ev, s.kind, ZERO_TOL)
    stab = "unstable" if cls.n_plus else ("stable" if cls.n_zero == 0 else "critical")
    return BranchPoint(float(lam), x.copy(), ev, stab)


def _tangent(s: SystemDef, param: str, x, prev: np.ndarray | None) -> np.ndarray:
    A = np.column_stack([_residual_jac(s, x), _param_column(s, param, x)])
    _, _, Vh = np.linalg.svd(A)
    t = Vh[-1]
    if prev is not None and np.dot(t, prev) < 0:
        t = -t
    return t / np.linalg.norm(t)


def _arclength_correct(sys: SystemDef, param: str, zp: np.ndarray, t: np.ndarray, tol: float = 1e-10,
                       max_iter: int = 30) -> np.ndarray:
    n = sys.dim
    z = zp.copy()
    for _ in range(max_iter):
        s = _at(sys, param, z[n])
        r = np.concatenate([_residual(s, z[:n]), [np.dot(t, z - zp)]])
        if np.linalg.norm(r) <= tol:
            return z
        M = np.zeros((n + 1, n + 1))
        M[:n, :n] = _residual_jac(s, z[:n])
        M[:n, n] = _param_column(s, param, z[:n])
        M[n] = t
        try:
            z = z - np.linalg.solve(M, r)
        except np.linalg.LinAlgError as e:
            raise NoConvergence("singular arclength corrector") from e
        if not np.all(np.isfinite(z)):
            raise NoConvergence("arclength corrector diverged")
    raise NoConvergence("arclength corrector did not converge")


def continue_branch(sys: SystemDef, param: str, x_start, lam_start: float, lam_end: float,
                    step: float = 0.05, max_points: int = 10000, fold_slope: float = 0.05) -> list[Branch]:
    """Follow x*(lam) from (x_start, lam_start) towards lam_end.

    Natural continuation in lam with a secant predictor; where the corrector
    fails or the branch turns vertical, a few pseudo-arclength steps round
    the fold. Each returned Branch has monotone lam; a fold starts a new one.
    """
    if param not in sys.params:
        raise DynkitError(f"unknown parameter {param!r}")
    n = sys.dim
    lo, hi = sorted((float(lam_start), float(lam_end)))
    d = 1.0 if lam_end >= lam_start else -1.0
    h = abs(step)
    s0 = _at(sys, param, lam_start)
    try:
        x = newton_solve(s0, x_start, 1e-12)
    except DynkitError as e:
        raise BranchLost(f"start point is not an equilibrium: {e}") from e
    branches = [Branch(sys, param)]
    branches[-1].points.append(_point(s0, lam_start, x))
    prev_x, lam = None, float(lam_start)
    t_prev = _tangent(s0, param, x, None)
    if t_prev[n] * d < 0:
        t_prev = -t_prev
    while len(branches[-1].points) < max_points:
        bound = hi if d > 0 else lo
        if abs(lam - bound) <= 1e-12 * max(1.0, abs(bound)):
            break
        hk = h
        accepted = False
        while hk >= h * 1e-3:
            lam_n = lam + d * hk
            if (lam_n - bound) * d > 0:
                lam_n = bound
            if prev_x is not None:
                dl = abs(branches[-1].points[-1].lam - branches[-1].points[-2].lam) if len(branches[-1].points) > 1 else hk
                xp = x + (x - prev_x) * (abs(lam_n - lam) / max(dl, 1e-300))
            else:
                xp = x.copy()
            s = _at(sys, param, lam_n)
            try:
                xn = newton_solve(s, xp, 1e-12)
                jump = np.linalg.norm(xn - xp)
                ok = jump <= max(10 * np.linalg.norm(x - prev_x) if prev_x is not None else 0.0, 0.1 * hk + 1e-6,
                                 0.05 * (1 + np.linalg.norm(x)))
                t_new = _tangent(s, param, xn, t_prev)
                vertical = abs(t_new[n]) < fold_slope
            except DynkitError:
                ok, vertical = False, True
            if ok and not vertical:
                accepted = True
                break
            if vertical and hk <= h * 0.26:
                break
            hk *= 0.5
        if accepted:
            prev_x, x, lam, t_prev = x, xn, lam_n, t_new
            branches[-1].points.append(_point(s, lam, x))
            continue
        # round the fold by pseudo-arclength from the last accepted point
        z = np.concatenate([x, [lam]])
        s = _at(sys, param, lam)
        t = _tangent(s, param, x, t_prev)
        if t[n] * d < 0 and abs(t[n]) > 1e-12:
            t = -t
        ds = max(0.5 * h, 1e-6)
        passed = False
        zs_prev = [z]
        for _ in range(400):
            zp = z + ds * t
            try:
                zn = _arclength_correct(sys, param, zp, t)
            except DynkitError:
                ds *= 0.5
                if ds < 1e-9:
                    raise BranchLost("could not round the fold", lam=float(z[n]))
                continue
            sn = _at(sys, param, zn[n])
            tn = _tangent(sn, param, zn[:n], t)
            if not passed and tn[n] * d < 0:
                passed = True
                fold = _locate_fold(sys, param, zs_prev[-1], z, zn)
                branches[-1].fold_at_end = fold
                branches.append(Branch(sys, param))
                d = -d
            if not (lo - 1e-12 <= zn[n] <= hi + 1e-12):
                break
            branches[-1].points.append(_point(sn, zn[n], zn[:n]))
            zs_prev.append(z)
            z, t = zn, tn
            if abs(t[n]) > 0.3 and (passed or len(zs_prev) > 50):
                break
        x, lam, t_prev = z[:n].copy(), float(z[n]), t
        prev_x = None
        if not (lo - 1e-12 <= lam <= hi + 1e-12):
            break
        if not branches[-1].points:
            branches[-1].points.append(_point(_at(sys, param, lam), lam, x))
        elif len(branches[-1].points) >= 2:
            prev_x = branches[-1].points[-2].x
    return [b for b in branches if b.points]


def _locate_fold(sys: SystemDef, param: str, za: np.ndarray, zb: np.ndarray, zc: np.ndarray):
    """Fold point near three arclength points: quadratic guess refined by Newton on (f, det f_x)."""
    n = sys.dim
    # lam extremum of a parabola through the three points in a chord parameter
    s = np.array([0.0, np.linalg.norm(zb - za), np.linalg.norm(zb - za) + np.linalg.norm(zc - zb)])
    Z = np.array([za, zb, zc])
    coef = np.polyfit(s, Z[:, n], 2)
    s_star = -coef[1] / (2 * coef[0]) if coef[0] != 0 else s[1]
    s_star = float(np.clip(s_star, s[0], s[2]))
    z = np.array([np.interp(s_star, s, Z[:, i]) for i in range(n + 1)])

    def G(z):
        s_ = _at(sys, param, z[n])
        return np.concatenate([_residual(s_, z[:n]), [np.linalg.det(_residual_jac(s_, z[:n]))]])

    try:
        for _ in range(30):
            g = G(z)
            if np.linalg.norm(g) < 1e-12:
                break
            M = np.empty((n + 1, n + 1))
            for j in range(n + 1):
                e = np.zeros(n + 1)
                e[j] = 1e-7 * max(1.0, abs(z[j]))
                M[:, j] = (G(z + e) - G(z - e)) / (2 * e[j])
            z = z - np.linalg.solve(M, g)
    except (np.linalg.LinAlgError, DynkitError):
        pass
    return float(z[n]), z[:n].copy()


# ---------------------------------------------------------------------------
# Newton polygon and local classification


@dataclass(frozen=True)
class NewtonPolygon:
    support: tuple[tuple[int, int], ...]
    vertices: tuple[tuple[int, int], ...]
    hull: tuple[tuple[tuple[int, int], tuple[int, int], float], ...]  # (start, end, slope)
    candidate_exponents: tuple[float, ...]


def newton_polygon(c: Mapping[tuple[int, int], float], tol: float = 0.0) -> NewtonPolygon:
    """Lower-left convex envelope of the sectors {x >= p, y >= q} over the support."""
    if abs(c.get((0, 0), 0.0)) > tol:
        raise ValueError("c00 must vanish at a bifurcation point")
    support = sorted(k for k, v in c.items() if abs(v) > tol and k != (0, 0))
    if not support:
        raise EmptySupport("no nonzero coefficients")
    # lower hull over points sorted by p, collinear points kept as vertices
    pts = sorted(set(support))
    hull: list[tuple[int, int]] = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            cross = (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1)
            if cross < 0:
                hull.pop()
            else:
                break
        hull.append(p)
    # keep the part from the lowest point at minimal p to the first point of minimal q
    qmin = min(q for _, q in pts)
    start = min((p for p in hull if p[0] == hull[0][0]), key=lambda v: v[1])
    verts = [start]
    for p in hull[hull.index(start) + 1:]:
        if p[1] >= verts[-1][1]:
            break
        verts.append(p)
        if p[1] == qmin:
            break
    segs = []
    for a, b in zip(verts[:-1], verts[1:]):
        slope = (b[1] - a[1]) / (b[0] - a[0])
        segs.append((a, b, slope))
    mus = tuple(sorted({-s for _, _, s in segs}))
    return NewtonPolygon(tuple(support), tuple(verts), tuple(segs), mus)


@dataclass(frozen=True)
class LocalBifurcation:
    kind: str
    data: dict

    def branches_at(self, lam: float) -> list[float]:
        """Nontrivial branch values u*(lam) predicted by the leading-order normal form."""
        out = []
        for b in self.data.get("branches", []):
            if b["form"] == "sqrt":
                v = b["coef"] * lam
                if v >= 0:
                    out.append(b["sign"] * math.sqrt(v))
            elif b["form"] == "linear":
                out.append(b["slope"] * lam)
            elif b["form"] == "zero":
                out.append(0.0)
        return out


def classify_local_bif(c: Mapping[tuple[int, int], float], symmetry_odd: bool = False,
                       tol: float = COEFF_TOL) -> LocalBifurcation:
    """Saddle-node, transcritical or pitchfork from the low-order coefficients."""
    g = lambda p, q: float(c.get((p, q), 0.0))
    scale = max([abs(float(v)) for v in c.values()] + [1e-300])
    nz = lambda v: abs(v) > tol * scale
    c01, c20, c11, c02, c30 = g(0, 1), g(2, 0), g(1, 1), g(0, 2), g(3, 0)
    coeffs = {"c01": c01, "c20": c20, "c11": c11, "c02": c02, "c30": c30}
    if symmetry_odd or (not nz(c01) and not nz(c20) and nz(c11) and nz(c30)):
        if not (nz(c11) and nz(c30)):
            raise Degenerate("pitchfork needs c11 and c30 nonzero", **coeffs)
        side = -math.copysign(1.0, c11 / c30)
        new_stable = c30 < 0
        k = -c11 / c30
        return LocalBifurcation("pitchfork", {
            **coeffs,
            "criticality": "supercritical" if new_stable else "subcritical",
            "branches_side": "lambda>0" if side > 0 else "lambda<0",
            "new_branches_stable": new_stable,
            "trivial_stable_for": "lambda<0" if c11 > 0 else "lambda>0",
            "branches": [{"form": "zero"},
                         {"form": "sqrt", "coef": k, "sign": 1.0, "stable": new_stable},
                         {"form": "sqrt", "coef": k, "sign": -1.0, "stable": new_stable}],
            "symmetric": bool(symmetry_odd),
        })
    if nz(c01) and nz(c20):
        side = -math.copysign(1.0, c01 / c20)
        k = -c01 / c20
        plus_stable = c20 < 0
        return LocalBifurcation("saddle_node", {
            **coeffs,
            "direction": "direct" if side > 0 else "indirect",
            "branches_side": "lambda>0" if side > 0 else "lambda<0",
            "plus_branch_stable": plus_stable,
            "branches": [{"form": "sqrt", "coef": k, "sign": 1.0, "stable": plus_stable},
                         {"form": "sqrt", "coef": k, "sign": -1.0, "stable": not plus_stable}],
        })
    if not nz(c01) and nz(c20):
        disc = c11 * c11 - 4 * c20 * c02
        if disc > tol * scale * scale:
            r = math.sqrt(disc)
            br = []
            for C in sorted(((-c11 + r) / (2 * c20), (-c11 - r) / (2 * c20))):
                lin = 2 * c20 * C + c11  # linearization is lin * lambda
                br.append({"form": "linear", "slope": C, "stable_for": "lambda>0" if lin < 0 else "lambda<0"})
            return LocalBifurcation("transcritical", {**coeffs, "discriminant": disc, "branches": br,
                                                      "exchange_of_stability": True})
        raise Degenerate("no transversal branches: c11^2 - 4 c20 c02 <= 0", discriminant=disc, **coeffs)
    raise Degenerate("coefficients fail the saddle-node, transcritical and pitchfork conditions", **coeffs)


# ---------------------------------------------------------------------------
# reduced coefficients


def local_taylor_coeffs(sys: SystemDef, param: str, x_eq, lam_c: float, order: int = 3) -> dict:
    """c_pq of the 1D reduced field u' = F(u, mu) with mu = lam - lam_c, p + q <= order.

    One-dimensional maps use F(x* + u) - (x* + u). Flows are reduced on the
    parameter-extended center manifold.
    """
    from .manifolds import extend_with_parameter, local_manifold_taylor, reduced_dynamics

    x_eq = np.asarray(x_eq, dtype=float)
    s = _at(sys, param, lam_c)
    if sys.dim == 1 and s.symbolic is not None:
        u, mu = sp.symbols("u mu_")
        expr = s.symbolic([sp.Float(x_eq[0], 30) + u], {param: sp.Float(lam_c, 30) + mu})[0]
        if sys.kind == "map":
            expr = expr - (sp.Float(x_eq[0], 30) + u)
        P = sp.Poly(sp.expand(sp.series(sp.series(expr, u, 0, order + 1).removeO(), mu, 0, order + 1).removeO()),
                    u, mu)
        out = {}
        for (p, q), v in P.terms():
            if 0 < p + q <= order:
                out[(p, q)] = float(v)
        out.pop((1, 0), None) if abs(out.get((1, 0), 0.0)) < 1e-9 else None
        return out
    if sys.kind != "flow":
        raise DynkitError("reduced coefficients for maps are only available in one dimension")
    ext = extend_with_parameter(s, param)
    eq = np.concatenate([x_eq, [lam_c]])
    h = local_manifold_taylor(ext, eq, "center", order, pinned=[sys.dim])
    in_idx = h.meta["in_idx"]
    if len(in_idx) != 2:
        raise DynkitError(f"center manifold has dimension {len(in_idx) - 1}, need 1", n_zero=len(in_idx) - 1)
    red = reduced_dynamics(ext, eq, h, order)
    out = {}
    for a, coef in red.terms.items():
        v = coef[0]
        v = complex(v).real if not isinstance(v, (int, float)) and not hasattr(v, "numerator") else float(v)
        if 0 < sum(a) <= order and v != 0.0:
            out[(a[0], a[1])] = float(v)
    return out


def odd_symmetry(sys: SystemDef, param: str, x_eq, lam_c: float, v_center: np.ndarray | None = None,
                 n_samples: int = 8, tol: float = 1e-12, seed: int = 0) -> np.ndarray | None:
    """Diagonal sign matrix S (as a vector) with f(S y) = S f(y) about x_eq and S v = -v."""
    n = sys.dim
    if n > 12:
        return None
    x_eq = np.asarray(x_eq, dtype=float)
    rng = np.random.default_rng(seed)
    lams = [lam_c, lam_c + 1e-3 * max(1.0, abs(lam_c)), lam_c - 1e-3 * max(1.0, abs(lam_c))]
    systems = [_at(sys, param, l) for l in lams]
    samples = [x_eq + 0.3 * rng.standard_normal(n) for _ in range(n_samples)]
    for signs in itertools.product((1.0, -1.0), repeat=n):
        S = np.array(signs)
        if np.all(S > 0) or np.any(np.abs(x_eq[S < 0]) > 1e-12):
            continue
        if v_center is not None and np.linalg.norm(S * v_center + v_center) > 1e-8 * np.linalg.norm(v_center):
            continue
        good = True
        for s in systems:
            for y in samples:
                a = raw_field(s, x_eq + S * (y - x_eq))
                b = S * raw_field(s, y) if s.kind == "flow" else x_eq + S * (raw_field(s, y) - x_eq)
                if np.linalg.norm(a - b) > tol * max(1.0, np.linalg.norm(a)):
                    good = False
                    break
            if not good:
                break
        if good:
            return S
    return None


# ---------------------------------------------------------------------------
# detection


@dataclass(frozen=True)
class BifurcationEvent:
    kind: str
    lambda_c: float
    location: np.ndarray
    data: dict
    confidence: str = "high"

    def to_json(self) -> dict:
        return {"kind": self.kind, "lambda_c": float(self.lambda_c),
                "location": [float(v) for v in self.location],
                "data": _jsonable(self.data), "confidence": self.confidence}


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, complex):
        return {"re": v.real, "im": v.imag}
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def _counts(ev: Sequence[complex], kind: str) -> dict:
    scale = max([abs(e) for e in ev] + [1.0])
    real = [e for e in ev if abs(e.imag) <= 1e-9 * scale]
    cplx = [e for e in ev if e.imag > 1e-9 * scale]
    if kind == "flow":
        return {"zero": sum(1 for e in real if e.real > 0), "hopf": sum(1 for e in cplx if e.real > 0)}
    return {"fold": sum(1 for e in real if e.real > 1), "flip": sum(1 for e in real if e.real < -1),
            "ns": sum(1 for e in cplx if abs(e) > 1)}


def _eigs_at(sys: SystemDef, param: str, lam: float, x_guess) -> tuple[np.ndarray, np.ndarray]:
    s = _at(sys, param, lam)
    x = newton_solve(s, x_guess, 1e-12)
    return x, np.linalg.eigvals(jacobian_at(s, x))


def _bisect(sys, param, a: BranchPoint, b: BranchPoint, key: str, width: float = 1e-10):
    ca = _counts(a.eigenvalues, sys.kind)[key]
    la, lb, xa, xb = a.lam, b.lam, a.x, b.x
    while abs(lb - la) > width * max(1.0, abs(la)):
        lm = 0.5 * (la + lb)
        xg = xa + (xb - xa) * (lm - la) / (lb - la)
        xm, ev = _eigs_at(sys, param, lm, xg)
        if _counts([complex(e) for e in ev], sys.kind)[key] == ca:
            la, xa = lm, xm
        else:
            lb, xb = lm, xm
    lc = 0.5 * (la + lb)
    xc, ev = _eigs_at(sys, param, lc, 0.5 * (xa + xb))
    return lc, xc, [complex(e) for e in ev], (la, lb)


def _classify_zero(sys: SystemDef, param: str, lc: float, xc: np.ndarray, ev) -> tuple[str, dict, str]:
    s = _at(sys, param, lc)
    J = jacobian_at(s, xc)
    w, V = np.linalg.eig(J if sys.kind == "flow" else J - np.eye(sys.dim))
    i = int(np.argmin(np.abs(w)))
    v = np.real(V[:, i])
    try:
        c = local_taylor_coeffs(sys, param, xc, lc)
    except DynkitError as e:
        return "saddle_node", {"note": f"no reduction: {e}"}, "low"
    S = odd_symmetry(sys, param, xc, lc, v)
    try:
        res = classify_local_bif(c, symmetry_odd=S is not None)
    except Degenerate as e:
        return "saddle_node", {"coefficients": {f"c{p}{q}": v for (p, q), v in c.items()},
                               "note": str(e)}, "low"
    data = dict(res.data)
    data["coefficients"] = {f"c{p}{q}": v for (p, q), v in c.items()}
    if S is not None:
        data["symmetry"] = [int(v) for v in S]
    return res.kind, data, "high"


def detect_bifurcations(branch: Branch, hopf_a_prime_tol: float = 1e-6) -> list[BifurcationEvent]:
    """Scan a branch for eigenvalue crossings and classify each one."""
    sys, param = branch.sys, branch.param
    pts = branch.points
    events: list[BifurcationEvent] = []
    if len(pts) < 3 and branch.fold_at_end is None:
        return events
    for a, b in zip(pts[:-1], pts[1:]):
        ca, cb = _counts(a.eigenvalues, sys.kind), _counts(b.eigenvalues, sys.kind)
        for key in ca:
            if ca[key] == cb[key]:
                continue
            try:
                lc, xc, ev, br = _bisect(sys, param, a, b, key)
            except DynkitError as e:
                log.info("refinement failed between %s and %s: %s", a.lam, b.lam, e)
                continue
            data: dict = {"bracket": list(br), "eigenvalues": ev}
            conf = "high"
            if key in ("zero", "fold"):
                kind, extra, conf = _classify_zero(sys, param, lc, xc, ev)
                data.update(extra)
            elif key == "hopf":
                kind = "hopf"
                pair = min((e for e in ev if e.imag > 0), key=lambda e: abs(e.real), default=None)
                dl = 1e-5 * max(1.0, abs(lc))
                try:
                    _, ep = _eigs_at(sys, param, lc + dl, xc)
                    _, em = _eigs_at(sys, param, lc - dl, xc)
                    rp = min((e for e in ep if e.imag > 0), key=lambda e: abs(e.real)).real
                    rm = min((e for e in em if e.imag > 0), key=lambda e: abs(e.real)).real
                    a_prime = (rp - rm) / (2 * dl)
                except (DynkitError, ValueError):
                    a_prime = float("nan")
                data.update({"omega": abs(pair.imag) if pair is not None else None, "a_prime": a_prime,
                             "transversal": bool(abs(a_prime) > hopf_a_prime_tol)})
                if not abs(a_prime) > hopf_a_prime_tol:
                    conf = "low"
            elif key == "flip":
                kind = "flip"
                if sys.dim == 1:
                    from .periodic import flip_coefficients
                    try:
                        fc = flip_coefficients(_at(sys, param, lc), float(xc[0]), param, None, tol=1e-5)
                        data.update({"c01": fc.c01, "c11": fc.c11, "c20": fc.c20, "c30": fc.c30,
                                     "schwartzian": fc.schwartzian,
                                     "criticality": None if fc.period2_stable is None else
                                     ("supercritical" if fc.period2_stable else "subcritical")})
                    except DynkitError as e:
                        data["note"] = str(e)
                        conf = "low"
            else:
                kind = "neimark_sacker"
                mu = min((e for e in ev if e.imag > 0), key=lambda e: abs(abs(e) - 1), default=None)
                strong = [j for j in range(1, 5) if mu is not None and abs(mu ** j - 1) < 1e-3]
                data.update({"multiplier": mu, "strong_resonance": strong})
                if strong:
                    conf = "low"
            events.append(BifurcationEvent(kind, lc, xc, data, conf))
    if branch.fold_at_end is not None:
        lf, xf = branch.fold_at_end
        kind, extra, conf = _classify_zero(sys, param, lf, np.asarray(xf), None)
        events.append(BifurcationEvent(kind, lf, np.asarray(xf), {"fold": True, **extra}, conf))
    return events


# ---------------------------------------------------------------------------
# orbit diagram


def bifurcation_diagram(sys: SystemDef, param: str, lam_grid: Sequence[float], transient: int = 1000,
                        keep: int = 100, x0: float = 0.5) -> np.ndarray:
    """Rows (lam, x_k) for k = transient+1 .. transient+keep of a 1D map."""
    if sys.kind != "map" or sys.dim != 1:
        raise DynkitError("orbit diagram needs a one-dimensional map")
    pf = sys.param_field
    base = dict(sys.params)

    def cell(lam):
        p = dict(base)
        p[param] = float(lam)
        if pf is not None:
            F = lambda x: float(pf(np.array([x]), p)[0])
        else:
            s = _at(sys, param, lam)
            F = lambda x: float(raw_field(s, np.array([x]))[0])
        x = float(x0)
        try:
            for _ in range(transient):
                x = F(x)
            out = []
            for _ in range(keep):
                x = F(x)
                out.append(x)
            if not np.all(np.isfinite(out)):
                raise NonFiniteState("orbit became non-finite")
        except (NonFiniteState, OverflowError) as e:
            log.warning("lambda=%s skipped: %s", lam, e)
            return []
        return [(float(lam), v) for v in out]

    with ThreadPoolExecutor(max_workers()) as ex:
        rows = [r for cellrows in ex.map(cell, lam_grid) for r in cellrows]
    return np.array(rows).reshape(-1, 2)


def diagram_csv(rows: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("lambda,x\n")
    for lam, x in rows:
        buf.write(f"{fmt(lam)},{fmt(x)}\n")
    return buf.getvalue()


def count_clusters(values: Sequence[float], tol: float = 1e-4) -> int:
    """Number of groups of sorted values separated by gaps larger than tol."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return 0
    return int(1 + np.sum(np.diff(v) > tol))
