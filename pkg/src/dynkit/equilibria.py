"""Equilibria and fixed points: location, linear classification, Liapunov certificates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import NoConvergence, NotHurwitz, SingularJacobian
from .systems import (
    SystemDef,
    _check_dim,
    jacobian_at,
    raw_field,
    reduce_state,
    state_difference,
    state_distance,
)

log = logging.getLogger(__name__)

ZERO_TOL = 1e-8
DEDUP_DIST = 1e-6


class LinearClass(NamedTuple):
    n_plus: int
    n_zero: int
    n_minus: int
    label: str


@dataclass(frozen=True)
class EquilibriumReport:
    point: np.ndarray
    eigenvalues: tuple[complex, ...]
    n_plus: int
    n_zero: int
    n_minus: int
    label: str
    stability: str
    jacobian: np.ndarray | None = field(default=None, compare=False, repr=False)

    def to_json(self) -> dict:
        return {
            "point": [float(v) for v in self.point],
            "eigenvalues": [{"re": float(e.real), "im": float(e.imag)} for e in self.eigenvalues],
            "dims": {"plus": self.n_plus, "zero": self.n_zero, "minus": self.n_minus},
            "label": self.label,
            "stability": self.stability,
        }


def _sort_eigs(eigs) -> tuple[complex, ...]:
    ev = [complex(e) for e in eigs]
    return tuple(sorted(ev, key=lambda z: (-round(z.real, 12), -round(z.imag, 12))))


def classify_linear(eigs: Sequence[complex], kind: str = "flow", zero_tol: float = ZERO_TOL,
                    matrix: np.ndarray | None = None) -> LinearClass:
    """Subspace dimensions and type label from a spectrum.

    Flows split by the sign of the real part, maps by modulus against 1.
    Real 2D flows get a planar refinement appended after a comma, for
    example ``"sink, node"``. Equal real eigenvalues need ``matrix`` to tell a
    degenerate node (diagonal, geometric multiplicity 2) from an improper
    node.
    """
    ev = [complex(e) for e in eigs]
    if kind == "flow":
        key = [e.real for e in ev]
    else:
        key = [abs(e) - 1.0 for e in ev]
    n_plus = sum(1 for v in key if v > zero_tol)
    n_minus = sum(1 for v in key if v < -zero_tol)
    n_zero = len(ev) - n_plus - n_minus
    if n_zero == 0:
        if n_plus == 0:
            label = "sink"
        elif n_minus == 0:
            label = "source"
        else:
            label = "hyperbolic"
    elif n_plus == 0 and n_minus == 0:
        label = "elliptic"
    else:
        label = "nonhyperbolic"
    if kind == "flow" and len(ev) == 2:
        planar = _planar_type(ev, zero_tol, matrix)
        if planar:
            label = f"{label}, {planar}"
    return LinearClass(n_plus, n_zero, n_minus, label)


def _planar_type(ev: list[complex], zero_tol: float, matrix) -> str | None:
    a, b = ev
    complex_pair = abs(a.imag) > zero_tol
    if complex_pair:
        return "center" if abs(a.real) <= zero_tol else "focus"
    ra, rb = a.real, b.real
    if abs(ra) <= zero_tol or abs(rb) <= zero_tol:
        return None
    if ra * rb < 0:
        return "saddle"
    if abs(ra - rb) <= zero_tol * max(1.0, abs(ra)):
        if matrix is None:
            return "node"
        A = np.asarray(matrix, dtype=float)
        s = np.linalg.svd(A - 0.5 * (ra + rb) * np.eye(2), compute_uv=False)
        thresh = 1e-8 * max(np.linalg.norm(A, 2), 1e-300)
        rank = int(np.sum(s > thresh))
        return "degenerate node" if rank == 0 else "improper node"
    return "node"


def stability_verdict(rep: EquilibriumReport) -> tuple[str, str]:
    """Verdict plus a short reason string."""
    if rep.n_plus > 0:
        return "unstable", f"{rep.n_plus} eigenvalue(s) in the unstable region"
    if rep.n_zero == 0:
        return "asymptotically_stable", "all eigenvalues strictly stable"
    return "inconclusive", "critical eigenvalues present; use a center-manifold reduction"


def _stability(n_plus: int, n_zero: int) -> str:
    if n_plus > 0:
        return "unstable"
    if n_zero == 0:
        return "asymptotically_stable"
    return "inconclusive"


def report_at(sys: SystemDef, x, zero_tol: float = ZERO_TOL) -> EquilibriumReport:
    """Linearize at x and classify."""
    x = np.asarray(x, dtype=float)
    J = jacobian_at(sys, x)
    ev = _sort_eigs(np.linalg.eigvals(J))
    cls = classify_linear(ev, sys.kind, zero_tol, matrix=J)
    return EquilibriumReport(x, ev, cls.n_plus, cls.n_zero, cls.n_minus, cls.label,
                             _stability(cls.n_plus, cls.n_zero), jacobian=J)


def _residual(sys: SystemDef, x: np.ndarray) -> np.ndarray:
    if sys.kind == "flow":
        return raw_field(sys, x)
    return state_difference(sys, raw_field(sys, x), x)


def _residual_jac(sys: SystemDef, x: np.ndarray) -> np.ndarray:
    J = jacobian_at(sys, x)
    return J if sys.kind == "flow" else J - np.eye(sys.dim)


def newton_solve(sys: SystemDef, x0, tol: float = 1e-10, max_iter: int = 60) -> np.ndarray:
    """Damped Newton on f(x)=0 (flows) or F(x)-x=0 (maps)."""
    x = np.array(x0, dtype=float)
    r = _residual(sys, x)
    nr = float(np.linalg.norm(r))
    polish = 0
    for _ in range(max_iter):
        if nr <= tol:
            polish += 1
            if polish > 2 or nr == 0.0:
                return x
        JG = _residual_jac(sys, x)
        try:
            if not np.all(np.isfinite(JG)) or np.linalg.cond(JG) > 1e14:
                raise np.linalg.LinAlgError
            dx = np.linalg.solve(JG, -r)
        except np.linalg.LinAlgError:
            if nr <= tol:
                return x
            raise SingularJacobian("singular Jacobian during Newton iteration", x=list(x))
        alpha = 1.0
        for _ in range(31):
            xn = x + alpha * dx
            rn = _residual(sys, xn)
            nrn = float(np.linalg.norm(rn))
            if np.isfinite(nrn) and nrn < nr:
                break
            alpha *= 0.5
        else:
            if nr <= tol:
                return x
            raise NoConvergence("damping failed to reduce the residual", residual=nr)
        x, r, nr = xn, rn, nrn
    if nr <= tol:
        return x
    raise NoConvergence(f"Newton did not converge (residual {nr:.3g})", residual=nr)


def find_equilibria(sys: SystemDef, seeds: Sequence, tol: float = 1e-10, zero_tol: float = ZERO_TOL,
                    seed: int = 0) -> list[EquilibriumReport]:
    """Newton from each seed, deduplicate, classify.

    Seeds that fail are dropped (logged). A singular Jacobian triggers one
    retry from a randomly perturbed seed.
    """
    rng = np.random.default_rng(seed)
    roots: list[np.ndarray] = []
    for s in seeds:
        s = _check_dim(sys, s)
        x = None
        for attempt in range(2):
            start = s if attempt == 0 else s + 1e-3 * (1 + np.abs(s)) * rng.standard_normal(sys.dim)
            try:
                x = newton_solve(sys, start, tol)
                break
            except SingularJacobian:
                log.info("singular Jacobian from seed %s (attempt %d)", s, attempt)
                continue
            except NoConvergence as e:
                log.info("seed %s dropped: %s", s, e)
                break
        if x is None:
            continue
        x = reduce_state(sys, x)
        if not any(state_distance(sys, x, r) < DEDUP_DIST for r in roots):
            roots.append(x)
    roots.sort(key=lambda v: tuple(np.round(v, 9)))
    return [report_at(sys, r, zero_tol) for r in roots]


# ---------------------------------------------------------------------------
# Liapunov equation


@dataclass(frozen=True)
class LiapunovCertificate:
    Q: np.ndarray
    residual: float
    min_eigenvalue: float

    def V(self, x, x_star=None) -> float:
        y = np.asarray(x, dtype=float) - (0 if x_star is None else np.asarray(x_star, dtype=float))
        return float(y @ self.Q @ y)


def liapunov_certificate(A) -> LiapunovCertificate:
    """Solve A^T Q + Q A = -I by a dense Kronecker solve."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    ev = np.linalg.eigvals(A)
    if np.any(ev.real >= -1e-10):
        raise NotHurwitz("matrix has an eigenvalue with Re >= -1e-10",
                         max_real_part=float(np.max(ev.real)))
    I = np.eye(n)
    # column-major vec: vec(A^T Q) = (I kron A^T) vec Q, vec(Q A) = (A^T kron I) vec Q
    K = np.kron(I, A.T) + np.kron(A.T, I)
    q = np.linalg.solve(K, -I.ravel(order="F"))
    Q = q.reshape((n, n), order="F")
    Q = 0.5 * (Q + Q.T)
    res = float(np.linalg.norm(A.T @ Q + Q @ A + I))
    mine = float(np.min(np.linalg.eigvalsh(Q)))
    return LiapunovCertificate(Q, res, mine)
