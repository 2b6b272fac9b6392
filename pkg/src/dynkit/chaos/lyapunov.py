"""Liapunov spectra by QR re-orthonormalization of a tangent frame."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ..dynamics import FlowOptions, make_integrator, variational_rhs
from ..errors import NonFiniteState
from ..systems import SystemDef, _check_dim, jacobian_at, raw_field, reduce_state

# fixed-step RK4 keeps the renormalization grid regular and is cheap for long horizons
SPECTRUM_OPTS = FlowOptions(method="rk4_fixed", dt=0.01)


@dataclass(frozen=True)
class SpectrumResult:
    exponents: tuple[float, ...]
    history: np.ndarray  # running estimates after each kept renormalization
    sum: float
    T_total: float | None = None
    N_total: int | None = None
    divergence_average: float | None = None  # mean of div f (flows) or log|det DF| (maps)
    unconverged: bool = False

    def to_json(self) -> dict:
        return {
            "exponents": list(self.exponents),
            "sum": self.sum,
            "divergence_average": self.divergence_average,
            "unconverged": self.unconverged,
            "T_total": self.T_total,
            "N_total": self.N_total,
            "history": self.history.tolist(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _qr_positive(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Q, R = np.linalg.qr(M)
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s, (R.T * s).T


def _log_abs(v: float) -> float:
    a = abs(v)
    return math.log(a) if a > 0 else -math.inf


def _finish(sums: np.ndarray, total: float, hist: list, div_sum: float, **kw) -> SpectrumResult:
    exps = sums / total
    order = np.argsort(-exps, kind="stable")
    exps = exps[order]
    H = np.array(hist)[:, order] if hist else np.zeros((0, len(exps)))
    unconv = False
    if len(H) >= 8:
        q = H[(3 * len(H)) // 4]
        scale = max(float(np.max(np.abs(exps[np.isfinite(exps)]), initial=0.0)), 1e-12)
        with np.errstate(invalid="ignore"):
            drift = np.abs(H[-1] - q)
        unconv = bool(np.any(drift[np.isfinite(drift)] > 0.05 * scale))
    return SpectrumResult(tuple(float(e) for e in exps), H, float(np.sum(exps)),
                          divergence_average=div_sum / total, unconverged=unconv, **kw)


def lyapunov_spectrum(sys: SystemDef, x0, T: float | None = None, N: int | None = None,
                      renorm_interval: float | int | None = None, n_discard: int | None = None,
                      opts: FlowOptions = SPECTRUM_OPTS, transient: float | int = 0) -> SpectrumResult:
    """All exponents along the orbit of x0.

    Flows use horizon T and re-orthonormalize every ``renorm_interval`` time
    units (default 1); maps use N iterates and renormalize every iterate by
    default. The first ``n_discard`` renormalizations (default 10%) are not
    averaged.
    """
    x = _check_dim(sys, x0)
    n = sys.dim
    if sys.kind == "map":
        if N is None:
            raise ValueError("maps need N")
        every = int(renorm_interval or 1)
        for _ in range(int(transient)):
            x = raw_field(sys, x)
        n_ren = int(N) // every
        skip = n_ren // 10 if n_discard is None else int(n_discard)
        Q = np.eye(n)
        sums = np.zeros(n)
        div_sum = 0.0
        kept = 0
        hist = []
        for k in range(n_ren):
            M = Q
            ld = 0.0
            for _ in range(every):
                J = jacobian_at(sys, x)
                M = J @ M
                ld += _log_abs(np.linalg.det(J))
                x = raw_field(sys, x)
                if sys.periodic_coords:
                    x = reduce_state(sys, x)
            if not np.all(np.isfinite(x)) or not np.all(np.isfinite(M)):
                raise NonFiniteState("orbit or tangent frame became non-finite", k=k)
            Q, R = _qr_positive(M)
            if k >= skip:
                sums += np.array([_log_abs(r) for r in np.diag(R)])
                div_sum += ld
                kept += 1
                hist.append(sums / (kept * every))
        if kept == 0:
            raise ValueError("nothing left after discarding renormalizations")
        return _finish(sums, kept * every, hist, div_sum, N_total=kept * every)

    if T is None:
        raise ValueError("flows need T")
    dt = float(renorm_interval or 1.0)
    integ = make_integrator(sys, opts, variational_rhs(sys))
    t = 0.0
    if transient:
        x = make_integrator(sys, opts).advance(0.0, x, float(transient))
        t = float(transient)
    n_ren = int(round(T / dt))
    skip = n_ren // 10 if n_discard is None else int(n_discard)
    Q = np.eye(n)
    sums = np.zeros(n)
    div_sum = 0.0
    kept = 0
    hist = []
    for k in range(n_ren):
        y = np.concatenate([x, Q.ravel(), [0.0]])
        y = integ.advance(t, y, t + dt)
        t += dt
        if not np.all(np.isfinite(y)):
            raise NonFiniteState("orbit or tangent frame became non-finite", t=t)
        x = y[:n]
        Q, R = _qr_positive(y[n:n + n * n].reshape(n, n))
        if k >= skip:
            sums += np.log(np.abs(np.diag(R)))
            div_sum += float(y[-1])
            kept += 1
            hist.append(sums / (kept * dt))
    if kept == 0:
        raise ValueError("nothing left after discarding renormalizations")
    return _finish(sums, kept * dt, hist, div_sum, T_total=kept * dt)
