"""Box-counting dimension of point clouds."""

from __future__ import annotations

import io
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..dynamics import fmt
from ..errors import DegenerateCloud
from ..util import max_workers

N_OFFSETS = 4
TIE_TOL = 1e-7  # in cell units: closer than this to a grid plane counts as on it


@dataclass(frozen=True)
class DimensionEstimate:
    eps_ladder: tuple[float, ...]
    counts: tuple[int, ...]  # closed-cell cover of the grid anchored at the bounding-box corner
    slope: float
    r2: float
    offset_counts: tuple[tuple[int, ...], ...] = ()  # per eps, grids shifted by j/n cell (diagnostic)
    mean_counts: tuple[float, ...] = ()  # offset average (diagnostic)


def _count(P: np.ndarray, lo: np.ndarray, span: np.ndarray, eps: float, shift: float) -> int:
    """Fewest closed grid cells of side eps covering P.

    Cells are anchored at lo - shift*eps. A point on a grid plane lies in
    both neighbouring closed cells; such points join an already occupied
    cell when they can, so sets aligned with the grid are not double counted.
    """
    origin = lo - shift * eps
    ncell = np.maximum(np.ceil((span + shift * eps) / eps - TIE_TOL).astype(np.int64), 1)
    t = (P - origin) / eps
    base = np.floor(t + TIE_TOL).astype(np.int64)
    on_plane = np.abs(t - np.round(t)) < TIE_TOL
    cells = np.clip(base, 0, ncell - 1)
    sure = ~on_plane.any(axis=1)
    occupied = set(map(tuple, np.unique(cells[sure], axis=0)))
    for i in np.flatnonzero(~sure):
        dims = np.flatnonzero(on_plane[i])
        cands = []
        for step in itertools.product((0, -1), repeat=len(dims)):
            c = base[i].copy()
            c[dims] += step
            cands.append(tuple(np.clip(c, 0, ncell - 1)))
        if not any(c in occupied for c in cands):
            occupied.add(cands[0])
    return len(occupied)


def box_dimension(points, eps_ladder: Sequence[float], n_offsets: int = N_OFFSETS,
                  min_points: int = 1000) -> DimensionEstimate:
    """Least-squares slope of log N(eps) against log(1/eps).

    N(eps) is the closed-cell cover count on the grid anchored at the
    bounding-box corner. Counts on ``n_offsets`` diagonally shifted grids are
    reported alongside; they are not used in the fit because a shifted grid
    needs an extra layer of cells at the far face of the bounding box.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if len(P) < min_points:
        raise ValueError(f"need at least {min_points} points")
    eps = [float(e) for e in eps_ladder]
    if len(eps) < 4:
        raise ValueError("need at least 4 rungs in the eps ladder")
    lo, hi = P.min(axis=0), P.max(axis=0)
    span = hi - lo
    if not np.any(span > 0):
        raise DegenerateCloud("point cloud has zero diameter")

    def per_eps(e):
        return tuple(_count(P, lo, span, e, j / n_offsets) for j in range(max(n_offsets, 1)))

    with ThreadPoolExecutor(max_workers()) as ex:
        table = list(ex.map(per_eps, eps))
    counts = tuple(row[0] for row in table)
    mean_counts = tuple(float(np.mean(row)) for row in table)
    x = np.log(1.0 / np.array(eps))
    y = np.log(np.array(counts, dtype=float))
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ np.array([slope, icpt])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return DimensionEstimate(tuple(eps), counts, float(slope), r2, tuple(table), mean_counts)


def cantor_endpoints(depth: int) -> np.ndarray:
    """Endpoints of the 2^depth intervals left after `depth` middle-third removals."""
    left = np.zeros(1)
    w = 1.0
    for _ in range(depth):
        w /= 3.0
        left = np.concatenate([left, left + 2 * w])
    return np.sort(np.concatenate([left, left + w]))


def cloud_csv(points) -> str:
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    buf = io.StringIO()
    buf.write(",".join(f"x{i + 1}" for i in range(P.shape[1])) + "\n")
    for row in P:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()
