import math

import numpy as np
import pytest

from dynkit.equilibria import (classify_linear, find_equilibria, liapunov_certificate, newton_solve,
                               report_at, stability_verdict)
from dynkit.errors import NotHurwitz
from dynkit.systems import build_builtin


def _grid(dim, lo=-10, hi=10, n=5):
    axes = [np.linspace(lo, hi, n)] * dim
    return np.array(np.meshgrid(*axes)).reshape(dim, -1).T


def test_lorenz_equilibria():
    b, r = 8 / 3, 28.0
    reps = find_equilibria(build_builtin("lorenz"), _grid(3))
    q = math.sqrt(b * (r - 1))
    want = [np.zeros(3), np.array([q, q, r - 1]), np.array([-q, -q, r - 1])]
    assert len(reps) == 3
    for w in want:
        assert min(np.max(np.abs(rep.point - w)) for rep in reps) < 1e-8


def test_standard_map_fixed_points():
    reps = find_equilibria(build_builtin("standard_map", {"eps": 0.5}), _grid(2, 0.1, 6.0, 6))
    pts = sorted(tuple(np.round(r.point, 9)) for r in reps)
    assert any(abs(p[0]) < 1e-9 and abs(p[1]) < 1e-9 for p in pts)
    assert any(abs(p[0] - math.pi) < 1e-9 and abs(p[1]) < 1e-9 for p in pts)


def test_logistic_fixed_points():
    reps = find_equilibria(build_builtin("logistic", {"lam": 3.5}), [[0.01], [0.3], [0.9]])
    vals = sorted(float(r.point[0]) for r in reps)
    assert len(vals) == 2 and abs(vals[0]) < 1e-12 and abs(vals[1] - 5 / 7) < 1e-12


@pytest.mark.parametrize("eigs,kind,label", [
    ([-1, -2], "flow", "sink, node"),
    ([1j, -1j], "flow", "elliptic, center"),
    ([0.5, 0.9], "map", "sink"),
])
def test_classify_linear(eigs, kind, label):
    assert classify_linear(eigs, kind).label == label


def test_classify_counts():
    c = classify_linear([2.0, -1.0, 0.0], "flow")
    assert (c.n_plus, c.n_zero, c.n_minus) == (1, 1, 1)


@pytest.mark.parametrize("A,Q", [
    (-np.eye(2), np.eye(2) / 2),
    (np.diag([-1.0, -2.0]), np.diag([0.5, 0.25])),
])
def test_liapunov_certificate(A, Q):
    cert = liapunov_certificate(A)
    assert np.allclose(cert.Q, Q, atol=1e-12)
    assert cert.residual < 1e-12 and cert.min_eigenvalue > 0


def test_liapunov_not_hurwitz():
    with pytest.raises(NotHurwitz):
        liapunov_certificate(np.diag([1.0, -1.0]))


def test_stability_verdicts():
    assert stability_verdict(report_at(build_builtin("lorenz"), [0, 0, 0]))[0] == "unstable"
    assert stability_verdict(report_at(build_builtin("lorenz", {"r": 0.5}), [0, 0, 0]))[0] == "asymptotically_stable"
    assert stability_verdict(report_at(build_builtin("center_example", {"c": 0.5}), [0, 0]))[0] == "inconclusive"


def test_newton_quadratic():
    x = newton_solve(build_builtin("fold_demo", {"lam": 4.0}), [1.0])
    assert abs(x[0] - 2.0) < 1e-12
