from fractions import Fraction

import numpy as np
import pytest

from dynkit.equilibria import report_at
from dynkit.manifolds import (extend_with_parameter, local_manifold_taylor, reduced_dynamics, spectral_split,
                              verify_invariance)
from dynkit.systems import build_builtin


def test_split_diagonal():
    sp_ = spectral_split(np.diag([-1.0, 0.0]))
    assert sp_.block_dims == (1, 1, 0)
    assert np.allclose(sp_.transform, np.eye(2))
    assert np.allclose(sp_.blocks[0], [[-1.0]]) and np.allclose(sp_.blocks[1], [[0.0]])


def test_split_rotation():
    sp_ = spectral_split(np.array([[0.0, -1.0], [1.0, 0.0]]))
    assert sp_.n_zero == 2 and sp_.n_minus == 0 and sp_.n_plus == 0


def test_split_reconstructs():
    A = np.array([[-2.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 3.0]])
    sp_ = spectral_split(A)
    T = sp_.transform
    assert np.allclose(np.linalg.solve(T, A @ T), sp_.block_diagonal(), atol=1e-10)


def test_lorenz_extended_at_r1():
    ext = extend_with_parameter(build_builtin("lorenz", {"r": 1}), "r")
    assert ext.dim == 4
    # the appended coordinate is the parameter itself, so r = 1 sits at (0, 0, 0, 1)
    rep = report_at(ext, [0, 0, 0, 1])
    assert (rep.n_zero, rep.n_minus, rep.n_plus) == (2, 2, 0)


def test_unstable_graph_and_reduction():
    s = build_builtin("unstable_example")
    h = local_manifold_taylor(s, [0, 0], "unstable", 4, exact=True)
    assert h.terms == {(2,): (Fraction(1, 3),)}
    assert reduced_dynamics(s, [0, 0], h, 4).terms == {(1,): (Fraction(1),)}


@pytest.mark.parametrize("c", [Fraction(0), Fraction(1, 2), Fraction(1), Fraction(2), Fraction(-3, 7)])
def test_center_graph(c):
    s = build_builtin("center_example", {"c": c})
    h = local_manifold_taylor(s, [0, 0], "center", 4, exact=True)
    assert h.coeff((2,))[0] == c and h.coeff((3,))[0] == 0 and h.coeff((4,))[0] == -2 * c * (c - 1)
    red = reduced_dynamics(s, [0, 0], h, 5)
    assert red.coeff((3,))[0] == c - 1 and red.coeff((5,))[0] == -2 * c * (c - 1)


def test_center_curve_of_equilibria():
    s = build_builtin("center_example", {"c": 1})
    h = local_manifold_taylor(s, [0, 0], "center", 4, exact=True)
    assert reduced_dynamics(s, [0, 0], h, 5).terms == {}


def test_linear_graph_zero():
    s = build_builtin("linear", {"A": [[-1.0, 0.0], [0.0, 2.0]]})
    h = local_manifold_taylor(s, [0, 0], "unstable", 4)
    assert h.terms == {}
    assert verify_invariance(s, [0, 0], h, 0.1) == 0.0


def test_invariance_scaling():
    s = build_builtin("center_example", {"c": Fraction(1, 2)})
    h = local_manifold_taylor(s, [0, 0], "center", 4, exact=True)
    r1 = verify_invariance(s, [0, 0], h, 2e-2)
    r2 = verify_invariance(s, [0, 0], h, 1e-2)
    assert r2 <= 1e-9
    assert r1 / r2 >= 2 ** 4 / 2


def test_float_mode_matches_exact():
    s = build_builtin("center_example", {"c": 0.5})
    h = local_manifold_taylor(s, [0, 0], "center", 4, exact=False)
    assert abs(float(h.coeff((2,))[0]) - 0.5) < 1e-10 and abs(float(h.coeff((4,))[0]) - 0.5) < 1e-10
