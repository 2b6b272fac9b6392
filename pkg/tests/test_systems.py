import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from dynkit.errors import DimensionMismatch, UnknownParam, UnknownSystem
from dynkit.dynamics import iterate_map
from dynkit.systems import (BUILTINS, build_builtin, conservativity_report, custom_system, divergence_at,
                            divergence_exact, evaluate, finite_difference_jacobian, jacobian_at, reduce_state,
                            state_distance)


def test_lorenz_defaults():
    s = build_builtin("lorenz")
    assert s.kind == "flow" and s.dim == 3
    assert s.params["sigma"] == 10 and s.params["r"] == 28
    assert math.isclose(s.params["b"], 8 / 3)


def test_henon_defaults():
    s = build_builtin("henon")
    assert s.kind == "map" and s.dim == 2
    assert math.isclose(s.params["lam"], 1.4) and math.isclose(s.params["b"], 0.3)


def test_standard_map_eps0_is_shear():
    s = build_builtin("standard_map", {"eps": 0})
    q0, p0 = 0.3, 0.7
    x = iterate_map(s, [q0, p0], 25)
    assert abs(x[0] - (q0 + 25 * p0) % (2 * math.pi)) < 1e-12
    assert abs(x[1] - p0) < 1e-15


def test_unknown_system_and_param():
    with pytest.raises(UnknownSystem):
        build_builtin("nope")
    with pytest.raises(UnknownParam):
        build_builtin("lorenz", {"rho": 1.0})


@pytest.mark.parametrize("name,x,want", [
    ("lorenz", [0, 0, 0], [0, 0, 0]),
    ("logistic", [0.5], [1.0]),
])
def test_evaluate_examples(name, x, want):
    assert np.allclose(evaluate(build_builtin(name), x), want)


def test_standard_map_fixed_point():
    s = build_builtin("standard_map", {"eps": 0.5})
    assert np.allclose(evaluate(s, [math.pi, 0.0]), [math.pi, 0.0], atol=1e-15)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        evaluate(build_builtin("lorenz"), [1.0, 2.0])


def test_periodic_reduction():
    s = build_builtin("standard_map", {"eps": 0.5})
    x = reduce_state(s, [7.0, 1.0])
    assert 0 <= x[0] < 2 * math.pi
    assert abs(state_distance(s, [0.01, 0.0], [2 * math.pi - 0.01, 0.0]) - 0.02) < 1e-12


@pytest.mark.parametrize("name", sorted(n for n in BUILTINS if n not in ("blowup",)))
def test_analytic_jacobian_matches_fd(name):
    s = build_builtin(name)
    rng = np.random.default_rng(3)
    for _ in range(5):
        v = rng.standard_normal(s.dim)
        x = 0.5 * v / np.linalg.norm(v)
        if name in ("tent", "tent3"):  # piecewise linear on [0, 1]
            x = rng.uniform(0.05, 0.3, 1)
        J = jacobian_at(s, x)
        Jfd = finite_difference_jacobian(lambda y: evaluate(s, y) if not s.periodic_coords
                                         else np.asarray(s.evaluator(y), float), x)
        assert np.allclose(J, Jfd, rtol=1e-6, atol=1e-6 * max(1.0, np.max(np.abs(J))))


def test_henon_det():
    s = build_builtin("henon")
    for x in ([0.0, 0.0], [1.3, -0.2], [-0.7, 0.4]):
        assert abs(np.linalg.det(jacobian_at(s, x)) + 0.3) < 1e-15


def test_standard_map_det():
    rng = np.random.default_rng(0)
    for eps in (0.1, 1.0, 3.0):
        s = build_builtin("standard_map", {"eps": eps})
        for x in rng.uniform(-3, 3, (10, 2)):
            assert abs(np.linalg.det(jacobian_at(s, x)) - 1) < 1e-12


def test_linear_jacobian_exact():
    A = [[1.0, 2.0], [-3.0, -4.0]]
    s = build_builtin("linear", {"A": A})
    assert np.array_equal(jacobian_at(s, [0.3, 0.1]), np.array(A))


def test_divergence():
    s = build_builtin("lorenz")
    assert divergence_exact(s) == sp.Rational(-41, 3)
    assert abs(divergence_at(s, [1.0, 2.0, 3.0]) + 41 / 3) < 1e-12


def test_conservativity():
    rng = np.random.default_rng(1)
    assert conservativity_report(build_builtin("lorenz"), rng.uniform(-5, 5, (5, 3))).verdict == "dissipative"
    assert conservativity_report(build_builtin("standard_map"), rng.uniform(0, 6, (5, 2))).verdict == "conservative"
    rep = conservativity_report(build_builtin("logistic", {"lam": 4}), [[0.4], [0.9]])
    assert rep.verdict == "neither"


def test_exact_params_kept():
    s = build_builtin("center_example", {"c": Fraction(1, 3)})
    assert s.exact_params["c"] == Fraction(1, 3)


def test_custom_system():
    s = custom_system("decay", "flow", 1, lambda x: -x)
    assert np.allclose(evaluate(s, [2.0]), [-2.0])
    assert np.allclose(jacobian_at(s, [2.0]), [[-1.0]], atol=1e-8)
