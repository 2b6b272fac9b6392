import math

import numpy as np
import pytest

from dynkit.dynamics import FlowOptions, flow_to
from dynkit.errors import CollapsedToEquilibrium, NotCritical
from dynkit.periodic import (SectionDef, find_periodic_orbit, flip_coefficients, hill_chart, hill_monodromy,
                             monodromy, period_doubling_cascade, poincare_map)
from dynkit.systems import build_builtin

TIGHT = FlowOptions(abs_tol=1e-12, rel_tol=1e-12)


def test_duffing_section_is_time_one_map():
    forced = build_builtin("duffing_forced", {"eps": 0})
    sec = SectionDef([0, 0, 0], [0, 0, 1])
    x, tau = poincare_map(forced, sec, [0.3, 0.2, 0.0], TIGHT)
    ref = flow_to(build_builtin("duffing"), [0.3, 0.2], 1.0, TIGHT)
    assert abs(tau - 1) < 1e-9
    assert np.allclose(x[:2], ref, atol=1e-8)


def test_duffing_section_preserves_energy():
    forced = build_builtin("duffing_forced", {"eps": 0})
    sec = SectionDef([0, 0, 0], [0, 0, 1])
    H = lambda v: 0.5 * v[1] ** 2 - 0.5 * v[0] ** 2 + 0.25 * v[0] ** 4
    x = np.array([0.5, 0.1, 0.0])
    for _ in range(5):
        y, _ = poincare_map(forced, sec, x, TIGHT)
        assert abs(H(y) - H(x)) < 1e-8
        x = y


def test_rotation_return():
    sec = SectionDef([0, 0], [0, 1])
    x, tau = poincare_map(build_builtin("rotation"), sec, [1.5, 0.0], TIGHT)
    assert abs(tau - 2 * math.pi) < 1e-9 and np.allclose(x, [1.5, 0.0], atol=1e-9)


def test_van_der_pol_orbit():
    orb = find_periodic_orbit(build_builtin("van_der_pol", {"lam": 1}), [2.0, 0.0], 6.5)
    assert abs(orb.T - 6.66) < 0.01 and orb.residual < 1e-8
    m = monodromy(build_builtin("van_der_pol", {"lam": 1}), orb.x0, orb.T)
    assert m.trivial_residual < 1e-4
    assert abs(m.multipliers[1]) < 1


def test_rotation_orbit_and_monodromy():
    orb = find_periodic_orbit(build_builtin("rotation"), [1.0, 0.0], 6.0)
    assert abs(orb.T - 2 * math.pi) < 1e-8
    m = monodromy(build_builtin("rotation"), [1.0, 0.0], 2 * math.pi)
    assert np.allclose(m.U_T, np.eye(2), atol=1e-9)


def test_lorenz_collapse():
    with pytest.raises(CollapsedToEquilibrium):
        find_periodic_orbit(build_builtin("lorenz", {"r": 0.5}), [1.0, 1.0, 1.0], 2.0)


def test_duffing_closed_orbit_multipliers():
    s = build_builtin("duffing")
    orb = find_periodic_orbit(s, [1.2, 0.0], 4.5)
    m = monodromy(s, orb.x0, orb.T)
    assert all(abs(abs(mu) - 1) < 1e-4 for mu in m.multipliers)
    assert abs(np.linalg.det(m.U_T) - 1) < 1e-8


def test_hill_equal_frequencies():
    T = 2.3
    m = hill_monodromy(T, 1.0)
    assert abs(np.trace(m.U_T) - 2 * math.cos(T)) < 1e-14


def test_hill_matches_numeric():
    m = hill_monodromy(math.pi, 2.0)
    num = monodromy(build_builtin("hill", {"T": math.pi, "Omega": 2.0}), [0.0, 0.0], math.pi)
    assert np.max(np.abs(m.U_T - num.U_T)) < 1e-8


def test_hill_det():
    rng = np.random.default_rng(0)
    for T, om in rng.uniform(0.2, 5, (20, 2)):
        assert abs(np.linalg.det(hill_monodromy(T, om).U_T) - 1) < 1e-14


def test_hill_chart_rows():
    rows = hill_chart(math.pi, [1.0, 2.0])
    assert len(rows) == 2 and abs(rows[0][1] - 2 * math.cos(math.pi)) < 1e-12


def test_cascade():
    res = period_doubling_cascade(build_builtin("logistic"), "lam", (1.5, 4.0), n_max=6)
    assert abs(res.lambdas[0] - 3) < 1e-8
    assert abs(res.lambdas[1] - (1 + math.sqrt(6))) < 1e-6
    assert abs(res.deltas[-1] - 4.669) < 0.05 * 4.669
    assert abs(res.accumulation_estimate - 3.56) < 1e-2
    assert res.to_csv().splitlines()[0] == "n,lambda_n,delta_n"


def test_flip_logistic_supercritical():
    fc = flip_coefficients(build_builtin("logistic"), 2 / 3, "lam", 3.0)
    assert fc.schwartzian < 0 and fc.period2_stable


def test_flip_prediction():
    fc = flip_coefficients(build_builtin("logistic"), 2 / 3, "lam", 3.0)
    lam = 3.001
    # exact 2-cycle of the logistic map: roots of lam^2 x^2 - lam(lam+1) x + (lam+1) = 0
    disc = math.sqrt((lam + 1) * (lam - 3))
    x_plus = (lam + 1 + disc) / (2 * lam)
    x_star = 1 - 1 / lam
    u2_exact = (x_plus - x_star) ** 2
    u2 = fc.predicted_u2(lam - 3.0)
    assert abs(u2 - u2_exact) / u2_exact < 0.1


def test_flip_not_critical():
    with pytest.raises(NotCritical):
        flip_coefficients(build_builtin("logistic"), 0.5, "lam", 2.0)
