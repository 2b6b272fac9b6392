import cmath
import math
from fractions import Fraction

import numpy as np
import pytest

from dynkit.errors import SmallDivisor, StrongResonance
from dynkit.manifolds import taylor_polys
from dynkit.normalform import (adk_operator, hopf_sign_estimate, neimark_homological_coeffs, normal_form_step,
                               resonances, standard_map_conjugacy_o1)
from dynkit.poly import Poly, TaylorMapPoly
from dynkit.systems import build_builtin


def _field(name, params=None, order=3):
    s = build_builtin(name, params or {})
    polys, _ = taylor_polys(s, [0.0] * s.dim, order)
    return TaylorMapPoly(s.dim, tuple(polys))


def test_resonance_order2():
    rep = resonances([2, 1], 2)
    assert [(j, p) for j, p, _ in rep.hits] == [(1, (0, 2))]


def test_hopf_resonances():
    w = 1.3
    assert resonances([1j * w, -1j * w], 2).empty
    hits = {(j, p) for j, p, _ in resonances([1j * w, -1j * w], 3).hits}
    assert hits == {(1, (2, 1)), (2, (1, 2))}


def test_adk_diagonal():
    op = adk_operator([[2, 0], [0, 1]], 2)
    assert op.dim == 6
    M = np.asarray(op.matrix, dtype=float)
    assert np.allclose(M, np.diag(np.diag(M)))
    for i, (j, a) in enumerate(op.basis):
        want = 2 * a[0] + 1 * a[1] - (2, 1)[j]
        assert M[i, i] == want
    assert M[op.basis.index((0, (0, 2))), op.basis.index((0, (0, 2)))] == 0


def test_adk_zero():
    assert not np.any(np.asarray(adk_operator([[0, 0], [0, 0]], 3).matrix, dtype=float))


def test_step_keeps_resonant_term():
    st = normal_form_step(_field("resonant_example", order=2), 2)
    assert st.resonant.terms == {(0, 2): (Fraction(1), Fraction(0))}
    assert st.h.terms == {}


def test_step_removes_nonresonant():
    # y1' = -y1 + y1 y2, y2' = -2 y2: only p.a = a_j with a = (-1, -2) matters
    F = TaylorMapPoly(2, (Poly(2, {(1, 0): Fraction(-1), (1, 1): Fraction(1)}),
                          Poly(2, {(0, 1): Fraction(-2)})))
    st = normal_form_step(F, 2)
    assert st.resonant.terms == {}
    # h solves ad_2 A h = g: coefficient 1 / ((-1) + (-2) - (-1))
    assert st.h.terms == {(1, 1): (Fraction(-1, 2), Fraction(0))}
    assert all(sum(a) != 2 for a in st.field.terms)


def test_step_hopf_cubic_is_resonant():
    F = _field("hopf_normal", {"lam": 0}, order=3)
    st = normal_form_step(F, 3)
    for a, c in F.terms.items():
        if sum(a) == 3:
            assert np.allclose(np.asarray(st.resonant.coeff(a), dtype=float), np.asarray(c, dtype=float), atol=1e-12)
    assert all(abs(float(v)) < 1e-12 for c in st.h.terms.values() for v in c)


def test_step_zero_nonlinearity():
    F = _field("linear", {"A": [[-1, 0], [0, 2]]}, order=3)
    st = normal_form_step(F, 2)
    assert st.h.terms == {} and st.resonant.terms == {}


def test_neimark_divisors():
    mu = cmath.exp(2j * math.pi * 0.33)
    res = neimark_homological_coeffs(mu, {(0, 2): 1.0, (2, 1): 1.0, (2, 0): 1.0}, tol=0.1)
    want = abs(cmath.exp(2j * math.pi * 0.33 * (0 - 2 - 1)) - 1)
    assert abs(res.divisors[(0, 2)] - want) < 1e-12
    assert (0, 2) in res.nonremovable and (2, 1) in res.nonremovable
    assert (2, 0) in res.h


def test_neimark_strong():
    with pytest.raises(StrongResonance):
        neimark_homological_coeffs(1j, {(2, 0): 1.0})


def test_conjugacy_closed_forms():
    c = standard_map_conjugacy_o1(math.pi)
    phi = np.linspace(0, 2 * math.pi, 50)
    assert np.allclose(c.f1(phi), np.sin(phi) / 4, atol=1e-14)
    assert np.allclose(c.g1(phi), np.cos(phi - math.pi / 2) / 2, atol=1e-14)


def test_conjugacy_residual():
    c = standard_map_conjugacy_o1(math.pi / 2)
    phi = np.linspace(0, 2 * math.pi, 100)
    assert c.residual(phi) <= 1e-12
    assert np.allclose(c.f1(phi), c.f1_closed(phi), atol=1e-13)


@pytest.mark.parametrize("w", [0.0, 1e-12, 2 * math.pi])
def test_conjugacy_small_divisor(w):
    with pytest.raises(SmallDivisor):
        standard_map_conjugacy_o1(w)


@pytest.mark.slow
def test_hopf_van_der_pol_supercritical():
    est = hopf_sign_estimate(build_builtin("van_der_pol"), "lam", 0.0, [0.02, 0.04, 0.06, 0.08, 0.1])
    assert est.verdict == "supercritical" and est.r2 >= 0.95


def test_hopf_normal_form_radius():
    est = hopf_sign_estimate(build_builtin("hopf_normal"), "lam", 0.0, [0.02, 0.04, 0.06])
    assert est.verdict == "supercritical"
    assert abs(est.K - 1) < 0.02
