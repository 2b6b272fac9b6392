import math

import numpy as np
import pytest

from dynkit.bifurcation import (bifurcation_diagram, classify_local_bif, continue_branch, count_clusters,
                                detect_bifurcations, local_taylor_coeffs, newton_polygon)
from dynkit.periodic import flip_coefficients
from dynkit.systems import build_builtin, custom_system


def _events(sys, param, x0, a, b, step):
    return [e for br in continue_branch(sys, param, x0, a, b, step=step) for e in detect_bifurcations(br)]


def test_lorenz_origin_branch():
    brs = continue_branch(build_builtin("lorenz"), "r", [0, 0, 0], 0.5, 2.0, step=0.05)
    lams = np.concatenate([b.lambdas for b in brs])
    assert lams.min() <= 0.5 + 1e-12 and lams.max() >= 2.0 - 1e-12
    assert all(np.max(np.abs(b.states)) < 1e-10 for b in brs)
    ev = [e for b in brs for e in detect_bifurcations(b)]
    pf = [e for e in ev if e.kind == "pitchfork"]
    assert len(pf) == 1 and abs(pf[0].lambda_c - 1) < 1e-4
    assert pf[0].data["symmetric"]


def test_lorenz_c_plus_branch():
    b = 8 / 3
    q = math.sqrt(b)
    brs = continue_branch(build_builtin("lorenz"), "r", [q, q, 1.0], 2.0, 26.0, step=0.25)
    for br in brs:
        for p in br.points:
            c = math.sqrt(b * (p.lam - 1))
            assert np.max(np.abs(p.x - [c, c, p.lam - 1])) < 1e-6
            assert (p.stability == "stable") == (p.lam < 470 / 19)
    hopf = [e for br in brs for e in detect_bifurcations(br) if e.kind == "hopf"]
    assert len(hopf) == 1 and abs(hopf[0].lambda_c - 470 / 19) < 1e-3 * 470 / 19


def test_fold_rounded():
    brs = continue_branch(build_builtin("fold_demo"), "lam", [1.0], 1.0, -0.5, step=0.05)
    pts = [(p.lam, float(p.x[0])) for br in brs for p in br.points]
    assert any(x > 0.5 for _, x in pts) and any(x < -0.5 for _, x in pts)
    for lam, x in pts:
        assert abs(x * x - lam) < 1e-8
    ev = [e for br in brs for e in detect_bifurcations(br)]
    sn = [e for e in ev if e.kind == "saddle_node"]
    assert sn and abs(sn[0].lambda_c) < 1e-6


def test_logistic_flip():
    lam0 = 2.5
    ev = _events(build_builtin("logistic"), "lam", [1 - 1 / lam0], lam0, 3.3, 0.02)
    flips = [e for e in ev if e.kind == "flip"]
    assert len(flips) == 1 and abs(flips[0].lambda_c - 3) < 1e-8


def test_coeffs_saddle_node():
    c = local_taylor_coeffs(build_builtin("fold_demo"), "lam", [0.0], 0.0, order=3)
    assert abs(c[(0, 1)] - 1) < 1e-8 and abs(c[(2, 0)] + 1) < 1e-8
    assert all(abs(v) < 1e-8 for k, v in c.items() if k not in ((0, 1), (2, 0)))


def test_coeffs_pitchfork():
    c = local_taylor_coeffs(build_builtin("pitchfork_demo"), "lam", [0.0, 0.0], 0.0, order=3)
    assert abs(c[(1, 1)] - 1) < 1e-6 and abs(c[(3, 0)] + 1) < 1e-6


def test_newton_polygon_saddle_node():
    npg = newton_polygon({(0, 1): 1.0, (2, 0): -1.0})
    assert npg.vertices == ((0, 1), (2, 0))
    assert len(npg.hull) == 1 and abs(npg.hull[0][2] + 0.5) < 1e-15
    assert npg.candidate_exponents == (0.5,)


def test_newton_polygon_transcritical():
    npg = newton_polygon({(0, 2): 1.0, (1, 1): 1.0, (2, 0): 1.0})
    assert set(npg.vertices) == {(0, 2), (1, 1), (2, 0)}
    assert all(abs(h[2] + 1) < 1e-15 for h in npg.hull)
    assert npg.candidate_exponents == (1.0,)


def test_newton_polygon_single():
    npg = newton_polygon({(2, 0): 1.0})
    assert npg.hull == () and npg.candidate_exponents == ()


def test_classify_saddle_node():
    lb = classify_local_bif({(0, 1): 1.0, (2, 0): -1.0})
    assert lb.kind == "saddle_node"
    vals = lb.branches_at(0.04)
    assert sorted(round(v, 12) for v in vals) == [-0.2, 0.2]


def test_classify_pitchfork():
    lb = classify_local_bif({(1, 1): 1.0, (3, 0): -1.0}, symmetry_odd=True)
    assert lb.kind == "pitchfork" and lb.data["criticality"] == "supercritical"
    assert lb.data["new_branches_stable"]


def test_classify_transcritical():
    lb = classify_local_bif({(0, 1): 0.0, (2, 0): 1.0, (1, 1): 1.0, (0, 2): 0.0})
    assert lb.kind == "transcritical"


def test_lorenz_center_reduction_supercritical():
    c = local_taylor_coeffs(build_builtin("lorenz"), "r", [0, 0, 0], 1.0, order=3)
    assert c[(3, 0)] < 0


def test_diagram_fixed_point():
    rows = bifurcation_diagram(build_builtin("logistic"), "lam", [2.5], transient=1000, keep=100)
    assert rows.shape == (100, 2) and np.all(np.abs(rows[:, 1] - 0.6) < 1e-6)


@pytest.mark.parametrize("lam,n", [(3.2, 2), (3.5, 4), (3.83, 3)])
def test_diagram_clusters(lam, n):
    rows = bifurcation_diagram(build_builtin("logistic"), "lam", [lam], transient=2000, keep=100)
    assert count_clusters(rows[:, 1]) == n


def test_flip_degenerate_linear():
    s = custom_system("neg", "map", 1, lambda x: -np.asarray(x, dtype=float))
    fc = flip_coefficients(s, 0.0)
    assert fc.c20 == 0 and fc.c30 == 0
    assert not fc.cubic_ok
