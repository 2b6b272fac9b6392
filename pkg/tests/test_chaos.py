import math
from fractions import Fraction

import numpy as np
import pytest

from dynkit.chaos import (SymbolSequence, box_dimension, cantor_endpoints, cantor_membership, cloud_csv,
                          enumerate_periodic_tent, ergodic_average, f4, h, henon_attractor_experiment,
                          horseshoe_geometry, itinerary_to_point, lorenz_orbit_fates, lyapunov_spectrum,
                          sensitivity_test, sequence_distance, shift_map, tent_itinerary, word_sequence)
from dynkit.chaos.symbolic import tent
from dynkit.dynamics import flow_to
from dynkit.errors import DegenerateCloud, DepthTooLarge, InvalidWord
from dynkit.systems import build_builtin

P, M = 1, -1


# -- Liapunov spectra

def test_linear_exponents():
    s = build_builtin("linear", {"A": [[2.0, 0.0], [0.0, -1.0]]})
    res = lyapunov_spectrum(s, [0.0, 0.0], T=50)
    assert np.allclose(res.exponents, [2.0, -1.0], atol=1e-6)


def test_tent_exponent():
    res = lyapunov_spectrum(build_builtin("tent"), [0.1234], N=500)
    assert abs(res.exponents[0] - math.log(2)) < 1e-3


def test_henon_sum_rule_short():
    hx = henon_attractor_experiment(N=20_000)
    assert hx.sum_error < 0.01
    assert abs(hx.spectrum.sum - hx.spectrum.divergence_average) < 1e-9
    assert hx.spectrum.exponents[0] > 0.25


def test_spectrum_json_shape():
    res = lyapunov_spectrum(build_builtin("henon"), [0.1, 0.1], N=200, transient=100)
    doc = res.to_json()
    assert set(doc) >= {"exponents", "sum", "history"}
    assert len(doc["history"]) == len(res.history)


def test_flow_needs_T():
    with pytest.raises(ValueError):
        lyapunov_spectrum(build_builtin("lorenz"), [1, 1, 1])


@pytest.mark.slow
def test_lorenz_sum_and_zero_exponent():
    res = lyapunov_spectrum(build_builtin("lorenz"), [1.0, 1.0, 1.0], T=600, transient=10)
    assert abs(res.sum - res.divergence_average) < 0.02 * abs(res.divergence_average)
    assert min(abs(e) for e in res.exponents) <= 0.02


def test_henon_b0_is_one_dimensional():
    hx = henon_attractor_experiment(1.4, 0.0, N=2000)
    assert np.all(hx.points[:, 1] == 0)


# -- box counting

def test_cantor_dimension():
    est = box_dimension(cantor_endpoints(10), [3.0 ** -k for k in range(2, 8)])
    assert abs(est.slope - math.log(2) / math.log(3)) < 0.02 * 0.631
    assert all(a >= b for a, b in zip(est.counts[::-1], est.counts[::-1][1:])) or \
        list(est.counts) == sorted(est.counts)


def test_square_dimension():
    g = np.linspace(0, 1, 100)
    pts = np.array(np.meshgrid(g, g)).reshape(2, -1).T
    est = box_dimension(pts, [2.0 ** -k for k in range(1, 6)])
    assert abs(est.slope - 2) < 0.1


def test_segment_dimension():
    est = box_dimension(np.linspace(0, 1, 1000), [2.0 ** -k for k in range(1, 7)])
    assert abs(est.slope - 1) < 0.05


def test_dimension_errors():
    with pytest.raises(DegenerateCloud):
        box_dimension(np.zeros((2000, 2)), [0.5, 0.25, 0.125, 0.0625])
    with pytest.raises(ValueError):
        box_dimension(np.random.default_rng(0).random((10, 2)), [0.5, 0.25, 0.125, 0.0625])


def test_cloud_csv():
    text = cloud_csv(np.array([[0.5, 1.0]]))
    assert text == "x1,x2\n0.5,1\n"


# -- tent itineraries

def test_itinerary_examples():
    assert tent_itinerary(0, 5).symbols == (P,) * 5
    assert tent_itinerary(Fraction(2, 3), 5).symbols == (M,) * 5
    assert tent_itinerary(Fraction(2, 5), 6).symbols == (P, M) * 3
    assert tent_itinerary(Fraction(1, 2), 1).symbols == (P,)


def test_itinerary_float_cap():
    with pytest.raises(DepthTooLarge):
        tent_itinerary(0.3, 61, exact=False)


def test_points_from_sequences():
    assert itinerary_to_point(SymbolSequence((P,), periodic=True)) == 0
    assert itinerary_to_point(SymbolSequence((M,), periodic=True)) == Fraction(2, 3)
    assert itinerary_to_point(SymbolSequence((P, M), periodic=True)) == Fraction(2, 5)


def test_periodic_enumeration():
    assert {x for _, x in enumerate_periodic_tent(1)} == {Fraction(0), Fraction(2, 3)}
    assert {x for _, x in enumerate_periodic_tent(2)} == {Fraction(0), Fraction(2, 3), Fraction(2, 5),
                                                          Fraction(4, 5)}
    pts = enumerate_periodic_tent(3)
    assert len(pts) == 8 and len({x for _, x in pts}) == 8


def test_round_trip():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        x = Fraction(int(rng.integers(1, 10 ** 12)), 10 ** 12)
        lo, hi = itinerary_to_point(tent_itinerary(x, 40))
        assert lo <= x <= hi and hi - lo <= Fraction(1, 2 ** 40)


def test_shift_matches_tent():
    rng = np.random.default_rng(6)
    for _ in range(100):
        x = Fraction(int(rng.integers(0, 2 ** 30)), 2 ** 30 - 1)
        assert shift_map(tent_itinerary(x, 20)).symbols == tent_itinerary(tent(x), 19).symbols


def test_periodic_shift():
    s = SymbolSequence((P, M), periodic=True)
    assert shift_map(shift_map(s)) == s


def test_shift_distance_bound():
    rng = np.random.default_rng(8)
    for _ in range(100):
        a = SymbolSequence(tuple(int(v) for v in rng.choice([1, -1], 20)), origin=10)
        b = SymbolSequence(tuple(int(v) for v in rng.choice([1, -1], 20)), origin=10)
        assert sequence_distance(shift_map(a), shift_map(b)) <= 2 * sequence_distance(a, b) + 1e-15


def test_invalid_symbols():
    with pytest.raises(InvalidWord):
        SymbolSequence((1, 0))
    with pytest.raises(InvalidWord):
        word_sequence("+x,-")


# -- Cantor set and the logistic conjugacy

@pytest.mark.parametrize("x,verdict", [(Fraction(1, 4), "in"), (Fraction(1, 2), "out"), (Fraction(1, 3), "in"),
                                       (Fraction(1), "in"), (Fraction(0), "in"), (Fraction(5, 9), "out")])
def test_cantor_membership(x, verdict):
    assert cantor_membership(x).verdict == verdict


def test_cantor_rewrite():
    m = cantor_membership(Fraction(1, 3))
    assert m.boundary_resolved and m.period == (2,) and m.digits[:3] == (0, 2, 2)


def test_conjugacy():
    assert abs(h(2 / 3) - 0.75) < 1e-15 and abs(f4(0.75) - 0.75) < 1e-15
    x = np.linspace(0, 1, 1000)
    g = np.where(x <= 0.5, 2 * x, 2 - 2 * x)
    assert np.max(np.abs(h(g) - f4(h(x)))) <= 1e-12


def test_conjugacy_transports_cycles():
    for p in range(1, 7):
        for _, x in enumerate_periodic_tent(p):
            y0 = float(h(float(x)))
            y = y0
            for _ in range(p):
                y = float(f4(y))
            assert abs(y - y0) < 1e-10 * 4 ** p


# -- horseshoe

@pytest.mark.parametrize("word,w,hgt", [(",+", 1, Fraction(1, 3)), (",-", 1, Fraction(1, 3)),
                                        ("+,", Fraction(1, 4), 1), ("-,+", Fraction(1, 4), Fraction(1, 3)),
                                        ("+--,-+", Fraction(1, 64), Fraction(1, 9))])
def test_horseshoe_sizes(word, w, hgt):
    r = horseshoe_geometry(word, Fraction(1, 4), 3)
    assert r.width == w and r.height == hgt


def test_horseshoe_nesting():
    rng = np.random.default_rng(9)
    for _ in range(200):
        m, n = int(rng.integers(0, 6)), int(rng.integers(1, 6))
        back = "".join(rng.choice(["+", "-"], m))
        fwd = "".join(rng.choice(["+", "-"], n))
        parent = horseshoe_geometry(back + "," + fwd, Fraction(1, 3), 3)
        child = horseshoe_geometry(rng.choice(["+", "-"]) + back + "," + fwd + rng.choice(["+", "-"]),
                                   Fraction(1, 3), 3)
        assert parent.contains(child)


def test_horseshoe_bad_input():
    with pytest.raises(InvalidWord):
        horseshoe_geometry("+-", Fraction(1, 3), 3)
    with pytest.raises(ValueError):
        horseshoe_geometry("+,-", Fraction(2, 3), 3)


# -- experiments

def test_sensitivity_tent_exact():
    res = sensitivity_test(build_builtin("tent"), Fraction(1, 3), 1e-9, 0.1, 60, exact=True)
    t = min(v for v in res.divergence_times if v is not None)
    assert res.verdict == "sensitive" and abs(t - math.log2(0.1 / 1e-9)) <= 4


def test_sensitivity_lorenz():
    s = build_builtin("lorenz")
    x = flow_to(s, [1.0, 1.0, 1.0], 20.0)  # start on the attractor, past the transient
    res = sensitivity_test(s, x, 1e-9, 0.1, 25.0, n_probes=4)
    assert res.verdict == "sensitive"


def test_sensitivity_contraction():
    res = sensitivity_test(build_builtin("linear", {"A": [[-1.0]]}), [1.0], 1e-9, 0.1, 10.0)
    assert res.verdict == "not_detected"


def test_ergodic_one_is_exact():
    av = ergodic_average(build_builtin("tent"), "sqrt(2)-1", "one", 10_000, 1.0)
    assert av.mean == 1.0


@pytest.mark.parametrize("obs,ref", [("x", 0.5), ("x2", 1 / 3)])
def test_ergodic_tent(obs, ref):
    av = ergodic_average(build_builtin("tent"), "sqrt(2)-1", obs, 10 ** 6, ref)
    assert abs(av.z) <= 3


def test_orbit_fates_below_one():
    fates = lorenz_orbit_fates(0.5, seeds=[[1, 1, 1], [-3, 2, 5]], T=60)
    assert fates.fates == ("origin", "origin")


def test_orbit_fates_stable_pair():
    fates = lorenz_orbit_fates(10.0, seeds=[[1, 1, 1], [-1, -1, 1]], T=60)
    assert set(fates.fates) <= {"C+", "C-"} and len(set(fates.fates)) == 2
