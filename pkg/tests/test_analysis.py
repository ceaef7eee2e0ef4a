import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distdykstra.analysis import (ALL_CHECKS, InvariantMonitor, beck_bound,
                                  check_bundle_decrease, fit_rate, gap_times_n_bounded,
                                  quad_root_t, ratio_bound, reference, reference_optimum,
                                  resolution_floor)
from distdykstra.core import CapabilityError, PreconditionError
from distdykstra.engine import DualState
from distdykstra.funcs import V4, AffinePair, IndicatorBox, Quadratic
from distdykstra.instances import Instance, gen_nonsmooth, gen_smooth
from distdykstra.schedule import star_schedule
from distdykstra.topology import Graph


def absolute_value():
    return AffinePair(V4, a1=[1.0], b1=0.0, a2=[-1.0], b2=0.0)


def equality_recurrence(a1, gamma, k_max):
    """a_{k+1} = positive root of a + gamma a^4 = a_k, by bisection."""
    seq = [a1]
    for _ in range(k_max - 1):
        target, lo, hi = seq[-1], 0.0, seq[-1]
        while hi - lo > 1e-14:
            mid = 0.5 * (lo + hi)
            if mid + gamma * mid ** 4 < target:
                lo = mid
            else:
                hi = mid
        seq.append(0.5 * (lo + hi))
    return seq


# -- rate fits -----------------------------------------------------------------

def test_fit_linear_exact():
    ns = np.arange(1, 101)
    fit = fit_rate(ns, 5.0 * 0.9 ** ns, "linear", (10, 100))
    assert fit.parameter == pytest.approx(0.9, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.points == 91


def test_fit_power_exact():
    ns = np.arange(1, 201)
    fit = fit_rate(ns, 3.0 / ns, "power", (50, 200))
    assert fit.parameter == pytest.approx(-1.0, abs=1e-12)


def test_fit_recovers_rate_under_noise():
    rng = np.random.default_rng(0)
    ns = np.arange(1, 201)
    vals = 2.0 * ns ** -1.3 * (1 + 0.01 * rng.normal(size=ns.size))
    fit = fit_rate(ns, vals, "power", (50, 200))
    assert abs(fit.parameter + 1.3) <= 0.05 * 1.3


def test_fit_needs_three_points():
    with pytest.raises(PreconditionError):
        fit_rate([1, 2, 3], [1.0, 0.5, 0.0], "linear", (1, 3))
    with pytest.raises(PreconditionError):
        fit_rate([1, 2, 3], [1.0, 0.5, 0.25], "cubic", (1, 3))


def test_fit_floor_drops_rounding_noise():
    ns = np.arange(1, 21)
    vals = np.where(ns <= 10, 0.5 ** ns, 1e-17)
    fit = fit_rate(ns, vals, "linear", (1, 20), floor=1e-15)
    assert fit.points == 10
    assert fit.parameter == pytest.approx(0.5, abs=1e-12)


def test_resolution_floor_scales():
    inst = gen_smooth(1, 5, 4)
    ref = reference(inst)
    floor = resolution_floor(inst, ref.value)
    assert 1e-14 < floor < 1e-9


# -- beck bound ----------------------------------------------------------------

def test_beck_bound_formula():
    assert beck_bound(0.7, 2.0, 1) == pytest.approx(0.7, rel=1e-15)
    assert beck_bound(1.0, 1.0, 2) == pytest.approx(1.75 ** (-1 / 3), rel=1e-15)
    assert beck_bound(1.0, 1.0, 2) == pytest.approx(0.82983, abs=1e-5)
    with pytest.raises(PreconditionError):
        beck_bound(0.0, 1.0, 1)


@given(st.floats(0.01, 5.0), st.floats(0.01, 5.0))
def test_beck_bound_dominates_recurrence(a1, gamma):
    seq = equality_recurrence(a1, gamma, 300)
    for k, a in enumerate(seq, start=1):
        assert a <= beck_bound(a1, gamma, k) + 1e-10


# -- single-node bundle decrease ---------------------------------------------

@given(st.floats(0.0, 100.0), st.floats(0.0, 10.0))
def test_quad_root_solves_quadratic(delta_f, lip):
    t = quad_root_t(delta_f, lip)
    c = (lip + 1.0) ** 2
    assert t >= 0
    assert t * t / (2 * c) + t == pytest.approx(delta_f, rel=1e-12, abs=1e-300)


def test_ratio_bound_root():
    for lp in (0.0, 1.0, 7.5):
        r = ratio_bound(lp)
        assert 0 < r < 1
        assert r * r / (4 * (lp + 1)) + r == pytest.approx(1.0, abs=1e-14)


def test_bundle_abs_far_center():
    report = check_bundle_decrease(absolute_value(), [3.0], 100)
    # the first cut at 3 is already exact on the prox problem
    assert report.alphas[0] == 0.0
    assert report.decrease_ok and report.nonincreasing


def test_bundle_abs_counterexample_near_kink():
    # alpha_1 = 1/8 while t from the quadratic rule gives t^2/2 ~ 0.41
    report = check_bundle_decrease(absolute_value(), [0.5], 5)
    assert report.alphas[0] == pytest.approx(0.125)
    assert report.alphas[1] == pytest.approx(0.0, abs=1e-15)
    t = quad_root_t(report.delta_fs[0], report.lipschitz)
    assert 0.5 * t * t > report.alphas[0]
    assert not report.decrease_ok


def test_bundle_affine_one_cut():
    f = AffinePair(V4, a1=[2.0, -1.0], b1=0.5, a2=[2.0, -1.0], b2=0.5)
    report = check_bundle_decrease(f, [1.0, 2.0], 3, start=[-4.0, 7.0])
    assert report.alphas[0] == pytest.approx(0.0, abs=1e-12)
    assert max(report.alphas[1:]) <= 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_bundle_quadratic_ratio(seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(3, 3))
    f = Quadratic(V4, A=B @ B.T + 0.1 * np.eye(3), b=rng.normal(size=3))
    report = check_bundle_decrease(f, 3 * rng.normal(size=3), 100, start=rng.normal(size=3))
    assert report.ratio_slacks and report.ratio_ok
    assert report.nonincreasing
    bar = ratio_bound(report.grad_lipschitz)
    for a, b in zip(report.alphas, report.alphas[1:]):
        if a > 1e-13:
            assert max(b, 0.0) / a <= bar + 1e-8


def test_bundle_quadratic_small_scale_decrease():
    f = Quadratic(V4, A=[[1.0]], b=[0.0])
    assert check_bundle_decrease(f, [0.5], 100).decrease_ok


def test_bundle_quadratic_decrease_is_not_scale_free():
    # alpha scales like s^2 while t^2/2 grows like s^4
    f = Quadratic(V4, A=[[1.0]], b=[0.0])
    assert not check_bundle_decrease(f, [3.0], 100).decrease_ok


# -- reference and monitor -----------------------------------------------------

def test_reference_optimum_quadratic_without_plant():
    inst = gen_smooth(2, 5, 4)
    plain = Instance(inst.graph, inst.m, inst.anchor, inst.functions)
    x, value = reference_optimum(plain)
    assert np.allclose(x, np.ones(4), atol=1e-12)
    assert value == pytest.approx(reference(inst).value, rel=1e-14)
    boxed = Instance(Graph(1), 1, np.zeros((1, 1)), [IndicatorBox(lo=[0.0], hi=[1.0])])
    with pytest.raises(CapabilityError):
        reference_optimum(boxed)


def _monitored(inst, cycles, bias=0.0):
    state = DualState(inst, star_schedule(inst.graph, inst.v4_nodes()), minorant_bias=bias)
    mon = InvariantMonitor(reference(inst), ALL_CHECKS)
    hist = state.run(cycles, reference(inst), mon)
    return mon, hist


@pytest.mark.parametrize("treat", ["prox", "subdiff"])
def test_monitor_clean_run(treat):
    mon, _ = _monitored(gen_nonsmooth(3, 5, 4).with_treatment(treat), 20)
    assert mon.ok and mon.first_failure() is None
    bundle_only = {"prox_gap_bound", "minorant_domination"}
    for fam in mon.results():
        assert fam.checks > 0 or (treat == "prox" and fam.name in bundle_only)


def test_monitor_catches_lifted_minorant():
    mon, _ = _monitored(gen_nonsmooth(3, 5, 4), 3, bias=0.5)
    assert not mon.ok
    dom = mon.families["minorant_domination"]
    assert dom.status == "FAIL" and dom.first_failure[0] == 1


def test_gap_times_n():
    cyc = [(n, 3.0 / n) for n in range(1, 201)]
    assert gap_times_n_bounded(cyc, 50) == pytest.approx(3.0)
    hump = [(n, 1.0 / n if n < 100 else 5.0 / n) for n in range(1, 201)]
    assert gap_times_n_bounded(hump, 50) < 0
    assert math.isfinite(gap_times_n_bounded(cyc))
