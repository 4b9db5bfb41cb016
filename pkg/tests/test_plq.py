import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rpduality import plq
from rpduality.control import ls_cost
from rpduality.plq import PLQFunction, PLQParseError
from rpduality.testing import random_plq

inf = math.inf
HALF_SQ = PLQFunction.quadratic(0.5)


def seeds():
    return st.integers(min_value=0, max_value=2**32 - 1)


def close(f, g, tol=1e-12):
    return plq.max_probe_difference(f, g) <= tol


# ---------------------------------------------------------------- evaluate
def test_evaluate_examples():
    assert plq.evaluate(HALF_SQ, 2.0) == 2.0
    assert plq.evaluate(PLQFunction.indicator(0, 1), 2.0) == inf
    assert plq.evaluate(PLQFunction.abs(), -3.0) == 3.0


def test_constructor_rejects_nonconvex():
    with pytest.raises(ValueError):
        PLQFunction(-inf, inf, [0.0], [(0.0, 1.0, 0.0), (0.0, -1.0, 0.0)])
    with pytest.raises(ValueError):
        PLQFunction(-inf, inf, [], [(-1.0, 0.0, 0.0)])


def test_constructor_rejects_discontinuity():
    with pytest.raises(ValueError):
        PLQFunction(-inf, inf, [0.0], [(0.0, 0.0, 0.0), (0.0, 1.0, 1.0)])


# --------------------------------------------------------------- conjugate
def test_conjugate_examples():
    assert close(plq.conjugate(HALF_SQ), HALF_SQ)
    assert close(plq.conjugate(PLQFunction.indicator(-1, 1)), PLQFunction.abs())


def test_conjugate_ls_cost_is_quarter_square_on_box():
    h = plq.conjugate(ls_cost(2.0))
    assert (h.domain_lo, h.domain_hi) == (-2.0, 2.0)
    for y in np.linspace(-2, 2, 41):
        assert h.value(y) == pytest.approx(y * y / 4, abs=1e-14)
    # independent grid sup of xy - h*(x)
    xs = np.linspace(-20, 20, 400001)
    hs = ls_cost(2.0)(xs)
    for y in (-2.0, -0.7, 0.0, 1.3, 2.0):
        assert np.max(xs * y - hs) == pytest.approx(h.value(y), abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(seeds())
def test_biconjugate_random(seed):
    f = random_plq(np.random.default_rng(seed))
    assert plq.max_probe_difference(plq.conjugate(plq.conjugate(f)), f) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(seeds())
def test_fenchel_young_and_grid_sup(seed):
    rng = np.random.default_rng(seed)
    f = random_plq(rng)
    fc = plq.conjugate(f)
    lo = max(f.domain_lo, -50.0)
    hi = min(f.domain_hi, 50.0)
    xs = np.linspace(lo, hi, 20001) if hi > lo else np.array([lo])
    fx = f(xs)
    for y in rng.uniform(-3, 3, size=5):
        grid = np.max(xs * y - fx)
        val = fc.value(y)
        # the grid sup never exceeds the conjugate
        assert grid <= val + 1e-9
        if math.isfinite(val):
            for x in xs[::997]:
                assert f.value(x) + val >= x * y - 1e-9


# --------------------------------------------------------------- recession
def test_recession_examples():
    assert close(plq.recession(HALF_SQ), PLQFunction.indicator(0, 0))
    assert close(plq.recession(PLQFunction.abs()), PLQFunction.abs())
    rec = plq.recession(ls_cost(2.0))
    for c in (-3.0, -1.0, 0.0, 0.5, 4.0):
        assert rec.value(c) == pytest.approx(2 * abs(c))


def test_recession_matches_difference_quotients():
    f = ls_cost(2.0)
    for c in (-1.5, 2.0):
        t = 1e7
        assert (f.value(t * c) - f.value(0.0)) / t == pytest.approx(plq.recession(f).value(c), rel=1e-6)


@settings(max_examples=200, deadline=None)
@given(seeds())
def test_recession_is_support_of_conjugate_domain(seed):
    f = random_plq(np.random.default_rng(seed))
    fc = plq.conjugate(f)
    sig = plq.support_function(fc.domain_lo, fc.domain_hi)
    assert plq.max_probe_difference(plq.recession(f), sig) <= 1e-9


# --------------------------------------------------------- subdifferential
def test_subdifferential_examples():
    s = plq.subdifferential(PLQFunction.abs(), 0.0)
    assert (s.lo, s.hi) == (-1.0, 1.0)
    s = plq.subdifferential(PLQFunction.indicator(0, inf), 0.0)
    assert (s.lo, s.hi) == (-inf, 0.0)
    s = plq.subdifferential(ls_cost(2.0), 1.0)
    assert (s.lo, s.hi) == (2.0, 2.0)
    assert plq.subdifferential(HALF_SQ.__class__.indicator(0, 1), 2.0).empty


def test_normal_cone_examples():
    assert (plq.normal_cone(-1, 2, 0).lo, plq.normal_cone(-1, 2, 0).hi) == (0.0, 0.0)
    c = plq.normal_cone(-1, 2, 2)
    assert (c.lo, c.hi) == (0.0, inf)
    assert plq.normal_cone(-1, 2, 3).empty


@settings(max_examples=100, deadline=None)
@given(seeds())
def test_subgradients_attain_fenchel_equality(seed):
    rng = np.random.default_rng(seed)
    f = random_plq(rng)
    fc = plq.conjugate(f)
    lo, hi = max(f.domain_lo, -5), min(f.domain_hi, 5)
    for x in np.r_[rng.uniform(lo, hi, 4), f.breakpoints]:
        if not f.domain_lo <= x <= f.domain_hi:
            continue
        s = plq.subdifferential(f, float(x))
        for y in (s.lo, s.hi):
            if math.isfinite(y):
                assert f.value(x) + fc.value(y) - x * y == pytest.approx(0.0, abs=1e-9)


# --------------------------------------------------------- support / scale
def test_support_function_examples():
    sig = plq.support_function(-1, 2)
    assert sig.value(1) == 2 and sig.value(-1) == 1
    assert close(plq.support_function(0, inf), PLQFunction.indicator(-inf, 0))
    assert close(plq.support_function(0, 0), PLQFunction.zero())


def test_scale_examples():
    assert close(plq.scale(2, PLQFunction.abs()), plq.scale(1, PLQFunction(-inf, inf, [0.0], [(0, -2, 0), (0, 2, 0)])))
    assert close(plq.scale(0, HALF_SQ), PLQFunction.zero())
    f = plq.add(PLQFunction.indicator(0, 1), PLQFunction.linear(1.0, 0.0))
    assert close(plq.scale(0, f), PLQFunction.indicator(0, 1))


def test_add_and_shift_examples():
    assert plq.add(HALF_SQ, PLQFunction.abs()).value(1.0) == 1.5
    assert close(plq.shift(PLQFunction.indicator(0, 1), 1.0), PLQFunction.indicator(-1, 0))


def test_shift_conjugate_law():
    # shift(1/2 x^2, 1)* = 1/2 y^2 - y
    lhs = plq.conjugate(plq.shift(HALF_SQ, 1.0))
    rhs = PLQFunction(-inf, inf, [], [(0.5, -1.0, 0.0)])
    assert close(lhs, rhs)


@settings(max_examples=100, deadline=None)
@given(seeds(), st.floats(-3, 3))
def test_shift_conjugate_law_random(seed, b):
    f = random_plq(np.random.default_rng(seed))
    lhs = plq.conjugate(plq.shift(f, b))
    rhs = plq.tilt(plq.conjugate(f), b)
    assert plq.max_probe_difference(lhs, rhs) <= 1e-9


def test_add_empty_domain_is_improper():
    f = plq.add(PLQFunction.indicator(0, 1), PLQFunction.indicator(2, 3))
    assert not f.is_proper


# -------------------------------------------------------------------- prox
def test_prox_examples():
    assert plq.prox(PLQFunction.zero(), 1.0, 0.7) == 0.7
    assert plq.prox(PLQFunction.indicator(-1, 2), 1.0, 5.0) == 2.0
    assert plq.prox(PLQFunction.abs(), 1.0, 0.5) == 0.0


@settings(max_examples=100, deadline=None)
@given(seeds(), st.floats(0.01, 10), st.floats(-5, 5))
def test_prox_optimality(seed, gamma, x):
    f = random_plq(np.random.default_rng(seed))
    p = plq.prox(f, gamma, x)
    # (x - p) / gamma is a subgradient at p
    s = plq.subdifferential(f, p)
    assert s.distance((x - p) / gamma) <= 1e-8 * (1 + abs(x) / gamma)


# -------------------------------------------------------- lipschitz / mean
def test_lipschitz_envelope_examples():
    env = plq.lipschitz_envelope(PLQFunction.indicator(0, 0), 0.5)
    for u in (-3.0, 0.0, 1.5):
        assert env.value(u) == pytest.approx(abs(u) / 0.5)
    assert close(plq.lipschitz_envelope(PLQFunction.abs(), 0.5), PLQFunction.abs())
    assert plq.lipschitz_envelope(PLQFunction.indicator(0, 1), 1.0).value(2.0) == pytest.approx(1.0)


def test_expectation_examples():
    f1 = plq.shift(HALF_SQ, -1.0)
    f2 = plq.shift(HALF_SQ, 1.0)
    want = PLQFunction(-inf, inf, [], [(0.5, 0.0, 0.5)])
    assert close(plq.expectation([0.5, 0.5], [f1, f2]), want)
    assert close(plq.expectation([1.0], [f1]), f1)
    got = plq.expectation([0.5, 0.5], [PLQFunction.indicator(0, 2), PLQFunction.indicator(1, 3)])
    assert close(got, PLQFunction.indicator(1, 2))


def test_minimize():
    val, arg = plq.minimize(plq.shift(HALF_SQ, -1.0))
    assert val == 0.0 and arg.lo == arg.hi == 1.0
    val, _ = plq.minimize(PLQFunction.linear(1.0, 0.0))
    assert val == -inf


# --------------------------------------------------------------------- text
def test_text_round_trip_exact():
    rng = np.random.default_rng(5)
    for _ in range(200):
        f = random_plq(rng)
        g = PLQFunction.from_text(f.to_text())
        assert g.to_text() == f.to_text()
        assert plq.max_probe_difference(f, g) == 0.0


def test_parse_error_has_line_number():
    with pytest.raises(PLQParseError) as exc:
        PLQFunction.from_text("plq 0 inf\n0 0.5 0\n")
    assert exc.value.lineno == 2


def test_graph_edges_cover_subdifferential_graph():
    f = ls_cost(2.0)
    edges = plq.graph_edges(f)
    for x in np.linspace(-3, 3, 13):
        s = plq.subdifferential(f, float(x))
        assert min(e.distance(float(x), s.lo) for e in edges) <= 1e-12
