import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsfbayes import (
    CONSISTENT,
    LITERAL,
    ConfigError,
    ForcingConfig,
    ModelDomainError,
    PhysicalConstants,
    RsfParams,
    SliderState,
    load_point,
    rhs,
    slip_rate,
)
from rsfbayes.model import (
    friction,
    friction_rates,
    slip_accel_rates,
    state_rates,
    steady_state_friction,
)

P = RsfParams()


# ---------------------------------------------------------------- slip_rate

def test_slip_rate_reference_point():
    assert slip_rate(0.6, P.d_c / P.v0, P) == pytest.approx(1.0, rel=1e-15)


def test_slip_rate_doubles_with_direct_effect():
    assert slip_rate(0.6 + 0.011 * math.log(2.0), 20.0, P) == pytest.approx(2.0, rel=1e-13)


def test_slip_rate_matches_extended_precision():
    mpmath.mp.dps = 50
    mu, theta = mpmath.mpf("0.61"), mpmath.mpf(20)
    exact = mpmath.exp(
        (mu - mpmath.mpf("0.6") - mpmath.mpf("0.014") * mpmath.log(theta / 20)) / mpmath.mpf("0.011")
    )
    assert float(exact) == pytest.approx(math.exp(0.01 / 0.011), rel=1e-15)
    assert slip_rate(0.61, 20.0, P) == pytest.approx(float(exact), rel=1e-13)


def test_slip_rate_overflow_names_state():
    with pytest.raises(ModelDomainError) as info:
        slip_rate(20.0, 20.0, P)
    assert info.value.mu == 20.0 and info.value.theta == 20.0


def test_slip_rate_rejects_nonpositive_theta():
    with pytest.raises(ModelDomainError):
        slip_rate(0.6, 0.0, P)


@settings(max_examples=200, deadline=None)
@given(
    v=st.floats(1e-3, 1e3),
    theta=st.floats(1e-2, 1e4),
    d_c=st.floats(1.0, 100.0),
)
def test_friction_slip_rate_inverse(v, theta, d_c):
    p = P.with_dc(d_c)
    mu = friction(v, theta, p)
    assert slip_rate(mu, theta, p) == pytest.approx(v, rel=1e-12)
    assert friction(slip_rate(mu, theta, p), theta, p) == pytest.approx(mu, abs=1e-12)


# ------------------------------------------------------------- rate pieces

@pytest.mark.parametrize(
    "theta, v, expected",
    [(20.0, 1.0, (0.0, 0.0)), (10.0, 1.0, (0.5, -0.025)), (40.0, 2.0, (-3.0, 0.3))],
)
def test_state_rates(theta, v, expected):
    assert state_rates(theta, v, 20.0) == pytest.approx(expected, abs=1e-15)


def test_friction_rates_examples():
    assert friction_rates(1.3, 0.0, 1.3, 0.0, 0.0, P) == (0.0, 0.0)
    undamped = RsfParams(k_prime=1e-2, k_dprime=0.0)
    assert friction_rates(2.0, 0.0, 1.0, 0.0, 0.0, undamped)[0] == pytest.approx(0.01)
    assert friction_rates(1.0, 0.0, 1.0, 100.0, 0.0, P)[0] == pytest.approx(-1e-5, abs=1e-18)


def test_slip_accel_rates_examples():
    assert slip_accel_rates(1.0, 0.0, 20.0, 0.0, 0.0, 0.0, 0.0, P) == (0.0, 0.0)
    assert slip_accel_rates(1.0, 0.0, 20.0, 0.0, 0.0, 0.011, 0.0, P)[0] == pytest.approx(1.0)
    dv_out, _ = slip_accel_rates(1.0, 0.0, 20.0, 0.5, 0.0, 0.0, 0.0, P)
    assert dv_out == pytest.approx(-(1 / 0.011) * (0.014 / 20) * 0.5, rel=1e-14)
    assert dv_out == pytest.approx(-0.031818, abs=1e-6)


# ------------------------------------------------------------ load point

def test_load_point_at_origin():
    f = ForcingConfig()
    assert load_point(0.0, f) == (1.0, pytest.approx(f.amplitude / f.oscillation_time))


def test_load_point_step_before_and_after():
    f = ForcingConfig.step(1.0, 10.0, 5.0)
    assert load_point(4.999, f) == (1.0, 0.0)
    assert load_point(5.0, f) == (10.0, 0.0)


def test_load_point_sine_zero_crossing():
    f = ForcingConfig()
    assert load_point(math.pi * f.oscillation_time, f)[0] == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("t", [0.013, 0.5, 3.7, 19.2, 44.0])
def test_load_point_derivative_matches_finite_difference(t):
    f = ForcingConfig()
    h = 1e-6
    fd = (load_point(t + h, f)[0] - load_point(t - h, f)[0]) / (2 * h)
    assert load_point(t, f)[1] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_load_point_rejects_negative_time():
    with pytest.raises(ConfigError):
        load_point(-1.0, ForcingConfig())


def test_forcing_validation():
    with pytest.raises(ConfigError):
        ForcingConfig(kind="ramp")
    with pytest.raises(ConfigError):
        ForcingConfig(decay_time=0.0)


def test_step_segments_split_at_jump():
    segs = ForcingConfig.step(1.0, 10.0, 5.0).segments(0.0, 50.0)
    assert [(a, b) for a, b, _ in segs] == [(0.0, 5.0), (5.0, 50.0)]
    assert segs[0][2][7] == math.inf and segs[1][2][7] == -math.inf


# ------------------------------------------------------------------- rhs

@pytest.mark.parametrize("formulation", [LITERAL, CONSISTENT])
def test_rhs_vanishes_at_steady_state(formulation):
    y = SliderState.steady(P)
    out = rhs(3.0, y, P, ForcingConfig.constant(P.v0), formulation)
    assert np.all(out == 0.0)


def test_rhs_literal_hand_evaluation_at_start():
    """One pass through the listed steps at t=0 from steady sliding."""
    f = ForcingConfig()
    out = rhs(0.0, SliderState(0.6, 20.0, 1.0, 0.0), P, f, LITERAL)
    a, kp, kdp = P.a_coef, P.k_prime, P.k_dprime
    dvl = f.amplitude / f.oscillation_time
    dv_first = 0.0  # V_l(0) = V and theta is steady, so the first pass gives no acceleration
    da_first = kp * dvl / a
    assert out[0] == -kdp * dv_first
    assert out[1] == 0.0
    assert out[2] == 0.0
    assert out[3] == pytest.approx((kp * dvl - kdp * da_first) / a, rel=1e-14)


def test_rhs_consistent_slip_acceleration_matches_chain_rule():
    """dV/dt from differentiating the friction law along the returned rates."""
    y = SliderState(0.6005, 19.7, slip_rate(0.6005, 19.7, P), 0.0)
    f = ForcingConfig()
    t = 0.37
    d = rhs(t, y, P, f, CONSISTENT)
    # V(mu, theta): dV = V/A (dmu - B dtheta/theta)
    expected = y.v / P.a_coef * (d[0] - P.b_coef * d[1] / y.theta)
    assert d[2] == pytest.approx(expected, rel=1e-12)
    # damping relation holds exactly: dmu = k'(Vl - V) - k'' dV
    vl, _ = load_point(t, f)
    assert d[0] == pytest.approx(P.k_prime * (vl - y.v) - P.k_dprime * d[2], rel=1e-12)


def test_rhs_consistent_da_matches_finite_difference_of_dv():
    """The returned da equals d/dt of dv along the flow (finite-difference oracle)."""
    f = ForcingConfig()
    p = P
    y = np.array([0.6005, 19.7, 0.0, 0.0])
    y[2] = slip_rate(y[0], y[1], p)

    def dv_at(t, state):
        return rhs(t, SliderState.from_array(state), p, f, CONSISTENT)[2]

    t, h = 0.37, 1e-6
    d = rhs(t, SliderState.from_array(y), p, f, CONSISTENT)
    fwd = dv_at(t + h, y + h * d)
    bwd = dv_at(t - h, y - h * d)
    assert d[3] == pytest.approx((fwd - bwd) / (2 * h), rel=1e-5)


def test_rhs_domain_error():
    with pytest.raises(ModelDomainError):
        rhs(0.0, SliderState(30.0, 20.0, 1.0, 0.0), P, ForcingConfig(), LITERAL)


def test_unknown_formulation():
    with pytest.raises(ConfigError):
        rhs(0.0, SliderState.steady(P), P, ForcingConfig(), "bogus")


# ------------------------------------------------- steady state and params

def test_steady_state_friction_examples():
    assert steady_state_friction(1.0, P) == 0.6
    assert steady_state_friction(10.0, P) == pytest.approx(0.6 - 0.0069078, abs=1e-7)
    neutral = RsfParams(a_coef=0.012, b_coef=0.012)
    assert steady_state_friction(123.0, neutral) == pytest.approx(0.6, abs=1e-15)


def test_params_validation():
    with pytest.raises(ConfigError):
        RsfParams(d_c=-1.0)
    with pytest.raises(ConfigError):
        RsfParams(a_coef=float("nan"))


def test_state_validation():
    with pytest.raises(ModelDomainError):
        SliderState(0.6, 0.0, 1.0, 0.0)


def test_physical_constants_derivation():
    c = PhysicalConstants()
    assert c.k_dprime == pytest.approx(1e-7, rel=1e-12)
    assert c.k_prime == pytest.approx(5e10 / (3e-2 * 200e6) * 1e-6, rel=1e-12)
    assert not c.consistent_with(P)
    assert c.consistent_with(RsfParams.from_physical(c))
