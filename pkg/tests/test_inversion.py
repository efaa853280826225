import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rsfbayes import (
    ConfigError,
    ForcingConfig,
    InversionError,
    ModelDomainError,
    NoiseModel,
    ObservationSet,
    PriorConfig,
    RsfParams,
    SolverConfig,
    integrate,
)
from rsfbayes.errors import DegenerateNoiseError
from rsfbayes.inversion import (
    ForwardModel,
    McmcChain,
    PosteriorGrid,
    estimate_noise_std,
    forward_response,
    gaussian_log_likelihood,
    golden_section,
    grid_posterior,
    integrated_autocorr_time,
    least_squares_fit,
    log_likelihood,
    mcmc_sample,
    metropolis,
    normalize_log_weights,
    posterior_summary,
    sse,
)

PRIOR = PriorConfig(5.0, 50.0)


class ConstantModel:
    """Forward model whose response ignores d_c (flat likelihood)."""

    def __init__(self, times, value=0.0, fail_below=None):
        self.times = np.asarray(times, dtype=np.float64)
        self.value = value
        self.fail_below = fail_below

    def __call__(self, d_c):
        if self.fail_below is not None and d_c < self.fail_below:
            raise ModelDomainError("synthetic failure", t=0.0, d_c=d_c)
        return np.full(self.times.shape, self.value)


def noisy(model, d_c, sigma, seed):
    truth = model(d_c)
    noise = np.random.default_rng(seed).standard_normal(truth.size) * sigma
    return ObservationSet(model.times, truth + noise)


# ----------------------------------------------------------- domain types

def test_observation_set_validation():
    with pytest.raises(ConfigError):
        ObservationSet([0.0], [1.0])
    with pytest.raises(ConfigError):
        ObservationSet([0.0, 0.0], [1.0, 2.0])
    with pytest.raises(ConfigError):
        ObservationSet([0.0, 1.0], [1.0, np.nan])
    obs = ObservationSet([0.0, 1.0], [1.0, 2.0])
    assert obs.n == 2
    with pytest.raises(ValueError):
        obs.accels[0] = 3.0


def test_prior_and_noise_validation():
    with pytest.raises(ConfigError):
        PriorConfig(10.0, 5.0)
    with pytest.raises(ConfigError):
        PriorConfig(0.0, 5.0)
    with pytest.raises(ConfigError):
        NoiseModel.fixed(0.0)
    assert PRIOR.log_density == pytest.approx(-math.log(45.0))
    g = PRIOR.grid(10, "log")
    assert g[0] == 5.0 and g[-1] == pytest.approx(50.0) and np.allclose(np.diff(np.log(g)), np.log(10) / 9)


# ------------------------------------------------------- forward response

def test_forward_response_steady_state_is_zero(steady_model):
    assert np.all(steady_model(13.0) == 0.0)


def test_forward_response_matches_trajectory(short_solver):
    traj = integrate(RsfParams(), ForcingConfig(), cfg=short_solver)
    got = forward_response(20.0, RsfParams(d_c=7.0), ForcingConfig(), None, short_solver,
                           traj.times)
    assert np.array_equal(got, traj.a)


def test_forward_model_cache_and_determinism(short_model, short_solver):
    a = short_model(17.0)
    assert short_model(17.0) is a
    uncached = ForwardModel(short_model.times, solver=short_solver, cache=False)
    assert np.array_equal(uncached(17.0), a)
    assert np.array_equal(uncached(17.0), uncached(17.0))


def test_forward_model_rejects_times_outside_window(short_solver):
    with pytest.raises(ConfigError):
        ForwardModel([1.0, 6.0], solver=short_solver)


def test_forward_response_rejects_bad_dc(short_solver):
    with pytest.raises(ConfigError):
        forward_response(-1.0, RsfParams(), ForcingConfig(), None, short_solver, [1.0])


# --------------------------------------------------------------- sse

def test_sse_zero_at_truth(short_model):
    obs = ObservationSet(short_model.times, short_model(20.0))
    assert sse(obs, 20.0, short_model) < 1e-10


def test_sse_constant_offset(short_model):
    c = 0.37
    obs = ObservationSet(short_model.times, short_model(20.0) + c)
    assert sse(obs, 20.0, short_model) == pytest.approx(obs.n * c * c, rel=1e-12)


def test_sse_continuous_in_dc(short_model):
    obs = noisy(short_model, 20.0, 0.01, 0)
    base = sse(obs, 18.0, short_model)
    diffs = [abs(sse(obs, 18.0 + h, short_model) - base) for h in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(b < a for a, b in zip(diffs, diffs[1:]))
    # away from the minimum the change is linear in h: no jumps from step-size control
    ratios = [b / a for a, b in zip(diffs, diffs[1:])]
    assert all(0.05 < r < 0.2 for r in ratios)


def test_sse_rejects_mismatched_model(short_model):
    obs = ObservationSet([0.1, 0.2], [0.0, 0.0])
    with pytest.raises(ConfigError):
        sse(obs, 20.0, short_model)


# ---------------------------------------------------------- likelihood

def test_log_likelihood_standard_normal_at_zero():
    assert gaussian_log_likelihood(0.0, 1, 1.0) == pytest.approx(-0.5 * math.log(2 * math.pi),
                                                                 abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(
    resid=st.lists(st.floats(-10, 10), min_size=1, max_size=30),
    sigma=st.floats(1e-2, 10.0),
)
def test_log_likelihood_matches_normal_logpdf(resid, sigma):
    r = np.array(resid)
    expected = float(np.sum(stats.norm.logpdf(r, scale=sigma)))
    got = gaussian_log_likelihood(float(np.dot(r, r)), r.size, sigma)
    assert got == pytest.approx(expected, rel=1e-10, abs=1e-10)


def test_log_likelihood_through_model(short_model):
    obs = noisy(short_model, 20.0, 0.02, 3)
    s = sse(obs, 19.0, short_model)
    assert log_likelihood(obs, 19.0, short_model, NoiseModel.fixed(0.02)) == \
        gaussian_log_likelihood(s, obs.n, 0.02)
    assert log_likelihood(obs, 19.0, short_model, 0.02) == gaussian_log_likelihood(s, obs.n, 0.02)


def test_log_likelihood_rejects_bad_sigma():
    with pytest.raises(ConfigError):
        gaussian_log_likelihood(1.0, 3, 0.0)


# ------------------------------------------------------- least squares

def test_golden_section_parabola():
    x, fx, (lo, hi), n = golden_section(lambda x: (x - 3.3) ** 2, 0.0, 10.0, 1e-8)
    assert x == pytest.approx(3.3, abs=1e-6)
    assert lo <= 3.3 <= hi and n > 10


def test_least_squares_noiseless_recovery(short_model):
    obs = ObservationSet(short_model.times, short_model(20.0))
    fit = least_squares_fit(obs, PRIOR, short_model)
    assert abs(fit.d_c - 20.0) < 0.005 * 20.0
    assert not fit.boundary and not fit.degenerate
    assert fit.bracket[0] <= fit.d_c <= fit.bracket[1]


def test_least_squares_degenerate_case(steady_model):
    obs = ObservationSet(steady_model.times, np.zeros(steady_model.times.size))
    fit = least_squares_fit(obs, PRIOR, steady_model, n_coarse=8)
    assert fit.sse == 0.0
    assert fit.d_c == PRIOR.lower
    assert fit.degenerate and fit.boundary


def test_least_squares_narrow_bounds(short_model):
    obs = noisy(short_model, 20.0, 0.01, 1)
    fit = least_squares_fit(obs, PriorConfig(19.9, 20.1), short_model, n_coarse=5)
    assert 19.9 <= fit.d_c <= 20.1


def test_least_squares_flags_boundary(short_model):
    obs = ObservationSet(short_model.times, short_model(20.0))
    fit = least_squares_fit(obs, PriorConfig(25.0, 50.0), short_model, n_coarse=8)
    assert fit.boundary
    assert fit.d_c == pytest.approx(25.0, rel=1e-3)


def test_least_squares_all_failures():
    model = ConstantModel([0.1, 0.2, 0.3], fail_below=1e9)
    obs = ObservationSet(model.times, [0.0, 0.0, 0.0])
    with pytest.raises(InversionError):
        least_squares_fit(obs, PRIOR, model, n_coarse=8)


# ------------------------------------------------------- noise estimate

def test_noise_estimate_constant_residuals():
    model = ConstantModel(np.arange(1, 11) * 0.1)
    obs = ObservationSet(model.times, np.full(10, -0.3))
    assert estimate_noise_std(obs, model, d_c_ref=20.0) == pytest.approx(0.3 * math.sqrt(10 / 9))


def test_noise_estimate_two_points():
    model = ConstantModel([0.1, 0.2])
    obs = ObservationSet(model.times, [0.0, 0.7])
    assert estimate_noise_std(obs, model, d_c_ref=20.0) == pytest.approx(0.7)


def test_noise_estimate_synthetic(short_model):
    obs = noisy(short_model, 20.0, 0.05, 11)
    sigma_hat = estimate_noise_std(obs, short_model, bounds=PRIOR)
    assert 0.04 <= sigma_hat <= 0.06


def test_noise_estimate_degenerate(steady_model):
    obs = ObservationSet(steady_model.times, np.zeros(steady_model.times.size))
    with pytest.raises(DegenerateNoiseError):
        estimate_noise_std(obs, steady_model, d_c_ref=20.0)


# ------------------------------------------------------- grid posterior

def test_normalize_log_weights_no_overflow():
    grid = np.linspace(0.0, 1.0, 11)
    density, log_norm = normalize_log_weights(grid, np.full(11, 1e4))
    assert np.allclose(density, 1.0, rtol=0, atol=1e-14)
    assert log_norm == pytest.approx(1e4)


def test_flat_likelihood_gives_uniform_prior():
    model = ConstantModel(np.arange(1, 51) * 0.1)
    obs = ObservationSet(model.times, np.random.default_rng(0).standard_normal(50))
    post = grid_posterior(obs, PRIOR, model, NoiseModel.fixed(1.0), n_grid=200)
    assert np.array_equal(post.density, np.full(200, post.density[0]))
    assert post.density[0] == pytest.approx(1.0 / PRIOR.width, rel=1e-13)
    assert np.trapezoid(post.density, post.grid) == pytest.approx(1.0, abs=1e-12)


def test_grid_posterior_normalized_and_peaked(short_model):
    obs = noisy(short_model, 20.0, 0.01, 2)
    post = grid_posterior(obs, PRIOR, short_model, NoiseModel.fixed(0.01), n_grid=100)
    assert abs(np.trapezoid(post.density, post.grid) - 1.0) < 1e-8
    assert post.grid[np.argmax(post.density)] == pytest.approx(20.0, rel=0.1)
    assert math.isfinite(post.log_evidence)
    with pytest.raises(ValueError):
        post.density[0] = 0.0


def test_grid_posterior_threaded_matches_serial(short_model):
    obs = noisy(short_model, 20.0, 0.01, 2)
    a = grid_posterior(obs, PRIOR, short_model, NoiseModel.fixed(0.01), n_grid=40)
    b = grid_posterior(obs, PRIOR, short_model, NoiseModel.fixed(0.01), n_grid=40, workers=4)
    assert np.array_equal(a.density, b.density)


def test_grid_posterior_drops_failed_points():
    model = ConstantModel(np.arange(1, 11) * 0.1, fail_below=10.0)
    obs = ObservationSet(model.times, np.zeros(10))
    with pytest.warns(RuntimeWarning, match="failed"):
        post = grid_posterior(obs, PRIOR, model, NoiseModel.fixed(1.0), n_grid=50, spacing="lin")
    assert post.n_failed == int(np.sum(PRIOR.grid(50, "lin") < 10.0))
    assert post.grid.min() >= 10.0
    assert np.trapezoid(post.density, post.grid) == pytest.approx(1.0)


def test_grid_posterior_too_few_survivors():
    model = ConstantModel(np.arange(1, 11) * 0.1, fail_below=48.0)
    obs = ObservationSet(model.times, np.zeros(10))
    with pytest.raises(InversionError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        grid_posterior(obs, PRIOR, model, NoiseModel.fixed(1.0), n_grid=50, spacing="lin")


def test_grid_posterior_estimated_noise(short_model):
    obs = noisy(short_model, 20.0, 0.02, 5)
    post = grid_posterior(obs, PRIOR, short_model, NoiseModel(), n_grid=20)
    assert 0.015 < post.sigma_noise < 0.025


# ---------------------------------------------------------------- MCMC

def gaussian_target(mean, sd):
    return lambda d: -0.5 * ((d - mean) / sd) ** 2


def test_metropolis_seeded_rerun_identical():
    a = metropolis(gaussian_target(20.0, 3.0), PRIOR, 2000, proposal_std=4.0, seed=9)
    b = metropolis(gaussian_target(20.0, 3.0), PRIOR, 2000, proposal_std=4.0, seed=9)
    assert np.array_equal(a.samples, b.samples) and np.array_equal(a.log_posts, b.log_posts)
    c = metropolis(gaussian_target(20.0, 3.0), PRIOR, 2000, proposal_std=4.0, seed=10)
    assert not np.array_equal(a.samples, c.samples)


def test_metropolis_gaussian_moments():
    chain = metropolis(gaussian_target(20.0, 3.0), PRIOR, 40000, proposal_std=7.0, seed=1)
    s = posterior_summary(chain)
    assert abs(s.mean - 20.0) < 4 * s.mcse
    assert s.std == pytest.approx(3.0, rel=0.05)
    assert 0.05 < chain.acceptance_rate < 0.95 and not chain.acceptance_warning


def test_metropolis_respects_support():
    chain = metropolis(lambda d: 0.0, PRIOR, 5000, proposal_std=30.0, seed=2)
    assert chain.samples.min() >= PRIOR.lower and chain.samples.max() <= PRIOR.upper


def test_metropolis_flat_target_uniform():
    chain = metropolis(lambda d: 0.0, PRIOR, 110000, proposal_std=PRIOR.width, seed=0,
                       burn_in=1000)
    tau = integrated_autocorr_time(chain.kept)
    thinned = chain.kept[:: int(math.ceil(2 * tau))]
    counts, _ = np.histogram(thinned, bins=20, range=(PRIOR.lower, PRIOR.upper))
    assert stats.chisquare(counts).pvalue > 0.01


def test_metropolis_acceptance_warning():
    with pytest.warns(RuntimeWarning, match="acceptance"):
        chain = metropolis(lambda d: 0.0, PRIOR, 500, proposal_std=1e-6, seed=0)
    assert chain.acceptance_warning


def test_metropolis_validation():
    with pytest.raises(ConfigError):
        metropolis(lambda d: 0.0, PRIOR, 100, proposal_std=-1.0)
    with pytest.raises(ConfigError):
        metropolis(lambda d: 0.0, PRIOR, 100, burn_in=100)
    with pytest.raises(ConfigError):
        metropolis(lambda d: 0.0, PRIOR, 100, initial=60.0)


def test_metropolis_counts_forward_failures():
    def target(d):
        if d < 20.0:
            raise ModelDomainError("synthetic failure")
        return 0.0

    chain = metropolis(target, PRIOR, 2000, proposal_std=5.0, seed=3, initial=30.0)
    assert chain.n_failed > 0 and chain.samples.min() >= 20.0


def test_mcmc_sample_on_model(short_model):
    obs = noisy(short_model, 20.0, 0.01, 4)
    chain = mcmc_sample(obs, PRIOR, short_model, NoiseModel.fixed(0.01), 300, seed=5)
    again = mcmc_sample(obs, PRIOR, short_model, NoiseModel.fixed(0.01), 300, seed=5)
    assert np.array_equal(chain.samples, again.samples)
    assert chain.burn_in == 60 and chain.proposal_std == pytest.approx(0.05 * PRIOR.width)


# ------------------------------------------------------------ diagnostics

def test_autocorr_time_iid_and_ar1():
    rng = np.random.default_rng(0)
    assert integrated_autocorr_time(rng.standard_normal(100000)) == pytest.approx(1.0, abs=0.1)
    phi = 0.9
    e = rng.standard_normal(200000)
    x = np.empty_like(e)
    x[0] = e[0]
    for i in range(1, e.size):
        x[i] = phi * x[i - 1] + e[i]
    assert integrated_autocorr_time(x) == pytest.approx((1 + phi) / (1 - phi), rel=0.15)


# ------------------------------------------------------------ summaries

def make_grid_posterior(grid, density):
    return PosteriorGrid(np.asarray(grid), np.zeros(len(grid)), np.asarray(density), 0.0,
                         PRIOR, 1.0)


def test_summary_of_uniform_density():
    grid = np.linspace(5.0, 50.0, 2001)
    s = posterior_summary(make_grid_posterior(grid, np.full(grid.size, 1 / 45.0)))
    assert s.mean == pytest.approx(27.5, rel=1e-12)
    assert s.std == pytest.approx(45.0 / math.sqrt(12.0), rel=1e-6)
    assert s.ci_low == pytest.approx(5.0 + 0.025 * 45.0, rel=1e-9)
    assert s.ci_high == pytest.approx(50.0 - 0.025 * 45.0, rel=1e-9)


def test_summary_of_symmetric_density():
    grid = np.linspace(5.0, 50.0, 451)
    dens = stats.norm.pdf(grid, loc=22.0, scale=2.0)
    s = posterior_summary(make_grid_posterior(grid, dens / np.trapezoid(dens, grid)))
    assert abs(s.mean - s.mode) <= grid[1] - grid[0]


def test_summary_rejects_empty_chain():
    chain = McmcChain(np.array([20.0]), np.array([0.0]), 0.5, 0, 1.0, burn_in=1)
    with pytest.raises(InversionError):
        posterior_summary(chain)


def test_summary_level_validation():
    grid = np.linspace(5.0, 50.0, 11)
    with pytest.raises(ConfigError):
        posterior_summary(make_grid_posterior(grid, np.full(11, 1 / 45.0)), level=1.5)


def test_fit_fails_when_every_solve_hits_step_limit():
    """Solver failures become skipped points; when all fail the fit reports it."""
    fragile = SolverConfig(t_end=5.0, max_steps=3000)
    model = ForwardModel(np.arange(1, 51) * 0.1, solver=fragile)
    obs = ObservationSet(model.times, np.zeros(50))
    with pytest.raises(InversionError):
        least_squares_fit(obs, PRIOR, model, n_coarse=4)
