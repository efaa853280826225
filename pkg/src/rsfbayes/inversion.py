"""Inference of the critical slip distance from acceleration records.

The statistical model is ``a_i = f(t_i; d_c) + eps_i`` with i.i.d. Gaussian
errors and a uniform prior on ``d_c``. Everything that touches likelihoods
works in log space.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateNoiseError, InversionError, RsfError
from .model import LITERAL, ForcingConfig, RsfParams, SliderState
from .solver import SolverConfig, integrate

log = logging.getLogger(__name__)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ObservationSet:
    """Observed accelerations ``accels`` [um/s^2] at strictly increasing ``times`` [s]."""

    times: np.ndarray
    accels: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64)
        accels = np.array(self.accels, dtype=np.float64)
        if times.ndim != 1 or times.shape != accels.shape:
            raise ConfigError("times and accels must be 1-D and of equal length")
        if times.size < 2:
            raise ConfigError("an observation set needs at least 2 samples")
        if np.any(np.diff(times) <= 0):
            raise ConfigError("observation times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(accels))):
            raise ConfigError("observations must be finite")
        times.flags.writeable = False
        accels.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "accels", accels)

    @property
    def n(self) -> int:
        return self.times.shape[0]


@dataclass(frozen=True)
class NoiseModel:
    """Standard deviation of the observation error [um/s^2].

    ``mode="estimated"`` ignores ``sigma_noise`` and plugs in the residual
    standard deviation at the least-squares estimate.
    """

    sigma_noise: float | None = None
    mode: str = "estimated"

    def __post_init__(self):
        if self.mode not in ("fixed", "estimated"):
            raise ConfigError(f"noise mode must be 'fixed' or 'estimated', got {self.mode!r}")
        if self.mode == "fixed":
            s = self.sigma_noise
            if s is None or not (math.isfinite(s) and s > 0):
                raise ConfigError(f"fixed sigma_noise must be finite and > 0, got {s!r}")

    @classmethod
    def fixed(cls, sigma: float) -> "NoiseModel":
        return cls(float(sigma), "fixed")


@dataclass(frozen=True)
class PriorConfig:
    """Uniform prior support for d_c [um]."""

    lower: float = 5.0
    upper: float = 50.0

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ConfigError("prior bounds must be finite")
        if not 0 < self.lower < self.upper:
            raise ConfigError(f"prior needs 0 < lower < upper, got [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def log_density(self) -> float:
        return -math.log(self.width)

    def contains(self, d_c: float) -> bool:
        return self.lower <= d_c <= self.upper

    def grid(self, n: int, spacing: str = "log") -> np.ndarray:
        if spacing == "log":
            return np.geomspace(self.lower, self.upper, n)
        if spacing == "lin":
            return np.linspace(self.lower, self.upper, n)
        raise ConfigError(f"grid spacing must be 'log' or 'lin', got {spacing!r}")


def forward_response(
    d_c: float,
    fixed: RsfParams,
    f: ForcingConfig,
    y0: SliderState | None,
    cfg: SolverConfig,
    times,
    formulation: str = LITERAL,
) -> np.ndarray:
    """Model acceleration at ``times`` for critical slip distance ``d_c``.

    ``fixed`` supplies every other constant (its own ``d_c`` is ignored).
    With ``y0=None`` the run starts from steady sliding for this ``d_c``.
    """
    if not (math.isfinite(d_c) and d_c > 0):
        raise ConfigError(f"d_c must be finite and > 0, got {d_c!r}")
    p = fixed.with_dc(d_c)
    traj = integrate(p, f, y0, cfg, t_eval=times, formulation=formulation)
    return traj.a.copy()


class ForwardModel:
    """Memoised ``d_c -> accelerations at times``.

    Grid sweeps that share a model (repeated noise draws over one grid, say)
    integrate each ``d_c`` once.
    """

    def __init__(
        self,
        times,
        params: RsfParams | None = None,
        forcing: ForcingConfig | None = None,
        solver: SolverConfig | None = None,
        y0: SliderState | None = None,
        formulation: str = LITERAL,
        cache: bool = True,
    ):
        self.times = np.array(times, dtype=np.float64)
        self.times.flags.writeable = False
        self.params = params or RsfParams()
        self.forcing = forcing or ForcingConfig()
        self.solver = solver or SolverConfig()
        self.y0 = y0
        self.formulation = formulation
        if self.times.size and (
            self.times[0] < self.solver.t_start or self.times[-1] > self.solver.t_end
        ):
            raise ConfigError(
                f"observation times [{self.times[0]:g}, {self.times[-1]:g}] fall outside the "
                f"integration window [{self.solver.t_start:g}, {self.solver.t_end:g}]"
            )
        self._cache: dict[float, np.ndarray] | None = {} if cache else None
        self.evaluations = 0

    @classmethod
    def for_observations(cls, obs: ObservationSet, **kwargs) -> "ForwardModel":
        return cls(obs.times, **kwargs)

    def __call__(self, d_c: float) -> np.ndarray:
        d_c = float(d_c)
        if self._cache is not None and d_c in self._cache:
            return self._cache[d_c]
        out = forward_response(
            d_c, self.params, self.forcing, self.y0, self.solver, self.times, self.formulation
        )
        out.flags.writeable = False
        self.evaluations += 1
        if self._cache is not None:
            self._cache[d_c] = out
        return out


def _check_model(obs: ObservationSet, model: ForwardModel):
    if model.times.shape != obs.times.shape or not np.array_equal(model.times, obs.times):
        raise ConfigError("forward model times differ from the observation times")


def sse(obs: ObservationSet, d_c: float, model: ForwardModel) -> float:
    """Sum of squared residuals between data and the model at ``d_c``."""
    _check_model(obs, model)
    r = obs.accels - model(d_c)
    return float(np.dot(r, r))


def gaussian_log_likelihood(sse_value: float, n: int, sigma: float) -> float:
    """Log of the i.i.d. Gaussian likelihood given the residual sum of squares."""
    if not (math.isfinite(sigma) and sigma > 0):
        raise ConfigError(f"sigma_noise must be finite and > 0, got {sigma!r}")
    value = -n * (math.log(sigma) + _LOG_SQRT_2PI) - sse_value / (2.0 * sigma * sigma)
    if not math.isfinite(value):
        raise InversionError(f"non-finite log-likelihood (sse={sse_value!r}, sigma={sigma!r})")
    return value


def log_likelihood(
    obs: ObservationSet, d_c: float, model: ForwardModel, noise: NoiseModel | float
) -> float:
    """Gaussian log-likelihood of ``obs`` under ``d_c``."""
    sigma = noise if isinstance(noise, (int, float)) else resolve_sigma(obs, model, noise)
    return gaussian_log_likelihood(sse(obs, d_c, model), obs.n, float(sigma))


@dataclass(frozen=True)
class FitResult:
    """Least-squares estimate of d_c and diagnostics of how it was found."""

    d_c: float
    sse: float
    bracket: tuple[float, float]
    boundary: bool = False
    degenerate: bool = False
    multimodal: bool = False
    n_failed: int = 0
    n_evals: int = 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["bracket"] = list(self.bracket)
        return out


def _safe_sse(obs, d_c, model):
    try:
        return sse(obs, d_c, model)
    except RsfError as exc:
        log.debug("forward model failed at d_c=%g: %s", d_c, exc)
        return math.inf


def golden_section(fn, lo: float, hi: float, rel_width: float = 1e-4, max_iter: int = 200):
    """Minimise a unimodal ``fn`` on ``[lo, hi]``.

    Stops once the bracket width relative to its midpoint drops below
    ``rel_width``. Returns ``(x_best, f_best, (lo, hi), n_evals)``.
    """
    x1 = hi - _PHI * (hi - lo)
    x2 = lo + _PHI * (hi - lo)
    f1 = fn(x1)
    f2 = fn(x2)
    n = 2
    for _ in range(max_iter):
        if (hi - lo) <= rel_width * 0.5 * (hi + lo):
            break
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _PHI * (hi - lo)
            f1 = fn(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _PHI * (hi - lo)
            f2 = fn(x2)
        n += 1
    if f1 <= f2:
        return x1, f1, (lo, hi), n
    return x2, f2, (lo, hi), n


def least_squares_fit(
    obs: ObservationSet,
    bounds: PriorConfig,
    model: ForwardModel,
    n_coarse: int = 64,
    spacing: str = "log",
    rel_width: float = 1e-4,
) -> FitResult:
    """Minimise the residual sum of squares over ``d_c`` in ``bounds``.

    A coarse scan picks the best cell; golden-section search then refines
    within its two neighbouring cells.
    """
    _check_model(obs, model)
    if n_coarse < 3:
        raise ConfigError("n_coarse must be at least 3")
    grid = bounds.grid(n_coarse, spacing)
    values = np.array([_safe_sse(obs, d, model) for d in grid])
    failed = int(np.sum(~np.isfinite(values)))
    if failed == n_coarse:
        raise InversionError("every coarse-grid forward evaluation failed")
    best = float(np.min(values))
    ties = np.flatnonzero(values <= best + 1e-12 * max(1.0, best))
    if ties.size == n_coarse:
        # sse does not depend on d_c at all: nothing is identifiable
        return FitResult(
            d_c=float(bounds.lower), sse=best, bracket=(float(grid[0]), float(grid[1])),
            boundary=True, degenerate=True, multimodal=True, n_failed=failed, n_evals=n_coarse,
        )
    multimodal = bool(ties.size > 1)
    i = int(ties[0])
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, n_coarse - 1)]
    x, fx, bracket, n = golden_section(lambda d: _safe_sse(obs, d, model), lo, hi, rel_width)
    if fx > best:
        # refinement never beat the grid point itself (flat or failing interior)
        x, fx = float(grid[i]), best
    return FitResult(
        d_c=float(x),
        sse=float(fx),
        bracket=(float(bracket[0]), float(bracket[1])),
        boundary=i in (0, n_coarse - 1),
        multimodal=multimodal,
        n_failed=failed,
        n_evals=n_coarse + n,
    )


def estimate_noise_std(
    obs: ObservationSet,
    model: ForwardModel,
    d_c_ref: float | None = None,
    bounds: PriorConfig | None = None,
) -> float:
    """Residual standard deviation sqrt(sse / (n - 1)) at ``d_c_ref``.

    ``d_c_ref`` defaults to the least-squares estimate within ``bounds``.
    """
    if obs.n < 2:
        raise ConfigError("noise estimation needs at least 2 observations")
    if d_c_ref is None:
        d_c_ref = least_squares_fit(obs, bounds or PriorConfig(), model).d_c
    s = sse(obs, d_c_ref, model)
    if s <= 0.0:
        raise DegenerateNoiseError("residuals vanish identically; noise level is undefined")
    return math.sqrt(s / (obs.n - 1))


def resolve_sigma(
    obs: ObservationSet,
    model: ForwardModel,
    noise: NoiseModel,
    bounds: PriorConfig | None = None,
) -> float:
    if noise.mode == "fixed":
        return float(noise.sigma_noise)
    return estimate_noise_std(obs, model, bounds=bounds)


@dataclass(frozen=True)
class PosteriorGrid:
    """Posterior density of d_c tabulated on a grid.

    ``density`` integrates to one under the trapezoid rule. The evidence is
    kept as a logarithm because it routinely over- or underflows.
    """

    grid: np.ndarray
    log_likelihoods: np.ndarray
    density: np.ndarray
    log_evidence: float
    prior: PriorConfig
    sigma_noise: float
    n_failed: int = 0

    @property
    def evidence(self) -> float:
        try:
            return math.exp(self.log_evidence)
        except OverflowError:
            return math.inf


def normalize_log_weights(grid: np.ndarray, log_w: np.ndarray) -> tuple[np.ndarray, float]:
    """Trapezoid-normalised density from log weights, plus log of the integral.

    The maximum is subtracted first so no exponent exceeds zero.
    """
    top = float(np.max(log_w))
    w = np.exp(log_w - top)
    total = float(np.trapezoid(w, grid))
    return w / total, top + math.log(total)


def grid_posterior(
    obs: ObservationSet,
    prior: PriorConfig,
    model: ForwardModel,
    noise: NoiseModel,
    n_grid: int = 200,
    spacing: str = "log",
    workers: int = 1,
) -> PosteriorGrid:
    """Tabulate the posterior of d_c under a uniform prior by grid quadrature.

    Grid points where the forward model fails are dropped (with a warning);
    at least 8 must survive.
    """
    _check_model(obs, model)
    if n_grid < 8:
        raise ConfigError("n_grid must be at least 8")
    sigma = resolve_sigma(obs, model, noise, prior)
    grid = prior.grid(n_grid, spacing)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(lambda d: _safe_sse(obs, d, model), grid))
    else:
        values = [_safe_sse(obs, d, model) for d in grid]
    values = np.array(values)
    ok = np.isfinite(values)
    n_failed = int(np.sum(~ok))
    if n_failed:
        warnings.warn(f"{n_failed} of {n_grid} grid points failed and were dropped", RuntimeWarning)
    if np.sum(ok) < 8:
        raise InversionError(f"only {int(np.sum(ok))} grid points survived; need at least 8")
    grid = grid[ok]
    ll = np.array([gaussian_log_likelihood(s, obs.n, sigma) for s in values[ok]])
    # the prior height is constant, so it only scales the evidence
    density, log_norm = normalize_log_weights(grid, ll)
    for arr in (grid, ll, density):
        arr.flags.writeable = False
    return PosteriorGrid(
        grid=grid,
        log_likelihoods=ll,
        density=density,
        log_evidence=log_norm + prior.log_density,
        prior=prior,
        sigma_noise=sigma,
        n_failed=n_failed,
    )


@dataclass(frozen=True)
class McmcChain:
    """Random-walk Metropolis output; ``samples`` includes the burn-in prefix."""

    samples: np.ndarray
    log_posts: np.ndarray
    acceptance_rate: float
    seed: int
    proposal_std: float
    burn_in: int
    prior: PriorConfig = field(default_factory=PriorConfig)
    n_failed: int = 0
    acceptance_warning: bool = False

    @property
    def kept(self) -> np.ndarray:
        return self.samples[self.burn_in:]


def metropolis(
    log_target,
    prior: PriorConfig,
    n_samples: int,
    proposal_std: float | None = None,
    seed: int = 0,
    burn_in: int | None = None,
    initial: float | None = None,
) -> McmcChain:
    """Random-walk Metropolis for a scalar target restricted to the prior support.

    ``log_target(d_c)`` returns the log-likelihood; the uniform prior adds a
    constant inside the support and rejects proposals outside it. Normal
    increments and acceptance uniforms are drawn up front from
    ``numpy.random.default_rng(seed)`` (PCG64), so the chain is a pure
    function of its arguments.
    """
    if proposal_std is None:
        proposal_std = 0.05 * prior.width
    if burn_in is None:
        burn_in = int(0.2 * n_samples)
    if not (math.isfinite(proposal_std) and proposal_std > 0):
        raise ConfigError(f"proposal_std must be > 0, got {proposal_std!r}")
    if not 0 <= burn_in < n_samples:
        raise ConfigError(f"need 0 <= burn_in < n_samples, got {burn_in} and {n_samples}")
    x = 0.5 * (prior.lower + prior.upper) if initial is None else float(initial)
    if not prior.contains(x):
        raise ConfigError(f"initial value {x} outside prior support")

    rng = np.random.default_rng(seed)
    steps = rng.standard_normal(n_samples) * proposal_std
    log_u = np.log(rng.random(n_samples))

    n_failed = 0

    def target(d):
        nonlocal n_failed
        try:
            return log_target(d) + prior.log_density
        except RsfError:
            n_failed += 1
            return -math.inf

    lp = target(x)
    if not math.isfinite(lp):
        raise InversionError(f"log-target is not finite at the initial value {x}")
    samples = np.empty(n_samples)
    log_posts = np.empty(n_samples)
    accepted = 0
    for i in range(n_samples):
        prop = x + steps[i]
        if prior.lower <= prop <= prior.upper:
            lp_prop = target(prop)
            if log_u[i] < lp_prop - lp:
                x, lp = prop, lp_prop
                if i >= burn_in:
                    accepted += 1
        samples[i] = x
        log_posts[i] = lp
    rate = accepted / (n_samples - burn_in)
    flag = not 0.05 <= rate <= 0.95
    if flag:
        warnings.warn(f"MCMC acceptance rate {rate:.3f} outside [0.05, 0.95]", RuntimeWarning)
    samples.flags.writeable = False
    log_posts.flags.writeable = False
    return McmcChain(
        samples=samples,
        log_posts=log_posts,
        acceptance_rate=rate,
        seed=int(seed),
        proposal_std=float(proposal_std),
        burn_in=int(burn_in),
        prior=prior,
        n_failed=n_failed,
        acceptance_warning=flag,
    )


def mcmc_sample(
    obs: ObservationSet,
    prior: PriorConfig,
    model: ForwardModel,
    noise: NoiseModel,
    n_samples: int,
    proposal_std: float | None = None,
    seed: int = 0,
    burn_in: int | None = None,
    initial: float | None = None,
) -> McmcChain:
    """Sample the posterior of d_c with random-walk Metropolis."""
    _check_model(obs, model)
    sigma = resolve_sigma(obs, model, noise, prior)
    return metropolis(
        lambda d: gaussian_log_likelihood(sse(obs, d, model), obs.n, sigma),
        prior,
        n_samples,
        proposal_std=proposal_std,
        seed=seed,
        burn_in=burn_in,
        initial=initial,
    )


def integrated_autocorr_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's self-consistent window."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n < 2:
        return 1.0
    y = x - x.mean()
    if not np.any(y):
        return float(n)
    m = 1 << (2 * n - 1).bit_length()
    fy = np.fft.rfft(y, m)
    acf = np.fft.irfft(fy * np.conj(fy), m)[:n]
    acf /= acf[0]
    taus = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n) >= c * taus
    k = int(np.argmax(window)) if np.any(window) else n - 1
    return float(max(taus[k], 1.0))


def effective_sample_size(x) -> float:
    x = np.asarray(x)
    return x.size / integrated_autocorr_time(x)


@dataclass(frozen=True)
class PosteriorSummary:
    mean: float
    mode: float
    std: float
    ci_low: float
    ci_high: float
    level: float
    ess: float | None = None
    mcse: float | None = None

    @property
    def credible_interval(self) -> tuple[float, float]:
        return self.ci_low, self.ci_high

    def to_dict(self) -> dict:
        return asdict(self)


def _cdf_quantile(grid, density, q):
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    return np.interp(q, cdf, grid)


def posterior_summary(post: PosteriorGrid | McmcChain, level: float = 0.95) -> PosteriorSummary:
    """Mean, mode, standard deviation and equal-tailed credible interval.

    Grid posteriors use trapezoid moments; chains use the post-burn-in
    samples and also report effective sample size and Monte-Carlo error.
    """
    if not 0 < level < 1:
        raise ConfigError(f"credible level must be in (0, 1), got {level!r}")
    tail = 0.5 * (1.0 - level)
    if isinstance(post, PosteriorGrid):
        g, d = post.grid, post.density
        mean = float(np.trapezoid(g * d, g))
        var = float(np.trapezoid((g - mean) ** 2 * d, g))
        lo, hi = _cdf_quantile(g, d, [tail, 1.0 - tail])
        return PosteriorSummary(
            mean=mean,
            mode=float(g[int(np.argmax(d))]),
            std=math.sqrt(max(var, 0.0)),
            ci_low=float(lo),
            ci_high=float(hi),
            level=level,
        )
    kept = post.kept
    if kept.size == 0:
        raise InversionError("chain has no samples after burn-in")
    ess = effective_sample_size(kept)
    std = float(np.std(kept, ddof=1)) if kept.size > 1 else 0.0
    lo, hi = np.quantile(kept, [tail, 1.0 - tail])
    lp = post.log_posts[post.burn_in:]
    return PosteriorSummary(
        mean=float(np.mean(kept)),
        mode=float(kept[int(np.argmax(lp))]),
        std=std,
        ci_low=float(lo),
        ci_high=float(hi),
        level=level,
        ess=float(ess),
        mcse=std / math.sqrt(ess),
    )
