"""Time integration of the slider system and resampling of trajectories."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import kernels
from .errors import ConfigError, IntegrationError, ModelDomainError, SampleRangeError
from .model import LITERAL, ForcingConfig, RsfParams, SliderState, formulation_code

COLUMNS = ("mu", "theta", "v", "a")

ADAPTIVE = "adaptive"
FIXED_RK4 = "fixed_rk4"


@dataclass(frozen=True)
class SolverConfig:
    """Integration window, output spacing and error control (times in s).

    ``fixed_dt`` is the step of the RK4 method and is ignored by the
    adaptive one.
    """

    t_start: float = 0.0
    t_end: float = 50.0
    output_dt: float = 1e-2
    abs_tol: float = 1e-10
    rel_tol: float = 1e-6
    max_step: float = 1e-3
    method: str = ADAPTIVE
    fixed_dt: float = 1e-4
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise ConfigError("t_start and t_end must be finite")
        if self.t_end < self.t_start:
            raise ConfigError(f"t_end ({self.t_end}) must not precede t_start ({self.t_start})")
        for name in ("output_dt", "abs_tol", "rel_tol", "max_step", "fixed_dt"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be finite and > 0, got {value!r}")
        if self.method not in (ADAPTIVE, FIXED_RK4):
            raise ConfigError(f"method must be {ADAPTIVE!r} or {FIXED_RK4!r}, got {self.method!r}")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")

    def output_times(self) -> np.ndarray:
        """The regular output grid t_start + k * output_dt inside the window."""
        n = int(math.floor((self.t_end - self.t_start) / self.output_dt + 1e-9))
        return np.minimum(self.t_start + np.arange(n + 1) * self.output_dt, self.t_end)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Trajectory:
    """States on a strictly increasing time grid.

    ``states`` has shape ``(len(times), 4)`` with columns mu, theta, v, a.
    Both arrays are made read-only on construction.
    """

    times: np.ndarray
    states: np.ndarray
    solver_stats: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64)
        states = np.array(self.states, dtype=np.float64).reshape(-1, 4)
        if times.ndim != 1 or times.shape[0] != states.shape[0]:
            raise ValueError("times and states must have matching lengths")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        times.flags.writeable = False
        states.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __len__(self):
        return self.times.shape[0]

    @property
    def mu(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def theta(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def v(self) -> np.ndarray:
        return self.states[:, 2]

    @property
    def a(self) -> np.ndarray:
        return self.states[:, 3]

    def state(self, i: int) -> SliderState:
        return SliderState.from_array(self.states[i])


def _raise_for_status(status, t_reached, d_c):
    if status == kernels.OK:
        return
    if status == kernels.V_OVERFLOW:
        raise ModelDomainError(
            f"slip rate overflow near t={t_reached:.6g} s (d_c={d_c:g} um)", t=t_reached, d_c=d_c
        )
    if status == kernels.THETA_NONPOSITIVE:
        raise ModelDomainError(
            f"state variable became non-positive near t={t_reached:.6g} s (d_c={d_c:g} um)",
            t=t_reached,
            d_c=d_c,
        )
    if status == kernels.MAX_STEPS:
        raise IntegrationError(
            f"step limit exhausted at t={t_reached:.6g} s (d_c={d_c:g} um)", t=t_reached, d_c=d_c
        )
    raise IntegrationError(
        f"step size underflow at t={t_reached:.6g} s (d_c={d_c:g} um); "
        "the system is too stiff or singular here",
        t=t_reached,
        d_c=d_c,
    )


def _check_times(t_eval, t0, t1):
    t_eval = np.ascontiguousarray(t_eval, dtype=np.float64)
    if t_eval.ndim != 1 or t_eval.size == 0:
        raise ConfigError("t_eval must be a non-empty 1-D sequence")
    if t_eval.size > 1 and np.any(np.diff(t_eval) <= 0):
        raise ConfigError("t_eval must be strictly increasing")
    if t_eval[0] < t0 or t_eval[-1] > t1:
        raise SampleRangeError(f"t_eval must lie in [{t0}, {t1}]")
    return t_eval


def _run(p, f, y0, t0, t1, t_eval, formulation, step_segment):
    y = y0.as_array()
    pv = p.as_array()
    mode = formulation_code(formulation)
    states = np.empty((t_eval.shape[0], 4))
    stats = np.zeros(3, dtype=np.int64)
    if t1 == t0:
        states[:] = y
    for ta, tb, fv in f.segments(t0, t1) if t1 > t0 else ():
        lo = np.searchsorted(t_eval, ta, side="left")
        hi = np.searchsorted(t_eval, tb, side="right")
        # the extra final row carries the state across a forcing discontinuity
        t_out = np.append(t_eval[lo:hi], tb)
        chunk = np.empty((t_out.shape[0], 4))
        status, t_reached = step_segment(y, ta, tb, t_out, pv, fv, mode, chunk, stats)
        _raise_for_status(status, t_reached, p.d_c)
        states[lo:hi] = chunk[:-1]
        y = chunk[-1].copy()
    return Trajectory(
        t_eval,
        states,
        {"steps": int(stats[0]), "rejected": int(stats[1]), "rhs_evals": int(stats[2])},
    )


def integrate(
    p: RsfParams,
    f: ForcingConfig,
    y0: SliderState | None = None,
    cfg: SolverConfig | None = None,
    t_eval=None,
    formulation: str = LITERAL,
) -> Trajectory:
    """Integrate the slider from ``y0`` over ``[cfg.t_start, cfg.t_end]``.

    States are reported on ``cfg.output_times()`` unless ``t_eval`` is given.
    ``cfg.method`` selects the adaptive Dormand-Prince pair or fixed-step RK4.

    Raises
    ------
    ModelDomainError
        The state variable or slip rate left its domain.
    IntegrationError
        Step size underflow or step limit.
    """
    cfg = cfg or SolverConfig()
    y0 = y0 or SliderState.steady(p)
    if cfg.method == FIXED_RK4:
        return integrate_fixed_rk4(
            p, f, y0, cfg.fixed_dt, (cfg.t_start, cfg.t_end), t_eval=t_eval,
            formulation=formulation, output_dt=cfg.output_dt,
        )
    t0, t1 = cfg.t_start, cfg.t_end
    t_eval = cfg.output_times() if t_eval is None else _check_times(t_eval, t0, t1)

    def step(y, ta, tb, t_out, pv, fv, mode, chunk, stats):
        return kernels.dopri5(
            y, ta, tb, t_out, pv, fv, mode, cfg.rel_tol, cfg.abs_tol, cfg.max_step,
            cfg.max_steps, chunk, stats,
        )

    return _run(p, f, y0, t0, t1, t_eval, formulation, step)


def integrate_fixed_rk4(
    p: RsfParams,
    f: ForcingConfig,
    y0: SliderState | None,
    dt: float,
    t_span: tuple[float, float],
    t_eval=None,
    formulation: str = LITERAL,
    output_dt: float = 1e-2,
) -> Trajectory:
    """Classical fixed-step RK4; the independent reference for the adaptive path."""
    if not (math.isfinite(dt) and dt > 0):
        raise ConfigError(f"dt must be finite and > 0, got {dt!r}")
    t0, t1 = map(float, t_span)
    if t1 < t0:
        raise ConfigError("t_span must be increasing")
    y0 = y0 or SliderState.steady(p)
    if t_eval is None:
        t_eval = SolverConfig(t_start=t0, t_end=t1, output_dt=output_dt).output_times()
    else:
        t_eval = _check_times(t_eval, t0, t1)

    def step(y, ta, tb, t_out, pv, fv, mode, chunk, stats):
        return kernels.rk4(y, ta, tb, dt, t_out, pv, fv, mode, chunk, stats)

    return _run(p, f, y0, t0, t1, t_eval, formulation, step)


def sample_at(traj: Trajectory, times) -> np.ndarray:
    """Interpolate every state column at ``times`` with a not-a-knot cubic spline.

    Returns an array of shape ``(len(times), 4)``; requested times equal to
    grid points return the stored states exactly.
    """
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    t = traj.times
    span_tol = 1e-12 * max(1.0, abs(t[0]), abs(t[-1]))
    if times.size and (times.min() < t[0] - span_tol or times.max() > t[-1] + span_tol):
        raise SampleRangeError(
            f"requested times [{times.min():g}, {times.max():g}] outside trajectory "
            f"[{t[0]:g}, {t[-1]:g}]"
        )
    if len(traj) == 1:
        return np.repeat(traj.states, times.size, axis=0)
    if len(traj) == 2:
        out = np.empty((times.size, 4))
        for k in range(4):
            out[:, k] = np.interp(times, t, traj.states[:, k])
        return out
    out = CubicSpline(t, traj.states, axis=0)(np.clip(times, t[0], t[-1]))
    # splines reproduce knots only to rounding; pin exact grid hits
    idx = np.searchsorted(t, times)
    idx = np.clip(idx, 0, len(t) - 1)
    hit = t[idx] == times
    out[hit] = traj.states[idx[hit]]
    return out
