"""Rate-and-state friction on a spring-slider-damper.

Units inside the package are fixed: micrometres, seconds, um/s, um/s^2.
Stiffness ``k_prime`` is per micrometre of slip and damping ``k_dprime`` is
seconds per micrometre; :class:`PhysicalConstants` converts SI inputs.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import kernels
from .errors import ConfigError, ModelDomainError

#: Reproduce the reference listing: two-pass damping correction and its
#: second-derivative terms as written.
LITERAL = "literal"
#: Solve the damping relation exactly and differentiate with the full chain
#: rule, so the integrated acceleration is exactly dV/dt.
CONSISTENT = "consistent"

FORMULATIONS = {LITERAL: kernels.LITERAL, CONSISTENT: kernels.CONSISTENT}

_M_TO_UM = 1e6


def formulation_code(formulation: str) -> int:
    try:
        return FORMULATIONS[formulation]
    except KeyError:
        raise ConfigError(
            f"unknown formulation {formulation!r}; expected one of {sorted(FORMULATIONS)}"
        ) from None


@dataclass(frozen=True)
class RsfParams:
    """Friction-law constants and the effective spring/damper coefficients.

    Attributes
    ----------
    mu0 : float
        Steady-state friction at the reference slip rate.
    v0 : float
        Reference slip rate [um/s].
    a_coef, b_coef : float
        Direct- and evolution-effect constants A and B.
    d_c : float
        Critical slip distance [um].
    k_prime : float
        Stiffness over normal stress [1/um].
    k_dprime : float
        Radiation damping over normal stress [s/um].
    """

    mu0: float = 0.6
    v0: float = 1.0
    a_coef: float = 0.011
    b_coef: float = 0.014
    d_c: float = 20.0
    k_prime: float = 1e-2
    k_dprime: float = 1e-7

    def __post_init__(self):
        for name in ("a_coef", "b_coef", "d_c", "v0"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be finite and > 0, got {value!r}")
        for name in ("k_prime", "k_dprime"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {value!r}")
        if not math.isfinite(self.mu0):
            raise ConfigError(f"mu0 must be finite, got {self.mu0!r}")

    def with_dc(self, d_c: float) -> "RsfParams":
        return replace(self, d_c=float(d_c))

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.mu0, self.v0, self.a_coef, self.b_coef, self.d_c, self.k_prime, self.k_dprime],
            dtype=np.float64,
        )

    @classmethod
    def from_physical(cls, consts: "PhysicalConstants", **kwargs) -> "RsfParams":
        """Build parameters whose stiffness and damping derive from ``consts``."""
        return cls(k_prime=consts.k_prime, k_dprime=consts.k_dprime, **kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PhysicalConstants:
    """SI-unit fault constants from which the effective stiffness and damping follow.

    ``elastic_modulus`` and ``normal_stress`` in Pa, ``fault_length`` in m,
    ``damping_coef`` in Pa/(m/s).
    """

    elastic_modulus: float = 5e10
    fault_length: float = 3e-2
    normal_stress: float = 200e6
    damping_coef: float = 20e6

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def k_prime(self) -> float:
        """E / (l sigma), converted from 1/m to 1/um."""
        return self.elastic_modulus / (self.fault_length * self.normal_stress) / _M_TO_UM

    @property
    def k_dprime(self) -> float:
        """eta / sigma, converted from s/m to s/um."""
        return self.damping_coef / self.normal_stress / _M_TO_UM

    def consistent_with(self, params: RsfParams, rtol: float = 1e-9) -> bool:
        return math.isclose(self.k_prime, params.k_prime, rel_tol=rtol) and math.isclose(
            self.k_dprime, params.k_dprime, rel_tol=rtol
        )


@dataclass(frozen=True)
class SliderState:
    """One point of the ODE state: friction, state variable [s], slip rate, acceleration."""

    mu: float
    theta: float
    v: float
    a: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ModelDomainError(f"theta must be > 0, got {self.theta!r}", theta=self.theta)
        if not (self.v > 0 and math.isfinite(self.v)):
            raise ModelDomainError(f"slip rate must be finite and > 0, got {self.v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.theta, self.v, self.a], dtype=np.float64)

    @classmethod
    def from_array(cls, y) -> "SliderState":
        return cls(float(y[0]), float(y[1]), float(y[2]), float(y[3]))

    @classmethod
    def steady(cls, p: RsfParams) -> "SliderState":
        """Steady sliding at the reference rate: mu0, d_c/v0, v0, zero acceleration."""
        return cls(p.mu0, p.d_c / p.v0, p.v0, 0.0)


@dataclass(frozen=True)
class ForcingConfig:
    """Load-point velocity history.

    ``kind="sine"``: ``baseline + amplitude * exp(-t/decay_time) * sin(t/oscillation_time)``.
    ``kind="step"``: ``v_before`` until ``step_time``, ``v_after`` from then on.
    The defaults reproduce the reference listing (decay 20 s, oscillation 0.1 s).
    """

    kind: str = "sine"
    baseline: float = 1.0
    amplitude: float = 1.0
    decay_time: float = 20.0
    oscillation_time: float = 0.1
    v_before: float = 1.0
    v_after: float = 10.0
    step_time: float = 5.0

    def __post_init__(self):
        if self.kind not in ("sine", "step"):
            raise ConfigError(f"forcing kind must be 'sine' or 'step', got {self.kind!r}")
        if not self.decay_time > 0:
            raise ConfigError(f"decay_time must be > 0, got {self.decay_time!r}")
        if not self.oscillation_time > 0:
            raise ConfigError(f"oscillation_time must be > 0, got {self.oscillation_time!r}")
        values = (self.baseline, self.amplitude, self.v_before, self.v_after, self.step_time)
        if not all(math.isfinite(v) for v in values):
            raise ConfigError("forcing values must be finite")

    @classmethod
    def constant(cls, v: float) -> "ForcingConfig":
        return cls(kind="sine", baseline=float(v), amplitude=0.0)

    @classmethod
    def step(cls, v_before: float, v_after: float, step_time: float) -> "ForcingConfig":
        return cls(kind="step", v_before=v_before, v_after=v_after, step_time=step_time)

    def as_array(self) -> np.ndarray:
        code = kernels.FORCING_SINE if self.kind == "sine" else kernels.FORCING_STEP
        return np.array(
            [
                code,
                self.baseline,
                self.amplitude,
                self.decay_time,
                self.oscillation_time,
                self.v_before,
                self.v_after,
                self.step_time,
            ],
            dtype=np.float64,
        )

    def segments(self, t0: float, t1: float) -> list[tuple[float, float, np.ndarray]]:
        """Split [t0, t1] at discontinuities; each piece carries a smooth forcing vector."""
        fv = self.as_array()
        if self.kind == "sine" or not (t0 < self.step_time < t1):
            if self.kind == "step":
                # freeze the branch so the piece never straddles the jump
                fv[7] = math.inf if t0 < self.step_time else -math.inf
            return [(t0, t1, fv)]
        before = fv.copy()
        before[7] = math.inf
        after = fv.copy()
        after[7] = -math.inf
        return [(t0, self.step_time, before), (self.step_time, t1, after)]

    def to_dict(self) -> dict:
        return asdict(self)


def slip_rate(mu: float, theta: float, p: RsfParams) -> float:
    """Slip rate [um/s] that makes the friction law return ``mu`` at state ``theta``."""
    if not theta > 0:
        raise ModelDomainError(f"theta must be > 0, got {theta!r}", mu=mu, theta=theta)
    v = kernels.slip_rate(float(mu), float(theta), p.as_array())
    if not (v > 0 and math.isfinite(v)):
        raise ModelDomainError(
            f"slip rate overflows at mu={mu!r}, theta={theta!r}", mu=mu, theta=theta
        )
    return v


def friction(v: float, theta: float, p: RsfParams) -> float:
    """Friction coefficient for slip rate ``v`` and state ``theta``."""
    return (
        p.mu0
        + p.a_coef * math.log(v / p.v0)
        + p.b_coef * math.log(p.v0 * theta / p.d_c)
    )


def state_rates(theta: float, v: float, d_c: float) -> tuple[float, float]:
    """Aging-law rate of the state variable and its time derivative at fixed V."""
    dtheta = 1.0 - theta * v / d_c
    return dtheta, -dtheta * v / d_c


def friction_rates(
    v_l: float, dv_l: float, v: float, dv: float, ddv: float, p: RsfParams
) -> tuple[float, float]:
    """Friction rate and its derivative from the spring and damper."""
    dmu = p.k_prime * (v_l - v) - p.k_dprime * dv
    ddmu = p.k_prime * (dv_l - dv) - p.k_dprime * ddv
    return dmu, ddmu


def slip_accel_rates(
    v: float,
    dv: float,
    theta: float,
    dtheta: float,
    ddtheta: float,
    dmu: float,
    ddmu: float,
    p: RsfParams,
) -> tuple[float, float]:
    """Slip acceleration and its rate, with the last term as in the reference listing.

    ``dv`` is the slip acceleration used in the second line; the returned
    ``dv_out`` is recomputed from the friction and state rates.
    """
    a, b = p.a_coef, p.b_coef
    drive = dmu - b / theta * dtheta
    dv_out = v / a * drive
    da = dv / a * drive + v / a * (ddmu - b / theta * ddtheta + b / theta * dtheta / theta)
    return dv_out, da


def load_point(t: float, f: ForcingConfig) -> tuple[float, float]:
    """Load-point velocity [um/s] and its exact time derivative at ``t``."""
    if t < 0:
        raise ConfigError(f"load_point needs t >= 0, got {t!r}")
    return kernels.load_point(float(t), f.as_array())


def rhs(
    t: float,
    y: SliderState,
    p: RsfParams,
    f: ForcingConfig,
    formulation: str = LITERAL,
) -> np.ndarray:
    """Time derivative ``[dmu, dtheta, dv, da]`` of the four-component state."""
    out = np.empty(4)
    status = kernels.rhs(
        float(t), y.as_array(), p.as_array(), f.as_array(), formulation_code(formulation), out
    )
    if status != kernels.OK:
        raise ModelDomainError(
            f"rhs undefined at t={t!r}, mu={y.mu!r}, theta={y.theta!r}",
            mu=y.mu,
            theta=y.theta,
            t=t,
        )
    return out


def steady_state_friction(v: float, p: RsfParams) -> float:
    """Friction during steady sliding at ``v``: mu0 + (A - B) ln(v / v0)."""
    if not v > 0:
        raise ConfigError(f"slip rate must be > 0, got {v!r}")
    return p.mu0 + (p.a_coef - p.b_coef) * math.log(v / p.v0)
