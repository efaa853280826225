"""Run configuration: INI file, ``--set`` overrides, and validation.

Every key lives in ``KEYS`` together with its type, default and unit; the
CLI help is generated from the same table.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .inversion import NoiseModel, PriorConfig
from .model import FORMULATIONS, ForcingConfig, RsfParams
from .solver import SolverConfig


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    kind: type | str
    default: object
    unit: str
    help: str


KEYS = [
    Key("model", "mu0", float, 0.6, "-", "reference friction coefficient"),
    Key("model", "v0", float, 1.0, "um/s", "reference slip rate"),
    Key("model", "a_coef", float, 0.011, "-", "direct-effect constant A"),
    Key("model", "b_coef", float, 0.014, "-", "evolution-effect constant B"),
    Key("model", "d_c", "floatlist", [20.0], "um", "critical slip distance(s) to simulate"),
    Key("model", "k_prime", float, 1e-2, "1/um", "stiffness over normal stress"),
    Key("model", "k_dprime", float, 1e-7, "s/um", "radiation damping over normal stress"),
    Key("model", "formulation", str, "literal", "-", "literal | consistent"),
    Key("forcing", "kind", str, "sine", "-", "sine | step"),
    Key("forcing", "baseline", float, 1.0, "um/s", "load-point baseline velocity"),
    Key("forcing", "amplitude", float, 1.0, "-", "relative sine amplitude"),
    Key("forcing", "decay_time", float, 20.0, "s", "envelope decay time"),
    Key("forcing", "oscillation_time", float, 0.1, "s", "sine argument divisor"),
    Key("forcing", "v_before", float, 1.0, "um/s", "step: velocity before the step"),
    Key("forcing", "v_after", float, 10.0, "um/s", "step: velocity after the step"),
    Key("forcing", "step_time", float, 5.0, "s", "step: time of the jump"),
    Key("solver", "t_start", float, 0.0, "s", "integration start"),
    Key("solver", "t_end", float, 50.0, "s", "integration end"),
    Key("solver", "output_dt", float, 1e-2, "s", "trajectory output spacing"),
    Key("solver", "abs_tol", float, 1e-10, "-", "absolute error tolerance"),
    Key("solver", "rel_tol", float, 1e-6, "-", "relative error tolerance"),
    Key("solver", "max_step", float, 1e-3, "s", "largest adaptive step"),
    Key("solver", "method", str, "adaptive", "-", "adaptive | fixed_rk4"),
    Key("solver", "fixed_dt", float, 1e-4, "s", "RK4 step"),
    Key("prior", "lower", float, 5.0, "um", "uniform prior lower bound on d_c"),
    Key("prior", "upper", float, 50.0, "um", "uniform prior upper bound on d_c"),
    Key("prior", "n_grid", int, 200, "-", "posterior grid points"),
    Key("prior", "spacing", str, "log", "-", "log | lin grid spacing"),
    Key("noise", "sigma_noise", "float_or_auto", "auto", "um/s^2",
        "noise std; auto = estimate from residuals (synth: 1% of max|a|)"),
    Key("synth", "d_c_true", float, 20.0, "um", "critical slip distance of the generator"),
    Key("synth", "n_obs", int, 5000, "-", "number of observation times in (t_start, t_end]"),
    Key("synth", "sigma_fraction", float, 0.01, "-", "noise std as a fraction of max|a| (auto)"),
    Key("fit", "n_coarse", int, 64, "-", "coarse scan points before golden section"),
    Key("fit", "rel_width", float, 1e-4, "-", "golden-section stopping width (relative)"),
    Key("sampler", "n_samples", int, 5000, "-", "MCMC iterations including burn-in"),
    Key("sampler", "proposal_std", "float_or_auto", "auto", "um",
        "random-walk step std; auto = 5% of prior width"),
    Key("sampler", "burn_in", "int_or_auto", "auto", "-", "discarded iterations; auto = 20%"),
    Key("sampler", "initial", "float_or_auto", "auto", "um", "chain start; auto = prior midpoint"),
    Key("sampler", "level", float, 0.95, "-", "credible interval level"),
    Key("run", "seed", int, 0, "-", "random seed for noise and sampling"),
    Key("run", "workers", int, 1, "-", "threads for the posterior grid sweep"),
    Key("io", "data", str, "", "-", "observation file for fit/posterior/mcmc"),
    Key("io", "data_unit", str, "", "-", "unit when the file has no '# unit:' tag"),
]

_BY_NAME = {(k.section, k.name): k for k in KEYS}


def _coerce(key: Key, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if key.kind is float:
            return float(text)
        if key.kind is int:
            return int(text)
        if key.kind is str:
            return text
        if key.kind == "floatlist":
            return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
        if key.kind == "float_or_auto":
            return "auto" if text.lower() == "auto" else float(text)
        if key.kind == "int_or_auto":
            return "auto" if text.lower() == "auto" else int(text)
    except ValueError:
        raise ConfigError(
            f"[{key.section}] {key.name}: cannot parse {raw!r} ({key.help}, unit {key.unit})"
        ) from None
    raise AssertionError(key.kind)


def defaults() -> dict:
    out: dict = {}
    for k in KEYS:
        out.setdefault(k.section, {})[k.name] = list(k.default) if isinstance(k.default, list) else k.default
    return out


def load(path=None, overrides: dict | None = None) -> dict:
    """Merge defaults, an optional INI file and ``{(section, key): value}`` overrides."""
    values = defaults()
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        for section in parser.sections():
            for name, raw in parser.items(section):
                key = _BY_NAME.get((section, name))
                if key is None:
                    raise ConfigError(f"unknown config key [{section}] {name}")
                values[section][name] = _coerce(key, raw)
    for (section, name), raw in (overrides or {}).items():
        key = _BY_NAME.get((section, name))
        if key is None:
            raise ConfigError(f"unknown config key {section}.{name}")
        values[section][name] = _coerce(key, raw)
    return values


def parse_assignment(text: str) -> tuple[tuple[str, str], str]:
    """``section.key=value`` -> ``((section, key), value)``."""
    lhs, sep, rhs = text.partition("=")
    section, dot, name = lhs.strip().partition(".")
    if not sep or not dot:
        raise ConfigError(f"--set expects section.key=value, got {text!r}")
    return (section, name), rhs


def parse_dc_grid(text: str) -> dict:
    """``lo:hi:n[:log|lin]`` -> prior overrides."""
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise ConfigError(f"--dc-grid expects lo:hi:n[:log|lin], got {text!r}")
    out = {("prior", "lower"): parts[0], ("prior", "upper"): parts[1], ("prior", "n_grid"): parts[2]}
    if len(parts) == 4:
        out[("prior", "spacing")] = parts[3]
    return out


@dataclass(frozen=True)
class RunConfig:
    """Validated view of a merged configuration mapping."""

    raw: dict
    params: RsfParams
    d_c_values: tuple
    formulation: str
    forcing: ForcingConfig
    solver: SolverConfig
    prior: PriorConfig
    n_grid: int
    spacing: str
    sigma_noise: object
    seed: int

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        m = values["model"]
        d_cs = tuple(float(x) for x in m["d_c"])
        if not d_cs:
            raise ConfigError("[model] d_c needs at least one value")
        for d in d_cs:
            if not (math.isfinite(d) and d > 0):
                raise ConfigError(f"[model] d_c must be > 0, got {d!r}")
        if m["formulation"] not in FORMULATIONS:
            raise ConfigError(f"[model] formulation must be one of {sorted(FORMULATIONS)}")
        params = RsfParams(
            mu0=m["mu0"], v0=m["v0"], a_coef=m["a_coef"], b_coef=m["b_coef"], d_c=d_cs[0],
            k_prime=m["k_prime"], k_dprime=m["k_dprime"],
        )
        forcing = ForcingConfig(**values["forcing"])
        solver = SolverConfig(**values["solver"])
        pr = values["prior"]
        prior = PriorConfig(pr["lower"], pr["upper"])
        if pr["n_grid"] < 8:
            raise ConfigError("[prior] n_grid must be at least 8")
        if pr["spacing"] not in ("log", "lin"):
            raise ConfigError("[prior] spacing must be log or lin")
        sigma = values["noise"]["sigma_noise"]
        if sigma != "auto" and not (math.isfinite(sigma) and sigma >= 0):
            raise ConfigError("[noise] sigma_noise must be >= 0 or auto")
        s = values["synth"]
        if s["n_obs"] < 2:
            raise ConfigError("[synth] n_obs must be at least 2")
        if not (s["d_c_true"] > 0):
            raise ConfigError("[synth] d_c_true must be > 0")
        if not (s["sigma_fraction"] >= 0):
            raise ConfigError("[synth] sigma_fraction must be >= 0")
        f = values["fit"]
        if f["n_coarse"] < 3 or not f["rel_width"] > 0:
            raise ConfigError("[fit] needs n_coarse >= 3 and rel_width > 0")
        sp = values["sampler"]
        if sp["n_samples"] < 2:
            raise ConfigError("[sampler] n_samples must be at least 2")
        if sp["proposal_std"] != "auto" and not sp["proposal_std"] > 0:
            raise ConfigError("[sampler] proposal_std must be > 0")
        if sp["burn_in"] != "auto" and not 0 <= sp["burn_in"] < sp["n_samples"]:
            raise ConfigError("[sampler] burn_in must be in [0, n_samples)")
        if sp["initial"] != "auto" and not prior.contains(sp["initial"]):
            raise ConfigError("[sampler] initial must lie inside the prior")
        if not 0 < sp["level"] < 1:
            raise ConfigError("[sampler] level must be in (0, 1)")
        if values["run"]["workers"] < 1:
            raise ConfigError("[run] workers must be >= 1")
        return cls(
            raw=values,
            params=params,
            d_c_values=d_cs,
            formulation=m["formulation"],
            forcing=forcing,
            solver=solver,
            prior=prior,
            n_grid=pr["n_grid"],
            spacing=pr["spacing"],
            sigma_noise=sigma,
            seed=values["run"]["seed"],
        )

    def noise_model(self) -> NoiseModel:
        if self.sigma_noise == "auto":
            return NoiseModel(None, "estimated")
        return NoiseModel.fixed(self.sigma_noise)

    def section(self, name: str) -> dict:
        return dict(self.raw[name])


def help_table() -> str:
    lines = ["configuration keys ([section] key = default  (unit)  meaning):"]
    current = None
    for k in KEYS:
        if k.section != current:
            lines.append(f"  [{k.section}]")
            current = k.section
        default = k.default
        if isinstance(default, list):
            default = ",".join(format(x, "g") for x in default)
        lines.append(f"    {k.name} = {default}  ({k.unit})  {k.help}")
    return "\n".join(lines)


def write_ini(values: dict, path) -> Path:
    parser = configparser.ConfigParser()
    for section, items in values.items():
        parser[section] = {
            name: ",".join(repr(float(x)) for x in v) if isinstance(v, list) else str(v)
            for name, v in items.items()
        }
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
    return Path(path)
