"""Reading seismograms, synthesising observations, and persisting artifacts.

All tabular artifacts share one layout: ``# key: value`` metadata lines
(the first being ``# schema: <name>/<version>``), a header row, then
comma-separated rows with floats written at 17 significant digits.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError, SchemaVersionError
from .inversion import McmcChain, ObservationSet, PosteriorGrid, PriorConfig, forward_response
from .model import LITERAL, ForcingConfig, RsfParams, SliderState
from .solver import SolverConfig, Trajectory

SCHEMA_VERSION = 1
RNG_NAME = "numpy.random.PCG64"
G = 9.8

# multiply by these to obtain um/s^2
_TO_UM_S2 = {"g": G * 1e6, "m/s^2": 1e6, "um/s^2": 1.0}
_UNIT_ALIASES = {
    "g": "g",
    "m/s^2": "m/s^2",
    "m/s2": "m/s^2",
    "m/s²": "m/s^2",
    "um/s^2": "um/s^2",
    "um/s2": "um/s^2",
    "μm/s^2": "um/s^2",
    "μm/s²": "um/s^2",
    "µm/s^2": "um/s^2",
    "µm/s²": "um/s^2",
}

_DT_LINE = re.compile(r"^\s*#?\s*dt\s*[=:]\s*([-+0-9.eE]+)\s*$", re.IGNORECASE)
_META_LINE = re.compile(r"^#\s*([A-Za-z_][\w.-]*)\s*:\s*(.*)$")


def canonical_unit(unit: str) -> str:
    try:
        return _UNIT_ALIASES[unit.strip()]
    except (KeyError, AttributeError):
        raise ConfigError(f"unknown acceleration unit {unit!r}; use g, m/s^2 or um/s^2") from None


@dataclass(frozen=True)
class TimeSeries:
    """Sampled acceleration record with its unit and where it came from.

    ``provenance`` is ``{"kind": "measured"}`` or, for generated data,
    ``{"kind": "synthetic", "seed": ..., "sigma_noise": ..., "d_c_true": ...,
    "generator": ...}``.
    """

    times: np.ndarray
    values: np.ndarray
    unit: str = "um/s^2"
    provenance: dict = field(default_factory=lambda: {"kind": "measured"})

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64)
        values = np.array(self.values, dtype=np.float64)
        if times.ndim != 1 or times.shape != values.shape:
            raise ConfigError("times and values must be 1-D and of equal length")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ConfigError("times must be strictly increasing")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "unit", canonical_unit(self.unit))

    def __len__(self):
        return self.times.shape[0]


def convert_units(ts: TimeSeries, target_unit: str) -> TimeSeries:
    """Rescale ``ts`` to ``target_unit`` (1 g = 9.8 m/s^2)."""
    target = canonical_unit(target_unit)
    if target == ts.unit:
        return ts
    values = ts.values * _TO_UM_S2[ts.unit] / _TO_UM_S2[target]
    return TimeSeries(ts.times, values, target, dict(ts.provenance))


def to_observations(ts: TimeSeries) -> ObservationSet:
    """Observation set in model units (um/s^2)."""
    ts = convert_units(ts, "um/s^2")
    return ObservationSet(ts.times, ts.values)


@dataclass(frozen=True)
class SeismogramFormat:
    """How to read a record.

    ``kind="auto"`` picks the fixed-rate layout when a ``dt`` line is
    present and two-column CSV otherwise. ``unit`` supplies the unit when
    the file carries no ``# unit:`` tag.
    """

    kind: str = "auto"
    unit: str | None = None

    def __post_init__(self):
        if self.kind not in ("auto", "csv", "fixed_rate"):
            raise ConfigError(f"format kind must be auto, csv or fixed_rate, got {self.kind!r}")


def _decode_meta(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _encode_meta(value) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value, sort_keys=True)


def _parse_float(token: str, path, lineno) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DataFormatError(f"not a number: {token!r}", path=path, line=lineno) from None
    if not math.isfinite(value):
        raise DataFormatError(f"non-finite value {token!r}", path=path, line=lineno)
    return value


def read_seismogram(path, format_spec: SeismogramFormat | None = None) -> TimeSeries:
    """Load an acceleration record.

    Two layouts are understood:

    * CSV with a header row and two columns, time [s] and acceleration;
    * fixed rate: a ``dt = <seconds>`` line (optionally ``# t0: <s>``) followed
      by acceleration values, one or more per line.

    Raises
    ------
    DataFormatError
        Empty file, bad number, NaN, non-increasing times or missing unit;
        the message carries the offending line number.
    """
    fmt = format_spec or SeismogramFormat()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read file: {exc}", path=path) from exc
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        raise DataFormatError("file is empty", path=path, line=1)

    meta: dict = {}
    dt = None
    body: list[tuple[int, str]] = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        m = _DT_LINE.match(stripped)
        if m and dt is None and not body:
            dt = _parse_float(m.group(1), path, lineno)
            if dt <= 0:
                raise DataFormatError("dt must be positive", path=path, line=lineno)
            continue
        if stripped.startswith("#"):
            mm = _META_LINE.match(stripped)
            if mm:
                meta[mm.group(1).lower()] = _decode_meta(mm.group(2))
            continue
        body.append((lineno, stripped))

    kind = fmt.kind
    if kind == "auto":
        kind = "fixed_rate" if dt is not None else "csv"
    if kind == "fixed_rate" and dt is None:
        raise DataFormatError("fixed-rate record needs a 'dt = <seconds>' line", path=path, line=1)

    file_unit = meta.get("unit")
    if file_unit is not None and fmt.unit is not None and canonical_unit(fmt.unit) != canonical_unit(
        str(file_unit)
    ):
        raise DataFormatError(
            f"file declares unit {file_unit!r} but {fmt.unit!r} was requested", path=path
        )
    unit = file_unit if file_unit is not None else fmt.unit
    if unit is None:
        raise DataFormatError("unit tag missing ('# unit: g|m/s^2|um/s^2')", path=path, line=1)
    try:
        unit = canonical_unit(str(unit))
    except ConfigError as exc:
        raise DataFormatError(str(exc), path=path, line=1) from None

    if kind == "csv":
        if not body:
            raise DataFormatError("no header row", path=path, line=1)
        header_line, header = body[0]
        if len(header.split(",")) < 2:
            raise DataFormatError("header must name two columns, e.g. 't,a'", path=path,
                                  line=header_line)
        times, values = [], []
        for lineno, row in body[1:]:
            cells = [c.strip() for c in row.split(",")]
            if len(cells) != 2:
                raise DataFormatError(f"expected 2 columns, got {len(cells)}", path=path,
                                      line=lineno)
            t = _parse_float(cells[0], path, lineno)
            if times and t <= times[-1]:
                raise DataFormatError("time values must be strictly increasing", path=path,
                                      line=lineno)
            times.append(t)
            values.append(_parse_float(cells[1], path, lineno))
    else:
        t0 = float(meta.get("t0", 0.0))
        values = []
        for lineno, row in body:
            for token in re.split(r"[\s,]+", row):
                if token:
                    values.append(_parse_float(token, path, lineno))
        # snap to 1e-12 s: dt is written in decimal, so accumulated binary drift
        # (0.02 * 2499 + 0.02 > 50) would otherwise push samples past the window
        times = list(np.round(t0 + dt * np.arange(len(values)), 12))

    if not values:
        raise DataFormatError("no samples", path=path, line=len(lines))
    provenance = meta.get("provenance")
    if not isinstance(provenance, dict):
        provenance = {"kind": "measured"}
    return TimeSeries(np.array(times), np.array(values), unit, provenance)


def generate_synthetic(
    d_c_true: float,
    fixed: RsfParams,
    forcing: ForcingConfig,
    cfg: SolverConfig,
    times,
    sigma_noise: float,
    seed: int,
    y0: SliderState | None = None,
    formulation: str = LITERAL,
) -> TimeSeries:
    """Model accelerations at ``times`` plus seeded i.i.d. Gaussian noise [um/s^2]."""
    if not (math.isfinite(sigma_noise) and sigma_noise >= 0):
        raise ConfigError(f"sigma_noise must be finite and >= 0, got {sigma_noise!r}")
    clean = forward_response(d_c_true, fixed, forcing, y0, cfg, times, formulation)
    if sigma_noise > 0:
        noise = np.random.default_rng(seed).standard_normal(clean.shape[0]) * sigma_noise
        values = clean + noise
    else:
        values = clean
    provenance = {
        "kind": "synthetic",
        "seed": int(seed),
        "sigma_noise": float(sigma_noise),
        "d_c_true": float(d_c_true),
        "generator": RNG_NAME,
    }
    return TimeSeries(np.asarray(times, dtype=np.float64), values, "um/s^2", provenance)


def observation_times(t_start: float, t_end: float, n: int) -> np.ndarray:
    """``n`` equally spaced times in (t_start, t_end], the last equal to t_end."""
    if n < 2:
        raise ConfigError("need at least 2 observation times")
    return t_start + (t_end - t_start) * np.arange(1, n + 1) / n


# -- tabular artifacts -------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_table(path, schema: str, columns, data, meta: dict | None = None):
    path = Path(path)
    out = [f"# schema: {schema}/{SCHEMA_VERSION}"]
    for key, value in (meta or {}).items():
        out.append(f"# {key}: {_encode_meta(value)}")
    out.append(",".join(columns))
    for row in zip(*data):
        out.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path


def _read_table(path, schema: str, columns):
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataFormatError(f"cannot read file: {exc}", path=path) from exc
    if not lines:
        raise DataFormatError("file is empty", path=path, line=1)
    meta = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        mm = _META_LINE.match(lines[i].strip())
        if mm:
            meta[mm.group(1)] = _decode_meta(mm.group(2))
        i += 1
    found = str(meta.get("schema", ""))
    name, _, version = found.partition("/")
    if name != schema:
        raise DataFormatError(f"expected a {schema} file, found schema {found!r}", path=path,
                              line=1)
    if version != str(SCHEMA_VERSION):
        raise SchemaVersionError(
            f"{schema} schema version {version!r} is not supported (expected {SCHEMA_VERSION})",
            path=path,
            line=1,
        )
    if i >= len(lines) or [c.strip() for c in lines[i].split(",")] != list(columns):
        raise DataFormatError(f"header must be {','.join(columns)}", path=path, line=i + 1)
    rows = []
    for lineno in range(i + 1, len(lines)):
        line = lines[lineno].strip()
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != len(columns):
            raise DataFormatError(f"expected {len(columns)} columns", path=path, line=lineno + 1)
        rows.append([_parse_float(c, path, lineno + 1) for c in cells])
    data = np.array(rows, dtype=np.float64).reshape(-1, len(columns))
    return data, meta


def write_trajectory(path, traj: Trajectory, meta: dict | None = None):
    info = {"units": "t=s mu=1 theta=s v=um/s a=um/s^2", "solver_stats": traj.solver_stats}
    info.update(meta or {})
    cols = [traj.times] + [traj.states[:, k] for k in range(4)]
    return _write_table(path, "trajectory", ("t", "mu", "theta", "v", "a"), cols, info)


def read_trajectory(path) -> Trajectory:
    data, meta = _read_table(path, "trajectory", ("t", "mu", "theta", "v", "a"))
    stats = meta.get("solver_stats")
    return Trajectory(data[:, 0], data[:, 1:], stats if isinstance(stats, dict) else {})


def write_timeseries(path, ts: TimeSeries):
    """Write a record that both :func:`read_timeseries` and :func:`read_seismogram` accept."""
    info = {"unit": ts.unit, "provenance": ts.provenance}
    return _write_table(path, "timeseries", ("t", "a"), [ts.times, ts.values], info)


def read_timeseries(path) -> TimeSeries:
    data, meta = _read_table(path, "timeseries", ("t", "a"))
    provenance = meta.get("provenance")
    if not isinstance(provenance, dict):
        provenance = {"kind": "measured"}
    if "unit" not in meta:
        raise DataFormatError("unit tag missing", path=path, line=1)
    return TimeSeries(data[:, 0], data[:, 1], str(meta["unit"]), provenance)


def write_posterior_grid(path, post: PosteriorGrid):
    info = {
        "units": "d_c=um log_like=1 density=1/um",
        "log_evidence": post.log_evidence,
        "prior_lower": post.prior.lower,
        "prior_upper": post.prior.upper,
        "sigma_noise": post.sigma_noise,
        "n_failed": post.n_failed,
    }
    cols = [post.grid, post.log_likelihoods, post.density]
    return _write_table(path, "posterior_grid", ("d_c", "log_like", "density"), cols, info)


def read_posterior_grid(path) -> PosteriorGrid:
    data, meta = _read_table(path, "posterior_grid", ("d_c", "log_like", "density"))
    return PosteriorGrid(
        grid=data[:, 0],
        log_likelihoods=data[:, 1],
        density=data[:, 2],
        log_evidence=float(meta["log_evidence"]),
        prior=PriorConfig(float(meta["prior_lower"]), float(meta["prior_upper"])),
        sigma_noise=float(meta["sigma_noise"]),
        n_failed=int(meta.get("n_failed", 0)),
    )


def write_chain(path, chain: McmcChain):
    info = {
        "units": "d_c=um log_post=1",
        "seed": chain.seed,
        "generator": RNG_NAME,
        "proposal_std": chain.proposal_std,
        "burn_in": chain.burn_in,
        "acceptance_rate": chain.acceptance_rate,
        "acceptance_warning": chain.acceptance_warning,
        "prior_lower": chain.prior.lower,
        "prior_upper": chain.prior.upper,
        "n_failed": chain.n_failed,
    }
    iters = np.arange(chain.samples.shape[0])
    cols = [[str(i) for i in iters], chain.samples, chain.log_posts]
    return _write_table(path, "mcmc_chain", ("iter", "d_c", "log_post"), cols, info)


def read_chain(path) -> McmcChain:
    data, meta = _read_table(path, "mcmc_chain", ("iter", "d_c", "log_post"))
    return McmcChain(
        samples=data[:, 1],
        log_posts=data[:, 2],
        acceptance_rate=float(meta["acceptance_rate"]),
        seed=int(meta["seed"]),
        proposal_std=float(meta["proposal_std"]),
        burn_in=int(meta["burn_in"]),
        prior=PriorConfig(float(meta["prior_lower"]), float(meta["prior_upper"])),
        n_failed=int(meta.get("n_failed", 0)),
        acceptance_warning=bool(meta.get("acceptance_warning", False)),
    )


# -- JSON artifacts and manifests --------------------------------------------


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_json(path, payload: dict):
    body = {"schema_version": SCHEMA_VERSION, **payload}
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return Path(path)


def read_json(path) -> dict:
    path = Path(path)
    try:
        body = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataFormatError(f"cannot read file: {exc}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from exc
    version = body.get("schema_version") if isinstance(body, dict) else None
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"schema_version {version!r} is not supported (expected {SCHEMA_VERSION})", path=path
        )
    return body


def build_manifest(command: str, config: dict, artifacts: dict, inputs: dict | None = None,
                   seeds: dict | None = None) -> dict:
    """Everything needed to rerun a command: config echo, seeds, file hashes."""
    from . import __version__
    from ._jit import USING_NUMBA

    return {
        "package": "rsfbayes",
        "version": __version__,
        "command": command,
        "config": config,
        "seeds": seeds or {},
        "rng": RNG_NAME,
        "numba": USING_NUMBA,
        "artifacts": {
            name: {"path": Path(p).name, "sha256": file_sha256(p)} for name, p in artifacts.items()
        },
        "inputs": {
            name: {"path": str(p), "sha256": file_sha256(p)} for name, p in (inputs or {}).items()
        },
    }


def write_manifest(path, manifest: dict):
    return write_json(path, manifest)


def read_manifest(path) -> dict:
    return read_json(path)
