"""Command-line interface: ``rsfbayes simulate|synth|fit|posterior|mcmc|summarize``.

Exit codes: 0 ok, 1 invalid configuration, 2 solver failure, 3 inversion
failure, 4 I/O or data-format problem.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import data_io
from .errors import (
    ConfigError,
    DataFormatError,
    IntegrationError,
    InversionError,
    ModelDomainError,
)
from .inversion import (
    ForwardModel,
    PosteriorGrid,
    grid_posterior,
    least_squares_fit,
    mcmc_sample,
    posterior_summary,
)
from .solver import integrate

log = logging.getLogger("rsfbayes")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_INVERSION = 3
EXIT_IO = 4


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="INI file with [section] key = value entries")
    p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="random seed (run.seed)")
    p.add_argument("--dc-grid", metavar="LO:HI:N[:log|lin]", help="prior support and grid for d_c [um]")
    p.add_argument("--sigma-noise", metavar="X|auto", help="noise std [um/s^2] or auto")
    p.add_argument("--set", dest="assignments", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override any config key (repeatable)")
    p.add_argument("--quiet", action="store_true", help="only report errors")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    epilog = cfgmod.help_table()
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="rsfbayes",
        description="Rate-and-state slider simulation and Bayesian inversion for d_c.",
        epilog=epilog,
        formatter_class=fmt,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", parents=[common], epilog=epilog, formatter_class=fmt,
                        help="integrate the slider for one or more d_c values")
    sp.add_argument("--dc", metavar="LIST", help="comma-separated d_c values [um] (model.d_c)")

    sp = sub.add_parser("synth", parents=[common], epilog=epilog, formatter_class=fmt,
                        help="generate noisy synthetic accelerations")
    sp.add_argument("--dc-true", type=float, help="generating d_c [um] (synth.d_c_true)")
    sp.add_argument("--n-obs", type=int, help="number of samples (synth.n_obs)")

    for name, text in (
        ("fit", "least-squares estimate of d_c"),
        ("posterior", "grid-quadrature posterior of d_c"),
        ("mcmc", "random-walk Metropolis samples of d_c"),
    ):
        sp = sub.add_parser(name, parents=[common], epilog=epilog, formatter_class=fmt, help=text)
        sp.add_argument("--data", metavar="PATH", help="observation file (io.data)")
        sp.add_argument("--data-unit", metavar="UNIT", help="g | m/s^2 | um/s^2 (io.data_unit)")
        if name == "mcmc":
            sp.add_argument("--n-samples", type=int, help="iterations (sampler.n_samples)")
            sp.add_argument("--burn-in", help="discarded iterations or auto (sampler.burn_in)")
            sp.add_argument("--proposal-std", help="step std [um] or auto (sampler.proposal_std)")

    sp = sub.add_parser("summarize", parents=[common], epilog=epilog, formatter_class=fmt,
                        help="merge run directories into a report and overlay CSVs")
    sp.add_argument("paths", nargs="+", help="run directories or posterior CSV files")
    return parser


def _overrides(args) -> dict:
    out = {}
    for text in args.assignments:
        key, value = cfgmod.parse_assignment(text)
        out[key] = value
    if args.seed is not None:
        out[("run", "seed")] = str(args.seed)
    if args.dc_grid:
        out.update(cfgmod.parse_dc_grid(args.dc_grid))
    if args.sigma_noise is not None:
        out[("noise", "sigma_noise")] = args.sigma_noise
    extra = {
        "dc": ("model", "d_c"),
        "dc_true": ("synth", "d_c_true"),
        "n_obs": ("synth", "n_obs"),
        "data": ("io", "data"),
        "data_unit": ("io", "data_unit"),
        "n_samples": ("sampler", "n_samples"),
        "burn_in": ("sampler", "burn_in"),
        "proposal_std": ("sampler", "proposal_std"),
    }
    for attr, key in extra.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = str(value)
    return out


def _prepare(args) -> cfgmod.RunConfig:
    values = cfgmod.load(args.config, _overrides(args))
    return cfgmod.RunConfig.from_mapping(values)


def _load_observations(run: cfgmod.RunConfig):
    io = run.section("io")
    if not io["data"]:
        raise ConfigError("an observation file is required (--data or io.data)")
    fmt = data_io.SeismogramFormat(unit=io["data_unit"] or None)
    ts = data_io.read_seismogram(io["data"], fmt)
    return ts, data_io.to_observations(ts)


def _forward_model(run: cfgmod.RunConfig, obs) -> ForwardModel:
    return ForwardModel(
        obs.times, params=run.params, forcing=run.forcing, solver=run.solver,
        formulation=run.formulation,
    )


def cmd_simulate(run: cfgmod.RunConfig, out: Path) -> dict:
    trajectories = []
    for d_c in run.d_c_values:
        traj = integrate(run.params.with_dc(d_c), run.forcing, None, run.solver,
                         formulation=run.formulation)
        trajectories.append((d_c, traj))
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {}
    for d_c, traj in trajectories:
        path = out / f"trajectory_dc{d_c:g}.csv"
        data_io.write_trajectory(path, traj, {"d_c": d_c, "formulation": run.formulation})
        artifacts[f"trajectory_dc{d_c:g}"] = path
        log.info("d_c=%g um: %d samples, %s", d_c, len(traj), traj.solver_stats)
    return {"artifacts": artifacts}


def cmd_synth(run: cfgmod.RunConfig, out: Path) -> dict:
    s = run.section("synth")
    times = data_io.observation_times(run.solver.t_start, run.solver.t_end, s["n_obs"])
    sigma = run.sigma_noise
    if sigma == "auto":
        clean = data_io.generate_synthetic(s["d_c_true"], run.params, run.forcing, run.solver,
                                           times, 0.0, run.seed, formulation=run.formulation)
        sigma = s["sigma_fraction"] * float(np.max(np.abs(clean.values)))
    ts = data_io.generate_synthetic(s["d_c_true"], run.params, run.forcing, run.solver, times,
                                    sigma, run.seed, formulation=run.formulation)
    out.mkdir(parents=True, exist_ok=True)
    path = data_io.write_timeseries(out / "observations.csv", ts)
    log.info("wrote %d samples with sigma_noise=%.6g um/s^2", len(ts), sigma)
    return {"artifacts": {"observations": path}, "seeds": {"noise": run.seed}}


def cmd_fit(run: cfgmod.RunConfig, out: Path) -> dict:
    _, obs = _load_observations(run)
    model = _forward_model(run, obs)
    f = run.section("fit")
    fit = least_squares_fit(obs, run.prior, model, n_coarse=f["n_coarse"], spacing=run.spacing,
                            rel_width=f["rel_width"])
    out.mkdir(parents=True, exist_ok=True)
    body = {
        "d_c_hat": fit.d_c,
        "sse": fit.sse,
        "bracket": list(fit.bracket),
        "boundary_flag": fit.boundary,
        "degenerate": fit.degenerate,
        "multimodal": fit.multimodal,
        "n_failed": fit.n_failed,
        "n_evals": fit.n_evals,
        "units": {"d_c_hat": "um", "sse": "(um/s^2)^2"},
    }
    fit_path = data_io.write_json(out / "fit.json", body)
    response = data_io._write_table(
        out / "fit_response.csv", "fit_response", ("t", "a_obs", "a_fit"),
        [obs.times, obs.accels, model(fit.d_c)], {"units": "t=s a=um/s^2", "d_c_hat": fit.d_c},
    )
    log.info("d_c_hat = %.6g um (sse %.6g)", fit.d_c, fit.sse)
    return {"artifacts": {"fit": fit_path, "fit_response": response},
            "inputs": {"data": run.section("io")["data"]}}


def cmd_posterior(run: cfgmod.RunConfig, out: Path) -> dict:
    _, obs = _load_observations(run)
    model = _forward_model(run, obs)
    post = grid_posterior(obs, run.prior, model, run.noise_model(), n_grid=run.n_grid,
                          spacing=run.spacing, workers=run.section("run")["workers"])
    summary = posterior_summary(post, run.section("sampler")["level"])
    out.mkdir(parents=True, exist_ok=True)
    grid_path = data_io.write_posterior_grid(out / "posterior.csv", post)
    body = {
        "kind": "grid",
        **summary.to_dict(),
        "sigma_noise": post.sigma_noise,
        "log_evidence": post.log_evidence,
        "n_failed": post.n_failed,
        "config": run.raw,
    }
    summary_path = data_io.write_json(out / "summary.json", body)
    log.info("posterior mean %.6g um, %g%% CI [%.6g, %.6g]", summary.mean,
             100 * summary.level, summary.ci_low, summary.ci_high)
    return {"artifacts": {"posterior": grid_path, "summary": summary_path},
            "inputs": {"data": run.section("io")["data"]}}


def cmd_mcmc(run: cfgmod.RunConfig, out: Path) -> dict:
    _, obs = _load_observations(run)
    model = _forward_model(run, obs)
    sp = run.section("sampler")

    def auto(value):
        return None if value == "auto" else value

    chain = mcmc_sample(
        obs, run.prior, model, run.noise_model(), sp["n_samples"],
        proposal_std=auto(sp["proposal_std"]), seed=run.seed, burn_in=auto(sp["burn_in"]),
        initial=auto(sp["initial"]),
    )
    summary = posterior_summary(chain, sp["level"])
    out.mkdir(parents=True, exist_ok=True)
    chain_path = data_io.write_chain(out / "chain.csv", chain)
    body = {
        "kind": "chain",
        **summary.to_dict(),
        "acceptance_rate": chain.acceptance_rate,
        "acceptance_warning": chain.acceptance_warning,
        "seed": chain.seed,
        "proposal_std": chain.proposal_std,
        "burn_in": chain.burn_in,
        "config": run.raw,
    }
    summary_path = data_io.write_json(out / "summary.json", body)
    log.info("chain mean %.6g um (mcse %.3g), acceptance %.3f", summary.mean, summary.mcse,
             chain.acceptance_rate)
    return {"artifacts": {"chain": chain_path, "summary": summary_path},
            "inputs": {"data": run.section("io")["data"]}, "seeds": {"sampler": run.seed}}


def _posterior_sources(paths):
    """Yield (label, run_dir_or_None, posterior_or_None) for each input path."""
    for raw in paths:
        path = Path(raw)
        if not path.exists():
            raise DataFormatError("no such file or directory", path=path)
        if path.is_dir():
            grid = path / "posterior.csv"
            yield path.name, path, data_io.read_posterior_grid(grid) if grid.exists() else None
        else:
            yield path.stem, None, data_io.read_posterior_grid(path)


def overlay_densities(posteriors: list[tuple[str, PosteriorGrid]]):
    """Densities linearly interpolated onto the union of all grids (zero outside support)."""
    grid = np.unique(np.concatenate([p.grid for _, p in posteriors]))
    columns = []
    for _, post in posteriors:
        columns.append(np.interp(grid, post.grid, post.density, left=0.0, right=0.0))
    return grid, columns


def cmd_summarize(paths, out: Path) -> dict:
    runs = []
    posteriors = []
    for label, run_dir, post in _posterior_sources(paths):
        entry = {"label": label}
        if run_dir is not None:
            for name in ("manifest", "summary", "fit"):
                candidate = run_dir / f"{name}.json"
                if candidate.exists():
                    entry[name] = data_io.read_json(candidate)
            if (run_dir / "fit_response.csv").exists():
                entry["_fit_response"] = run_dir / "fit_response.csv"
        if post is not None:
            posteriors.append((label, post))
        runs.append(entry)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {}
    for entry in runs:
        src = entry.pop("_fit_response", None)
        if src is not None:
            name = f"fit_response_{entry['label']}"
            dest = out / f"{name}.csv"
            dest.write_bytes(src.read_bytes())
            artifacts[name] = dest
    if posteriors:
        labels = [label for label, _ in posteriors]
        if len(set(labels)) != len(labels):
            labels = [f"{label}_{i}" for i, label in enumerate(labels)]
        grid, cols = overlay_densities(posteriors)
        artifacts["posterior_overlay"] = data_io._write_table(
            out / "posterior_overlay.csv", "posterior_overlay",
            ["d_c"] + [f"density_{label}" for label in labels], [grid] + cols,
            {"units": "d_c=um density=1/um"},
        )
    artifacts["report"] = data_io.write_json(out / "report.json", {"runs": runs})
    return {"artifacts": artifacts}


COMMANDS = {
    "simulate": cmd_simulate,
    "synth": cmd_synth,
    "fit": cmd_fit,
    "posterior": cmd_posterior,
    "mcmc": cmd_mcmc,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    out = Path(args.out)
    try:
        run = _prepare(args)
        if args.command == "summarize":
            result = cmd_summarize(args.paths, out)
            config_echo = {"paths": [str(p) for p in args.paths]}
        else:
            result = COMMANDS[args.command](run, out)
            config_echo = run.raw
        manifest = data_io.build_manifest(
            args.command, config_echo, result["artifacts"], result.get("inputs"),
            result.get("seeds"),
        )
        data_io.write_manifest(out / "manifest.json", manifest)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except (ModelDomainError, IntegrationError) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except InversionError as exc:
        log.error("inversion failure: %s", exc)
        return EXIT_INVERSION
    except (DataFormatError, OSError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
