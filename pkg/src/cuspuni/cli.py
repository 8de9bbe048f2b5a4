"""Command line interface: ``cuspuni [--config FILE] COMMAND [OPTIONS]``.

Every command writes its CSV artifacts and a ``manifest.json`` into the output
directory (``--out``, else ``$CUSPUNI_OUTPUT/<command>``, else ``runs/<command>``).
A JSON config may hold one section per command; flags override it.
Exit codes: 0 success, 1 failed check or comparison, 2 configuration error.
"""
from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import store
from .errors import ConfigError, CuspError, InvalidSpec

ENSEMBLES = ("u0", "reference", "semicircle", "deformed-wigner", "four-atom")


def parse_range(text: str, parts: int = 2) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in str(text).split(":"))
    except ValueError as exc:
        raise click.BadParameter(f"cannot parse {text!r}") from exc
    if len(vals) != parts:
        raise click.BadParameter(f"expected {parts} colon-separated numbers, got {text!r}")
    return vals


def make_ensemble(name: str, n: int, alpha: float = 0.0, t: float = 0.0, beta: int | None = None):
    """Named ensembles; ``t`` is the variance shift for deformed Wigner and the cusp time for four-atom."""
    from .ensembles import atomic, deformed_wigner, matched_four_atom, reference_ensemble, semicircle
    if name == "u0":
        return reference_ensemble(n, 0.0, beta or 1)
    if name == "reference":
        return reference_ensemble(n, alpha, beta or 1)
    if name == "semicircle":
        return semicircle(n, beta or 1)
    if name == "deformed-wigner":
        return deformed_wigner(n, t, beta or 2)
    if name == "four-atom":
        atoms, w, v = matched_four_atom(t)
        return atomic(n, atoms, w, v, beta or 1)
    raise ConfigError(f"unknown ensemble {name!r}")


class _Run:
    """Output directory plus manifest bookkeeping for one command."""

    def __init__(self, ctx: click.Context, command: str, out: str | None, seed: int | None = None):
        self.dir = Path(out) if out else store.output_root() / command
        self.dir.mkdir(parents=True, exist_ok=True)
        snapshot = {k: v for k, v in ctx.params.items() if k != "out"}
        self.manifest = store.RunManifest(command, snapshot, seed)

    def csv(self, name: str, header, rows) -> Path:
        path = store.write_csv(self.dir / name, header, rows)
        self.manifest.add(path, self.dir)
        return path

    def add(self, paths) -> None:
        for p in paths:
            self.manifest.add(p, self.dir)

    def close(self) -> Path:
        path = self.manifest.write(self.dir)
        click.echo(f"wrote {len(self.manifest.artifact_paths)} artifacts and manifest to {self.dir}")
        return path


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON file with one section per command.")
@click.pass_context
def main(ctx: click.Context, config_path):
    """Cusp universality toolkit."""
    try:
        cfg = store.load_config(config_path)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc
    ctx.default_map = {k: v for k, v in cfg.items() if isinstance(v, dict)}


_out = click.option("--out", default=None, help="Output directory.")
_ensemble = click.option("--ensemble", type=click.Choice(ENSEMBLES), default="u0", show_default=True)
_n = click.option("--n", "n", type=int, default=1000, show_default=True, help="Matrix size.")
_alpha = click.option("--alpha", type=float, default=0.0, show_default=True,
                      help="Reference ensemble parameter (variance 1 - alpha/sqrt(N)).")
_t = click.option("--t", "t", type=float, default=0.0, show_default=True,
                  help="Deformed Wigner variance shift, or four-atom cusp time.")
_beta = click.option("--beta", type=click.Choice(["1", "2"]), default=None, help="Symmetry class (ensemble default).")


def _beta_of(beta):
    return None if beta is None else int(beta)


@main.command()
@_ensemble
@_n
@_alpha
@_t
@_beta
@click.option("--window", default="-0.5:0.5", show_default=True, help="Energy window a:b.")
@click.option("--resolution", type=float, default=1e-6, show_default=True)
@_out
@click.pass_context
def scdos(ctx, ensemble, n, alpha, t, beta, window, resolution, out):
    """Self-consistent density of states as (E, rho)."""
    from .density import scdos as solve
    run = _Run(ctx, "scdos", out)
    prof = solve(make_ensemble(ensemble, n, alpha, t, _beta_of(beta)), parse_range(window), resolution)
    run.csv("density.csv", ["E", "rho"], zip(prof.grid, prof.rho))
    run.close()


@main.command()
@click.option("--t-star", type=float, default=0.1, show_default=True,
              help="Cusp time of the two-atom deformed Wigner base.")
@click.option("--distances", default="1e-5:1e-3:7", show_default=True,
              help="lo:hi:count geometric distances |t - t*| on each side of the cusp.")
@click.option("--window", default="-0.05:0.05", show_default=True)
@_out
@click.pass_context
def flow(ctx, t_star, distances, window, out):
    """Gap and minimum sizes along the semicircular flow through a cusp."""
    from .density import scdos as solve
    from .ensembles import deformed_wigner
    from .flow import FlowState, GapRecord, MinRecord, fit_slope, locate_features, solve_m_tilde
    lo, hi, count = parse_range(distances, 3)
    win = parse_range(window)
    run = _Run(ctx, "flow", out)
    base = solve(deformed_wigner(2, -t_star), (-3.0, 3.0), 1e-3)
    gamma = fit_slope(FlowState(base, t_star), 0.0).gamma
    rows = []
    s = np.geomspace(lo, hi, int(count))
    for t in np.concatenate([t_star - s[::-1], t_star + s]):
        state = FlowState(base, t)
        f = locate_features(state, win)
        if isinstance(f, GapRecord):
            rows.append((t, f.delta, 0.0, gamma, f.e_minus, f.e_plus, np.nan))
        elif isinstance(f, MinRecord):
            mt = solve_m_tilde(state, t_star, 0.0, f.m_loc)
            rows.append((t, 0.0, f.height, gamma, np.nan, np.nan, mt))
        else:
            rows.append((t, 0.0, 0.0, gamma, np.nan, np.nan, f.b))
    run.csv("flow.csv", ["t", "delta", "min_height", "gamma", "e_minus", "e_plus", "m_tilde"], rows)
    run.close()


@main.command()
@_ensemble
@_n
@_alpha
@_t
@click.option("--base", type=float, default=0.0, show_default=True, help="Reference point of the quantiles.")
@click.option("--imax", type=int, default=20, show_default=True)
@click.option("--window", default="-0.5:0.5", show_default=True)
@click.option("--resolution", type=float, default=1e-7, show_default=True)
@_out
@click.pass_context
def quantiles(ctx, ensemble, n, alpha, t, base, imax, window, resolution, out):
    """Quantiles, semiquantiles and fluctuation scales around a base point."""
    from .density import scdos as solve
    from .quantiles import fluctuation_scale, quantile_set
    run = _Run(ctx, "quantiles", out)
    prof = solve(make_ensemble(ensemble, n, alpha, t), parse_range(window), resolution)
    qs = quantile_set(prof, base, n, imax)
    eta = [fluctuation_scale(prof, base + g, n).eta_f for g in qs.gamma_hat]
    run.csv("quantiles.csv", ["i", "quantile", "semiquantile", "eta_f"],
            zip(qs.indices, qs.gamma_hat, qs.gamma_star, eta))
    run.close()


@main.command()
@_n
@click.option("--alpha", type=float, default=0.5, show_default=True, help="Interpolation parameter in [0, 1].")
@click.option("--regime", type=click.Choice(["gap", "min"]), default="gap", show_default=True)
@click.option("--variant", type=click.Choice(["interpolated", "short-range"]), default="interpolated",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--snapshots", type=int, default=11, show_default=True)
@click.option("--resolution", type=float, default=1e-5, show_default=True)
@click.option("--real-only/--all-labels", default=True, show_default=True, help="Omit ghost labels from the CSV.")
@_out
@click.pass_context
def dbm(ctx, n, alpha, regime, variant, seed, snapshots, resolution, real_only, out):
    """Interpolated (and optionally short-range) Dyson Brownian motion of the standard scenario."""
    from .dbm.particles import Trajectory
    from .dbm.scenario import ScenarioConfig, build_scenario
    from .dbm.shortrange import ShortRangeSet, run_interpolated, run_short_range
    run = _Run(ctx, "dbm", out, seed)
    cfg = ScenarioConfig(n, alpha=alpha, regime=regime, resolution=resolution)
    st = build_scenario(cfg)
    if variant == "interpolated":
        res = run_interpolated(st, cfg.t_end, seed, snapshots)
        traj = res.trajectory
        run.csv("rigidity.csv", ["t", "max_deviation"], zip(traj.times, res.rigidity))
    else:
        traj = run_short_range(st, ShortRangeSet(n), cfg.t_end, seed, snapshots)
    if real_only:
        traj = Trajectory(traj.times, traj.states[:, :, st.real], traj.labels[st.real], traj.dt)
    run.add([store.write_trajectory(run.dir, traj)])
    run.close()


@main.command()
@click.option("--alpha", type=float, default=0.0, show_default=True)
@click.option("--beta", "beta_time", type=float, default=None, help="Second time parameter (defaults to alpha).")
@click.option("--grid", default="-3:3:0.1", show_default=True, help="lo:hi:step for both arguments.")
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--diagonal", is_flag=True, help="Only x = y.")
@_out
@click.pass_context
def pearcey(ctx, alpha, beta_time, grid, tol, diagonal, out):
    """Extended Pearcey kernel table."""
    from .pearcey import kernel_pairs
    lo, hi, step = parse_range(grid, 3)
    if step <= 0 or hi < lo:
        raise click.BadParameter("grid needs lo <= hi and a positive step")
    run = _Run(ctx, "pearcey", out)
    xs = lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-9)) + 1)
    b = alpha if beta_time is None else beta_time
    X, Y = (xs, xs) if diagonal else (a.ravel() for a in np.meshgrid(xs, xs, indexing="ij"))
    vals, err = kernel_pairs(alpha, b, X, Y, tol=tol)
    run.csv("kernel.csv", ["x", "y", "re", "im", "error"], zip(X, Y, vals.real, vals.imag, err))
    run.close()


@main.command()
@click.option("--ensemble", type=click.Choice(ENSEMBLES), default="deformed-wigner", show_default=True)
@_n
@_alpha
@_t
@_beta
@click.option("--seeds", type=int, default=200, show_default=True)
@click.option("--first-seed", type=int, default=0, show_default=True)
@click.option("--law", type=click.Choice(["gaussian", "bernoulli"]), default="gaussian", show_default=True)
@click.option("--window", type=float, default=3.0, show_default=True, help="Half-width in rescaled units.")
@click.option("--compare", type=click.Choice(["pearcey", "none"]), default="none", show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@_out
@click.pass_context
def mc(ctx, ensemble, n, alpha, t, beta, seeds, first_seed, law, window, compare, workers, out):
    """Sample spectra, rescale around the cusp and optionally compare with the Pearcey density."""
    from .mc import compare_to_pearcey, cusp_report, rescale, sample_many
    run = _Run(ctx, "mc", out, first_seed)
    spec = make_ensemble(ensemble, n, alpha, t, _beta_of(beta))
    cusp = cusp_report(spec)
    recs = sample_many(spec, range(first_seed, first_seed + seeds), law=law, cusp=cusp, workers=workers)
    st = rescale(recs, cusp, window)
    rep = compare_to_pearcey(st, cusp.alpha_pearcey) if compare == "pearcey" else None
    run.add(store.write_mc_run(run.dir, recs, st, rep))
    run.manifest.config_snapshot["cusp"] = {"kind": cusp.kind.value, "b": cusp.b, "gamma": cusp.gamma,
                                            "alpha_pearcey": cusp.alpha_pearcey}
    run.close()
    if rep is not None:
        click.echo(f"max|z| = {rep.max_abs_z:.3f}, chi2 p = {rep.p_value:.4f}: {'PASS' if rep.passed else 'FAIL'}")
        if not rep.passed:
            sys.exit(1)


@main.command()
@click.option("--only", default=None, help="Comma-separated criterion numbers (default: all).")
@_out
@click.pass_context
def check(ctx, only, out):
    """Run the acceptance checks and print a pass/fail table."""
    from .checks import CHECKS, run_checks
    try:
        numbers = [int(x) for x in only.split(",")] if only else sorted(CHECKS)
    except ValueError as exc:
        raise click.BadParameter("--only takes comma-separated integers") from exc
    unknown = [k for k in numbers if k not in CHECKS]
    if unknown:
        raise click.BadParameter(f"unknown checks {unknown}")
    run = _Run(ctx, "check", out)
    results = []
    for k in numbers:
        res = run_checks([k])[0]
        click.echo(res.line())
        results.append(res)
    run.csv("checks.csv", ["number", "name", "passed", "seconds", "within_budget"],
            [(r.number, r.name, r.passed, r.seconds, r.within_budget) for r in results])
    run.close()
    if not all(r.passed for r in results):
        sys.exit(1)


def run(argv=None) -> int:
    """Entry point returning the exit code; library errors in the inputs map to 2."""
    try:
        main.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.exceptions.Abort:
        return 2
    except (ConfigError, InvalidSpec, ValueError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    except CuspError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return 1
    return 0


def entry() -> None:
    sys.exit(run())


if __name__ == "__main__":
    entry()
