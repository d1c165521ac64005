"""Command-line entry point: ``fwemerge <subcommand> [options]``.

Model rates come from ``--config`` (an INI file with a ``[model]`` section)
and/or explicit flags, flags winning. A missing rate is an error reported
before anything is written. Every subcommand that takes ``--out`` writes CSV
tables plus ``manifest.json`` with the full configuration, seeds and versions.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .droplet import renewal_mean_mass, simulate_droplet
from .dual import duality_check, simulate_collision_free_dual, simulate_dual
from .experiments import EXPERIMENTS, load_experiment_config, run_experiment
from .forward import SCHEMES, simulate_forward, simulate_forward_ensemble
from .io import format_csv, write_csv, write_manifest
from .malthus import DEFAULT_J, malthus
from .mvlimit import UUState, entrance_law_construct, mv_ensemble_simulate, u_standard_solution, uU_integrate
from .params import ModelParams, SeedSpec, params_from_mapping

N_PROFILE_ROWS = 20


class UsageError(Exception):
    """Invalid or incomplete input; reported with exit status 2."""


# ---------------------------------------------------------------------------
# parameter resolution
# ---------------------------------------------------------------------------

def _model_values(args: argparse.Namespace) -> dict:
    values: dict = {}
    if getattr(args, "config", None):
        parser = configparser.ConfigParser()
        try:
            with open(args.config, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        if parser.has_section("model"):
            values.update(parser.items("model"))
    for key in ("c", "s", "d", "m", "n_sites", "beta1", "beta2", "beta3"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


def _params(args: argparse.Namespace, require_m: bool = True, require_sites: bool = False) -> ModelParams:
    values = _model_values(args)
    required = ["c", "s", "d"] + (["m"] if require_m else []) + (["n_sites"] if require_sites else [])
    missing = [k for k in required if k not in values]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise UsageError(f"missing required parameter(s): {flags}")
    if not require_m and "m" not in values:
        # the growth-rate computation never uses the mutation intensity
        values["m"] = 0.0
    try:
        return params_from_mapping(values, require_sites=require_sites)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _seed(args: argparse.Namespace, label: str) -> SeedSpec:
    return SeedSpec(args.seed, 0, label)


def _finish(args: argparse.Namespace, params: ModelParams | None, tables: dict, results: dict | None = None) -> None:
    """Write tables and the manifest under ``--out``; print the first table otherwise."""
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    if params is not None:
        config["model"] = params.to_dict()
        if "m" not in _model_values(args):
            config["model"]["m"] = None
    if args.out is None:
        header, rows = next(iter(tables.values()))
        sys.stdout.write(format_csv(header, rows))
        return
    out = Path(args.out)
    paths = [write_csv(out / f"{name}.csv", header, rows) for name, (header, rows) in sorted(tables.items())]
    paths.append(write_manifest(out / "manifest.json", args.command, config,
                                {"master_seed": getattr(args, "seed", None), "label": args.command},
                                paths, results))
    print(f"wrote {len(paths)} files to {out}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate_forward(args) -> int:
    p = _params(args, require_sites=True)
    seed = _seed(args, "simulate-forward")
    if args.reps == 1:
        tr = simulate_forward(p, args.T, args.dt, seed, record_every=args.record_every, scheme=args.scheme)
        rows = [[t, a, b] for t, a, b in zip(tr.times, tr.mean_mass, tr.total_mass)]
        tables = {"forward": (["time", "mean_mass", "total_mass"], rows)}
    else:
        ens = simulate_forward_ensemble(p, args.reps, args.T, args.dt, seed,
                                        record_every=args.record_every, scheme=args.scheme)
        rows = [[r, t, v] for r, row in enumerate(ens.mean_mass) for t, v in zip(ens.times, row)]
        tables = {"forward": (["replica", "time", "mean_mass"], rows)}
    _finish(args, p, tables)
    return 0


def cmd_simulate_dual(args) -> int:
    p = _params(args, require_m=False, require_sites=not args.collision_free)
    rec = np.linspace(0.0, args.T, args.records)
    seed = _seed(args, "simulate-dual")
    init = (args.k, args.ell)
    if args.collision_free:
        tr = simulate_collision_free_dual(init, p, args.T, seed, record_times=rec, stop_k=args.stop_k)
    else:
        tr = simulate_dual(init, p, args.T, seed, record_times=rec)
    rows = [[t, int(pi), k, i] for t, pi, k, i in zip(tr.times, tr.pi, tr.k, tr.occupation_integral)]
    sizes = sorted(tr.final_state.site_counts.items())
    site_rows = [[site, size, tr.final_time - tr.final_state.birth_times[site]] for site, size in sizes]
    _finish(args, p, {"dual": (["time", "particles", "occupied_sites", "occupation_integral"], rows),
                      "final_sites": (["site", "size", "age"], site_rows)},
            {"final_time": tr.final_time, "stopped_early": tr.stopped_early})
    return 0


def cmd_duality_check(args) -> int:
    p = _params(args, require_sites=True)
    res = duality_check(p, (args.k, args.ell), args.t, args.reps, _seed(args, "duality-check"), dt=args.dt)
    rows = [["forward", res.lhs, res.lhs_se], ["dual", res.rhs, res.rhs_se]]
    print(f"forward {res.lhs:.6f} +- {res.lhs_se:.6f}  dual {res.rhs:.6f} +- {res.rhs_se:.6f}  "
          f"z {res.z_score:.3f}")
    if args.out is not None:
        _finish(args, p, {"duality": (["side", "estimate", "se"], rows)}, {"z_score": res.z_score})
    return 0


def cmd_malthus(args) -> int:
    p = _params(args, require_m=False)
    try:
        res = malthus(p, args.J)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"alpha={res.alpha!r}")
    print(f"gamma={res.gamma!r}")
    print(f"B={res.B!r}")
    print(f"b={res.b!r}")
    rows = [[j, res.u_infty[j]] for j in range(1, N_PROFILE_ROWS + 1)]
    sys.stdout.write(format_csv(["size", "probability"], rows))
    if args.out is not None:
        _finish(args, p, {"stable_profile": (["size", "probability"],
                                             [[j, res.u_infty[j]] for j in range(1, res.u_infty.J + 1)])},
                {"alpha": res.alpha, "gamma": res.gamma, "B": res.B, "b": res.b, "J": res.J})
    return 0


def cmd_mv_ensemble(args) -> int:
    p = _params(args, require_m=False)
    curve, state = mv_ensemble_simulate(p, args.M, args.init, args.T, args.dt, _seed(args, "mv-ensemble"),
                                        record_every=args.record_every, mean_mode=args.mean_mode)
    _finish(args, p, {"mean_curve": (["time", "mean"], [[t, v] for t, v in zip(curve.times, curve.values)])},
            {"final_mean": state.mean})
    return 0


def cmd_entrance_law(args) -> int:
    p = _params(args, require_m=False)
    starts = list(_float_list(args.starts))
    curves = entrance_law_construct(p, args.M, args.dt, starts, _seed(args, "entrance-law"),
                                    horizon=args.horizon)
    rows = [[cv.start, t, v] for cv in curves for t, v in zip(cv.times, cv.values)]
    pref = [[cv.start, cv.shift, cv.prefactor] for cv in curves]
    _finish(args, p, {"entrance_curves": (["start", "time", "mean"], rows),
                      "prefactors": (["start", "shift", "prefactor"], pref)})
    return 0


def cmd_uu_integrate(args) -> int:
    p = _params(args, require_m=False)
    if args.standard:
        sol = u_standard_solution(p, args.J, T=args.T)
        rows = [[t, u, a, g] for t, u, a, g in zip(sol.times, sol.u, sol.alpha_t, sol.gamma_t)]
        results = {"t0_sensitivity": sol.t0_sensitivity}
    else:
        if args.u0 is None:
            raise UsageError("give --u0 or --standard")
        res = malthus(p, args.J)
        J = max(args.J, res.u_infty.J)
        tr = uU_integrate(UUState(args.u0, res.u_infty.padded(J), p.migration_rate), p, J, args.T)
        rows = [[t, u, a, g] for t, u, a, g in zip(tr.times, tr.u, tr.alpha_t, tr.gamma_t)]
        results = None
    _finish(args, p, {"uu": (["time", "u", "alpha_t", "gamma_t"], rows)}, results)
    return 0


def cmd_droplet(args) -> int:
    p = _params(args)
    base = _seed(args, "droplet")
    snap_times = _float_list(args.snapshots) if args.snapshots else ()
    if any(not 0 < t <= args.T for t in snap_times):
        raise UsageError("snapshot times must lie in (0, T]")
    rows, atoms = [], []
    for r in range(args.reps):
        tr = simulate_droplet(p, args.T, args.eps, args.dt, base.replica(r), record_every=args.record_every,
                              snapshot_times=snap_times)
        rows += [[r, t, v, n] for t, v, n in zip(tr.times, tr.total_mass, tr.n_atoms)]
        for t, meas in zip(tr.snapshot_times, tr.measures):
            atoms += [[r, t, loc, mass] for loc, mass in zip(meas.locations, meas.masses)]
    tables = {"droplet": (["replica", "time", "total_mass", "atoms"], rows)}
    if snap_times:
        tables["droplet_atoms"] = (["replica", "time", "location", "mass"], atoms)
    if args.renewal:
        rm = renewal_mean_mass(p, args.T)
        tables["renewal_mean"] = (["time", "mean_mass"], [[t, v] for t, v in zip(rm.times, rm.mean)])
    _finish(args, p, tables)
    return 0


def cmd_experiment(args) -> int:
    try:
        cfg = load_experiment_config(args.config, args.name)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from None
    if args.reps is not None:
        cfg = cfg.replace(reps=args.reps)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    out = args.out or cfg.output_dir
    if out is None:
        raise UsageError("experiment needs --out or output_dir in the config")
    report = run_experiment(cfg)
    report.write(out)
    for ch in report.checks:
        print(f"{'PASS' if ch.passed else 'FAIL'} {ch.name}: {ch.value:.6g} (threshold {ch.threshold:.6g})")
    for msg in report.problems:
        print(f"note: {msg}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _model_flags(sub: argparse.ArgumentParser) -> None:
    g = sub.add_argument_group("model")
    g.add_argument("--config", help="INI file with a [model] section")
    for key, help_ in (("c", "migration rate"), ("s", "selection rate"), ("d", "resampling rate"),
                       ("m", "mutation intensity (per-site rate m/N)")):
        g.add_argument(f"--{key}", type=float, help=help_)
    g.add_argument("--n-sites", dest="n_sites", type=int, help="number of sites N")
    for key in ("beta1", "beta2", "beta3"):
        g.add_argument(f"--{key}", type=float, help="rate-scaling exponent")


def _run_flags(sub: argparse.ArgumentParser, seed_default: int | None = 0) -> None:
    sub.add_argument("--seed", type=int, default=seed_default, help="master seed")
    sub.add_argument("--out", help="output directory for CSV files and manifest.json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fwemerge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fwemerge {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("simulate-forward", help="forward N-site diffusion from the all-type-1 state")
    _model_flags(sp)
    _run_flags(sp)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--dt", type=float, default=0.01)
    sp.add_argument("--reps", type=int, default=1)
    sp.add_argument("--record-every", type=int, default=10)
    sp.add_argument("--scheme", choices=sorted(SCHEMES), default="boundary")
    sp.set_defaults(func=cmd_simulate_forward)

    sp = subs.add_parser("simulate-dual", help="dual particle system")
    _model_flags(sp)
    _run_flags(sp)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--k", type=int, default=1, help="particles per initially occupied site")
    sp.add_argument("--ell", type=int, default=1, help="initially occupied sites")
    sp.add_argument("--records", type=int, default=101)
    sp.add_argument("--collision-free", action="store_true", help="every migrant founds a new site")
    sp.add_argument("--stop-k", type=int, default=0, help="collision-free only: stop at this many sites")
    sp.set_defaults(func=cmd_simulate_dual)

    sp = subs.add_parser("duality-check", help="forward versus dual Monte Carlo of one moment")
    _model_flags(sp)
    _run_flags(sp)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--k", type=int, default=1)
    sp.add_argument("--ell", type=int, default=2)
    sp.add_argument("--reps", type=int, default=10000)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.set_defaults(func=cmd_duality_check)

    sp = subs.add_parser("malthus", help="growth rate alpha and the stable size profile")
    _model_flags(sp)
    sp.add_argument("--J", type=int, default=DEFAULT_J, help="initial size truncation")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_malthus)

    sp = subs.add_parser("mv-ensemble", help="McKean-Vlasov ensemble sharing its mean")
    _model_flags(sp)
    _run_flags(sp)
    sp.add_argument("--M", type=int, required=True)
    sp.add_argument("--init", type=float, required=True, help="common start value")
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--dt", type=float, default=0.01)
    sp.add_argument("--record-every", type=int, default=10)
    sp.add_argument("--mean-mode", choices=("self", "frozen"), default="self")
    sp.set_defaults(func=cmd_mv_ensemble)

    sp = subs.add_parser("entrance-law", help="recentred ensemble curves from small starts")
    _model_flags(sp)
    _run_flags(sp)
    sp.add_argument("--M", type=int, required=True)
    sp.add_argument("--starts", required=True, help="comma-separated start values in (0, 1/2)")
    sp.add_argument("--dt", type=float, default=0.01)
    sp.add_argument("--horizon", type=float, default=40.0)
    sp.set_defaults(func=cmd_entrance_law)

    sp = subs.add_parser("uu-integrate", help="occupied fraction u and size profile U")
    _model_flags(sp)
    sp.add_argument("--J", type=int, default=DEFAULT_J)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--u0", type=float)
    sp.add_argument("--standard", action="store_true", help="the solution with e^{-alpha t} u -> 1 at -infinity")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_uu_integrate)

    sp = subs.add_parser("droplet", help="droplet atomic-measure simulation")
    _model_flags(sp)
    _run_flags(sp)
    sp.add_argument("--T", type=float, required=True)
    sp.add_argument("--eps", type=float, default=1e-3)
    sp.add_argument("--dt", type=float, default=0.01)
    sp.add_argument("--reps", type=int, default=1)
    sp.add_argument("--record-every", type=int, default=10)
    sp.add_argument("--snapshots", help="comma-separated times at which to write the atoms")
    sp.add_argument("--renewal", action="store_true", help="also write the renewal-equation mean")
    sp.set_defaults(func=cmd_droplet)

    sp = subs.add_parser("experiment", help="run a configured experiment")
    sp.add_argument("name", choices=EXPERIMENTS)
    sp.add_argument("--config", help="INI file; defaults to the packaged desk-scale settings")
    sp.add_argument("--reps", type=int, help="override the configured replica count")
    _run_flags(sp, seed_default=None)
    sp.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args))
    except UsageError as exc:
        print(f"fwemerge {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"fwemerge {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
