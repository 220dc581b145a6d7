"""Command-line entry point.

Every subcommand reads an optional TOML config, writes its delimited output to
``--out`` and finishes with a JSON summary (also saved as ``<command>_summary.json``).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from levystein.asymptotics import limit_values, variance_profile
from levystein.experiments.config import ConfigError, ExperimentConfig
from levystein.experiments.rates import emit_plot_data, fit_rate, run_rate_experiment
from levystein.levy import GridSpec, estimate_truncated_moments
from levystein.metric import certify
from levystein.stable_convergence import check_stable_limit, check_stein_condition, default_bounded_family, \
    default_h_family, default_probes
from levystein.statistics import z_values

log = logging.getLogger("levystein")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _finish(name: str, out: Path, summary: dict) -> dict:
    summary = _jsonable(summary)
    text = json.dumps(summary, indent=2, sort_keys=True)
    (out / f"{name}_summary.json").write_text(text + "\n")
    print(text)
    return summary


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["%.17g" % v if isinstance(v, (float, np.floating)) else v for v in r])


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, out: Path) -> dict:
    """Matched ``Z`` and limit batches for every ``n``."""
    model, g = cfg.build_model(), cfg.build_functional()
    profile = variance_profile(g, model)
    files = {}
    for n in cfg.n_list:
        grid = GridSpec(n, cfg.horizon, g.window, model.dim)
        z = z_values(model, g, grid, cfg.replicates, cfg.master_seed, workers=cfg.workers)
        lim, v = limit_values(model, profile, grid, cfg.replicates, cfg.master_seed, workers=cfg.workers)
        path = out / f"simulate_n{n}.csv"
        _write_rows(path, ("replicate", "z", "limit", "V"), zip(range(cfg.replicates), z, lim, v))
        files[n] = {"file": path.name, "z_mean": z.mean(), "z_var": z.var(ddof=1), "V_mean": v.mean()}
    return {"command": "simulate", "batches": files}


def cmd_rates(cfg: ExperimentConfig, out: Path) -> dict:
    csv_path = run_rate_experiment(cfg, out)
    verdict = fit_rate(csv_path)
    plots = emit_plot_data(csv_path, out)
    return {"command": "rates", "csv": csv_path.name, "verdict": verdict.to_dict(),
            "plots": {k: p.name for k, p in plots.items()},
            "note": "d_hat is a lower bound on the smooth distance (finite certified test family)"}


def cmd_stein_check(cfg: ExperimentConfig, out: Path) -> dict:
    from levystein.stein import DEFAULT_PROBES, GaussianBump, SineTest, check_gaussian_distance_lemma, \
        check_hprime_taylor, fd_second_derivative_gap, quadrature_stability, solve_stein

    family = cfg.build_family()
    gammas = [0.25, 0.5, 1.0, 2.0, 4.0]
    rows = []
    for k, psi in enumerate(family.members):
        for gamma in gammas:
            sol = solve_stein(psi, gamma)
            rows.append((k, gamma, sol.max_residual, quadrature_stability(sol), fd_second_derivative_gap(sol)))
    _write_rows(out / "stein_residuals.csv", ("member", "gamma", "residual", "stability", "fd_gap"), rows)

    deltas = [0.4, 0.2, 0.1, 0.05]
    taylor = {}
    for label, psi in (("sin(x)", SineTest(1.0, 0.0, 1.0)), ("cos(x)", SineTest(1.0, math.pi / 2, 1.0)),
                       ("bump(0,1.5)", GaussianBump(0.0, 1.5, family.members[-1].c))):
        rep = check_hprime_taylor(psi, 1.0, [1.0 + d for d in deltas], np.linspace(-5, 5, 41))
        taylor[label] = {"slope": rep.slope, "literal_slope": rep.literal_slope}

    grid = [0.5, 0.75, 1.0, 1.5, 2.0]
    lemma_ok, lemma_literal_ok = True, True
    for psi, cert in zip(family.members, family.certificates):
        rep = check_gaussian_distance_lemma(psi, grid, grid, sup4=cert.bounds[4])
        lemma_ok &= bool(rep.passed.all())
        lemma_literal_ok &= bool(rep.passed_literal.all())
    res = np.array([r[2] for r in rows])
    return {"command": "stein-check", "members": len(family), "gammas": gammas,
            "max_residual": res.max(), "max_stability": max(r[3] for r in rows),
            "max_fd_gap": max(r[4] for r in rows), "residual_ok": bool(np.all(res <= 1e-6)),
            "probes": [float(DEFAULT_PROBES[0]), float(DEFAULT_PROBES[-1])], "taylor": taylor,
            "gaussian_distance_ok": lemma_ok, "gaussian_distance_literal_ok": lemma_literal_ok}


def cmd_stable_check(cfg: ExperimentConfig, out: Path) -> dict:
    model, g = cfg.build_model(), cfg.build_functional()
    profile = variance_profile(g, model)
    n_list = [int(n) for n in cfg.probes.get("n_list", cfg.n_list)]
    times = tuple(float(t) for t in cfg.probes.get("times", [cfg.horizon]))
    reps = int(cfg.probes.get("replicates", cfg.replicates))
    probes = default_probes(model.dim)
    stein = check_stein_condition(model, g, profile, n_list, probes, default_h_family(), reps, times,
                                  cfg.master_seed, workers=cfg.workers)
    limit = check_stable_limit(model, g, profile, n_list, probes, default_bounded_family(), reps, times,
                               cfg.master_seed, workers=cfg.workers)
    for name, rep in (("stein_condition", stein), ("stable_limit", limit)):
        _write_rows(out / f"{name}.csv", ("n", "probe", "test", "mean", "stderr"),
                    ((r["n"], r["probe"], r["test"], r["mean"], r["stderr"]) for r in rep.rows()))
    return {"command": "stable-check", "n_list": n_list, "times": list(times), "replicates": reps,
            "stein_condition": stein.verdict(), "stable_limit": limit.verdict(),
            "note": "finite probe set; no claim over all bounded conditioning variables"}


def cmd_certify_family(cfg: ExperimentConfig, out: Path) -> dict:
    family = cfg.build_family()
    desc = family.describe()
    (out / "family.json").write_text(json.dumps(_jsonable(desc), indent=2, sort_keys=True) + "\n")
    worst = max(max(c.bounds) for c in family.certificates)
    recheck = all(certify(m).certified for m in family.members)
    return {"command": "certify-family", "size": len(family), "rejected": len(family.rejected),
            "worst_bound": worst, "recertified": recheck, "file": "family.json"}


def cmd_moments(cfg: ExperimentConfig, out: Path) -> dict:
    model = cfg.build_model()
    table = estimate_truncated_moments(model, cfg.n_list, cfg.replicates, cfg.master_seed)
    _write_rows(out / "moments.csv", ("n", "one_abs", "one_abs_se", "one_sq", "one_sq_se", "abs_sq", "abs_sq_se"),
                table.rows())
    return {"command": "moments", "alpha": model.alpha, "slopes": table.slopes}


COMMANDS = {
    "simulate": cmd_simulate,
    "rates": cmd_rates,
    "stein-check": cmd_stein_check,
    "stable-check": cmd_stable_check,
    "certify-family": cmd_certify_family,
    "moments": cmd_moments,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levystein", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).splitlines()[0])
        p.add_argument("--config", type=Path, help="TOML experiment config")
        p.add_argument("--seed", type=int, help="override mc.master_seed")
        p.add_argument("--workers", type=int, help="worker processes (0 = all cores)")
        p.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
        cfg = cfg.with_overrides(seed=args.seed, workers=args.workers,
                                 out=str(args.out) if args.out else None)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _finish(args.command.replace("-", "_"), out, COMMANDS[args.command](cfg, out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
