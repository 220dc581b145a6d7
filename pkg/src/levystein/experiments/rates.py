"""Distance-versus-``n`` experiments, rate fitting and plot data."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from levystein.asymptotics import compute_beta_n, limit_values, variance_profile
from levystein.functionals import default_probes
from levystein.levy import GridSpec
from levystein.metric import estimate_distance
from levystein.rng import Role
from levystein.statistics import z_values

from levystein.experiments.config import ExperimentConfig

log = logging.getLogger(__name__)

COLUMNS = ("n", "alpha", "m", "symmetric", "h2", "h3", "rate_case", "d_hat", "d_stderr", "r_n", "beta_n")
FLOAT_FMT = "%.17g"
SIGNIFICANCE = 3.0
MIN_FIT_ROWS = 4


# ---------------------------------------------------------------------------
# Rate table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateCase:
    name: str
    exponent: float       # power of n in the dominant term; nan when no rate is available
    log_factor: bool      # dominant term carries a power of log n

    def r_n(self, n: int, alpha: float, beta: float = 0.0) -> float:
        n = float(n)
        if self.name == "general":
            return beta + n ** (0.5 - 1 / alpha) + n ** -0.5 * (1 + (math.log(n) if alpha == 1 else 0.0))
        if self.name in ("stable_h2", "gauss_h3"):
            return beta + n ** -0.5
        if self.name == "gauss_h2":
            return beta + n ** -0.5 * math.log(n) ** 1.5
        return 1.0


def hypothesis_flags(alpha: float, symmetric: bool, h2: bool | None = None) -> tuple[bool, bool]:
    """``(H2, H3)``.  ``H2`` follows from symmetry in the window argument unless given."""
    h2 = symmetric if h2 is None else bool(h2)
    if alpha <= 1:
        h2 = False   # only defined for alpha > 1
    # Brownian tails satisfy the stronger tail bound for any gamma, so H3 reduces to H2(2)
    h3 = alpha == 2 and h2
    return h2, h3


def rate_case(alpha: float, h2: bool, h3: bool) -> RateCase:
    if alpha < 2:
        if 1 < alpha and h2:
            return RateCase("stable_h2", -0.5, False)
        exponent = max(0.5 - 1 / alpha, -0.5)
        return RateCase("general", exponent, alpha == 1)
    if h3:
        return RateCase("gauss_h3", -0.5, False)
    if h2:
        return RateCase("gauss_h2", -0.5, True)
    return RateCase("none", math.nan, False)


def case_from_name(name: str, alpha: float) -> RateCase:
    table = {"stable_h2": (-0.5, False), "gauss_h3": (-0.5, False), "gauss_h2": (-0.5, True),
             "none": (math.nan, False), "general": (max(0.5 - 1 / alpha, -0.5), alpha == 1)}
    if name not in table:
        raise ValueError(f"unknown rate case {name!r}")
    return RateCase(name, *table[name])


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % float(v)
    return str(v)


def format_row(row: dict) -> str:
    return ",".join(_fmt(row[c]) for c in COLUMNS)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != COLUMNS:
            raise ValueError(f"{path}: header does not match {','.join(COLUMNS)}")
        rows = []
        for raw in reader:
            rows.append({
                "n": int(raw["n"]), "alpha": float(raw["alpha"]), "m": int(raw["m"]),
                "symmetric": raw["symmetric"] == "true", "h2": raw["h2"] == "true", "h3": raw["h3"] == "true",
                "rate_case": raw["rate_case"], "d_hat": float(raw["d_hat"]), "d_stderr": float(raw["d_stderr"]),
                "r_n": float(raw["r_n"]), "beta_n": float(raw["beta_n"]),
            })
    return rows


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Experiment
# ---------------------------------------------------------------------------

def run_rate_experiment(config: ExperimentConfig, out_dir=None, *, workers: int | None = None,
                        stem: str = "rates") -> Path:
    """One CSV row per ``n``: distance between ``Z_t^(n)`` and its mixed-Gaussian limit.

    Both samples have ``mc.replicates`` members; ``Z`` uses the path streams and
    the limit uses the limit and noise streams, so the two are independent.  After
    each ``n`` a checkpoint is written; a rerun with the same config resumes from it.
    Wall-clock times go to a sidecar file so the CSV itself is deterministic.
    """
    out = Path(out_dir) if out_dir is not None else config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    workers = config.workers if workers is None else workers
    csv_path, ckpt_path, wall_path = out / f"{stem}.csv", out / f"{stem}.checkpoint.json", out / f"{stem}.wall.csv"

    model, g = config.build_model(), config.build_functional()
    family = config.build_family()
    profile = variance_profile(g, model)
    h2, h3 = hypothesis_flags(model.alpha, g.symmetric_in_y, config.functional.get("h2"))
    case = rate_case(model.alpha, h2, h3)
    betas = compute_beta_n(g, model, config.n_list, default_probes(model.dim)).beta

    done, walls = {}, {}
    if ckpt_path.exists():
        state = json.loads(ckpt_path.read_text())
        if state.get("digest") == config.digest():
            done = {int(k): v for k, v in state["rows"].items()}
            walls = {int(k): v for k, v in state.get("wall_ms", {}).items()}
            log.info("resuming from checkpoint with %d completed rows", len(done))
        else:
            log.warning("ignoring checkpoint written for a different config")

    for n, beta in zip(config.n_list, betas):
        if n in done:
            continue
        start = time.perf_counter()
        grid = GridSpec(n, config.horizon, g.window, model.dim)
        z = z_values(model, g, grid, config.replicates, config.master_seed, workers=workers, role=Role.PATH)
        lim, _ = limit_values(model, profile, grid, config.replicates, config.master_seed, workers=workers)
        est = estimate_distance(z, lim, family)
        row = {"n": n, "alpha": model.alpha, "m": g.window, "symmetric": g.symmetric_in_y, "h2": h2, "h3": h3,
               "rate_case": case.name, "d_hat": est.d_hat, "d_stderr": est.stderr,
               "r_n": case.r_n(n, model.alpha, float(beta)), "beta_n": float(beta)}
        done[n] = format_row(row)
        walls[n] = (time.perf_counter() - start) * 1e3
        log.info("n=%d d_hat=%.4g (se %.2g)", n, est.d_hat, est.stderr)
        _write_atomic(ckpt_path, json.dumps({"digest": config.digest(), "rows": done, "wall_ms": walls}))

    lines = [",".join(COLUMNS)] + [done[n] for n in config.n_list]
    _write_atomic(csv_path, "\n".join(lines) + "\n")
    _write_atomic(wall_path, "n,wall_ms\n" + "".join(f"{n},{walls.get(n, math.nan):.3f}\n" for n in config.n_list))
    ckpt_path.unlink(missing_ok=True)
    return csv_path


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

@dataclass
class RateVerdict:
    fitted_slope: float
    slope_ci: tuple
    predicted_exponent: float
    regressor: str            # "log n" or "log r_n"
    expected_slope: float     # predicted slope against the regressor
    bound_respected: bool
    c_hat: float
    rows_used: int
    slope_consistent: bool
    status: str               # pass, fail, underpowered, no prediction

    def to_dict(self) -> dict:
        d = asdict(self)
        d["slope_ci"] = list(self.slope_ci)
        return d


def weighted_slope(x, y, se) -> tuple[float, float, float]:
    """Weighted least squares slope, its standard error and the residual degrees of freedom.

    The standard error uses the given ``se`` unless the residual scatter is larger,
    in which case it is inflated by the reduced chi-square.
    """
    x, y, se = (np.asarray(a, dtype=float) for a in (x, y, se))
    w = 1.0 / np.maximum(se, 1e-300) ** 2
    xm, ym = np.average(x, weights=w), np.average(y, weights=w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    dof = x.size - 2
    resid = y - ym - slope * (x - xm)
    chi2 = np.sum(w * resid**2) / dof if dof > 0 else 1.0
    return float(slope), float(math.sqrt(max(chi2, 1.0) / sxx)), dof


def fit_rate(csv_path) -> RateVerdict:
    """Slope of ``log d_hat`` and the calibrated bound check, computed from the CSV alone."""
    rows = read_csv(csv_path)
    if not rows:
        raise ValueError(f"{csv_path}: no data rows")
    rows.sort(key=lambda r: r["n"])
    alpha = rows[0]["alpha"]
    case = case_from_name(rows[0]["rate_case"], alpha)
    n = np.array([r["n"] for r in rows], dtype=float)
    d = np.array([r["d_hat"] for r in rows])
    se = np.array([r["d_stderr"] for r in rows])
    rn = np.array([r["r_n"] for r in rows])

    c_hat = d[0] / rn[0]
    bound = bool(np.all(d <= c_hat * rn))
    if case.log_factor:
        regressor, x, expected = "log r_n", np.log(rn), 1.0
    else:
        regressor, x, expected = "log n", np.log(n), case.exponent

    sig = (d > SIGNIFICANCE * se) & (d > 0)
    used = int(sig.sum())
    if used < MIN_FIT_ROWS:
        return RateVerdict(math.nan, (math.nan, math.nan), case.exponent, regressor, expected, bound, float(c_hat),
                           used, False, "underpowered")
    # delta method: se(log d) = se / d
    slope, slope_se, dof = weighted_slope(x[sig], np.log(d[sig]), se[sig] / d[sig])
    q = stats.t.ppf(0.975, dof) if dof > 0 else math.inf
    ci = (slope - q * slope_se, slope + q * slope_se)
    if math.isnan(case.exponent):
        return RateVerdict(slope, ci, case.exponent, regressor, expected, bound, float(c_hat), used, False,
                           "no prediction")
    # an upper bound is contradicted only by decay that is significantly slower than predicted
    consistent = ci[1] >= expected if case.log_factor else ci[0] <= expected
    status = "pass" if bound and consistent else "fail"
    return RateVerdict(slope, ci, case.exponent, regressor, expected, bound, float(c_hat), used, consistent, status)


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------

def _two_column(x, y) -> str:
    return "".join(f"{FLOAT_FMT % a} {FLOAT_FMT % b}\n" for a, b in zip(x, y))


def read_plot_data(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=2)


def _svg(rows, verdict: RateVerdict | None) -> str:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = np.array([r["n"] for r in rows], dtype=float)
    d = np.array([r["d_hat"] for r in rows])
    rn = np.array([r["r_n"] for r in rows])
    with matplotlib.rc_context({"svg.hashsalt": "levystein", "svg.fonttype": "path", "path.simplify": False}):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        ax.loglog(n, d, "o", color="C0", label="d_hat (lower bound on d)")
        if len(rows) > 1:
            c_hat = d[0] / rn[0]
            ax.loglog(n, c_hat * rn, "-", color="C1", label="C_hat r_n")
            if verdict is not None and np.isfinite(verdict.fitted_slope) and d[0] > 0:
                x = rn / rn[0] if verdict.regressor == "log r_n" else n / n[0]
                ax.loglog(n, d[0] * x ** verdict.fitted_slope, "--", color="C2",
                          label=f"fit vs {verdict.regressor}, slope {verdict.fitted_slope:.3f}")
        ax.set_xlabel("n")
        ax.set_ylabel("distance")
        ax.legend(fontsize=8)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def emit_plot_data(csv_path, out_dir=None) -> dict:
    """``<stem>.dhat.dat`` (log n, log d_hat), ``<stem>.rn.dat`` (log n, log r_n) and ``<stem>.svg``.

    Output depends only on the CSV bytes.
    """
    csv_path = Path(csv_path)
    rows = read_csv(csv_path)
    if not rows:
        raise ValueError(f"{csv_path}: no data rows")
    out = Path(out_dir) if out_dir is not None else csv_path.parent
    out.mkdir(parents=True, exist_ok=True)
    stem = csv_path.stem
    logn = np.log([r["n"] for r in rows])
    with np.errstate(divide="ignore"):
        logd = np.log([r["d_hat"] for r in rows])
    logr = np.log([r["r_n"] for r in rows])
    paths = {"dhat": out / f"{stem}.dhat.dat", "rn": out / f"{stem}.rn.dat", "svg": out / f"{stem}.svg"}
    _write_atomic(paths["dhat"], _two_column(logn, logd))
    _write_atomic(paths["rn"], _two_column(logn, logr))
    verdict = fit_rate(csv_path) if len(rows) > 1 else None
    _write_atomic(paths["svg"], _svg(rows, verdict))
    return paths
