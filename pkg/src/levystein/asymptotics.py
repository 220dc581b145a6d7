"""Variance profile, the mixed-Gaussian limit and the conditional-variance check."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from levystein.functionals import CosineFunctional, SmoothFunctional, UnsupportedOracleError, \
    closed_form_gn, scaled_windows
from levystein.levy import GridSpec, LevyModel, ParameterError, PathSample, sample_increment_rows, steps_for
from levystein.parallel import kahan_rows, map_chunks
from levystein.rng import Role, normal_rows
from levystein.statistics import _states


def estimate_gn_mc(g: SmoothFunctional, model: LevyModel, n: int, x, replicates: int,
                   master_seed: int = 0, chunk: int = 1 << 16) -> tuple[float, float]:
    """Monte Carlo lag-sum of covariances at a single state ``x``.

    Each replicate draws ``3m + 1`` independent scaled increments; window ``j``
    covers copies ``j+1 .. j+m+1``.  The estimator is the sum over lags of
    sample covariances (divisor ``M - 1``), unbiased for each lag.
    """
    if replicates < 2:
        raise ParameterError("replicates must be >= 2")
    m, d = g.window, model.dim
    x = np.asarray(x, dtype=float).reshape(d)
    a = np.empty(replicates)
    b = np.empty((replicates, 2 * m + 1))
    for start in range(0, replicates, chunk):
        count = min(chunk, replicates - start)
        y = scaled_windows(model, n, count, master_seed, slots=3 * m + 1, first_replicate=start)
        xs = np.broadcast_to(x, (count, d))
        # slot s holds copy s - m + 1; the base window is copies 1..m+1 = slots m..2m
        a[start:start + count] = g.eval(xs, y[:, m:2 * m + 1])
        for lag in range(-m, m + 1):
            lo = m + lag
            b[start:start + count, lag + m] = g.eval(xs, y[:, lo:lo + m + 1])
    da = a - a.mean()
    db = b - b.mean(axis=0)
    terms = da * db.sum(axis=1)
    est = terms.sum() / (replicates - 1)
    se = terms.std(ddof=1) / math.sqrt(replicates)
    return float(est), float(se)


@dataclass
class VarianceProfile:
    """``gfrak`` and ``gfrak_n`` for one functional and model."""

    g: SmoothFunctional
    model: LevyModel
    exact: bool = True
    table_x: np.ndarray | None = None
    table_values: np.ndarray | None = None
    table_se: np.ndarray | None = None
    beta: dict = field(default_factory=dict)

    def gfrak(self, x):
        if self.exact:
            return np.maximum(closed_form_gn(self.g, self.model, 1, x), 0.0)
        x = np.asarray(x, dtype=float)
        return np.maximum(np.interp(x[..., 0], self.table_x, self.table_values), 0.0)

    def gfrak_n(self, n: int, x):
        if self.exact:
            return closed_form_gn(self.g, self.model, n, x)
        raise UnsupportedOracleError("tabulated profiles hold the limit only; use estimate_gn_mc for finite n")

    def beta_n(self, n: int) -> float:
        return self.beta.get(n, 0.0 if self.exact else float("nan"))


def variance_profile(g: SmoothFunctional, model: LevyModel) -> VarianceProfile:
    if not isinstance(g, CosineFunctional):
        raise UnsupportedOracleError("closed-form profile requires a CosineFunctional; use tabulated_profile")
    return VarianceProfile(g, model, exact=True)


def tabulated_profile(g: SmoothFunctional, model: LevyModel, n_ref: int, x_grid, replicates: int,
                      master_seed: int = 0) -> VarianceProfile:
    """Limit profile tabulated by Monte Carlo at a large ``n_ref`` (``d = 1`` only)."""
    if model.dim != 1:
        raise ParameterError("tabulated profiles support d = 1")
    xs = np.asarray(x_grid, dtype=float)
    vals, ses = zip(*(estimate_gn_mc(g, model, n_ref, [x], replicates, master_seed) for x in xs))
    return VarianceProfile(g, model, exact=False, table_x=xs, table_values=np.array(vals), table_se=np.array(ses))


def compute_V(path: PathSample, profile: VarianceProfile, t: float, t0: float = 0.0) -> float:
    """Left-endpoint Riemann sum ``(1/n) sum gfrak(X_{(i-1)/n})`` over steps ``floor(n t0) < i <= floor(n t)``."""
    n = path.grid.n
    lo, hi = steps_for(n, t0), steps_for(n, t)
    if hi <= lo:
        return 0.0
    a = profile.gfrak(path.cumulative[lo:hi])
    return float(kahan_rows(np.ascontiguousarray(a[None, :]))[0]) / n


@dataclass(frozen=True)
class LimitSample:
    value: float
    V: float


def _limit_chunk(reps, model, n, steps, seed, gfrak):
    inc = sample_increment_rows(model, n, steps, reps, seed, Role.LIMIT)
    a = gfrak(_states(inc, steps))
    v = kahan_rows(np.ascontiguousarray(a)) / n
    v = np.maximum(v, 0.0)
    noise = normal_rows(seed, reps, Role.NOISE, 1)[:, 0]
    return np.sqrt(v) * noise, v


def limit_values(model: LevyModel, profile: VarianceProfile, grid: GridSpec, replicates: int, master_seed: int,
                 *, workers: int | None = 1) -> tuple[np.ndarray, np.ndarray]:
    parts = map_chunks(_limit_chunk, replicates, (model, grid.n, grid.steps, master_seed, profile.gfrak), workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def sample_limit(model: LevyModel, g: SmoothFunctional, profile: VarianceProfile, grid: GridSpec,
                 replicates: int, master_seed: int, *, workers: int | None = 1) -> list[LimitSample]:
    """``sqrt(V) N`` per replicate: path from the limit stream, ``N`` from the noise stream."""
    if profile.g is not g:
        raise ParameterError("profile was built for a different functional")
    vals, v = limit_values(model, profile, grid, replicates, master_seed, workers=workers)
    return [LimitSample(float(a), float(b)) for a, b in zip(vals, v)]


@dataclass
class BetaReport:
    n: list
    beta: np.ndarray
    stderr: np.ndarray
    exact: bool


def compute_beta_n(g: SmoothFunctional, model: LevyModel, n_list, x_probes, *, mode: str = "exact",
                   replicates: int = 100_000, master_seed: int = 0) -> BetaReport:
    """``max_x |gfrak_n(x) - gfrak(x)|`` over the probes (not a true supremum)."""
    probes = np.asarray(x_probes, dtype=float)
    if probes.size == 0:
        raise ParameterError("probe grid is empty")
    probes = probes.reshape(-1, model.dim)
    limit = closed_form_gn(g, model, 1, probes)
    betas, ses = [], []
    for n in n_list:
        if mode == "exact":
            betas.append(float(np.max(np.abs(closed_form_gn(g, model, n, probes) - limit))))
            ses.append(0.0)
        elif mode == "mc":
            est = [estimate_gn_mc(g, model, n, x, replicates, master_seed) for x in probes]
            diff = np.abs(np.array([e[0] for e in est]) - limit)
            betas.append(float(diff.max()))
            ses.append(float(max(e[1] for e in est)))
        else:
            raise ParameterError(f"unknown mode {mode!r}")
    return BetaReport(list(n_list), np.array(betas), np.array(ses), mode == "exact")


@dataclass
class VarianceConvergenceReport:
    n: list
    discrepancy: np.ndarray
    stderr: np.ndarray
    approximate: bool
    reference_n: int

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.discrepancy) < 0))


def _variance_gap_chunk(reps, model, g, n_list, n_ref, t, seed, exact_lag):
    steps_ref = steps_for(n_ref, t)
    inc = sample_increment_rows(model, n_ref, steps_ref, reps, seed, Role.PATH)
    pos = np.concatenate([np.zeros_like(inc[:, :1]), np.cumsum(inc, axis=1)], axis=1)
    fine = closed_form_gn(g, model, n_ref, pos[:, :steps_ref])
    integral = kahan_rows(np.ascontiguousarray(fine)) / n_ref
    out = []
    for n in n_list:
        stride = n_ref // n
        steps = steps_for(n, t)
        coarse = pos[:, 0:steps * stride:stride]
        cond = exact_lag(g, model, n, coarse)
        out.append(np.abs(kahan_rows(np.ascontiguousarray(cond)) / n - integral))
    return np.stack(out, axis=1)


def check_variance_convergence(g: CosineFunctional, model: LevyModel, n_list, t: float, replicates: int,
                               master_seed: int = 0, refine: int = 4, workers: int | None = 1
                               ) -> VarianceConvergenceReport:
    """``E|sum_i E[xi_i^2 | F_{(i-1)/n}] - int_0^t A_s ds|`` per ``n``.

    The integral is a Riemann sum on a reference grid ``refine`` times finer than
    the finest ``n``; coarse grids are sub-sampled from the same path.  For
    ``m = 0`` the conditional variance is exactly ``gfrak_n``; for ``m > 0`` the
    lag-sum analogue is used and the report is flagged approximate.
    """
    ns = [int(n) for n in n_list]
    n_ref = int(np.lcm.reduce(ns)) * refine
    if any(n_ref % n for n in ns):
        raise ParameterError("reference grid must refine every n")
    gaps = map_chunks(_variance_gap_chunk, replicates, (model, g, ns, n_ref, t, master_seed, closed_form_gn),
                      workers)
    gaps = np.concatenate(gaps)
    return VarianceConvergenceReport(ns, gaps.mean(axis=0), gaps.std(axis=0, ddof=1) / math.sqrt(replicates),
                                     g.window > 0, n_ref)
