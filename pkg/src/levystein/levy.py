"""Symmetric stable and Brownian Lévy paths on high-frequency grids.

Parametrisation: a model with ``scale=c`` and index ``alpha`` has
``E exp(iuX_1) = exp(-c|u|**alpha)`` per component.  The Brownian model is the
``alpha = 2`` member of this family, so ``X_1`` has variance ``2c``.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from levystein import rng as _rng
from levystein.rng import Role, RngStream


class ModelKind(str, enum.Enum):
    STABLE = "SymmetricStable"
    BROWNIAN = "Brownian"


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class LevyModel:
    kind: ModelKind = ModelKind.STABLE
    alpha: float = 1.5
    scale: float = 1.0
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.kind is ModelKind.BROWNIAN:
            if self.alpha != 2.0:
                object.__setattr__(self, "alpha", 2.0)
        if not 0.0 < self.alpha <= 2.0:
            raise ParameterError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.scale > 0.0:
            raise ParameterError(f"scale must be positive, got {self.scale}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ParameterError(f"dim must be a positive integer, got {self.dim}")

    @classmethod
    def brownian(cls, scale: float = 1.0, dim: int = 1) -> "LevyModel":
        return cls(ModelKind.BROWNIAN, 2.0, scale, dim)

    @classmethod
    def stable(cls, alpha: float, scale: float = 1.0, dim: int = 1) -> "LevyModel":
        return cls(ModelKind.STABLE, alpha, scale, dim)

    def cf(self, u, t: float = 1.0):
        """Characteristic function of one component of ``X_t``."""
        return np.exp(-self.scale * t * np.abs(u) ** self.alpha)

    def increment_scale(self, n: int) -> float:
        """Multiplier taking a standard stable draw to ``X_{1/n}``."""
        return (self.scale / n) ** (1.0 / self.alpha)


@dataclass(frozen=True)
class GridSpec:
    n: int
    horizon: float = 1.0
    window: int = 0
    dim: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("n must be >= 1")
        if self.window < 0:
            raise ParameterError("window must be >= 0")
        if self.steps < 1:
            raise ParameterError("floor(n * horizon) must be >= 1")

    @property
    def steps(self) -> int:
        """Number of summands, ``floor(n t)``."""
        return steps_for(self.n, self.horizon)

    @property
    def length(self) -> int:
        """Increments needed so that the last window is fully observed."""
        return self.steps + self.window


def steps_for(n: int, t: float) -> int:
    # guard against n*t landing a hair below an integer
    return int(math.floor(n * t + 1e-9))


@dataclass(frozen=True)
class PathSample:
    increments: np.ndarray  # (length, d), entry k is X_{(k+1)/n} - X_{k/n}
    cumulative: np.ndarray  # (length + 1, d), cumulative[0] = 0
    model: LevyModel
    grid: GridSpec

    def position(self, i: int) -> np.ndarray:
        """``X_{i/n}``."""
        return self.cumulative[i]


def normalization(model: LevyModel, n: int) -> float:
    """The scaling ``a_n = n**(1/alpha)`` making ``a_n X_{1/n}`` a fixed law."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    return float(n) ** (1.0 / model.alpha)


def sample_stable_standard(alpha: float, rng: RngStream) -> float:
    if not 0.0 < alpha <= 2.0:
        raise ParameterError(f"alpha must lie in (0, 2], got {alpha}")
    return float(rng.stable(alpha, 1)[0])


def cumulative_sum(increments: np.ndarray) -> np.ndarray:
    out = np.zeros((increments.shape[0] + 1,) + increments.shape[1:])
    np.cumsum(increments, axis=0, out=out[1:])
    return out


def sample_path(model: LevyModel, grid: GridSpec, rng: RngStream) -> PathSample:
    """One path on ``{k/n}``.  Component ``c`` of increment ``k`` is draw ``k*d + c``."""
    if grid.dim != model.dim:
        raise ParameterError("grid.dim and model.dim disagree")
    d = model.dim
    draws = rng.stable(model.alpha, grid.length * d).reshape(grid.length, d)
    inc = draws * model.increment_scale(grid.n)
    return PathSample(inc, cumulative_sum(inc), model, grid)


def sample_increment_rows(model: LevyModel, n: int, length: int, replicates, master_seed: int,
                          role: Role = Role.PATH) -> np.ndarray:
    """Increments of many paths at once, shape ``(R, length, d)``.

    Row ``r`` is bit-identical to ``sample_path`` driven by stream
    ``(master_seed, replicates[r], role)``.
    """
    reps = np.asarray(replicates, dtype=np.int64)
    d = model.dim
    raw = _rng.stable_rows(master_seed, reps, role, model.alpha, length * d)
    return raw.reshape(reps.shape[0], length, d) * model.increment_scale(n)


def sample_marginal(model: LevyModel, t: float, count: int, master_seed: int,
                    replicate: int = 0, role: Role = Role.PATH) -> np.ndarray:
    """``count`` i.i.d. copies of ``X_t`` (all components), shape ``(count, d)``."""
    draws = RngStream(master_seed, replicate, role).stable(model.alpha, count * model.dim)
    return draws.reshape(count, model.dim) * (model.scale * t) ** (1.0 / model.alpha)


# ---------------------------------------------------------------------------
# Hypothesis checks
# ---------------------------------------------------------------------------

@dataclass
class TailReport:
    t: float
    s: np.ndarray
    p_hat: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    kappa: float           # smallest kappa with p_hat <= kappa t s^-alpha on the grid
    kappa_upper: float     # same with p replaced by the upper CI
    tail_exponent: float   # fitted slope of log p vs log s over the upper half of the grid
    tail_exponent_se: float
    violation: bool
    undersampled: np.ndarray
    h3_gamma: float | None = None
    h3_pass: bool | None = None


def _tail_ci(p_hat: np.ndarray, m: int, z: float):
    p_floor = np.maximum(p_hat, 1.0 / m)
    half = z * np.sqrt(p_floor * (1.0 - p_floor) / m)
    return np.clip(p_hat - half, 0.0, 1.0), np.clip(p_hat + half, 0.0, 1.0)


def check_tail_bound(model: LevyModel, t: float, s_grid, replicates: int, master_seed: int = 0,
                     z: float = 3.0) -> TailReport:
    """Empirical tails of ``|X_t^(1)|`` against ``kappa t s^-alpha``.

    For Brownian models the sub-polynomial form ``kappa (t s^-2)^gamma`` is also
    fitted and passes when the fitted ``gamma`` exceeds one.
    """
    s = np.asarray(s_grid, dtype=float)
    if np.any(s <= 0):
        raise ParameterError("s_grid must be positive")
    x = np.abs(sample_marginal(model, t, replicates, master_seed)[:, 0])
    x.sort()
    counts = replicates - np.searchsorted(x, s, side="left")
    p_hat = counts / replicates
    undersampled = counts < 10
    if undersampled.any():
        warnings.warn(
            f"tail undersampled at s={s[undersampled].tolist()} ({replicates} replicates); "
            "CI widened by the 1/M floor",
            stacklevel=2,
        )
    lo, hi = _tail_ci(p_hat, replicates, z)
    kappa = float(np.max(p_hat * s**model.alpha / t))
    kappa_upper = float(np.max(hi * s**model.alpha / t))

    order = np.argsort(s)
    upper = order[len(order) // 2:]
    keep = upper[p_hat[upper] > 0]
    slope, slope_se = np.nan, np.nan
    if keep.size >= 2:
        ls, lp = np.log(s[keep]), np.log(p_hat[keep])
        se_lp = np.sqrt((1 - p_hat[keep]) / np.maximum(counts[keep], 1))
        slope, slope_se = _weighted_slope(ls, lp, se_lp)
    # a tail heavier than s^-alpha admits no finite kappa
    violation = bool(np.isfinite(slope) and -slope + z * slope_se < model.alpha - 0.25)

    report = TailReport(t, s, p_hat, lo, hi, kappa, kappa_upper, float(-slope) if np.isfinite(slope) else np.nan,
                        float(slope_se), violation, undersampled)
    if model.alpha == 2.0:
        pos = p_hat > 0
        if pos.sum() >= 2:
            # log p = log kappa + gamma * log(t / s^2)
            xs = np.log(t / s[pos] ** 2)
            gamma_hat = float(np.polyfit(xs, np.log(p_hat[pos]), 1)[0])
        else:
            gamma_hat = float("inf")
        report.h3_gamma = gamma_hat
        report.h3_pass = gamma_hat > 1.0
    return report


def h3_kappa(report: TailReport, gamma: float) -> float:
    """Smallest kappa with ``p <= kappa (t s^-2)^gamma`` on the grid (upper CI)."""
    return float(np.max(report.ci_high / (report.t / report.s**2) ** gamma))


def _weighted_slope(x, y, se):
    w = 1.0 / np.maximum(se, 1e-300) ** 2
    xm = np.sum(w * x) / np.sum(w)
    ym = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * (y - ym)) / sxx
    return float(slope), float(math.sqrt(1.0 / sxx))


@dataclass
class MomentTable:
    n: np.ndarray
    one_abs: np.ndarray          # E[1 ^ |X_{1/n}|]
    one_abs_se: np.ndarray
    one_sq: np.ndarray           # E[1 ^ |X_{1/n}|^2]
    one_sq_se: np.ndarray
    abs_sq: np.ndarray           # E[|X_{1/n}| ^ |X_{1/n}|^2], infinite mean when alpha <= 1
    abs_sq_se: np.ndarray
    slopes: dict

    def rows(self):
        for k in range(len(self.n)):
            yield (int(self.n[k]), self.one_abs[k], self.one_abs_se[k], self.one_sq[k],
                   self.one_sq_se[k], self.abs_sq[k], self.abs_sq_se[k])


def estimate_truncated_moments(model: LevyModel, n_list, replicates: int, master_seed: int = 0) -> MomentTable:
    """Monte Carlo truncated moments of ``X_{1/n}`` and their log-log slopes in ``n``.

    The same standard draws are reused across ``n`` (common random numbers), so the
    slopes are far less noisy than independent estimates would be.
    """
    ns = np.asarray(list(n_list), dtype=np.int64)
    if ns.size == 0:
        raise ParameterError("n_list must be nonempty")
    base = RngStream(master_seed, 0, Role.PATH).stable(model.alpha, replicates * model.dim)
    base = base.reshape(replicates, model.dim)
    cols = {k: ([], []) for k in ("one_abs", "one_sq", "abs_sq")}
    for n in ns:
        r = np.linalg.norm(base * model.increment_scale(int(n)), axis=1)
        for key, vals in (
            ("one_abs", np.minimum(1.0, r)),
            ("one_sq", np.minimum(1.0, r * r)),
            ("abs_sq", np.minimum(r, r * r)),
        ):
            cols[key][0].append(vals.mean())
            cols[key][1].append(vals.std(ddof=1) / math.sqrt(replicates))
    arr = {k: (np.array(v[0]), np.array(v[1])) for k, v in cols.items()}
    slopes = {}
    logn = np.log(ns.astype(float))
    for key, (mean, _) in arr.items():
        if ns.size >= 2 and np.all(mean > 0):
            slopes[key] = float(np.polyfit(logn, np.log(mean), 1)[0])
        else:
            slopes[key] = float("nan")
    return MomentTable(ns, *arr["one_abs"], *arr["one_sq"], *arr["abs_sq"], slopes)
