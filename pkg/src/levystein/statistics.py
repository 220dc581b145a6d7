"""The statistic ``G_t^(n)`` and its centred rescaling ``Z_t^(n)``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from levystein.functionals import SmoothFunctional, conditional_mean
from levystein.levy import GridSpec, LevyModel, ParameterError, PathSample, normalization, \
    sample_increment_rows, steps_for
from levystein.parallel import kahan_rows, map_chunks
from levystein.rng import Role


@dataclass(frozen=True)
class StatisticSample:
    value: float
    t: float
    n: int
    replicate_index: int


def _windows(increments: np.ndarray, m: int, steps: int, a_n: float) -> np.ndarray:
    """Scaled windows ``I_{i,n}``, i = 1..steps, from increments ``(..., L, d)`` -> ``(..., steps, m+1, d)``."""
    if increments.shape[-2] < steps + m:
        raise IndexError(f"path has {increments.shape[-2]} increments, needs {steps + m}")
    view = sliding_window_view(increments, m + 1, axis=-2)[..., :steps, :, :]
    return a_n * np.swapaxes(view, -1, -2)


def _states(increments: np.ndarray, steps: int) -> np.ndarray:
    """``X_{(i-1)/n}`` for i = 1..steps."""
    lead = increments.shape[:-2]
    d = increments.shape[-1]
    out = np.zeros(lead + (steps, d))
    np.cumsum(increments[..., : steps - 1, :], axis=-2, out=out[..., 1:, :])
    return out


def compute_G(path: PathSample, g: SmoothFunctional, grid: GridSpec | None = None) -> float:
    """``sum_{i <= floor(nt)} g(X_{(i-1)/n}, I_{i,n})``."""
    grid = grid or path.grid
    a_n = normalization(path.model, grid.n)
    y = _windows(path.increments, g.window, grid.steps, a_n)
    x = path.cumulative[: grid.steps]
    return float(kahan_rows(np.ascontiguousarray(g.eval(x, y)[None, :]))[0])


def _centred_terms(increments, model: LevyModel, g: SmoothFunctional, n: int, steps: int, centering: dict):
    a_n = normalization(model, n)
    y = _windows(increments, g.window, steps, a_n)
    x = _states(increments, steps)
    return g.eval(x, y) - conditional_mean(g, model, n, x, **centering)


def crude_bound(g: SmoothFunctional, n: int, steps: int) -> float:
    return 2.0 * g.bounds.g * steps / math.sqrt(n)


def compute_Z(path: PathSample, g: SmoothFunctional, grid: GridSpec | None = None, *,
              replicate_index: int = 0, centering: dict | None = None) -> StatisticSample:
    """``n**-1/2 sum_i f_n(X_{(i-1)/n}, I_{i,n})`` for one path."""
    grid = grid or path.grid
    f = _centred_terms(path.increments, path.model, g, grid.n, grid.steps, centering or {})
    z = float(kahan_rows(np.ascontiguousarray(f[None, :]))[0]) / math.sqrt(grid.n)
    _assert_crude(np.array([z]), g, grid.n, grid.steps)
    return StatisticSample(z, grid.horizon, grid.n, replicate_index)


def _assert_crude(z, g, n, steps):
    bound = crude_bound(g, n, steps)
    if not np.all(np.abs(z) <= bound * (1 + 1e-12)):
        raise RuntimeError(f"|Z| exceeded the crude bound {bound}")


def _block_edges(n: int, times) -> list[int]:
    return [0] + [steps_for(n, t) for t in times]


def _z_block_chunk(reps, model, g, n, m, times, seed, role, centering, eps_idx, gfrak):
    edges = _block_edges(n, times)
    steps = edges[-1]
    inc = sample_increment_rows(model, n, steps + m, reps, seed, role)
    f = _centred_terms(inc, model, g, n, steps, centering)
    root = math.sqrt(n)
    z = np.stack([kahan_rows(np.ascontiguousarray(f[:, a:b])) / root for a, b in zip(edges[:-1], edges[1:])],
                 axis=1)
    x_eps = None
    if eps_idx:
        pos = np.concatenate([np.zeros_like(inc[:, :1]), np.cumsum(inc, axis=1)], axis=1)
        x_eps = pos[:, eps_idx, :]
    v = None
    if gfrak is not None:
        a = gfrak(_states(inc, steps))
        v = np.stack([kahan_rows(np.ascontiguousarray(a[:, lo:hi])) / n for lo, hi in zip(edges[:-1], edges[1:])],
                     axis=1)
    return z, x_eps, v


def z_values(model: LevyModel, g: SmoothFunctional, grid: GridSpec, replicates: int, master_seed: int, *,
             workers: int | None = 1, role: Role = Role.PATH, centering: dict | None = None) -> np.ndarray:
    """Array of ``Z_t^(n)`` over replicates 0..R-1, path ``r`` from stream ``(seed, r, role)``."""
    parts = map_chunks(_z_block_chunk, replicates,
                       (model, g, grid.n, g.window, (grid.horizon,), master_seed, role, centering or {}, (), None),
                       workers)
    z = np.concatenate([p[0][:, 0] for p in parts])
    _assert_crude(z, g, grid.n, grid.steps)
    return z


def sample_Z_batch(model: LevyModel, g: SmoothFunctional, grid: GridSpec, replicates: int, master_seed: int,
                   *, workers: int | None = 1, centering: dict | None = None) -> list[StatisticSample]:
    if replicates < 1:
        raise ParameterError("replicates must be >= 1")
    z = z_values(model, g, grid, replicates, master_seed, workers=workers, centering=centering)
    return [StatisticSample(float(v), grid.horizon, grid.n, r) for r, v in enumerate(z)]


@dataclass
class ZVectorBatch:
    times: tuple
    values: np.ndarray            # (R, r): Z_{t1}, Z_{t2} - Z_{t1}, ...
    probes: np.ndarray | None     # (R, p, d): X at the conditioning times
    block_variance: np.ndarray | None  # (R, r): (1/n) sum over each block of gfrak(X_{(i-1)/n})


def sample_Z_vector(model: LevyModel, g: SmoothFunctional, grid: GridSpec, times, replicates: int,
                    master_seed: int, *, eps=(), profile=None, workers: int | None = 1,
                    centering: dict | None = None) -> ZVectorBatch:
    """Joint increments of ``Z^(n)`` over ``0 < t_1 < ... < t_r`` from one path per replicate.

    ``eps`` lists conditioning times whose path values ``X_eps`` are returned; if a
    ``profile`` with a ``gfrak`` method is given, the block integrals of ``gfrak(X)``
    over the same path are returned as well.
    """
    times = tuple(float(t) for t in times)
    if not times:
        raise ParameterError("times must be nonempty")
    if any(b <= a for a, b in zip(times[:-1], times[1:])) or times[0] <= 0:
        raise ParameterError("times must be positive and strictly increasing")
    edges = _block_edges(grid.n, times)
    if any(b <= a for a, b in zip(edges[:-1], edges[1:])):
        raise ParameterError("every time block must contain at least one grid step")
    eps_idx = [steps_for(grid.n, e) for e in eps]
    if any(i > edges[-1] + g.window for i in eps_idx):
        raise ParameterError("conditioning times must not exceed the observed path")
    gfrak = None if profile is None else profile.gfrak
    parts = map_chunks(_z_block_chunk, replicates,
                       (model, g, grid.n, g.window, times, master_seed, Role.PATH, centering or {},
                        tuple(eps_idx), gfrak), workers)
    z = np.concatenate([p[0] for p in parts])
    _assert_crude(np.cumsum(z, axis=1), g, grid.n, edges[-1])
    x_eps = np.concatenate([p[1] for p in parts]) if eps_idx else None
    v = np.concatenate([p[2] for p in parts]) if gfrak is not None else None
    return ZVectorBatch(times, z, x_eps, v)
