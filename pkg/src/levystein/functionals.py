"""Window functionals ``g(x, y_0, ..., y_m)`` and their exact moments.

Shapes follow one convention throughout: a state ``x`` is ``(..., d)`` and a
window ``y`` is ``(..., m+1, d)``; evaluation broadcasts over the leading axes.
"""
from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from levystein.levy import LevyModel, ModelKind, ParameterError, normalization
from levystein.rng import Role, stable_rows

log = logging.getLogger(__name__)

MAX_TRIG_WINDOW = 4


class UnsupportedOracleError(ValueError):
    pass


class CenteringError(RuntimeError):
    """Monte Carlo centering too coarse for the requesting experiment."""


# ---------------------------------------------------------------------------
# Weights w(x)
# ---------------------------------------------------------------------------

class Weight:
    """Bounded smooth ``R^d -> R`` with certified sup-norms of value, gradient and Hessian."""

    name = "weight"

    def __call__(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    sup: float
    sup_grad: float
    sup_hess: float

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantWeight(Weight):
    value: float = 1.0
    name = "constant"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], float(self.value))

    def grad(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + x.shape[-1:])

    @property
    def sup(self):
        return abs(self.value)

    sup_grad = 0.0
    sup_hess = 0.0

    def describe(self):
        return {"kind": self.name, "value": self.value}


@dataclass(frozen=True)
class CosineWeight(Weight):
    """``amplitude * cos(<theta, x>)``."""

    theta: tuple = (1.0,)
    amplitude: float = 1.0
    name = "cos"

    def _phase(self, x):
        return np.asarray(x, dtype=float) @ np.asarray(self.theta, dtype=float)

    def __call__(self, x):
        return self.amplitude * np.cos(self._phase(x))

    def grad(self, x):
        th = np.asarray(self.theta, dtype=float)
        return -self.amplitude * np.sin(self._phase(x))[..., None] * th

    def hess(self, x):
        th = np.asarray(self.theta, dtype=float)
        return -self.amplitude * np.cos(self._phase(x))[..., None, None] * np.outer(th, th)

    @property
    def sup(self):
        return abs(self.amplitude)

    @property
    def sup_grad(self):
        return abs(self.amplitude) * float(np.max(np.abs(self.theta)))

    @property
    def sup_hess(self):
        return abs(self.amplitude) * float(np.max(np.abs(self.theta))) ** 2

    def describe(self):
        return {"kind": self.name, "theta": list(self.theta), "amplitude": self.amplitude}


@dataclass(frozen=True)
class ShiftedCosineWeight(Weight):
    """``amplitude * (1 + rho cos(<theta, x>))``, bounded away from zero when ``|rho| < 1``."""

    theta: tuple = (1.0,)
    rho: float = 0.5
    amplitude: float = 1.0
    name = "shifted_cos"

    def _phase(self, x):
        return np.asarray(x, dtype=float) @ np.asarray(self.theta, dtype=float)

    def __call__(self, x):
        return self.amplitude * (1.0 + self.rho * np.cos(self._phase(x)))

    def grad(self, x):
        th = np.asarray(self.theta, dtype=float)
        return -self.amplitude * self.rho * np.sin(self._phase(x))[..., None] * th

    def hess(self, x):
        th = np.asarray(self.theta, dtype=float)
        return -self.amplitude * self.rho * np.cos(self._phase(x))[..., None, None] * np.outer(th, th)

    @property
    def sup(self):
        return abs(self.amplitude) * (1.0 + abs(self.rho))

    @property
    def inf_abs(self):
        return abs(self.amplitude) * max(0.0, 1.0 - abs(self.rho))

    @property
    def sup_grad(self):
        return abs(self.amplitude * self.rho) * float(np.max(np.abs(self.theta)))

    @property
    def sup_hess(self):
        return abs(self.amplitude * self.rho) * float(np.max(np.abs(self.theta))) ** 2

    def describe(self):
        return {"kind": self.name, "theta": list(self.theta), "rho": self.rho, "amplitude": self.amplitude}


@dataclass(frozen=True)
class RationalWeight(Weight):
    """``amplitude / (1 + |x|^2)``."""

    amplitude: float = 1.0
    name = "rational"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.amplitude / (1.0 + np.sum(x * x, axis=-1))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        q = 1.0 + np.sum(x * x, axis=-1)
        return -2.0 * self.amplitude * x / (q * q)[..., None]

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        q = 1.0 + np.sum(x * x, axis=-1)
        eye = np.eye(x.shape[-1])
        outer = x[..., :, None] * x[..., None, :]
        return self.amplitude * (-2.0 * eye / (q * q)[..., None, None] + 8.0 * outer / (q**3)[..., None, None])

    @property
    def sup(self):
        return abs(self.amplitude)

    @property
    def sup_grad(self):
        # max of 2|s|/(1+s^2)^2 at s = 1/sqrt(3)
        return abs(self.amplitude) * 3.0 * math.sqrt(3.0) / 8.0

    @property
    def sup_hess(self):
        # diagonal entries peak at the origin (value 2), off-diagonal at 16/27
        return 2.0 * abs(self.amplitude)

    def describe(self):
        return {"kind": self.name, "amplitude": self.amplitude}


def make_weight(spec: dict, dim: int) -> Weight:
    kind = spec.get("kind", "constant")
    amp = float(spec.get("amplitude", 1.0))
    theta = tuple(float(v) for v in np.broadcast_to(np.asarray(spec.get("theta", 1.0), dtype=float), (dim,)))
    if kind == "constant":
        return ConstantWeight(float(spec.get("value", amp)))
    if kind == "cos":
        return CosineWeight(theta, amp)
    if kind == "shifted_cos":
        return ShiftedCosineWeight(theta, float(spec.get("rho", 0.5)), amp)
    if kind == "rational":
        return RationalWeight(amp)
    raise ParameterError(f"unknown weight kind {kind!r}")


# ---------------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bounds:
    g: float
    dx: float
    dxx: float


class SmoothFunctional:
    """Base class.  Subclasses implement :meth:`eval` and :attr:`bounds`."""

    window: int
    dim: int
    symmetric_in_y: bool = False

    def eval(self, x, y):
        raise NotImplementedError

    def __call__(self, x, y):
        return self.eval(x, y)

    @property
    def bounds(self) -> Bounds:
        raise NotImplementedError

    def depends_on_x(self) -> bool:
        return True


class CallableFunctional(SmoothFunctional):
    """Wrap a vectorised callable; bounds are the caller's responsibility."""

    def __init__(self, func, window: int, dim: int, bounds: Bounds, symmetric_in_y: bool = False):
        self.func = func
        self.window = window
        self.dim = dim
        self._bounds = bounds
        self.symmetric_in_y = symmetric_in_y

    def eval(self, x, y):
        return self.func(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    @property
    def bounds(self):
        return self._bounds


class SumFunctional(SmoothFunctional):
    def __init__(self, first: SmoothFunctional, second: SmoothFunctional):
        if (first.window, first.dim) != (second.window, second.dim):
            raise ParameterError("summands must share window and dimension")
        self.parts = (first, second)
        self.window = first.window
        self.dim = first.dim
        self.symmetric_in_y = first.symmetric_in_y and second.symmetric_in_y

    def eval(self, x, y):
        return self.parts[0].eval(x, y) + self.parts[1].eval(x, y)

    @property
    def bounds(self):
        a, b = self.parts[0].bounds, self.parts[1].bounds
        return Bounds(a.g + b.g, a.dx + b.dx, a.dxx + b.dxx)


class CosineFunctional(SmoothFunctional):
    """``g(x, y) = w(x) * (prod_j cos<u_j, y_j> + lam * sin<v, y_0>)``.

    Every moment of ``g`` under symmetric stable increments is a finite sum of
    terms ``exp(-c sum |.|^alpha)``, which is what makes it an exact oracle.
    """

    def __init__(self, weight: Weight, frequencies, lam: float = 0.0, v=None):
        u = np.atleast_2d(np.asarray(frequencies, dtype=float))
        self.weight = weight
        self.frequencies = u
        self.window = u.shape[0] - 1
        self.dim = u.shape[1]
        self.lam = float(lam)
        self.v = np.zeros(self.dim) if v is None else np.broadcast_to(np.asarray(v, dtype=float), (self.dim,)).copy()
        self.symmetric_in_y = self.lam == 0.0 or not np.any(self.v)

    def __repr__(self):
        return (f"CosineFunctional(weight={self.weight!r}, frequencies={self.frequencies.tolist()}, "
                f"lam={self.lam}, v={self.v.tolist()})")

    def __add__(self, other):
        return SumFunctional(self, other)

    def inner(self, y):
        """The bracket ``prod_j cos<u_j, y_j> + lam sin<v, y_0>`` (weight omitted)."""
        y = np.asarray(y, dtype=float)
        phases = np.einsum("...jc,jc->...j", y, self.frequencies)
        out = np.prod(np.cos(phases), axis=-1)
        if self.lam:
            out = out + self.lam * np.sin(y[..., 0, :] @ self.v)
        return out

    def eval(self, x, y):
        return self.weight(x) * self.inner(y)

    def grad_x(self, x, y):
        return self.weight.grad(x) * self.inner(y)[..., None]

    def hess_x(self, x, y):
        return self.weight.hess(x) * self.inner(y)[..., None, None]

    @property
    def bounds(self):
        k = 1.0 + abs(self.lam)
        return Bounds(self.weight.sup * k, self.weight.sup_grad * k, self.weight.sup_hess * k)

    def depends_on_x(self):
        return not isinstance(self.weight, ConstantWeight)

    def describe(self) -> dict:
        return {
            "family": "cosine",
            "weight": self.weight.describe(),
            "frequencies": self.frequencies.tolist(),
            "lambda": self.lam,
            "v": self.v.tolist(),
            "m": self.window,
        }


def make_functional(spec: dict, dim: int) -> CosineFunctional:
    if spec.get("family", "cosine") != "cosine":
        raise ParameterError(f"unknown functional family {spec.get('family')!r}")
    m = int(spec.get("m", 0))
    freqs = np.asarray(spec.get("frequencies", 1.0), dtype=float)
    if freqs.ndim == 0:
        freqs = np.full((m + 1, dim), float(freqs))
    elif freqs.ndim == 1 and freqs.shape[0] == m + 1:
        # one frequency per window slot, shared by all components
        freqs = np.repeat(freqs[:, None], dim, axis=1)
    if freqs.shape != (m + 1, dim):
        raise ParameterError(f"frequencies must have shape ({m + 1}, {dim})")
    return CosineFunctional(make_weight(spec.get("weight", {"kind": "constant"}), dim), freqs,
                            float(spec.get("lambda", 0.0)), spec.get("v", 1.0))


# ---------------------------------------------------------------------------
# Exact trigonometric moments
# ---------------------------------------------------------------------------

def _check_oracle(g, model: LevyModel):
    if not isinstance(g, CosineFunctional):
        raise UnsupportedOracleError("closed forms exist only for CosineFunctional")
    if model.kind not in (ModelKind.STABLE, ModelKind.BROWNIAN):
        raise UnsupportedOracleError(f"no closed form for model kind {model.kind}")


def trig_expectation(factors, alpha: float, scale: float = 1.0) -> float:
    """``E prod_f trig_f(sum_k <c_fk, Y_k>)`` for i.i.d. standard stable vectors ``Y_k``.

    ``factors`` is a list of ``(kind, coeffs)`` with ``kind`` in ``{"cos", "sin"}``
    and ``coeffs`` an array ``(slots, d)``.  Writing each factor with complex
    exponentials gives ``2**k`` sign patterns; patterns come in conjugate pairs, so
    only the ``2**(k-1)`` with a leading ``+`` are summed.
    """
    k = len(factors)
    if k == 0:
        return 1.0
    coeffs = np.stack([np.asarray(c, dtype=float) for _, c in factors])  # (k, S, d)
    is_sin = np.array([kind == "sin" for kind, _ in factors])
    signs = np.array([(1,) + s for s in itertools.product((1, -1), repeat=k - 1)], dtype=float)
    combined = np.einsum("pk,ksd->psd", signs, coeffs)
    expo = np.exp(-scale * np.sum(np.abs(combined) ** alpha, axis=(1, 2)))
    sin_sign = np.prod(np.where(is_sin, signs, 1.0), axis=1)
    coef = (0.5**k) * ((-1j) ** int(is_sin.sum()))
    return float(2.0 * np.real(coef * np.sum(sin_sign * expo)))


def _inner_factors(g: CosineFunctional, offset: int, nslots: int, origin: int):
    """Factors of ``P`` and ``S`` for the window starting at slot ``offset``."""
    m, d = g.window, g.dim
    prod = []
    for j in range(m + 1):
        c = np.zeros((nslots, d))
        c[origin + offset + j] = g.frequencies[j]
        prod.append(("cos", c))
    s = np.zeros((nslots, d))
    s[origin + offset] = g.v
    return prod, [("sin", s)]


@dataclass(frozen=True)
class _GfrakConstants:
    mean_inner: float   # E[bracket]
    lag_sum: float      # sum_j Cov(bracket_0, bracket_j)


_CONSTANTS_CACHE: dict = {}


def _gfrak_constants(g: CosineFunctional, model: LevyModel) -> _GfrakConstants:
    key = (g.frequencies.tobytes(), g.lam, g.v.tobytes(), model.alpha, model.scale)
    hit = _CONSTANTS_CACHE.get(key)
    if hit is not None:
        return hit
    m = g.window
    if m > MAX_TRIG_WINDOW:
        raise UnsupportedOracleError(f"trigonometric expansion capped at m <= {MAX_TRIG_WINDOW}")
    nslots, origin = 3 * m + 1, m   # slot index origin+k <-> copy k, k = -m..2m
    a, c = model.alpha, model.scale
    p0, s0 = _inner_factors(g, 0, nslots, origin)
    mean = trig_expectation(p0, a, c)
    total = 0.0
    for j in range(-m, m + 1):
        pj, sj = _inner_factors(g, j, nslots, origin)
        e = trig_expectation(p0 + pj, a, c)
        if g.lam:
            e += g.lam * trig_expectation(p0 + sj, a, c)
            e += g.lam * trig_expectation(s0 + pj, a, c)
            e += g.lam**2 * trig_expectation(s0 + sj, a, c)
        total += e - mean * mean
    out = _GfrakConstants(mean, total)
    _CONSTANTS_CACHE[key] = out
    return out


def closed_form_gn(g: CosineFunctional, model: LevyModel, n: int, x) -> np.ndarray | float:
    """Exact lag-sum variance profile at ``x``.

    For symmetric stable increments scaled by ``a_n = n**(1/alpha)`` the law of
    the scaled window does not depend on ``n``, so neither does the result.
    """
    _check_oracle(g, model)
    normalization(model, n)
    const = _gfrak_constants(g, model)
    w = g.weight(np.asarray(x, dtype=float))
    out = w * w * const.lag_sum
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Conditional mean and centring
# ---------------------------------------------------------------------------

def inner_floor(n: int, tol: float) -> int:
    """Inner sample size keeping the centring bias of ``Z`` below ``tol``."""
    return int(math.ceil((n / tol) ** 2))


def scaled_windows(model: LevyModel, n: int, count: int, master_seed: int, role: Role = Role.INNER,
                   slots: int | None = None, first_replicate: int = 0) -> np.ndarray:
    """``count`` independent draws of ``slots`` scaled increments ``a_n X_{1/n}``: ``(count, slots, d)``.

    With ``a_n X_{1/n}`` standard stable up to ``scale**(1/alpha)`` the result is
    exactly distributed as the window ``I_{i,n}``.
    """
    slots = slots or 1
    reps = np.arange(first_replicate, first_replicate + count, dtype=np.int64)
    raw = stable_rows(master_seed, reps, role, model.alpha, slots * model.dim)
    return raw.reshape(count, slots, model.dim) * (model.increment_scale(n) * normalization(model, n))


def conditional_mean_mc(g: SmoothFunctional, model: LevyModel, n: int, x, n_inner: int,
                        master_seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo ``E g(x, I)`` with standard errors, common draws across ``x``."""
    x = np.asarray(x, dtype=float)
    y = scaled_windows(model, n, n_inner, master_seed, slots=g.window + 1)
    xs = x.reshape(-1, model.dim)
    est = np.empty(xs.shape[0])
    se = np.empty(xs.shape[0])
    for k, xk in enumerate(xs):
        vals = g.eval(np.broadcast_to(xk, (n_inner, model.dim)), y)
        est[k] = vals.mean()
        se[k] = vals.std(ddof=1) / math.sqrt(n_inner)
    shape = x.shape[:-1]
    return est.reshape(shape), se.reshape(shape)


def conditional_mean(g: SmoothFunctional, model: LevyModel, n: int, x, *, n_inner: int | None = None,
                     tol: float | None = None, master_seed: int = 0):
    """``E[g(x, a_n X^(0)_{1/n}, ..., a_n X^(m)_{1/n})]``.

    Exact for a :class:`CosineFunctional` unless ``n_inner`` forces Monte Carlo.
    In Monte Carlo mode ``tol`` is the centring accuracy the caller needs; an
    ``n_inner`` below ``(n / tol)**2`` raises :class:`CenteringError`.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(g, CosineFunctional) and n_inner is None:
        _check_oracle(g, model)
        u = g.frequencies
        mean_inner = math.exp(-model.scale * float(np.sum(np.abs(u) ** model.alpha)))
        out = g.weight(x) * mean_inner
        return float(out) if np.ndim(out) == 0 else out
    if n_inner is None:
        raise CenteringError("no closed form for this functional; pass n_inner for Monte Carlo centring")
    if tol is not None and n_inner < inner_floor(n, tol):
        raise CenteringError(
            f"n_inner={n_inner} below the floor {inner_floor(n, tol)} required for centring tolerance {tol} at n={n}"
        )
    warnings.warn("Monte Carlo centring: Z inherits a bias of order sqrt(n) t / sqrt(n_inner)", stacklevel=2)
    est, _ = conditional_mean_mc(g, model, n, x, n_inner, master_seed)
    return float(est) if np.ndim(est) == 0 else est


def centered_eval(g: SmoothFunctional, model: LevyModel, n: int, x, y, **kwargs):
    """``f_n(x, y) = g(x, y) - E g(x, I)``."""
    return g.eval(x, y) - conditional_mean(g, model, n, x, **kwargs)


# ---------------------------------------------------------------------------
# Hypotheses on g
# ---------------------------------------------------------------------------

def default_probes(dim: int) -> np.ndarray:
    """Nine points per axis on ``[-2, 2]``, tensorised for ``d <= 2``."""
    axis = np.linspace(-2.0, 2.0, 9)
    if dim == 1:
        return axis[:, None]
    if dim == 2:
        return np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    return np.repeat(axis[:, None], dim, axis=1)


@dataclass
class H2Report:
    probes: np.ndarray
    estimate: np.ndarray   # (probes, d)
    stderr: np.ndarray
    z: float
    consistent: bool = field(init=False)

    def __post_init__(self):
        self.consistent = bool(np.all(np.abs(self.estimate) <= self.z * self.stderr))


def check_H2(g: SmoothFunctional, model: LevyModel, n: int, replicates: int, probes=None,
             master_seed: int = 0, z: float = 3.0) -> H2Report:
    """Estimate ``E[(g(x, I) - E g(x, I)) J^(l)]`` with ``J`` the raw increment over the window."""
    if model.alpha <= 1.0:
        raise ParameterError("H2 needs alpha > 1 for the increment to be integrable")
    probes = default_probes(model.dim) if probes is None else np.atleast_2d(np.asarray(probes, dtype=float))
    y = scaled_windows(model, n, replicates, master_seed, slots=g.window + 1)
    jump = y.sum(axis=1) / normalization(model, n)          # (M, d), unscaled
    est = np.empty((probes.shape[0], model.dim))
    se = np.empty_like(est)
    for k, x in enumerate(probes):
        gv = g.eval(np.broadcast_to(x, (replicates, model.dim)), y)
        try:
            mu = conditional_mean(g, model, n, x)
        except CenteringError:
            mu = gv.mean()
        prod = (gv - mu)[:, None] * jump
        est[k] = prod.mean(axis=0)
        se[k] = prod.std(axis=0, ddof=1) / math.sqrt(replicates)
    return H2Report(probes, est, se, z)


def verify_bounds(g: SmoothFunctional, count: int, master_seed: int = 0, spread: float = 5.0) -> dict:
    """Largest observed ``|g|``, ``|d_x g|``, ``|d_xx g|`` over random probes, next to the certificates."""
    rng = np.random.Generator(np.random.Philox(key=master_seed))
    x = rng.uniform(-spread, spread, size=(count, g.dim))
    y = rng.standard_cauchy(size=(count, g.window + 1, g.dim))
    b = g.bounds
    out = {"g": (float(np.max(np.abs(g.eval(x, y)))), b.g)}
    if hasattr(g, "grad_x"):
        out["dx"] = (float(np.max(np.abs(g.grad_x(x, y)))), b.dx)
        out["dxx"] = (float(np.max(np.abs(g.hess_x(x, y)))), b.dxx)
    return out
