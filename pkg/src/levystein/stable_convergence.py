"""Monte Carlo checks of the Stein-type stable-convergence condition and of the stable limit.

Both checks test a finite set of conditioning probes ``F`` and test functions;
they never establish the universal statements over all bounded ``F``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from levystein.asymptotics import VarianceProfile
from levystein.functionals import SmoothFunctional
from levystein.levy import GridSpec, LevyModel, ParameterError
from levystein.rng import Role, normal_rows
from levystein.statistics import sample_Z_vector

CI_Z = 3.0


@dataclass(frozen=True)
class ConditioningProbe:
    """``F = cos(sum_k <v_k, X_{eps_k}>)`` (or ``sin``, or ``F = 1``)."""

    frequencies: tuple = ()
    times: tuple = ()
    part: str = "cos"

    def __post_init__(self):
        if self.part not in ("cos", "sin", "one"):
            raise ParameterError(f"unknown probe part {self.part!r}")
        if self.part != "one":
            if len(self.frequencies) != len(self.times) or not self.times:
                raise ParameterError("need one frequency vector per conditioning time")
            if any(b <= a for a, b in zip(self.times[:-1], self.times[1:])):
                raise ParameterError("conditioning times must be strictly increasing")

    @classmethod
    def one(cls) -> "ConditioningProbe":
        return cls(part="one")

    def evaluate(self, x_eps) -> np.ndarray:
        """``x_eps`` has shape ``(R, p, d)`` with rows ordered as ``times``."""
        x = np.asarray(x_eps, dtype=float)
        if self.part == "one":
            return np.ones(x.shape[0])
        v = np.asarray(self.frequencies, dtype=float).reshape(len(self.times), -1)
        phase = np.einsum("rpd,pd->r", x, v)
        out = np.cos(phase) if self.part == "cos" else np.sin(phase)
        if np.any(np.abs(out) > 1.0):
            raise AssertionError("probe exceeded 1 in absolute value")
        return out

    def label(self) -> str:
        if self.part == "one":
            return "F=1"
        terms = "+".join(f"{np.asarray(v).tolist()}*X({e:g})" for v, e in zip(self.frequencies, self.times))
        return f"F={self.part}({terms})"


def default_probes(dim: int = 1) -> list[ConditioningProbe]:
    """Six exponential-type probes with at most two conditioning times, plus ``F = 1``."""
    e = np.eye(dim)[0]
    out = [ConditioningProbe.one()]
    for part in ("cos", "sin"):
        out.append(ConditioningProbe((tuple(e),), (0.5,), part))
        out.append(ConditioningProbe((tuple(2 * e),), (0.25,), part))
        out.append(ConditioningProbe((tuple(e), tuple(-e)), (0.25, 0.75), part))
    return out


# ---------------------------------------------------------------------------
# Test functions h with bounded first and second derivatives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarH:
    """A scalar ``h`` with value, first and second derivative."""

    kind: str
    scale: float = 1.0

    def __call__(self, x):
        x, s = np.asarray(x, dtype=float), self.scale
        if self.kind == "tanh":
            return s * np.tanh(x / s)
        if self.kind == "logcosh":
            ax = np.abs(x / s)
            return s * s * (ax + np.log1p(np.exp(-2 * ax)) - math.log(2.0))
        if self.kind == "sine":
            return np.sin(s * x) / s
        if self.kind == "huber":
            return s * s * (np.sqrt(1 + (x / s) ** 2) - 1)
        raise ParameterError(f"unknown h kind {self.kind!r}")

    def d1(self, x):
        x, s = np.asarray(x, dtype=float), self.scale
        if self.kind == "tanh":
            return 1.0 / np.cosh(x / s) ** 2
        if self.kind == "logcosh":
            return s * np.tanh(x / s)
        if self.kind == "sine":
            return np.cos(s * x)
        if self.kind == "huber":
            return x / np.sqrt(1 + (x / s) ** 2)
        raise ParameterError(f"unknown h kind {self.kind!r}")

    def d2(self, x):
        x, s = np.asarray(x, dtype=float), self.scale
        if self.kind == "tanh":
            return -2.0 / s * np.tanh(x / s) / np.cosh(x / s) ** 2
        if self.kind == "logcosh":
            return 1.0 / np.cosh(x / s) ** 2
        if self.kind == "sine":
            return -s * np.sin(s * x)
        if self.kind == "huber":
            return (1 + (x / s) ** 2) ** -1.5
        raise ParameterError(f"unknown h kind {self.kind!r}")


@dataclass(frozen=True)
class ProductH:
    """``h(s) = prod_k h_k(s_k)``; a single factor is applied to every coordinate."""

    factors: tuple

    def _factors(self, r: int):
        if len(self.factors) == 1:
            return self.factors * r
        if len(self.factors) != r:
            raise ParameterError(f"h has {len(self.factors)} factors, statistic has {r} coordinates")
        return self.factors

    def partials(self, s):
        """First and second partials ``(R, r)`` along each coordinate."""
        s = np.asarray(s, dtype=float)
        r = s.shape[1]
        fs = self._factors(r)
        vals = np.stack([f(s[:, k]) for k, f in enumerate(fs)], axis=1)
        d1 = np.stack([f.d1(s[:, k]) for k, f in enumerate(fs)], axis=1)
        d2 = np.stack([f.d2(s[:, k]) for k, f in enumerate(fs)], axis=1)
        rest = np.ones_like(vals)
        for k in range(r):
            others = [j for j in range(r) if j != k]
            if others:
                rest[:, k] = np.prod(vals[:, others], axis=1)
        return d1 * rest, d2 * rest

    def label(self) -> str:
        return "*".join(f"{f.kind}({f.scale:g})" for f in self.factors)


def default_h_family() -> list[ProductH]:
    """Saturating ramp, log-cosh, sine and a smoothed ``x^2/2``."""
    return [ProductH((ScalarH("tanh", 1.0),)), ProductH((ScalarH("logcosh", 1.0),)),
            ProductH((ScalarH("sine", 1.0),)), ProductH((ScalarH("huber", 5.0),))]


def smoothed_square() -> ProductH:
    return ProductH((ScalarH("huber", 5.0),))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class ProbeResult:
    n: int
    probe: str
    test: str
    mean: float
    stderr: float

    @property
    def ci(self) -> tuple[float, float]:
        return self.mean - CI_Z * self.stderr, self.mean + CI_Z * self.stderr

    @property
    def abs_ci(self) -> tuple[float, float]:
        """Interval for ``|mean|``."""
        lo, hi = self.ci
        if lo <= 0.0 <= hi:
            return 0.0, max(-lo, hi)
        return min(abs(lo), abs(hi)), max(abs(lo), abs(hi))


@dataclass
class ConvergenceReport:
    n_list: list
    results: list = field(default_factory=list)

    def series(self, probe: str, test: str) -> list[ProbeResult]:
        return [r for r in self.results if r.probe == probe and r.test == test]

    def pairs(self):
        return sorted({(r.probe, r.test) for r in self.results})

    def decay(self, probe: str, test: str, factor: float = 1.0) -> dict:
        """Compare the first and last ``n``: ratio of ``|mean|`` and separation of the CIs."""
        s = self.series(probe, test)
        first, last = s[0], s[-1]
        ratio = abs(last.mean) / abs(first.mean) if first.mean else math.inf
        separated = last.abs_ci[1] < first.abs_ci[0]
        decaying = ratio < factor and separated
        # a pair whose first value is already indistinguishable from 0 carries no rate information
        status = "null" if first.abs_ci[0] == 0.0 else ("decaying" if decaying else "not decaying")
        return {"ratio": ratio, "separated": separated, "decaying": decaying, "status": status}

    def verdict(self) -> dict:
        return {f"{p} | {t}": self.decay(p, t) for p, t in self.pairs()}

    def rows(self):
        for r in self.results:
            yield {"n": r.n, "probe": r.probe, "test": r.test, "mean": r.mean, "stderr": r.stderr}


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _probe_layout(probes):
    eps = sorted({e for p in probes if p.part != "one" for e in p.times})
    index = {e: k for k, e in enumerate(eps)}
    return tuple(eps), index


def _probe_values(probes, x_eps, index, replicates):
    out = []
    for p in probes:
        if p.part == "one":
            out.append(np.ones(replicates))
        else:
            out.append(p.evaluate(x_eps[:, [index[e] for e in p.times], :]))
    return out


def check_stein_condition(model: LevyModel, g: SmoothFunctional, profile: VarianceProfile, n_list, probes,
                          h_family, replicates: int, times=(1.0,), master_seed: int = 0, *,
                          workers: int | None = 1) -> ConvergenceReport:
    """``E[F sum_k (S_k d_k h(S) - V_k d_kk h(S))]`` per ``n``, probe and ``h``.

    ``S`` collects the increments of ``Z^(n)`` over the time blocks and ``V_k`` is
    the integral of the limit variance profile over block ``k`` along the same path.
    """
    if replicates < 2:
        raise ParameterError("replicates must be >= 2")
    eps, index = _probe_layout(probes)
    report = ConvergenceReport([int(n) for n in n_list])
    for n in report.n_list:
        batch = sample_Z_vector(model, g, GridSpec(n, max(times), g.window, model.dim), times, replicates,
                                master_seed, eps=eps, profile=profile, workers=workers)
        s, v = batch.values, batch.block_variance
        fvals = _probe_values(probes, batch.probes, index, replicates)
        for h in h_family:
            d1, d2 = h.partials(s)
            core = np.sum(s * d1 - v * d2, axis=1)
            for p, f in zip(probes, fvals):
                mean, se = _mean_se(f * core)
                report.results.append(ProbeResult(n, p.label(), h.label(), mean, se))
    return report


@dataclass(frozen=True)
class BoundedTest:
    """Bounded continuous ``f`` on ``R^r``: ``cos/sin(<u, y>)``, a smoothed indicator or the constant 1."""

    kind: str
    u: tuple = (1.0,)
    level: float = 0.0
    width: float = 0.25

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "one":
            return np.ones(y.shape[0])
        if self.kind in ("cos", "sin"):
            u = np.broadcast_to(np.asarray(self.u, dtype=float), (y.shape[1],))
            ph = y @ u
            return np.cos(ph) if self.kind == "cos" else np.sin(ph)
        if self.kind == "indicator":
            # smoothed 1{y_k <= level for all k}
            z = (self.level - y) / self.width
            return np.prod(0.5 * (1.0 + np.tanh(0.5 * z)), axis=1)
        raise ParameterError(f"unknown test kind {self.kind!r}")

    def label(self) -> str:
        if self.kind == "one":
            return "f=1"
        if self.kind == "indicator":
            return f"f=ind(y<={self.level:g};{self.width:g})"
        return f"f={self.kind}({list(self.u)}.y)"


def default_bounded_family() -> list[BoundedTest]:
    return [BoundedTest("cos", (1.0,)), BoundedTest("sin", (1.0,)), BoundedTest("cos", (0.5,)),
            BoundedTest("indicator", level=0.0), BoundedTest("indicator", level=1.0)]


def check_stable_limit(model: LevyModel, g: SmoothFunctional, profile: VarianceProfile, n_list, probes,
                       f_family, replicates: int, times=(1.0,), master_seed: int = 0, *,
                       workers: int | None = 1) -> ConvergenceReport:
    """``E[F f(S)] - E[F f(sqrt(V_1) N_1, ..., sqrt(V_r) N_r)]`` per ``n``.

    ``F`` and ``V_k`` come from the same path; the normals come from the noise
    stream of the same replicate, so the design is paired.
    """
    if replicates < 2:
        raise ParameterError("replicates must be >= 2")
    eps, index = _probe_layout(probes)
    report = ConvergenceReport([int(n) for n in n_list])
    r = len(times)
    noise = normal_rows(master_seed, np.arange(replicates, dtype=np.int64), Role.NOISE, r)
    for n in report.n_list:
        batch = sample_Z_vector(model, g, GridSpec(n, max(times), g.window, model.dim), times, replicates,
                                master_seed, eps=eps, profile=profile, workers=workers)
        limit = np.sqrt(np.maximum(batch.block_variance, 0.0)) * noise
        fvals = _probe_values(probes, batch.probes, index, replicates)
        for f in f_family:
            diff = f(batch.values) - f(limit)
            for p, fv in zip(probes, fvals):
                mean, se = _mean_se(fv * diff)
                report.results.append(ProbeResult(n, p.label(), f.label(), mean, se))
    return report
