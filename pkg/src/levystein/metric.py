"""Certified finite subfamilies of the smooth test class and the distance estimate.

Every reported distance is a lower bound on the supremum over the full class,
since it is a maximum over finitely many certified members.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from levystein.stein import GaussianBump, SineTest, TestFunction

log = logging.getLogger(__name__)

CERT_STEP = 1e-3
CERT_RANGE = 50.0
CERT_SLACK = 1e-12
MAX_ORDER = 5


@dataclass
class Certificate:
    bounds: list          # per order 0..5
    method: list          # "analytic" or "numeric"
    certified: bool

    @property
    def margin(self) -> float:
        return 1.0 - max(self.bounds)


def _bump_tail_bound(member: GaussianBump, order: int) -> float:
    # |He_l(z)| e^{-z^2/2} is decreasing for |z| beyond the largest Hermite root
    z = (CERT_RANGE - abs(member.mu)) / member.s
    coef = np.zeros(order + 1)
    coef[order] = 1.0
    val = abs(np.polynomial.hermite_e.hermeval(z, coef)) * math.exp(-0.5 * z * z)
    return abs(member.c) * val / member.s**order


def certify(member: TestFunction, step: float = CERT_STEP, span: float = CERT_RANGE) -> Certificate:
    """Bound ``|psi^(l)|`` for ``l = 0..5``.

    Analytic norms are used when the member provides them.  Otherwise the
    maximum over a grid of spacing ``step`` on ``[-span, span]`` is inflated by
    ``step/2 * max|psi^(l+1)|`` (the largest possible overshoot between grid
    points) and combined with an analytic bound on the tails.
    """
    analytic = member.sup_norms
    bounds, method = [], []
    x = None
    for order in range(MAX_ORDER + 1):
        if analytic[order] is not None:
            bounds.append(float(analytic[order]))
            method.append("analytic")
            continue
        if x is None:
            x = np.arange(-span, span + step / 2, step)
        grid_max = float(np.max(np.abs(member.derivative(order)(x))))
        next_max = float(np.max(np.abs(member.derivative(order + 1)(x))))
        tail = _bump_tail_bound(member, order) if isinstance(member, GaussianBump) else 0.0
        bounds.append(max(grid_max + 0.5 * step * next_max * 1.01, tail))
        method.append("numeric")
    ok = all(b <= 1.0 + CERT_SLACK for b in bounds)
    return Certificate(bounds, method, ok)


@dataclass
class TestFamily:
    members: list
    certificates: list
    rejected: list = field(default_factory=list)

    __test__ = False

    def __len__(self):
        return len(self.members)

    def describe(self) -> dict:
        return {
            "members": [m.describe() for m in self.members],
            "bounds": [c.bounds for c in self.certificates],
            "rejected": [m.describe() for m in self.rejected],
        }

    def extended(self, other: "TestFamily") -> "TestFamily":
        return TestFamily(self.members + other.members, self.certificates + other.certificates,
                          self.rejected + other.rejected)


def family_from_members(candidates) -> TestFamily:
    members, certs, rejected = [], [], []
    for cand in candidates:
        cert = certify(cand)
        if cert.certified:
            members.append(cand)
            certs.append(cert)
        else:
            log.warning("dropping %s: derivative bounds %s exceed 1", cand.describe(), cert.bounds)
            rejected.append(cand)
    if not members:
        raise ValueError("no candidate passed certification")
    return TestFamily(members, certs, rejected)


def bump_scale(s: float) -> float:
    """Largest ``c`` such that ``c exp(-x^2/(2 s^2))`` certifies, less a small margin."""
    probe = GaussianBump(0.0, s, 1.0)
    worst = max(certify(probe).bounds)
    return (1.0 - 1e-6) / worst


def build_default_family(size: int = 24, a_min: float = 0.1, a_max: float = 3.0, bump_width: float = 1.5
                         ) -> TestFamily:
    """Sinusoids ``min(1, a^-5) sin(a x + b)`` with ``b in {0, pi/2}`` plus Gaussian bumps.

    Roughly one member in six is a bump (four of the default 24).
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    n_bumps = size // 6
    n_sin = size - n_bumps
    n_freq = (n_sin + 1) // 2
    freqs = np.geomspace(a_min, a_max, n_freq) if n_freq > 1 else np.array([1.0])
    cands: list = []
    for a in freqs:
        for b in (0.0, math.pi / 2):
            if len(cands) < n_sin:
                cands.append(SineTest(float(a), b, min(1.0, float(a) ** -5)))
    if n_bumps:
        c = bump_scale(bump_width)
        for mu in np.linspace(-1.5, 1.5, n_bumps) if n_bumps > 1 else [0.0]:
            cands.append(GaussianBump(float(mu), bump_width, c))
    return family_from_members(cands)


@dataclass
class DistanceEstimate:
    d_hat: float
    stderr: float
    argmax: int
    member: TestFunction
    differences: np.ndarray
    stderrs: np.ndarray

    def __iter__(self):
        return iter((self.d_hat, self.stderr, self.member))


def estimate_distance(samples_p, samples_q, family: TestFamily) -> DistanceEstimate:
    """``max_psi |mean_P psi - mean_Q psi|`` over the family, a lower bound on the smooth distance."""
    p = np.asarray(samples_p, dtype=float).ravel()
    q = np.asarray(samples_q, dtype=float).ravel()
    if p.size == 0 or q.size == 0:
        raise ValueError("both sample sets must be nonempty")
    diffs = np.empty(len(family))
    ses = np.empty(len(family))
    for k, psi in enumerate(family.members):
        vp, vq = psi(p), psi(q)
        diffs[k] = vp.mean() - vq.mean()
        var_p = vp.var(ddof=1) if p.size > 1 else 0.0
        var_q = vq.var(ddof=1) if q.size > 1 else 0.0
        ses[k] = math.sqrt(var_p / p.size + var_q / q.size)
    k = int(np.argmax(np.abs(diffs)))
    return DistanceEstimate(float(abs(diffs[k])), float(ses[k]), k, family.members[k], diffs, ses)


def cf_distance(samples_p, samples_q, u_grid) -> float:
    u = np.asarray(u_grid, dtype=float).ravel()
    if u.size == 0:
        raise ValueError("u_grid must be nonempty")
    p = np.asarray(samples_p, dtype=float).ravel()
    q = np.asarray(samples_q, dtype=float).ravel()
    cp = np.array([np.mean(np.exp(1j * v * p)) for v in u])
    cq = np.array([np.mean(np.exp(1j * v * q)) for v in u])
    return float(np.max(np.abs(cp - cq)))
