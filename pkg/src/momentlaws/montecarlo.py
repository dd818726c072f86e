"""Sampling and Monte Carlo validation.

Samplers for finite discrete, normal, and polynomially perturbed normal
densities; a replication engine producing the scaled moment statistics
together with their target limit law and a Kolmogorov-Smirnov distance;
and rate reports comparing finite-n bias and covariance estimates against
their theoretical limits.

The perturbed densities f_m(x) = phi(x) + eps * L_m(x) 1[0,1], with L_m the
degree-m shifted Legendre polynomial, match every normal moment below
order m while being visibly non-normal; they are the standard witness that
moment-residual diagnostics at finite order cannot certify normality.

Everything randomized is deterministic in (spec, sizes, seed) and
independent of the worker count: replications are processed in fixed-size
chunks whose random streams are keyed by chunk index.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import moments as mo
from .asymptotics import rate_targets
from .laws import LimitLaw, classify_limit
from .seeding import (
    CHUNK_REPS,
    DEFAULT_SEED,
    STREAM_MC,
    STREAM_RATE,
    STREAM_SAMPLE,
    rng_for,
    run_chunks,
)

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_PHI_AT_1 = math.exp(-0.5) / _SQRT_2PI

# 64-node Gauss-Legendre rule mapped to [0,1]; exact for polynomial
# integrands up to degree 127, which covers x^j L_m for j <= 64, m <= 16.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)
_GL01_X = 0.5 * (_GL_X + 1.0)
_GL01_W = 0.5 * _GL_W


def legendre_coeffs(m: int) -> tuple[int, ...]:
    """Integer coefficients (constant first) of the shifted Legendre L_m.

    L_m(x) = sum_j (-1)^(m+j) C(m,j) C(m+j,j) x^j, the degree-m polynomial
    orthogonal on [0,1] to all lower powers, normalized so L_m(1) = 1 and
    L_m(0) = (-1)^m.
    """
    if not 2 <= m <= 16:
        raise ValueError(f"degree must lie in 2..16, got {m}")
    return tuple(
        (-1) ** (m + j) * math.comb(m, j) * math.comb(m + j, j)
        for j in range(m + 1)
    )


def _legendre_values(m: int, x: np.ndarray) -> np.ndarray:
    # three-term recurrence; values stay in [-1,1] on [0,1], unlike Horner
    # on the integer coefficients which cancels catastrophically for m >= 10
    t = 2.0 * x - 1.0
    prev = np.ones_like(x)
    if m == 0:
        return prev
    cur = t.copy()
    for n in range(1, m):
        prev, cur = cur, ((2 * n + 1) * t * cur - n * prev) / (n + 1)
    return cur


@dataclass(frozen=True)
class LegendreDensity:
    """phi(x) plus an order-m Legendre bump supported on [0,1].

    eps = 1 / (2 a_m sqrt(2 pi e)) with a_m = max |L_m| on [0,1] = 1 keeps
    the density positive; the bump integrates to zero, so total mass stays
    one and all moments below order m equal the standard normal ones.
    """

    m: int
    coeffs: tuple
    epsilon: float
    a_m: float = 1.0

    @property
    def label(self) -> str:
        return f"legendre(m={self.m})"

    def poly(self, x) -> np.ndarray:
        """L_m evaluated stably (recurrence, not raw coefficients)."""
        return _legendre_values(self.m, np.asarray(x, dtype=float))

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        base = np.exp(-0.5 * x * x) / _SQRT_2PI
        inside = (x >= 0.0) & (x <= 1.0)
        out = base.copy()
        if inside.any():
            out[inside] += self.epsilon * _legendre_values(self.m, x[inside])
        return out

    def poly_moment(self, j: int) -> float:
        """int_0^1 x^j L_m(x) dx by the exact-degree quadrature rule."""
        mo._check_order(j)
        vals = _GL01_X ** j * _legendre_values(self.m, _GL01_X)
        return float(np.dot(_GL01_W, vals))

    def poly_moment_exact(self, j: int) -> Fraction:
        """Same integral as an exact rational: sum_i c_i / (i + j + 1)."""
        mo._check_order(j)
        return sum(Fraction(c, i + j + 1) for i, c in enumerate(self.coeffs))

    def mean(self) -> float:
        # the bump is orthogonal to x for m >= 2, so the mean is exactly 0
        return 0.0

    def central_moments(self, upto: int) -> mo.MomentSet:
        upto = mo._check_order(upto)
        central = [1.0, 0.0]
        for j in range(2, upto + 1):
            if j % 2:
                base = 0.0
            else:
                r = j // 2
                base = math.factorial(j) / (2 ** r * math.factorial(r))
            central.append(base + self.epsilon * self.poly_moment(j))
        return mo.MomentSet(mu=0.0, central=tuple(central[: upto + 1]))

    def spec(self) -> dict:
        return {"kind": "legendre", "m": self.m}


def legendre_density(m: int) -> LegendreDensity:
    """The perturbed density of degree m; eps = [2 a_m sqrt(2 pi e)]^(-1)."""
    coeffs = legendre_coeffs(m)
    eps = 1.0 / (2.0 * 1.0 * math.sqrt(2.0 * math.pi * math.e))
    return LegendreDensity(m=m, coeffs=coeffs, epsilon=eps, a_m=1.0)


# ---------------------------------------------------------------------------
# sampling

def _draw_discrete(dist: mo.DiscreteDistribution, gen, size):
    u = gen.random(size)
    idx = np.searchsorted(dist.cum, u, side="right")
    np.minimum(idx, len(dist.atoms) - 1, out=idx)
    return dist.xs[idx]


def _draw_legendre(ld: LegendreDensity, gen, size, _stats=None):
    shape = (size,) if np.isscalar(size) else tuple(size)
    total = int(np.prod(shape))
    out = np.empty(total)
    filled = 0
    # rejection against the global envelope 1.5 phi: on [0,1] the bump is at
    # most eps = phi(1)/2 <= phi(x)/2, elsewhere f = phi exactly
    while filled < total:
        need = total - filled
        batch = max(int(need * 1.6) + 16, 64)
        z = gen.standard_normal(batch)
        u = gen.random(batch)
        fz = ld.density(z)
        phi = np.exp(-0.5 * z * z) / _SQRT_2PI
        accepted = z[u * 1.5 * phi <= fz]
        if _stats is not None:
            _stats["proposed"] = _stats.get("proposed", 0) + batch
            _stats["accepted"] = _stats.get("accepted", 0) + accepted.size
        take = min(accepted.size, need)
        out[filled:filled + take] = accepted[:take]
        filled += take
    return out.reshape(shape)


def _draw(dist, gen, size):
    if isinstance(dist, mo.NormalDistribution):
        return dist.mu + dist.sigma * gen.standard_normal(size)
    if isinstance(dist, LegendreDensity):
        return _draw_legendre(dist, gen, size)
    if isinstance(dist, mo.DiscreteDistribution):
        return _draw_discrete(dist, gen, size)
    raise ValueError(f"cannot sample from {dist!r}")


def sample(dist, n: int, seed: int) -> np.ndarray:
    """i.i.d. sample of size n; deterministic in (dist, n, seed)."""
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")
    return _draw(dist, rng_for(seed, STREAM_SAMPLE), int(n))


# ---------------------------------------------------------------------------
# replication engine

def _row_central_moment(data: np.ndarray, k: int) -> np.ndarray:
    xbar = data.mean(axis=1)
    c = data - xbar[:, None]
    return (c ** k).mean(axis=1)


def _replicate(dist, n: int, reps: int, seed: int, stream: tuple,
               orders: tuple) -> dict:
    """Per-replication row statistics, chunked deterministically.

    Returns {"xbar": ..., k: M_k array} for each requested order; chunk c
    draws from the stream (*stream, c) regardless of which worker runs it.
    """
    n_chunks = (reps + CHUNK_REPS - 1) // CHUNK_REPS

    def one(c):
        rows = min(CHUNK_REPS, reps - c * CHUNK_REPS)
        gen = rng_for(seed, *stream, c)
        data = _draw(dist, gen, (rows, n))
        xbar = data.mean(axis=1)
        centered = data - xbar[:, None]
        res = {"xbar": xbar}
        for k in orders:
            res[k] = (centered ** k).mean(axis=1)
        return res

    parts = run_chunks(n_chunks, one)
    out = {"xbar": np.concatenate([p["xbar"] for p in parts])}
    for k in orders:
        out[k] = np.concatenate([p[k] for p in parts])
    return out


def ks_distance(sample_values, cdf) -> float:
    """sup_x |F_emp(x) - F(x)|, both one-sided gaps, over the sample points."""
    s = np.sort(np.asarray(sample_values, dtype=float))
    if s.size == 0:
        raise ValueError("empty sample")
    fn = cdf.cdf if hasattr(cdf, "cdf") else cdf
    F = np.asarray(fn(s), dtype=float)
    i = np.arange(1, s.size + 1, dtype=float)
    upper = float((i / s.size - F).max())
    lower = float((F - (i - 1.0) / s.size).max())
    return max(upper, lower)


def _summary(values: np.ndarray) -> dict:
    qs = (0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99)
    quant = np.quantile(values, qs)
    return {
        "mean": float(values.mean()),
        "sd": float(values.std(ddof=1)),
        "quantiles": {f"{q:g}": float(v) for q, v in zip(qs, quant)},
    }


@dataclass
class SimulationReport:
    """Result of a scaled-statistic run: sample, target law, KS distance."""

    spec: dict
    k: int
    n: int
    reps: int
    scaling: str
    seed: int
    law: LimitLaw | None
    ks: float | None
    ks_threshold: float | None
    passed: bool | None
    summary: dict
    sample: np.ndarray | None = None

    def to_json(self) -> dict:
        return {
            "spec": self.spec,
            "order": self.k,
            "n": self.n,
            "reps": self.reps,
            "scaling": self.scaling,
            "seed": self.seed,
            "law": None if self.law is None else self.law.to_json(),
            "ks": self.ks,
            "ks_threshold": self.ks_threshold,
            "passed": self.passed,
            "summary": self.summary,
        }

    def write_csv(self, path) -> None:
        if self.sample is None:
            raise ValueError("raw sample was not retained")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["statistic"])
            for v in self.sample:
                w.writerow([repr(float(v))])


def mc_scaled_statistic(dist, k: int, n: int, reps: int,
                        scaling: str = "auto", seed: int = DEFAULT_SEED,
                        ks_threshold: float | None = None,
                        keep_sample: bool = True,
                        variance_tol: float | None = None) -> SimulationReport:
    """Replicate the scaled k-th moment statistic and fit its limit law.

    Each replication draws n points and computes M_{k,n}; the emitted
    statistic is sqrt(n)(M_{k,n} - mu_k) under "sqrt-n" scaling and
    n(mu_k - M_{k,n}) under "n" scaling.  "auto" picks the scaling of the
    classified limit law (n exactly when the source is singular of order
    k).  The KS distance is attached whenever the emitted statistic matches
    the law's scaling.
    """
    if reps < 100:
        raise ValueError(f"need at least 100 replications, got {reps}")
    if n < 2:
        raise ValueError(f"need sample size at least 2, got {n}")
    if scaling not in ("auto", "sqrt-n", "n"):
        raise ValueError(f"unknown scaling {scaling!r}")
    ms = mo.central_moments(dist, 2 * k)
    law = classify_limit(ms, k)
    if scaling == "auto":
        scaling = law.statistic
    mu_k = ms.moment(k)
    stats = _replicate(dist, n, reps, seed, (STREAM_MC,), (k,))
    mk = stats[k]
    if scaling == "sqrt-n":
        values = math.sqrt(n) * (mk - mu_k)
    else:
        values = n * (mu_k - mk)
    ks = ks_distance(values, law) if scaling == law.statistic else None
    passed = None if ks is None or ks_threshold is None else bool(ks <= ks_threshold)
    return SimulationReport(
        spec=dist.spec(),
        k=k,
        n=n,
        reps=reps,
        scaling=scaling,
        seed=int(seed),
        law=law,
        ks=ks,
        ks_threshold=ks_threshold,
        passed=passed,
        summary=_summary(values),
        sample=values if keep_sample else None,
    )


# ---------------------------------------------------------------------------
# rate reports

@dataclass(frozen=True)
class RateRow:
    """Estimates and targets at one sample size."""

    n: int
    sqrt_bias: float
    sqrt_bias_se: float
    bias_target: float
    mean_cov: float
    mean_cov_se: float
    mean_cov_target: float
    cov: float
    cov_se: float
    cov_target: float


@dataclass
class RateReport:
    """Finite-n convergence table for bias and covariances of M_{k,n}."""

    spec: dict
    r: int
    k: int
    reps: int
    seed: int
    rows: list

    def to_json(self) -> dict:
        return {
            "spec": self.spec,
            "r": self.r,
            "k": self.k,
            "reps": self.reps,
            "seed": self.seed,
            "rows": [vars(row) for row in self.rows],
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "quantity", "estimate", "target", "se"])
            for row in self.rows:
                w.writerow([row.n, "sqrt_n_bias", repr(row.sqrt_bias),
                            repr(row.bias_target), repr(row.sqrt_bias_se)])
                w.writerow([row.n, "n_cov_mean_moment", repr(row.mean_cov),
                            repr(row.mean_cov_target), repr(row.mean_cov_se)])
                w.writerow([row.n, "n_cov_moment_moment", repr(row.cov),
                            repr(row.cov_target), repr(row.cov_se)])


def rate_report(dist, r: int, k: int, n_grid, reps: int,
                seed: int = DEFAULT_SEED) -> RateReport:
    """Estimate sqrt(n)-bias and n-scaled covariances across a grid of n.

    For each n the report estimates sqrt(n)(E M_{k,n} - mu_k),
    n Cov(Xbar, M_{k,n}) and n Cov(M_{r,n}, M_{k,n}) over ``reps``
    replications, with Monte Carlo standard errors, next to their limits
    0, mu_{k+1} - k sigma^2 mu_{k-1}, and v_{rk}.
    """
    if reps < 100:
        raise ValueError(f"need at least 100 replications, got {reps}")
    ms = mo.central_moments(dist, r + k)
    targets = rate_targets(ms, r, k)
    mu_k = ms.moment(k)
    rows = []
    for gi, n in enumerate(n_grid):
        n = int(n)
        stats = _replicate(dist, n, reps, seed, (STREAM_RATE, gi), (r, k))
        xbar, mr, mk = stats["xbar"], stats[r], stats[k]
        sq = math.sqrt(n)
        bias = sq * (mk.mean() - mu_k)
        bias_se = sq * mk.std(ddof=1) / math.sqrt(reps)
        d1 = (xbar - xbar.mean()) * (mk - mk.mean())
        mean_cov = n * d1.sum() / (reps - 1)
        mean_cov_se = n * d1.std(ddof=1) / math.sqrt(reps)
        d2 = (mr - mr.mean()) * (mk - mk.mean())
        cov = n * d2.sum() / (reps - 1)
        cov_se = n * d2.std(ddof=1) / math.sqrt(reps)
        rows.append(RateRow(
            n=n,
            sqrt_bias=float(bias), sqrt_bias_se=float(bias_se),
            bias_target=targets.bias,
            mean_cov=float(mean_cov), mean_cov_se=float(mean_cov_se),
            mean_cov_target=targets.mean_cov,
            cov=float(cov), cov_se=float(cov_se),
            cov_target=targets.cov,
        ))
    return RateReport(spec=dist.spec(), r=r, k=k, reps=reps, seed=int(seed),
                      rows=rows)
