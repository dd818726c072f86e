"""First-order asymptotics of sample central moments.

The (k x k) limiting covariance of the sqrt(n)-scaled vector of sample
central moments, the cross-covariance residuals that decide asymptotic
uncorrelatedness of the sample mean and each sample central moment, a
normality diagnostic built on those residuals, and the theoretical targets
for finite-n rate checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .moments import MomentSet

#: v_k^2 at or below this multiple of sigma^(2k) counts as a degenerate
#: (order-k singular) first-order limit.  Shared with the singular catalog
#: so classification and membership checks cannot disagree.
SINGULAR_VARIANCE_TOL = 1e-10

#: |r_k| at or below this multiple of sigma^(k+1) counts as asymptotically
#: uncorrelated.  r_k has units of scale^(k+1), so the tolerance is relative.
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class AsymptoticCov:
    """Limit covariance of sqrt(n) * (sample central moments - moments)."""

    k: int
    matrix: np.ndarray

    @property
    def diag(self) -> np.ndarray:
        return np.diagonal(self.matrix)

    def variance(self, i: int) -> float:
        """v_i^2, the limiting variance of sqrt(n)(M_{i,n} - mu_i)."""
        if not 1 <= i <= self.k:
            raise ValueError(f"index {i} out of range 1..{self.k}")
        return float(self.matrix[i - 1, i - 1])


def asymptotic_covariance(ms: MomentSet, k: int) -> AsymptoticCov:
    """Covariance V_k of the joint normal limit of sample central moments.

    v_11 = sigma^2,
    v_1j = mu_{j+1} - j sigma^2 mu_{j-1},
    v_ij = mu_{i+j} - mu_i mu_j - i mu_{i-1} mu_{j+1} - j mu_{i+1} mu_{j-1}
           + i j sigma^2 mu_{i-1} mu_{j-1}        (i, j >= 2).

    Requires moments up to order 2k.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    ms.moment(2 * k)
    s2 = ms.sigma2 if k >= 2 else ms.moment(2)
    V = np.empty((k, k))
    V[0, 0] = ms.moment(2)
    for j in range(2, k + 1):
        V[0, j - 1] = V[j - 1, 0] = ms.moment(j + 1) - j * s2 * ms.moment(j - 1)
    for i in range(2, k + 1):
        for j in range(i, k + 1):
            v = (
                ms.moment(i + j)
                - ms.moment(i) * ms.moment(j)
                - i * ms.moment(i - 1) * ms.moment(j + 1)
                - j * ms.moment(i + 1) * ms.moment(j - 1)
                + i * j * s2 * ms.moment(i - 1) * ms.moment(j - 1)
            )
            V[i - 1, j - 1] = V[j - 1, i - 1] = v
    return AsymptoticCov(k=k, matrix=V)


def is_psd(matrix, tol: float = 1e-10) -> bool:
    """True when all eigenvalues are above -tol times the matrix scale.

    Exactly rank-deficient matrices (singular sources) pass; a Cholesky
    check would reject them spuriously.
    """
    m = np.asarray(matrix, dtype=float)
    w = np.linalg.eigvalsh(m)
    scale = max(abs(float(w[0])), abs(float(w[-1])), 1e-300)
    return float(w[0]) >= -tol * scale


@dataclass(frozen=True)
class IndependenceReport:
    """Residuals r_k = mu_{k+1} - k sigma^2 mu_{k-1} for k = 2..K.

    r_k is the limiting covariance of sqrt(n) Xbar_n and sqrt(n) M_{k,n};
    it vanishes exactly when the two are asymptotically uncorrelated.
    """

    K: int
    residuals: tuple      # r_2..r_K
    scales: tuple         # sigma^(k+1) per k
    uncorrelated: tuple   # per-k verdicts

    @property
    def normal_consistent(self) -> bool:
        return all(self.uncorrelated)

    def residual(self, k: int) -> float:
        if not 2 <= k <= self.K:
            raise ValueError(f"k={k} out of range 2..{self.K}")
        return self.residuals[k - 2]


def independence_residuals(ms: MomentSet, K: int,
                           tol: float = RESIDUAL_TOL) -> IndependenceReport:
    """Per-order asymptotic-uncorrelatedness residuals up to order K."""
    if K < 2:
        raise ValueError("K must be at least 2")
    ms.moment(K + 1)
    s2 = ms.sigma2
    sigma = math.sqrt(s2)
    residuals, scales, verdicts = [], [], []
    for k in range(2, K + 1):
        r = ms.moment(k + 1) - k * s2 * ms.moment(k - 1)
        scale = sigma ** (k + 1)
        residuals.append(r)
        scales.append(scale)
        verdicts.append(abs(r) <= tol * scale)
    return IndependenceReport(
        K=K,
        residuals=tuple(residuals),
        scales=tuple(scales),
        uncorrelated=tuple(verdicts),
    )


@dataclass(frozen=True)
class NormalityReport:
    """Verdict of the moment-residual normality diagnostic.

    ``consistent`` means every residual r_2..r_K vanishes within tolerance.
    This is necessary evidence only: for any finite K there are non-normal
    distributions whose moments match the normal ones far enough that every
    residual up to K is exactly zero, so the diagnostic never claims more
    than consistency up to the order actually checked.
    """

    K: int
    consistent: bool
    report: IndependenceReport
    note: str = (
        "necessary evidence only: finitely many vanishing residuals cannot "
        "certify normality"
    )


def normality_diagnostic(ms: MomentSet, K: int,
                         tol: float = RESIDUAL_TOL) -> NormalityReport:
    """Check r_k = 0 for all k = 2..K; report consistency up to order K."""
    rep = independence_residuals(ms, K, tol=tol)
    return NormalityReport(K=K, consistent=rep.normal_consistent, report=rep)


@dataclass(frozen=True)
class RateTargets:
    """Finite-n convergence targets for the moment estimators.

    sqrt(n) * bias of M_{k,n} tends to ``bias`` (always 0);
    n * Cov(Xbar_n, M_{k,n}) tends to ``mean_cov``;
    n * Cov(M_{r,n}, M_{k,n}) tends to ``cov``.
    """

    bias: float
    mean_cov: float
    cov: float


def rate_targets(ms: MomentSet, r: int, k: int) -> RateTargets:
    """Limits that empirical rate estimates are compared against."""
    if k < 2 or r < 2:
        raise ValueError("orders must be at least 2")
    ms.moment(r + k)
    s2 = ms.sigma2
    mean_cov = ms.moment(k + 1) - k * s2 * ms.moment(k - 1)
    cov = (
        ms.moment(r + k)
        - ms.moment(r) * ms.moment(k)
        - r * ms.moment(r - 1) * ms.moment(k + 1)
        - k * ms.moment(r + 1) * ms.moment(k - 1)
        + r * k * s2 * ms.moment(r - 1) * ms.moment(k - 1)
    )
    return RateTargets(bias=0.0, mean_cov=mean_cov, cov=cov)
