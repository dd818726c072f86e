"""Second-order limit laws for sample central moments.

For a singular source of order k the sqrt(n)-scaled moment fluctuation
collapses, and n(mu_k - M_{k,n}) converges to either a (signed) multiple of
a one-degree chi-square or to a difference lam*A - lamt*B of two
independent such variables.  This module computes the law coefficients
from the moment set, classifies distributions into normal / scaled
chi-square / chi-square difference limits, evaluates the resulting CDFs
and quantiles, decomposes the underlying Gaussian quadratic forms, and
samples the second-order limit directly through its sparse Hessian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, special

from .asymptotics import SINGULAR_VARIANCE_TOL, asymptotic_covariance
from .moments import MomentSet, NumericError
from .seeding import STREAM_QFORM, rng_for

#: A chi-square-difference law collapses to a single scaled chi-square when
#: the smaller coefficient is below this fraction of the larger one.
COLLAPSE_RATIO = 1e-12

# chi-square(1) upper tail cut for quadrature truncation, on the sqrt scale
_CHI1_TAIL = 1e-12
_U_MAX = math.sqrt(special.chdtri(1, _CHI1_TAIL))
_CDF_BLOCK = 1 << 16


def _chi1_cdf(t):
    """P(chi^2_1 <= t) for t >= 0."""
    return special.erf(np.sqrt(np.asarray(t, dtype=float) / 2.0))


def _chi1_quantile(q: float) -> float:
    return float(special.chdtri(1, 1.0 - q))


@dataclass(frozen=True)
class LimitLaw:
    """Tagged limit law of a scaled sample central moment.

    kind "normal":       N(0, v2) for the sqrt(n)-scaled statistic.
    kind "scaled-chisq": lam * chi^2_1 (lam may be negative).
    kind "chisq-diff":   lam * chi^2_1 - lam_tilde * chi~^2_1 with both
                         coefficients positive and the two chi-squares
                         independent.

    ``statistic`` records the scaling ("sqrt-n" or "n") and ``orientation``
    whether the statistic is mu_k - M_{k,n} ("mu-minus-M") or its negative;
    the singular laws are stated for n(mu_k - M_{k,n}).
    """

    kind: str
    v2: float | None = None
    lam: float | None = None
    lam_tilde: float | None = None
    statistic: str = "sqrt-n"
    orientation: str = "M-minus-mu"

    def __post_init__(self):
        if self.kind not in ("normal", "scaled-chisq", "chisq-diff"):
            raise ValueError(f"unknown law kind {self.kind!r}")
        if self.kind == "normal" and (self.v2 is None or self.v2 < 0):
            raise ValueError("normal law needs v2 >= 0")
        if self.kind == "scaled-chisq" and self.lam is None:
            raise ValueError("scaled chi-square law needs lam")
        if self.kind == "chisq-diff":
            if self.lam is None or self.lam_tilde is None:
                raise ValueError("chi-square difference law needs lam and lam_tilde")
            if self.lam <= 0 or self.lam_tilde <= 0:
                raise ValueError("chi-square difference coefficients must be positive")

    def cdf(self, x):
        """Distribution function; scalar in, scalar out (arrays pass through)."""
        return chisq_diff_cdf(self, x)

    def quantile(self, q: float) -> float:
        return chisq_diff_quantile(self, q)

    def flipped(self) -> "LimitLaw":
        """The law of the negated statistic, with orientation renamed."""
        orient = "M-minus-mu" if self.orientation == "mu-minus-M" else "mu-minus-M"
        if self.kind == "normal":
            return replace(self, orientation=orient)
        if self.kind == "scaled-chisq":
            return replace(self, lam=-self.lam, orientation=orient)
        return replace(self, lam=self.lam_tilde, lam_tilde=self.lam, orientation=orient)

    def to_json(self) -> dict:
        out = {"law": self.kind, "statistic": self.statistic,
               "orientation": self.orientation}
        if self.kind == "normal":
            out["v2"] = self.v2
        elif self.kind == "scaled-chisq":
            out["lambda"] = self.lam
        else:
            out["lambda"] = self.lam
            out["lambda_tilde"] = self.lam_tilde
        return out

    @staticmethod
    def from_json(doc: dict) -> "LimitLaw":
        kind = doc["law"]
        return LimitLaw(
            kind=kind,
            v2=doc.get("v2"),
            lam=doc.get("lambda"),
            lam_tilde=doc.get("lambda_tilde"),
            statistic=doc.get("statistic", "sqrt-n"),
            orientation=doc.get("orientation", "M-minus-mu"),
        )


@dataclass(frozen=True)
class SingularCoefficients:
    """Coefficients of the second-order law of n(mu_k - M_{k,n}).

    alpha = mu_k - (k-1)/2 sigma^2 mu_{k-2};
    theta = mu_{2k-2} - mu_{k-1}^2
            - (k-1) mu_{k-2} [mu_k - (k-1)/4 sigma^2 mu_{k-2}];
    gamma = sqrt(sigma^2 (mu_{2k-2} - mu_{k-1}^2) - mu_k^2), the residual
    spread of the k-1 power direction after projecting out the mean
    direction.  sigma^2 theta = alpha^2 + gamma^2.
    """

    alpha: float
    theta: float
    gamma: float


def singular_coefficients(ms: MomentSet, k: int) -> SingularCoefficients:
    """Compute (alpha, theta, gamma) from moments up to order 2k-2."""
    if k < 2:
        raise ValueError(f"order must be at least 2, got {k}")
    ms.moment(2 * k - 2)
    s2 = ms.sigma2
    alpha = ms.moment(k) - 0.5 * (k - 1) * s2 * ms.moment(k - 2)
    theta = (
        ms.moment(2 * k - 2)
        - ms.moment(k - 1) ** 2
        - (k - 1) * ms.moment(k - 2)
        * (ms.moment(k) - 0.25 * (k - 1) * s2 * ms.moment(k - 2))
    )
    scale = s2 ** (k - 1)
    if theta < -1e-9 * scale:
        raise NumericError(
            f"theta={theta} < 0 at order {k}: source is not singular of this order"
        )
    theta = max(theta, 0.0)
    gamma2 = s2 * (ms.moment(2 * k - 2) - ms.moment(k - 1) ** 2) - ms.moment(k) ** 2
    gamma = math.sqrt(max(gamma2, 0.0))
    return SingularCoefficients(alpha=alpha, theta=theta, gamma=gamma)


def classify_limit(ms: MomentSet, k: int,
                   variance_tol: float = SINGULAR_VARIANCE_TOL) -> LimitLaw:
    """Limit law of the k-th sample central moment for the given moments.

    Non-singular sources get the first-order law sqrt(n)(M_{k,n} - mu_k)
    -> N(0, v_k^2).  Singular sources get the second-order law of
    n(mu_k - M_{k,n}): a single scaled chi-square with
    lam = k (mu_k - (k-1)/2 sigma^2 mu_{k-2}) exactly when
    mu_k^2 = sigma^2 (mu_{2k-2} - mu_{k-1}^2), and otherwise the difference
    law with lam, lam_tilde = (k/2)(sigma sqrt(theta) +- alpha).
    """
    if k < 2:
        raise ValueError(f"order must be at least 2, got {k}")
    sigma = math.sqrt(ms.sigma2)
    vk2 = asymptotic_covariance(ms, k).variance(k)
    if vk2 > variance_tol * sigma ** (2 * k):
        return LimitLaw(kind="normal", v2=vk2, statistic="sqrt-n",
                        orientation="M-minus-mu")
    c = singular_coefficients(ms, k)
    lam = 0.5 * k * (sigma * math.sqrt(c.theta) + c.alpha)
    lam_tilde = 0.5 * k * (sigma * math.sqrt(c.theta) - c.alpha)
    small, big = sorted((lam, lam_tilde))
    if small <= COLLAPSE_RATIO * max(big, 0.0):
        return LimitLaw(kind="scaled-chisq", lam=k * c.alpha, statistic="n",
                        orientation="mu-minus-M")
    return LimitLaw(kind="chisq-diff", lam=lam, lam_tilde=lam_tilde,
                    statistic="n", orientation="mu-minus-M")


# ---------------------------------------------------------------------------
# CDF and quantiles

def _diff_cdf_nonneg(lam: float, lamt: float, x: np.ndarray) -> np.ndarray:
    """P(lam A - lamt B <= x) for x >= 0, A and B independent chi^2_1.

    Conditioning on B = u^2 with u half-normal gives
    sqrt(2/pi) * int_0^inf P(chi^2_1 <= (x + lamt u^2)/lam) e^{-u^2/2} du,
    integrated adaptively and truncated where the chi^2_1 tail mass falls
    below 1e-12.  The integrand is smooth on x >= 0.
    """
    def integrand(u):
        return special.erf(
            np.sqrt((x + lamt * u * u) / (2.0 * lam))
        ) * math.exp(-0.5 * u * u)

    val, _err = integrate.quad_vec(integrand, 0.0, _U_MAX,
                                   epsabs=1e-10, epsrel=1e-10, norm="max")
    return math.sqrt(2.0 / math.pi) * val


def _diff_cdf(lam: float, lamt: float, x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0.0
    if pos.any():
        out[pos] = _diff_cdf_nonneg(lam, lamt, x[pos])
    if (~pos).any():
        # P(D <= x) = 1 - P(-D <= -x) for continuous D and x < 0
        out[~pos] = 1.0 - _diff_cdf_nonneg(lamt, lam, -x[~pos])
    return out


def _scaled_cdf(lam: float, x: np.ndarray) -> np.ndarray:
    if lam == 0.0:
        raise ValueError("degenerate scaled chi-square law (lam = 0) has no density")
    if lam > 0.0:
        return np.where(x >= 0.0, _chi1_cdf(np.maximum(x, 0.0) / lam), 0.0)
    return np.where(x < 0.0, 1.0 - _chi1_cdf(np.minimum(x, 0.0) / lam), 1.0)


def chisq_diff_cdf(law: LimitLaw, x):
    """CDF of a scaled chi-square or chi-square difference law at x.

    Accepts scalars or arrays; absolute error at most 1e-8 on the
    difference branch, and the scaled branch is the regularized incomplete
    gamma evaluated directly.
    """
    scalar = np.isscalar(x) or np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if law.kind == "normal":
        if law.v2 == 0.0:
            out = (xs >= 0.0).astype(float)
        else:
            out = special.ndtr(xs / math.sqrt(law.v2))
    elif law.kind == "scaled-chisq":
        out = _scaled_cdf(law.lam, xs)
    else:
        out = np.empty_like(xs)
        for start in range(0, xs.size, _CDF_BLOCK):
            sl = slice(start, start + _CDF_BLOCK)
            out[sl] = _diff_cdf(law.lam, law.lam_tilde, xs[sl])
    return float(out[0]) if scalar else out


def chisq_diff_quantile(law: LimitLaw, q: float) -> float:
    """Quantile of the law; inverse property |F(Q(q)) - q| <= 1e-7.

    Normal and scaled chi-square branches invert the special function
    directly; the difference branch bisects the quadrature CDF to 1e-8.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0,1), got {q}")
    if law.kind == "normal":
        return float(special.ndtri(q)) * math.sqrt(law.v2)
    if law.kind == "scaled-chisq":
        if law.lam == 0.0:
            raise ValueError("degenerate scaled chi-square law (lam = 0)")
        if law.lam > 0.0:
            return law.lam * _chi1_quantile(q)
        return law.lam * _chi1_quantile(1.0 - q)

    lo = -law.lam_tilde * _chi1_quantile(1.0 - 1e-9) - 1.0
    hi = law.lam * _chi1_quantile(1.0 - 1e-9) + 1.0
    flo, fhi = law.cdf(lo), law.cdf(hi)
    while flo > q:
        lo *= 2.0
        flo = law.cdf(lo)
    while fhi < q:
        hi *= 2.0
        fhi = law.cdf(hi)
    while hi - lo > 1e-8 * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if law.cdf(mid) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# quadratic-form decompositions

def quad_form_decompose(alpha: float, beta: float) -> tuple[float, float]:
    """Coefficients (lam_plus, lam_minus) with
    alpha Z1^2 + beta Z1 Z2  =d  lam_plus Z1^2 - lam_minus Z2^2.

    lam_plus = (rho + alpha)/2 and lam_minus = (rho - alpha)/2 where
    rho = sqrt(alpha^2 + beta^2); both are nonnegative.
    """
    rho = math.hypot(alpha, beta)
    return 0.5 * (rho + alpha), 0.5 * (rho - alpha)


def normal_product_decompose(sigma1: float, sigma2: float, rho: float) -> LimitLaw:
    """Law of the centered product of a correlated bivariate normal pair.

    (X1 - m1)(X2 - m2) =d sigma1 sigma2 [ (1+rho)/2 Z1^2 - (1-rho)/2 Z2^2 ];
    perfectly correlated pairs collapse to a single (signed) chi-square.
    """
    if sigma1 < 0.0 or sigma2 < 0.0:
        raise ValueError("scales must be nonnegative")
    if abs(rho) > 1.0:
        raise ValueError(f"correlation must lie in [-1,1], got {rho}")
    s = sigma1 * sigma2
    lam = 0.5 * s * (1.0 + rho)
    lam_tilde = 0.5 * s * (1.0 - rho)
    small, big = sorted((lam, lam_tilde))
    if s == 0.0 or small <= COLLAPSE_RATIO * big:
        signed = lam if lam >= lam_tilde else -lam_tilde
        return LimitLaw(kind="scaled-chisq", lam=signed, statistic="n",
                        orientation="mu-minus-M")
    return LimitLaw(kind="chisq-diff", lam=lam, lam_tilde=lam_tilde,
                    statistic="n", orientation="mu-minus-M")


# ---------------------------------------------------------------------------
# direct sampling of the second-order limit

@dataclass(frozen=True)
class HessianSpec:
    """Sparse Hessian of the sample-moment map at the moment vector.

    Only the (1,1) corner k(k-1) mu_{k-2} and the symmetric pair at
    (1, k-1) with value -k are nonzero; at k = 2 those positions coincide
    and the entries add.  The gradient (-k mu_{k-1}, 0, ..., 0, 1) is kept
    for reference.
    """

    k: int
    corner: float
    cross: float
    gradient: tuple

    def matrix(self) -> np.ndarray:
        H = np.zeros((self.k, self.k))
        H[0, 0] += self.corner
        H[0, self.k - 2] += self.cross
        H[self.k - 2, 0] += self.cross
        return H


def hessian(ms: MomentSet, k: int) -> HessianSpec:
    """Hessian data of the k-th sample-central-moment map."""
    if k < 2:
        raise ValueError(f"order must be at least 2, got {k}")
    ms.moment(k - 1)
    grad = [0.0] * k
    grad[0] = -k * ms.moment(k - 1)
    grad[-1] = 1.0
    return HessianSpec(
        k=k,
        corner=k * (k - 1) * ms.moment(k - 2),
        cross=-float(k),
        gradient=tuple(grad),
    )


def second_order_sample(hess: HessianSpec, ms: MomentSet, count: int,
                        seed: int) -> np.ndarray:
    """Draws from the second-order limit of n(M_{k,n} - mu_k).

    The limit is (1/2) k(k-1) mu_{k-2} W1^2 - k W1 W_{k-1} where (W1, W_{k-1})
    is bivariate normal with variances sigma^2 and mu_{2k-2} - mu_{k-1}^2 and
    covariance mu_k; it is realized as W1 = sigma Z1,
    W_{k-1} = (mu_k / sigma) Z1 + (gamma / sigma) Z2.  Note the orientation:
    these are samples of the M-minus-mu statistic; negate to compare with a
    mu-minus-M law.
    """
    k = hess.k
    ms.moment(2 * k - 2)
    s2 = ms.sigma2
    sigma = math.sqrt(s2)
    gamma2 = s2 * (ms.moment(2 * k - 2) - ms.moment(k - 1) ** 2) - ms.moment(k) ** 2
    if gamma2 < -1e-9 * s2 ** k:
        raise NumericError(
            f"implied Gaussian covariance is not PSD (gamma^2 = {gamma2})"
        )
    gamma = math.sqrt(max(gamma2, 0.0))
    gen = rng_for(seed, STREAM_QFORM)
    z = gen.standard_normal((2, int(count)))
    w1 = sigma * z[0]
    wk1 = (ms.moment(k) / sigma) * z[0] + (gamma / sigma) * z[1]
    return 0.5 * hess.corner * w1 * w1 + hess.cross * w1 * wk1
