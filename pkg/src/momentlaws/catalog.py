"""Catalog of singular distributions.

A non-degenerate distribution is singular of order k when its k-th sample
central moment has a degenerate sqrt(n) limit, equivalently when the
centered identity (X - mu)^k = mu_k + k mu_{k-1} (X - mu) holds with
probability one.  Such distributions have at most two support points for
even k and at most three for odd k.  This module solves the probability
root equation behind the two-point members, builds every constructible
standardized family, and verifies membership.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .asymptotics import SINGULAR_VARIANCE_TOL, asymptotic_covariance
from .moments import DiscreteDistribution, NumericError, central_moments, rademacher

#: Root solving is capped here: the polynomial scale t^k makes higher orders
#: overflow-prone in float64.
MAX_SOLVE_ORDER = 32

_SQRT2 = math.sqrt(2.0)
_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class SingularRoot:
    """Root of the two-point singularity equation at order k.

    ``p`` is the success probability of the singular {0,1} two-point
    distribution and ``t = p/(1-p)`` the root above 1 of the companion
    polynomial: t^k - k t^(k-1) + kt - 1 for even k, and
    t^k - k t^(k-1) - kt + 1 for odd k.  ``p_exact``/``t_exact`` are
    rational refinements accurate far beyond float64; ``residual`` is the
    exactly computed relative mismatch of the p-equation at ``p_exact``.
    """

    k: int
    parity: str
    p: float
    t: float
    residual: float
    p_exact: Fraction
    t_exact: Fraction


def _tpoly(k: int, t):
    if k % 2 == 0:
        return t ** k - k * t ** (k - 1) + k * t - 1
    return t ** k - k * t ** (k - 1) - k * t + 1


def _tpoly_deriv(k: int, t):
    if k % 2 == 0:
        return k * t ** (k - 1) - k * (k - 1) * t ** (k - 2) + k
    return k * t ** (k - 1) - k * (k - 1) * t ** (k - 2) - k


def equation_sides(k: int, p):
    """Both sides of the order-k two-point probability equation.

    Even k: p^(k-1) [k - (k+1)p]  vs  (1-p)^(k-1) [(k+1)p - 1].
    Odd  k: p^(k-1) [(k+1)p - k]  vs  (1-p)^(k-1) [(k+1)p - 1].

    Works for floats and Fractions alike.
    """
    q = 1 - p
    if k % 2 == 0:
        return p ** (k - 1) * (k - (k + 1) * p), q ** (k - 1) * ((k + 1) * p - 1)
    return p ** (k - 1) * ((k + 1) * p - k), q ** (k - 1) * ((k + 1) * p - 1)


def solve_singular_prob(k: int) -> SingularRoot | None:
    """Probability p_k making the {0,1} two-point law singular of order k.

    Bisection on the companion polynomial in t = p/(1-p) over the bracket
    [max(1+1e-9, k-2), 2k], where a sign change is guaranteed, followed by
    one float Newton step and an exact rational Newton refinement used to
    certify the residual.  Order 2 has no root beyond the symmetric p = 1/2
    case and returns None.
    """
    if k < 2:
        raise ValueError(f"order must be at least 2, got {k}")
    if k > MAX_SOLVE_ORDER:
        raise ValueError(f"order {k} exceeds solver cap {MAX_SOLVE_ORDER}")
    if k == 2:
        return None

    lo = max(1.0 + 1e-9, float(k - 2))
    hi = 2.0 * k
    flo, fhi = _tpoly(k, lo), _tpoly(k, hi)
    if not (flo < 0.0 < fhi):
        raise NumericError(f"lost root bracket at order {k}: f({lo})={flo}, f({hi})={fhi}")
    while hi - lo > 1e-14 * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        if _tpoly(k, mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    d = _tpoly_deriv(k, t)
    if d != 0.0:
        t -= _tpoly(k, t) / d

    # Rational Newton refinement: quadratic convergence from the float seed
    # pushes the root error far below what float64 can express, which is the
    # only honest way to certify the p-equation residual at large k.
    te = Fraction(t)
    for _ in range(3):
        te = te - Fraction(_tpoly(k, te), _tpoly_deriv(k, te))
        te = te.limit_denominator(10 ** 120)
    pe = te / (1 + te)
    lhs, rhs = equation_sides(k, pe)
    residual = abs(lhs - rhs) / max(abs(lhs), abs(rhs))

    return SingularRoot(
        k=k,
        parity="even" if k % 2 == 0 else "odd",
        p=float(pe),
        t=float(te),
        residual=float(residual),
        p_exact=pe,
        t_exact=te,
    )


@dataclass(frozen=True)
class SingularMember:
    """A constructed singular distribution with its family tag."""

    dist: DiscreteDistribution
    order: int
    family: str
    standardized: bool = True

    def spec(self) -> dict:
        return self.dist.spec()

    def to_json(self) -> dict:
        check = is_singular(self.dist, self.order)
        return {
            "family": self.family,
            "order": self.order,
            "standardized": self.standardized,
            "atoms": [{"x": float(x), "p": float(p)} for x, p in self.dist.atoms],
            "max_residual": check.max_residual,
            "vk2": check.variance,
            "spec": self.spec(),
        }


def build_two_valued(k: int, variant: str = "upper") -> SingularMember:
    """Standardized two-point singular member of order k >= 3.

    ``upper`` puts mass p_k on the positive point sqrt((1-p_k)/p_k) and
    1-p_k on -sqrt(p_k/(1-p_k)); ``lower`` is its negation.
    """
    if k < 3:
        raise ValueError(f"two-valued members need order >= 3, got {k}")
    if variant not in ("upper", "lower"):
        raise ValueError(f"variant must be 'upper' or 'lower', got {variant!r}")
    root = solve_singular_prob(k)
    p = root.p
    q = 1.0 - p
    neg = math.sqrt(p / q)
    pos = math.sqrt(q / p)
    if variant == "upper":
        atoms = [(-neg, q), (pos, p)]
    else:
        atoms = [(-pos, p), (neg, q)]
    dist = DiscreteDistribution(atoms, label=f"two-valued-{variant}(k={k})")
    return SingularMember(dist=dist, order=k, family=f"two-valued-{variant}")


def build_symmetric(k: int) -> SingularMember:
    """The unique symmetric (three-point) singular member of odd order k.

    Mass 1/(2k) at each of -sqrt(k) and sqrt(k), mass 1 - 1/k at 0; it is
    the only standardized member of order k with vanishing k-th moment.
    """
    if k < 3 or k % 2 == 0:
        raise ValueError(f"symmetric members exist for odd order >= 3, got {k}")
    s = math.sqrt(float(k))
    w = 1.0 / (2.0 * k)
    dist = DiscreteDistribution(
        [(-s, w), (0.0, 1.0 - 1.0 / k), (s, w)], label=f"symmetric(k={k})"
    )
    return SingularMember(dist=dist, order=k, family="symmetric")


def build_named(family: str, order: int) -> SingularMember:
    """Classic examples by name: rademacher, y-three-valued, w-two-valued."""
    if family == "rademacher":
        if order < 2 or order % 2:
            raise ValueError(f"rademacher is singular at even orders, got {order}")
        return SingularMember(dist=rademacher(), order=order, family="rademacher")
    if family == "y-three-valued":
        if order % 2 == 0:
            raise ValueError(f"y-three-valued needs odd order, got {order}")
        m = build_symmetric(order)
        return SingularMember(dist=m.dist, order=order, family="y-three-valued")
    if family == "w-two-valued":
        if order % 2 == 0:
            raise ValueError(f"w-two-valued needs odd order, got {order}")
        m = build_two_valued(order, "upper")
        return SingularMember(dist=m.dist, order=order, family="w-two-valued")
    raise ValueError(f"unknown family {family!r}")


def _negated(dist: DiscreteDistribution, label=None) -> DiscreteDistribution:
    return DiscreteDistribution([(-x, p) for x, p in dist.atoms], label=label)


def build_order3(theta: float) -> SingularMember:
    """Standardized order-3 singular member with third moment theta.

    The family is parametrized by theta in [-sqrt(2), sqrt(2)]: the
    endpoints are the two-point members, theta = 0 the symmetric one, and
    every interior theta a unique three-point distribution supported on the
    roots of y(y^2 - 3) = theta.  No member exists beyond the endpoints.
    """
    theta = float(theta)
    if abs(theta) > _SQRT2 + 1e-12:
        raise ValueError(
            f"no standardized order-3 member has |third moment| > sqrt(2); got {theta}"
        )
    # Boundary band: the smallest atom probability crosses zero exactly at
    # |theta| = sqrt(2), so snap to the two-point member there.
    if theta <= -_SQRT2 + 1e-12:
        m = build_two_valued(3, "upper")
        return SingularMember(dist=m.dist, order=3, family="f3")
    if theta >= _SQRT2 - 1e-12:
        m = build_two_valued(3, "lower")
        return SingularMember(dist=m.dist, order=3, family="f3")
    if theta == 0.0:
        m = build_symmetric(3)
        return SingularMember(dist=m.dist, order=3, family="f3")
    if theta > 0.0:
        m = build_order3(-theta)
        return SingularMember(
            dist=_negated(m.dist, label=f"f3(theta={theta:g})"), order=3, family="f3"
        )

    # theta in (-sqrt(2), 0): the largest positive support point gamma solves
    # gamma (gamma^2 - 3) = theta on (sqrt(2), sqrt(3)).
    g = lambda x: x * (x * x - 3.0) - theta
    lo, hi = _SQRT2, _SQRT3
    if not (g(lo) <= 0.0 <= g(hi)):
        raise NumericError(f"lost cubic bracket for theta={theta}")
    while hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    gam = 0.5 * (lo + hi)
    d = 3.0 * gam * gam - 3.0
    if d != 0.0:
        gam -= g(gam) / d

    beta = 0.5 * (-gam + math.sqrt(3.0 * (4.0 - gam * gam)))
    alpha = beta + gam
    p1 = (1.0 + beta * gam) / ((beta + 2.0 * gam) * (2.0 * beta + gam))
    p2 = (2.0 - beta * beta) / ((gam - beta) * (2.0 * beta + gam))
    p3 = (gam * gam - 2.0) / ((gam - beta) * (beta + 2.0 * gam))
    dist = DiscreteDistribution(
        [(-alpha, p1), (beta, p2), (gam, p3)], label=f"f3(theta={theta:g})"
    )
    return SingularMember(dist=dist, order=3, family="f3")


@dataclass(frozen=True)
class SingularityCheck:
    """Outcome of a singularity test: verdict plus residual evidence."""

    singular: bool
    max_residual: float
    variance: float
    variance_bound: float

    def __bool__(self) -> bool:
        return self.singular


def is_singular(dist, k: int, atom_tol: float = 1e-9,
                variance_tol: float = SINGULAR_VARIANCE_TOL) -> SingularityCheck:
    """Test whether ``dist`` is singular of order k.

    Requires both routes to agree: the centered identity
    (x - mu)^k = mu_k + k mu_{k-1} (x - mu) must hold at every atom within
    ``atom_tol`` (relative to the scale sigma^k), and the limiting variance
    v_k^2 must be at most ``variance_tol * sigma^(2k)``.  The two conditions
    are equivalent in exact arithmetic; demanding both guards against
    floating-point false positives.  Continuous distributions are never
    singular and fail the variance condition.
    """
    if k < 2:
        raise ValueError(f"order must be at least 2, got {k}")
    ms = central_moments(dist, 2 * k)
    sigma = math.sqrt(ms.sigma2)
    vk2 = asymptotic_covariance(ms, k).variance(k)
    vbound = variance_tol * sigma ** (2 * k)

    atoms = getattr(dist, "atoms", None)
    if atoms is None:
        return SingularityCheck(False, math.inf, vk2, vbound)

    mu_k = ms.moment(k)
    mu_km1 = ms.moment(k - 1)
    scale = sigma ** k
    worst = 0.0
    for x, _ in atoms:
        u = float(x) - ms.mu
        lhs = u ** k
        rhs = mu_k + k * mu_km1 * u
        rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs), scale)
        worst = max(worst, rel)
    ok = worst <= atom_tol and vk2 <= vbound
    return SingularityCheck(ok, worst, vk2, vbound)


def members(order: int) -> list[SingularMember]:
    """All constructible standardized members at the given order.

    Even orders have the two-point catalog (the symmetric +-1 member, plus
    the asymmetric pair for order >= 4); odd orders the asymmetric pair and
    the symmetric three-point member.  For order 3 the asymmetric pair and
    the symmetric member are the endpoints and midpoint of a continuum
    indexed by the third moment; interior members come from build_order3.
    """
    if order < 2:
        raise ValueError(f"order must be at least 2, got {order}")
    if order % 2 == 0:
        out = [build_named("rademacher", order)]
        if order >= 4:
            out += [build_two_valued(order, "upper"), build_two_valued(order, "lower")]
        return out
    return [
        build_two_valued(order, "upper"),
        build_two_valued(order, "lower"),
        build_symmetric(order),
    ]
