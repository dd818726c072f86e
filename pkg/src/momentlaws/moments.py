"""Central-moment arithmetic.

Population central moments mu_j = E(X - mu)^j for finite discrete and
built-in continuous distributions, sample central moments, the Newton
transform linking moments centered at a known mean to moments centered at
the sample mean, and the CLT covariance of centered power averages.

Finite-distribution moments use exactly rounded summation (math.fsum); an
exact rational mode is available when atoms and probabilities are given as
Fractions, and serves as the test oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

#: Largest supported moment order.  Binomial weights and powers above this
#: overflow float64 silently, so the cap is enforced with an explicit error.
MAX_ORDER = 64


class NumericError(RuntimeError):
    """A numeric procedure failed (lost root bracket, non-PSD covariance...)."""


def _check_order(j: int, what: str = "moment order") -> int:
    j = int(j)
    if j < 0:
        raise ValueError(f"{what} must be nonnegative, got {j}")
    if j > MAX_ORDER:
        raise ValueError(f"{what} {j} exceeds the supported cap {MAX_ORDER}")
    return j


@dataclass(frozen=True)
class MomentSet:
    """Mean and central moments mu_0..mu_J of a distribution.

    ``central[j]`` is mu_j; mu_0 = 1 and mu_1 = 0 always, mu_2 is the
    variance.
    """

    mu: float
    central: tuple

    @property
    def order(self) -> int:
        return len(self.central) - 1

    @property
    def sigma2(self) -> float:
        return self.moment(2)

    def moment(self, j: int) -> float:
        if j < 0:
            raise ValueError(f"negative moment index {j}")
        if j > self.order:
            raise ValueError(
                f"insufficient moment order: need mu_{j}, have up to mu_{self.order}"
            )
        return self.central[j]

    def validate(self, rtol: float = 1e-9) -> None:
        """Raise if the stored moments cannot come from a distribution."""
        if self.central[0] != 1.0:
            raise ValueError("mu_0 must be exactly 1")
        if self.order >= 1 and self.central[1] != 0.0:
            raise ValueError("mu_1 must be exactly 0")
        if self.order >= 2 and self.central[2] <= 0.0:
            raise ValueError("variance must be positive for a non-degenerate source")
        for j in range(2, self.order + 1, 2):
            if self.central[j] < 0.0:
                raise ValueError(f"even moment mu_{j} is negative")
        # Cauchy-Schwarz: mu_{i+j}^2 <= mu_{2i} mu_{2j}
        for i in range(1, self.order // 2 + 1):
            for j in range(i, self.order // 2 + 1):
                lhs = self.central[i + j] ** 2
                rhs = self.central[2 * i] * self.central[2 * j]
                if lhs > rhs * (1.0 + rtol) + 1e-300:
                    raise ValueError(
                        f"Cauchy-Schwarz violated at (i,j)=({i},{j}): "
                        f"mu_{i+j}^2={lhs} > mu_{2*i} mu_{2*j}={rhs}"
                    )


class DiscreteDistribution:
    """Finite distribution given by (support point, probability) atoms.

    Probabilities must be positive and sum to one within 1e-12 absolute;
    support points must be distinct, and there must be at least two of them
    (a one-point distribution has no moment fluctuations to study).

    Atoms keep whatever number type they were given, so a distribution built
    from ``Fraction`` values supports exact moment computation via
    :meth:`exact_central_moments`.
    """

    def __init__(self, atoms, label: str | None = None):
        atoms = tuple((x, p) for x, p in atoms)
        if len(atoms) < 2:
            raise ValueError("a non-degenerate distribution needs at least two atoms")
        xs = [float(x) for x, _ in atoms]
        ps = [float(p) for _, p in atoms]
        if len(set(xs)) != len(xs):
            raise ValueError("support points must be strictly distinct")
        if any(p <= 0.0 for p in ps):
            raise ValueError("atom probabilities must be positive")
        total = math.fsum(ps)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1 within 1e-12, got {total!r}")
        order = sorted(range(len(atoms)), key=lambda i: xs[i])
        self.atoms = tuple(atoms[i] for i in order)
        self.label = label
        self._xs = np.array([float(x) for x, _ in self.atoms])
        self._ps = np.array([float(p) for _, p in self.atoms])
        self._cum = np.cumsum(self._ps)

    @property
    def xs(self) -> np.ndarray:
        return self._xs

    @property
    def ps(self) -> np.ndarray:
        return self._ps

    @property
    def cum(self) -> np.ndarray:
        """Cumulative probabilities over the sorted support."""
        return self._cum

    def mean(self) -> float:
        return math.fsum(float(p) * float(x) for x, p in self.atoms)

    def central_moments(self, upto: int) -> MomentSet:
        upto = _check_order(upto)
        mu = self.mean()
        central = [1.0, 0.0]
        for j in range(2, upto + 1):
            central.append(
                math.fsum(float(p) * (float(x) - mu) ** j for x, p in self.atoms)
            )
        return MomentSet(mu=mu, central=tuple(central[: upto + 1]))

    def exact_central_moments(self, upto: int) -> list[Fraction]:
        """Central moments as exact rationals of the represented atoms."""
        upto = _check_order(upto)
        atoms = [(Fraction(x), Fraction(p)) for x, p in self.atoms]
        mu = sum(p * x for x, p in atoms)
        out = [Fraction(1), Fraction(0)]
        for j in range(2, upto + 1):
            out.append(sum(p * (x - mu) ** j for x, p in atoms))
        return out[: upto + 1]

    def spec(self) -> dict:
        return {
            "kind": "finite",
            "atoms": [{"x": float(x), "p": float(p)} for x, p in self.atoms],
        }

    def __repr__(self):
        name = self.label or "discrete"
        pts = ", ".join(f"{float(x):g}:{float(p):g}" for x, p in self.atoms)
        return f"<{name} {{{pts}}}>"


class Bernoulli(DiscreteDistribution):
    """Two-point {0, 1} distribution with closed-form central moments.

    mu_k = p q [ q^(k-1) + (-1)^k p^(k-1) ]  with q = 1 - p.
    """

    def __init__(self, p, label: str | None = None):
        pf = float(p)
        if not 0.0 < pf < 1.0:
            raise ValueError(f"Bernoulli parameter must lie in (0,1), got {p!r}")
        one = Fraction(1) if isinstance(p, Fraction) else 1.0
        super().__init__([(0 * one, one - p), (1 * one, p)],
                         label=label or f"bernoulli({pf:g})")
        self.p = p

    def central_moments(self, upto: int) -> MomentSet:
        upto = _check_order(upto)
        p = float(self.p)
        q = 1.0 - p
        central = [1.0, 0.0]
        for k in range(2, upto + 1):
            central.append(p * q * (q ** (k - 1) + (-1) ** k * p ** (k - 1)))
        return MomentSet(mu=p, central=tuple(central[: upto + 1]))

    def exact_central_moments(self, upto: int) -> list[Fraction]:
        upto = _check_order(upto)
        p = Fraction(self.p)
        q = 1 - p
        out = [Fraction(1), Fraction(0)]
        for k in range(2, upto + 1):
            out.append(p * q * (q ** (k - 1) + (-1) ** k * p ** (k - 1)))
        return out[: upto + 1]

    def spec(self) -> dict:
        return {"kind": "bernoulli", "p": float(self.p)}


def rademacher() -> DiscreteDistribution:
    """The two-point distribution with mass 1/2 at each of -1 and +1."""
    return DiscreteDistribution([(-1.0, 0.5), (1.0, 0.5)], label="rademacher")


@dataclass(frozen=True)
class NormalDistribution:
    """Normal law; even central moments sigma^(2r) (2r)!/(2^r r!), odd zero."""

    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")

    def mean(self) -> float:
        return self.mu

    def central_moments(self, upto: int) -> MomentSet:
        upto = _check_order(upto)
        central = [1.0, 0.0]
        for j in range(2, upto + 1):
            if j % 2:
                central.append(0.0)
            else:
                r = j // 2
                central.append(self.sigma ** j * math.factorial(j)
                               / (2 ** r * math.factorial(r)))
        return MomentSet(mu=self.mu, central=tuple(central[: upto + 1]))

    def spec(self) -> dict:
        return {"kind": "normal", "mu": self.mu, "sigma": self.sigma}


def central_moments(dist, upto: int) -> MomentSet:
    """Population central moments mu_0..mu_upto of a distribution object."""
    return dist.central_moments(upto)


@dataclass(frozen=True)
class SampleMomentVector:
    """Averages m_j = (1/n) sum (x_i - reference)^j for j = 1..k."""

    m: tuple
    n: int
    reference: float

    @classmethod
    def from_data(cls, data, reference: float, upto: int) -> "SampleMomentVector":
        data = np.asarray(data, dtype=float)
        if data.size == 0:
            raise ValueError("empty data")
        upto = _check_order(upto)
        if upto < 1:
            raise ValueError("need at least order 1")
        n = data.size
        m = tuple(
            math.fsum((float(x) - reference) ** j for x in data) / n
            for j in range(1, upto + 1)
        )
        return cls(m=m, n=n, reference=float(reference))


def newton_transform(mvec: SampleMomentVector, j: int) -> float:
    """Moment about the sample mean from moments about a fixed reference.

    For m = (m_1, ..., m_k) returns
    (-1)^(j-1) (j-1) m_1^j + sum_{i=2}^{j-1} (-1)^(j-i) C(j,i) m_i m_1^(j-i) + m_j,
    which equals the j-th sample central moment when the m_i come from the
    same data.  j = 1 returns m_1 itself.
    """
    k = len(mvec.m)
    if not 1 <= j <= k:
        raise ValueError(f"index {j} out of range 1..{k}")
    m1 = mvec.m[0]
    if j == 1:
        return m1
    terms = [(-1.0) ** (j - 1) * (j - 1) * m1 ** j]
    for i in range(2, j):
        terms.append((-1.0) ** (j - i) * math.comb(j, i) * mvec.m[i - 1] * m1 ** (j - i))
    terms.append(mvec.m[j - 1])
    return math.fsum(terms)


def sample_central_moment(data, k: int) -> float:
    """Two-pass sample central moment (1/n) sum (x_i - xbar)^k.

    The mean is computed first with exactly rounded summation, then the
    centered k-th powers are averaged the same way; one-pass update formulas
    lose accuracy for k >= 4.  k = 1 is identically zero by centering.
    """
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("empty data")
    k = _check_order(k)
    if k < 1:
        raise ValueError("order must be at least 1")
    if k == 1:
        return 0.0
    n = data.size
    xbar = math.fsum(float(x) for x in data) / n
    return math.fsum((float(x) - xbar) ** k for x in data) / n


def clt_covariance(ms: MomentSet, k: int) -> np.ndarray:
    """Covariance matrix of the centered powers (U, U^2, ..., U^k).

    Entry (i, j) is mu_{i+j} - mu_i mu_j; this is the covariance of the CLT
    limit for the vector of fixed-mean sample moments.  Requires moments up
    to order 2k.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    ms.moment(2 * k)
    S = np.empty((k, k))
    for i in range(1, k + 1):
        for j in range(i, k + 1):
            v = ms.moment(i + j) - ms.moment(i) * ms.moment(j)
            S[i - 1, j - 1] = S[j - 1, i - 1] = v
    return S


# ---------------------------------------------------------------------------
# distribution specs (JSON)

_SPEC_FIELDS = {
    "finite": {"kind", "atoms"},
    "bernoulli": {"kind", "p"},
    "normal": {"kind", "mu", "sigma"},
    "legendre": {"kind", "m"},
    "singular": {"kind", "order", "variant"},
    "f3": {"kind", "theta"},
}

_SINGULAR_VARIANTS = (
    "two-valued-upper",
    "two-valued-lower",
    "symmetric",
    "rademacher",
    "y-three-valued",
)


def parse_dist_spec(spec):
    """Build a distribution from a JSON spec (dict or JSON text).

    Supported kinds: finite, bernoulli, normal, legendre, singular, f3.
    Parsing is strict; unknown kinds or keys are rejected.
    """
    if isinstance(spec, str):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as e:
            raise ValueError(f"invalid distribution spec JSON: {e}") from None
    if not isinstance(spec, dict):
        raise ValueError("distribution spec must be a JSON object")
    kind = spec.get("kind")
    if kind not in _SPEC_FIELDS:
        raise ValueError(f"unknown distribution kind {kind!r}")
    fields = _SPEC_FIELDS[kind]
    extra = set(spec) - fields
    if extra:
        raise ValueError(f"unknown keys for kind {kind!r}: {sorted(extra)}")
    missing = fields - set(spec)
    if missing:
        raise ValueError(f"missing keys for kind {kind!r}: {sorted(missing)}")

    if kind == "finite":
        atoms = spec["atoms"]
        if not isinstance(atoms, list):
            raise ValueError("atoms must be a list")
        pairs = []
        for a in atoms:
            if not isinstance(a, dict) or set(a) != {"x", "p"}:
                raise ValueError(f"each atom must be an object with keys x, p: {a!r}")
            pairs.append((float(a["x"]), float(a["p"])))
        return DiscreteDistribution(pairs)
    if kind == "bernoulli":
        return Bernoulli(float(spec["p"]))
    if kind == "normal":
        return NormalDistribution(float(spec["mu"]), float(spec["sigma"]))
    if kind == "legendre":
        from .montecarlo import legendre_density

        return legendre_density(int(spec["m"]))
    if kind == "f3":
        from .catalog import build_order3

        return build_order3(float(spec["theta"])).dist
    # singular
    variant = spec["variant"]
    if variant not in _SINGULAR_VARIANTS:
        raise ValueError(f"unknown singular variant {variant!r}")
    order = int(spec["order"])
    from . import catalog

    if variant == "two-valued-upper":
        return catalog.build_two_valued(order, "upper").dist
    if variant == "two-valued-lower":
        return catalog.build_two_valued(order, "lower").dist
    if variant == "symmetric":
        return catalog.build_symmetric(order).dist
    return catalog.build_named(variant, order).dist
