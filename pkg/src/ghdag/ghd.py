"""Generalized hypergeometric distributions (GHDs).

A GHD node has probability generating function

    G(s) = pFq[a_1..a_p; b_1..b_q; theta * (s - 1)]

which gives the closed-form factorial moments

    E((X)_r) = theta^r * prod <a_i>^r / prod <b_k>^r

so the r-th factorial moment is a fixed power of the mean (the constant
moments ratio, CMR).  Everything here is plain float arithmetic; the
families of interest have real, possibly non-integer, parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

SERIES_TOLERANCE = 1e-12
SERIES_MAX_TERMS = 10_000


class GhdError(ValueError):
    """Base class for invalid GHD parameters or evaluations."""


class SeriesDivergenceError(GhdError):
    pass


class NegativeMassError(GhdError):
    pass


class SingularParameterError(GhdError):
    pass


def rising_factorial(a: float, j: int) -> float:
    """a (a+1) ... (a+j-1); 1 for j == 0."""
    if j < 0:
        raise ValueError(f"j must be nonnegative, got {j}")
    out = 1
    for i in range(j):
        out *= a + i
    return out


def falling_factorial(a: float, j: int) -> float:
    """a (a-1) ... (a-j+1); 1 for j == 0."""
    if j < 0:
        raise ValueError(f"j must be nonnegative, got {j}")
    out = 1
    for i in range(j):
        out *= a - i
    return out


@lru_cache(maxsize=None)
def _stirling_row(r: int) -> tuple[int, ...]:
    if r == 0:
        return (1,)
    prev = _stirling_row(r - 1)
    m = r - 1
    row = [0] * (r + 1)
    for k in range(1, r + 1):
        left = prev[k - 1]
        right = prev[k] if k <= m else 0
        row[k] = left - m * right
    return tuple(row)


def stirling_first(r: int, k: int) -> int:
    """Signed Stirling number of the first kind, s(r, k).

    Defined by ``(x)_r = sum_k s(r, k) x^k``.
    """
    if r < 0 or k < 0:
        raise ValueError("r and k must be nonnegative")
    if k > r:
        raise ValueError(f"k={k} exceeds r={r}")
    return _stirling_row(r)[k]


def _is_nonpositive_int(v: float) -> bool:
    return v <= 0 and float(v).is_integer()


@dataclass(frozen=True)
class GhdFamily:
    """Parameter shape ``(upper; lower)`` of a pFq node distribution.

    The series parameter theta is supplied per evaluation; for a DAG node it
    is a function of the parents.  Use the named constructors for the
    families used in practice.  Binomial(N, p) is ``upper=(-N,)`` evaluated
    at ``theta = -p``.
    """

    upper: tuple[float, ...] = ()
    lower: tuple[float, ...] = ()
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "upper", tuple(float(a) for a in self.upper))
        object.__setattr__(self, "lower", tuple(float(b) for b in self.lower))
        for b in self.lower:
            if _is_nonpositive_int(b):
                raise GhdError(f"lower parameter {b} is zero or a negative integer")
        if not self.label:
            object.__setattr__(self, "label", f"ghd[{self.upper};{self.lower}]")

    @classmethod
    def poisson(cls) -> GhdFamily:
        return cls((), (), "poisson")

    @classmethod
    def hyper_poisson(cls, b: float) -> GhdFamily:
        if b <= 0:
            raise GhdError(f"hyper-Poisson b must be positive, got {b}")
        return cls((1.0,), (b,), f"hyperpoisson:{b:g}")

    @classmethod
    def negative_binomial(cls, k: float) -> GhdFamily:
        if k <= 0:
            raise GhdError(f"negative binomial k must be positive, got {k}")
        return cls((k,), (), f"negbinomial:{k:g}")

    @classmethod
    def binomial(cls, trials: int) -> GhdFamily:
        """Binomial(trials, p); evaluate with ``theta = -p``."""
        if int(trials) != trials or trials < 1:
            raise GhdError(f"binomial trials must be a positive integer, got {trials}")
        return cls((-float(trials),), (), f"binomial:{int(trials)}")

    @classmethod
    def parse(cls, text: str) -> GhdFamily:
        """Inverse of ``label`` for the named families, e.g. ``binomial:3``."""
        name, _, arg = text.strip().lower().partition(":")
        try:
            if name == "poisson" and not arg:
                return cls.poisson()
            if name in ("hyperpoisson", "hyper-poisson"):
                return cls.hyper_poisson(float(arg))
            if name in ("negbinomial", "negative-binomial", "negbin"):
                return cls.negative_binomial(float(arg))
            if name == "binomial":
                return cls.binomial(int(arg))
        except ValueError as exc:
            raise GhdError(f"bad family spec {text!r}: {exc}") from None
        raise GhdError(f"unknown family spec {text!r}")

    @property
    def terminates(self) -> bool:
        return any(_is_nonpositive_int(a) for a in self.upper)

    @property
    def binomial_trials(self) -> int | None:
        if len(self.upper) == 1 and not self.lower and _is_nonpositive_int(self.upper[0]):
            return int(-self.upper[0])
        return None

    def mean(self, theta: float) -> float:
        return theta * math.prod(self.upper) / math.prod(self.lower)


@dataclass(frozen=True)
class CmrSpec:
    family: GhdFamily
    order: int
    coefficient: float

    @classmethod
    def of(cls, family: GhdFamily, r: int) -> CmrSpec:
        return cls(family, r, cmr_coefficient(family, r))


def hypergeometric_terms(
    upper: Sequence[float],
    lower: Sequence[float],
    z: float,
    tolerance: float = SERIES_TOLERANCE,
    max_terms: int = SERIES_MAX_TERMS,
) -> Iterator[float]:
    """Yield the successive terms of pFq[upper; lower; z].

    A terminating series (some upper parameter a nonpositive integer) yields
    exactly its ``1 - min(a)`` nonzero terms regardless of tolerance.
    """
    stops = [int(-a) for a in upper if _is_nonpositive_int(a)]
    last = min(stops) if stops else None
    term = 1.0
    total = 1.0
    yield term
    for j in range(max_terms):
        if last is not None and j >= last:
            return
        num = math.prod(a + j for a in upper)
        den = math.prod(b + j for b in lower) * (j + 1)
        term *= num * z / den
        total += term
        if not math.isfinite(total):
            break
        yield term
        if last is None and abs(term) <= tolerance * abs(total):
            return
    raise SeriesDivergenceError(
        f"pFq[{tuple(upper)}; {tuple(lower)}; {z}] did not converge in {max_terms} terms"
    )


def pfq(
    family: GhdFamily,
    theta: float,
    tolerance: float = SERIES_TOLERANCE,
    max_terms: int = SERIES_MAX_TERMS,
) -> float:
    """Sum the generalized hypergeometric series of ``family`` at ``theta``."""
    return math.fsum(hypergeometric_terms(family.upper, family.lower, theta, tolerance, max_terms))


def _log_abs_rising(a: float, j: int) -> tuple[float, int]:
    """log|<a>^j| and its sign; (-inf, 0) when the product vanishes."""
    if j == 0:
        return 0.0, 1
    if a > 0:
        return math.lgamma(a + j) - math.lgamma(a), 1
    # a <= 0: few factors in practice (binomial), so multiply directly
    value = rising_factorial(a, j)
    if value == 0:
        return -math.inf, 0
    return math.log(abs(value)), (1 if value > 0 else -1)


def _series_value(upper: tuple[float, ...], lower: tuple[float, ...], z: float) -> float:
    """pFq at z, using closed forms or a transformed series where they exist."""
    if not upper and not lower:
        return math.exp(z)
    if len(upper) == 1 and not lower and not _is_nonpositive_int(upper[0]):
        if z >= 1:
            raise SeriesDivergenceError(f"1F0 undefined at z={z}")
        return (1.0 - z) ** (-upper[0])
    if len(upper) == 1 and len(lower) == 1 and z < 0 and not _is_nonpositive_int(upper[0]):
        # Kummer: 1F1[a; b; z] = e^z 1F1[b - a; b; -z]; replaces an alternating series
        a, b = upper[0], lower[0]
        return math.exp(z) * math.fsum(hypergeometric_terms((b - a,), (b,), -z))
    return math.fsum(hypergeometric_terms(upper, lower, z))


def ghd_pmf(family: GhdFamily, theta: float, x: int) -> float:
    """P(X = x) for the GHD with p.g.f. pFq[a; b; theta (s - 1)].

    Taylor expansion at s = 0 gives

        P(X = x) = prod <a>^x theta^x / (prod <b>^x x!) * pFq[a + x; b + x; -theta].
    """
    if x < 0:
        return 0.0
    log_t = -math.lgamma(x + 1)
    sign = 1
    for a in family.upper:
        la, sa = _log_abs_rising(a, x)
        if sa == 0:
            return 0.0
        log_t += la
        sign *= sa
    for b in family.lower:
        lb, sb = _log_abs_rising(b, x)
        log_t -= lb
        sign *= sb
    if x:
        if theta == 0:
            return 0.0
        log_t += x * math.log(abs(theta))
        if theta < 0 and x % 2:
            sign = -sign
    tail = _series_value(
        tuple(a + x for a in family.upper), tuple(b + x for b in family.lower), -theta
    )
    mass = sign * math.exp(log_t) * tail
    if mass < 0 and abs(mass) > 1e-300:
        raise NegativeMassError(
            f"{family.label} at theta={theta} gives negative mass {mass:.3g} at x={x}"
        )
    return max(mass, 0.0)


def pmf_table(family: GhdFamily, theta: float, mass: float = 1.0 - 1e-12, max_support: int = 100_000) -> list[float]:
    """pmf(0), pmf(1), ... until the cumulative mass reaches ``mass``.

    Terminating families are tabulated over their whole support.  Raises
    NegativeMassError if the parameters do not define a distribution.
    """
    out: list[float] = []
    total = 0.0
    cap = family.binomial_trials
    for x in range(max_support):
        if cap is not None and x > cap:
            break
        pr = ghd_pmf(family, theta, x)
        out.append(pr)
        total += pr
        if cap is None and total >= mass:
            break
    if total > 1.0 + 1e-9:
        raise NegativeMassError(f"{family.label} at theta={theta} has total mass {total:.6g} > 1")
    return out


def cmr_coefficient(family: GhdFamily, r: int) -> float:
    """c_r with E((X)_r | theta) = c_r * E(X | theta)^r for every theta."""
    if r < 2:
        raise ValueError(f"moment order must be >= 2, got {r}")
    c = 1
    for a in family.upper:
        if a == 0:
            raise SingularParameterError(f"upper parameter is zero in {family.label}")
        c *= falling_factorial(a + r - 1, r) / a**r
    for b in family.lower:
        d = falling_factorial(b + r - 1, r)
        if d == 0:
            raise SingularParameterError(f"(b + r - 1)_r vanishes for b={b}, r={r}")
        c *= b**r / d
    return c


def cmr_function(spec: CmrSpec, x: float) -> float:
    return spec.coefficient * x**spec.order
