"""Score and counterfactual-probability types and their exact identities.

The joint behaviour of a binary outcome under control and under treatment is
described by four probabilities p_ij = P(y0 = i, y1 = j).  The marginal
scores (z0, z1) pin these down only partially: p11 may move freely within
its Frechet interval, and the other three components then follow by
arithmetic.  This module holds the value types, those identities, and the
two closed-form baseline estimators built directly on them.

Component order is (p00, p10, p01, p11) everywhere in this package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import OutOfBoundsError

#: Probability inputs may stray outside [0, 1] by at most this much; smaller
#: violations are clamped, larger ones raise OutOfBoundsError.
INPUT_TOL = 1e-9

#: The four components of a CounterfactualProbs must sum to 1 within this.
SIMPLEX_TOL = 1e-12


def checked_probability(value: float, name: str = "probability") -> float:
    """Validate a single probability, clamping floating-point dust.

    Values within INPUT_TOL of the unit interval are snapped onto it;
    anything further out raises OutOfBoundsError.
    """
    value = float(value)
    if not math.isfinite(value):
        raise OutOfBoundsError(f"{name} must be finite, got {value!r}")
    if value < -INPUT_TOL or value > 1.0 + INPUT_TOL:
        raise OutOfBoundsError(f"{name} must lie in [0, 1], got {value!r}")
    return min(1.0, max(0.0, value))


@dataclass(frozen=True, slots=True)
class Scores:
    """A pair of potential-outcome probabilities.

    Attributes
    ----------
    z0 : float
        Probability of a positive outcome without treatment, P(y0 = 1).
    z1 : float
        Probability of a positive outcome under treatment, P(y1 = 1).
    """

    z0: float
    z1: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "z0", checked_probability(self.z0, "z0"))
        object.__setattr__(self, "z1", checked_probability(self.z1, "z1"))

    def as_tuple(self) -> tuple[float, float]:
        return (self.z0, self.z1)


@dataclass(frozen=True, slots=True)
class CounterfactualProbs:
    """Joint outcome probabilities p_ij = P(y0 = i, y1 = j).

    The four components form a probability vector over the outcome pairs
    (0,0), (1,0), (0,1), (1,1), in that fixed order.  Each component is
    validated to [0, 1] and the vector must sum to 1 within SIMPLEX_TOL.
    """

    p00: float
    p10: float
    p01: float
    p11: float

    def __post_init__(self) -> None:
        raw_total = float(self.p00) + float(self.p10) + float(self.p01) + float(self.p11)
        for name in ("p00", "p10", "p01", "p11"):
            object.__setattr__(self, name, checked_probability(getattr(self, name), name))
        total = self.p00 + self.p10 + self.p01 + self.p11
        if abs(total - 1.0) > SIMPLEX_TOL and abs(raw_total - 1.0) > SIMPLEX_TOL:
            raise OutOfBoundsError(
                f"components sum to {total!r}, expected 1 within {SIMPLEX_TOL}"
            )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p00, self.p10, self.p01, self.p11)


@dataclass(frozen=True, slots=True)
class FrechetInterval:
    """The feasible interval for p11 given a pair of scores."""

    lower: float
    upper: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "lower", checked_probability(self.lower, "lower"))
        object.__setattr__(self, "upper", checked_probability(self.upper, "upper"))
        if self.lower > self.upper:
            raise OutOfBoundsError(
                f"interval bounds out of order: [{self.lower!r}, {self.upper!r}]"
            )

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def degenerate(self) -> bool:
        return self.upper == self.lower

    def midpoint(self) -> float:
        return self.lower + 0.5 * (self.upper - self.lower)


def uplift(s: Scores) -> float:
    """Individual treatment effect on the outcome probability, z0 - z1.

    Positive uplift means treatment lowers the probability of the
    (undesired) outcome.
    """
    return s.z0 - s.z1


def frechet_bounds(s: Scores) -> FrechetInterval:
    """Sharp bounds on p11 implied by the marginal scores.

    Nonnegativity of all four joint probabilities under the identities
    z0 = p10 + p11 and z1 = p01 + p11 forces
    max(0, z0 + z1 - 1) <= p11 <= min(z0, z1).
    """
    return FrechetInterval(max(0.0, s.z0 + s.z1 - 1.0), min(s.z0, s.z1))


def probs_from_p11(s: Scores, p11: float) -> CounterfactualProbs:
    """Reconstruct the full joint vector from scores and a feasible p11.

    Parameters
    ----------
    s : Scores
        Marginal scores (z0, z1).
    p11 : float
        Joint probability P(y0 = 1, y1 = 1).  Must lie within
        frechet_bounds(s); values outside by more than SIMPLEX_TOL raise
        OutOfBoundsError.

    Returns
    -------
    CounterfactualProbs
        (1 - z0 - z1 + p11, z0 - p11, z1 - p11, p11), clamped against
        sub-ulp negative dust near the interval endpoints.
    """
    interval = frechet_bounds(s)
    p11 = float(p11)
    if p11 < interval.lower - SIMPLEX_TOL or p11 > interval.upper + SIMPLEX_TOL:
        raise OutOfBoundsError(
            f"p11={p11!r} outside Frechet interval "
            f"[{interval.lower!r}, {interval.upper!r}] for scores {s.as_tuple()}"
        )
    p11 = min(interval.upper, max(interval.lower, p11))
    p10 = max(0.0, s.z0 - p11)
    p01 = max(0.0, s.z1 - p11)
    p00 = max(0.0, 1.0 - s.z0 - s.z1 + p11)
    return CounterfactualProbs(p00, p10, p01, p11)


def independence_estimate(s: Scores) -> CounterfactualProbs:
    """Baseline assuming the two potential outcomes are independent.

    Sets p11 = z0 * z1, which always lies inside the Frechet interval.
    """
    return probs_from_p11(s, s.z0 * s.z1)


def midpoint_estimate(s: Scores) -> CounterfactualProbs:
    """Baseline placing p11 at the midpoint of its Frechet interval."""
    return probs_from_p11(s, frechet_bounds(s).midpoint())
