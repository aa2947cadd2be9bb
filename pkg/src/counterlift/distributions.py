"""Latent composition families and their score distributions.

Four families describe how score pairs arise from a latent probability
vector over the joint outcomes:

* ``bb``    scores of a Dirichlet-distributed composition,
* ``gbb``   scores of a generalized-Dirichlet (stick-breaking) composition,
* ``nbb`` / ``ngbb``  the same two with mean-preserving beta observation
  noise applied independently to each score.

Densities are computed and composed in log space throughout; exponents of
the form m - 1 can be large or negative and plain products underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy.special import betaln, gammaln

from .core import CounterfactualProbs, Scores
from .errors import DomainError, FamilyMismatchError, OutOfBoundsError

RngLike = Union[int, np.integer, np.random.SeedSequence, np.random.Generator]

#: Valid family tags, noiseless then noisy.
FAMILIES = ("bb", "gbb", "nbb", "ngbb")


def as_generator(seed: RngLike) -> np.random.Generator:
    """Return seed unchanged if it is already a Generator, else seed one."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _positive_finite(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise OutOfBoundsError(f"{name} must be positive and finite, got {value!r}")
    return value


@dataclass(frozen=True, slots=True)
class BBParams:
    """Dirichlet concentrations over (p00, p10, p01, p11)."""

    m00: float
    m10: float
    m01: float
    m11: float

    def __post_init__(self) -> None:
        for name in ("m00", "m10", "m01", "m11"):
            object.__setattr__(self, name, _positive_finite(getattr(self, name), name))

    @property
    def total(self) -> float:
        """The concentration sum M."""
        return self.m00 + self.m10 + self.m01 + self.m11

    def as_array(self) -> np.ndarray:
        return np.array([self.m00, self.m10, self.m01, self.m11])


@dataclass(frozen=True, slots=True)
class GDParams:
    """Stick-breaking shape pairs for a generalized-Dirichlet composition.

    The sticks are broken in the fixed order p00, p10, p01, with p11 as the
    remainder: u_j ~ Beta(a_j, b_j) independently and

        p00 = u1, p10 = u2 (1-u1), p01 = u3 (1-u1)(1-u2),
        p11 = (1-u1)(1-u2)(1-u3).
    """

    a1: float
    a2: float
    a3: float
    b1: float
    b2: float
    b3: float

    def __post_init__(self) -> None:
        for name in ("a1", "a2", "a3", "b1", "b2", "b3"):
            object.__setattr__(self, name, _positive_finite(getattr(self, name), name))

    def shape_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([self.a1, self.a2, self.a3]),
                np.array([self.b1, self.b2, self.b3]))


@dataclass(frozen=True, slots=True)
class NoiseParams:
    """Concentration of the beta observation noise.

    An observed score given a latent score z is Beta(kappa z, kappa (1-z)),
    so the noise is mean preserving with variance z(1-z)/(kappa+1).
    ``kappa = math.inf`` is the exact-observation sentinel: no noise.
    """

    kappa: float

    def __post_init__(self) -> None:
        kappa = float(self.kappa)
        if math.isnan(kappa) or kappa <= 0.0:
            raise OutOfBoundsError(f"kappa must be positive, got {kappa!r}")
        object.__setattr__(self, "kappa", kappa)

    @property
    def exact(self) -> bool:
        return math.isinf(self.kappa)


@dataclass(frozen=True, slots=True)
class LatentModel:
    """A family tag with its composition parameters and optional noise."""

    family: str
    params: Union[BBParams, GDParams]
    noise: NoiseParams | None = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise FamilyMismatchError(f"unknown family {self.family!r}")
        wants_gd = self.family in ("gbb", "ngbb")
        if wants_gd and not isinstance(self.params, GDParams):
            raise FamilyMismatchError(f"family {self.family!r} needs GDParams")
        if not wants_gd and not isinstance(self.params, BBParams):
            raise FamilyMismatchError(f"family {self.family!r} needs BBParams")
        if self.noisy and self.noise is None:
            raise FamilyMismatchError(f"family {self.family!r} needs NoiseParams")
        if not self.noisy and self.noise is not None:
            raise FamilyMismatchError(f"family {self.family!r} does not take noise")

    @property
    def noisy(self) -> bool:
        return self.family in ("nbb", "ngbb")


class Moments(NamedTuple):
    """First and second moments of a score-pair distribution."""

    mean0: float
    mean1: float
    var0: float
    var1: float
    cov: float


def _components_array(p: CounterfactualProbs | np.ndarray) -> np.ndarray:
    if isinstance(p, CounterfactualProbs):
        return np.array(p.as_tuple())
    return np.asarray(p, dtype=float)


def _log_prob_terms(comps: np.ndarray, exponents: np.ndarray, what: str) -> np.ndarray:
    """Sum exponent * log(component) over the last axis, minding zeros.

    A zero component contributes nothing when its exponent is zero, drives
    the density to zero (-inf in log space) when the exponent is positive,
    and is a genuine singularity when the exponent is negative.
    """
    comps = np.asarray(comps, dtype=float)
    if np.any(comps < 0.0):
        raise DomainError(f"{what}: negative component")
    exponents = np.asarray(exponents, dtype=float)
    if comps.size == 0 or comps.min() > 0.0:
        return np.log(comps) @ exponents
    zero = comps == 0.0
    if np.any(zero & (exponents < 0.0)):
        raise DomainError(f"{what}: zero component with negative exponent")
    with np.errstate(divide="ignore"):
        logs = np.log(comps)
    terms = np.where(exponents == 0.0, 0.0, exponents * logs)
    return terms.sum(axis=-1)


def dirichlet_log_density(m: BBParams, p: CounterfactualProbs) -> float:
    """Log density of Dirichlet(m) at the composition p.

    Requires strictly interior p wherever the corresponding exponent
    m_ij - 1 is negative; raises DomainError otherwise.
    """
    return float(_dirichlet_logpdf(m, _components_array(p)))


def _dirichlet_logpdf(m: BBParams, comps: np.ndarray) -> np.ndarray:
    """Vectorized Dirichlet log density over the last axis of comps."""
    mvec = m.as_array()
    norm = gammaln(m.total) - gammaln(mvec).sum()
    return norm + _log_prob_terms(comps, mvec - 1.0, "dirichlet_log_density")


def _dirichlet_logpdf_nodes(
    m: BBParams, comps: np.ndarray, log_comps: np.ndarray
) -> np.ndarray:
    """Dirichlet log density from precomputed component logs.

    Quadrature nodes supply exact log components even where the values
    underflow, so the density is formed directly from them.
    """
    mvec = m.as_array()
    norm = gammaln(m.total) - gammaln(mvec).sum()
    return norm + log_comps @ (mvec - 1.0)


def _gd_log_norm(g: GDParams) -> float:
    a, b = g.shape_arrays()
    return -betaln(a, b).sum()


def gd_log_density(g: GDParams, p: CounterfactualProbs) -> float:
    """Log density of the generalized Dirichlet at the composition p.

    The density under the stick order (p00, p10, p01, remainder) is

        prod_j x_j^(a_j - 1) r_j^(gamma_j) / B(a_j, b_j)

    with r_j the remaining mass after the first j components,
    gamma_1 = b1 - a2 - b2, gamma_2 = b2 - a3 - b3, gamma_3 = b3 - 1.
    """
    return float(_gd_logpdf(g, _components_array(p)))


def _gd_factor_bases(comps: np.ndarray) -> np.ndarray:
    """The six density factors of the stick-breaking law, stacked last.

    These are the three leading components and the three quantities the
    remaining exponents attach to: the trailing remainders r1, r2 and the
    last component.  Remainders are built as sums of trailing components,
    which stays exact even when the leading components approach 1.
    """
    comps = np.asarray(comps, dtype=float)
    p00 = comps[..., 0]
    p10 = comps[..., 1]
    p01 = comps[..., 2]
    p11 = comps[..., 3]
    r1 = p10 + p01 + p11
    r2 = p01 + p11
    return np.stack([p00, p10, p01, r1, r2, p11], axis=-1)


def _gd_exponents(g: GDParams) -> np.ndarray:
    """Exponent of each _gd_factor_bases column in the log density."""
    return np.array([
        g.a1 - 1.0,
        g.a2 - 1.0,
        g.a3 - 1.0,
        g.b1 - g.a2 - g.b2,
        g.b2 - g.a3 - g.b3,
        g.b3 - 1.0,
    ])


def _gd_logpdf(g: GDParams, comps: np.ndarray) -> np.ndarray:
    """Vectorized generalized-Dirichlet log density over the last axis."""
    bases = _gd_factor_bases(comps)
    return _gd_log_norm(g) + _log_prob_terms(bases, _gd_exponents(g), "gd_log_density")


def _gd_log_bases(comps: np.ndarray, log_comps: np.ndarray) -> np.ndarray:
    """Logs of the six stick-breaking factors from node components.

    The remainders r1 = p10+p01+p11 and r2 = p01+p11 equal 1-p00 and z1,
    both bounded away from zero along any non-degenerate segment, so their
    plain logs are safe; the four components use the supplied exact logs.
    """
    r1 = comps[..., 1] + comps[..., 2] + comps[..., 3]
    r2 = comps[..., 2] + comps[..., 3]
    return np.stack(
        [
            log_comps[..., 0],
            log_comps[..., 1],
            log_comps[..., 2],
            np.log(r1),
            np.log(r2),
            log_comps[..., 3],
        ],
        axis=-1,
    )


def _gd_logpdf_nodes(
    g: GDParams, comps: np.ndarray, log_comps: np.ndarray
) -> np.ndarray:
    """Generalized-Dirichlet log density from precomputed component logs."""
    return _gd_log_norm(g) + _gd_log_bases(comps, log_comps) @ _gd_exponents(g)


def gd_reduction(m: BBParams) -> GDParams:
    """Stick-breaking parameters at which the generalized Dirichlet
    coincides with Dirichlet(m): b_j carries the total concentration of the
    components after stick j."""
    return GDParams(
        a1=m.m00,
        a2=m.m10,
        a3=m.m01,
        b1=m.m10 + m.m01 + m.m11,
        b2=m.m01 + m.m11,
        b3=m.m11,
    )


def dirichlet_sample(m: BBParams, seed: RngLike) -> CounterfactualProbs:
    """One Dirichlet(m) composition draw; deterministic given the seed."""
    rng = as_generator(seed)
    draw = rng.dirichlet(m.as_array())
    return CounterfactualProbs(*draw)


def gd_sample(g: GDParams, seed: RngLike) -> CounterfactualProbs:
    """One stick-breaking composition draw; deterministic given the seed."""
    rng = as_generator(seed)
    return CounterfactualProbs(*_gd_draws(g, 1, rng)[0])


def _gd_draws(g: GDParams, n: int, rng: np.random.Generator) -> np.ndarray:
    a, b = g.shape_arrays()
    u = rng.beta(a, b, size=(n, 3))
    keep = np.cumprod(1.0 - u, axis=1)
    out = np.empty((n, 4))
    out[:, 0] = u[:, 0]
    out[:, 1] = u[:, 1] * keep[:, 0]
    out[:, 2] = u[:, 2] * keep[:, 1]
    out[:, 3] = keep[:, 2]
    return out


def sample_compositions(model: LatentModel, n: int, seed: RngLike) -> np.ndarray:
    """Draw n latent compositions from the model's composition family.

    Returns an (n, 4) array in the fixed component order.  Works for all
    four families; the noisy families share their latent composition with
    the noiseless ones.
    """
    rng = as_generator(seed)
    if isinstance(model.params, BBParams):
        return rng.dirichlet(model.params.as_array(), size=n)
    return _gd_draws(model.params, n, rng)


def scores_from_probs(p: CounterfactualProbs) -> Scores:
    """Marginal scores implied by a joint vector: (p10+p11, p01+p11)."""
    return Scores(p.p10 + p.p11, p.p01 + p.p11)


def bb_sample(model: LatentModel, seed: RngLike) -> Scores:
    """One score pair from a noiseless latent composition model."""
    if model.noisy:
        raise FamilyMismatchError(
            f"bb_sample draws exact scores; use noisy_sample for {model.family!r}"
        )
    comps = sample_compositions(model, 1, seed)[0]
    return Scores(comps[1] + comps[3], comps[2] + comps[3])


def bb_moments(m: BBParams) -> Moments:
    """Closed-form moments of the score pair under a Dirichlet composition.

    With a = m10 + m11 and b = m01 + m11, each score is marginally
    Beta-distributed by Dirichlet aggregation, and the covariance follows
    from the standard Dirichlet second moments.
    """
    total = m.total
    a = m.m10 + m.m11
    b = m.m01 + m.m11
    mean0 = a / total
    mean1 = b / total
    var0 = mean0 * (1.0 - mean0) / (total + 1.0)
    var1 = mean1 * (1.0 - mean1) / (total + 1.0)
    cov = (m.m11 * total - a * b) / (total * total * (total + 1.0))
    return Moments(mean0, mean1, var0, var1, cov)


def beta_noise(latent: np.ndarray, kappa: float, rng: np.random.Generator) -> np.ndarray:
    """Observed scores given latent ones under Beta(kappa z, kappa (1-z)).

    Boundary latents are point masses (a degenerate beta) and pass through
    unchanged; kappa = inf passes everything through.
    """
    latent = np.asarray(latent, dtype=float)
    if math.isinf(kappa):
        return latent.copy()
    observed = latent.copy()
    interior = (latent > 0.0) & (latent < 1.0)
    if np.any(interior):
        z = latent[interior]
        observed[interior] = rng.beta(kappa * z, kappa * (1.0 - z))
    return observed


def noisy_sample(model: LatentModel, seed: RngLike) -> tuple[Scores, Scores]:
    """One (observed, latent) score-pair draw from a noisy family.

    The latent pair is drawn exactly as in bb_sample; beta noise is then
    applied independently per arm.  RNG order: composition draw first, then
    arm-0 noise, then arm-1 noise.
    """
    if not model.noisy:
        raise FamilyMismatchError(
            f"noisy_sample needs a noisy family, got {model.family!r}"
        )
    rng = as_generator(seed)
    comps = sample_compositions(model, 1, rng)[0]
    latent = np.array([comps[1] + comps[3], comps[2] + comps[3]])
    kappa = model.noise.kappa
    observed0 = beta_noise(latent[:1], kappa, rng)[0]
    observed1 = beta_noise(latent[1:], kappa, rng)[0]
    return Scores(observed0, observed1), Scores(latent[0], latent[1])


def noise_log_density(n: NoiseParams, observed: float, latent: float) -> float:
    """Log density of the beta observation noise.

    Both arguments must be strictly interior; the noise law is undefined at
    the boundaries (latent boundaries are point masses, observed boundaries
    have no density).
    """
    observed = float(observed)
    latent = float(latent)
    if not (0.0 < observed < 1.0 and 0.0 < latent < 1.0):
        raise DomainError(
            f"noise density needs interior scores, got observed={observed!r} "
            f"latent={latent!r}"
        )
    return float(_noise_logpdf(n.kappa, np.array(observed), np.array(latent)))


def _noise_logpdf(kappa: float, observed: np.ndarray, latent: np.ndarray) -> np.ndarray:
    """Vectorized beta-noise log density; assumes interior arguments."""
    alpha = kappa * latent
    beta = kappa * (1.0 - latent)
    return (
        (alpha - 1.0) * np.log(observed)
        + (beta - 1.0) * np.log1p(-observed)
        - betaln(alpha, beta)
    )
