"""Population estimates and individual-level posterior means.

Population-level counterfactual probabilities are the latent composition's
first moments.  Individual-level estimates condition on a score pair: for
the noiseless families the posterior lives on the one-dimensional Frechet
segment and is integrated by quadrature; for the noisy families the
observed scores only tie the latent composition down softly, and the
posterior mean is computed by self-normalized importance sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .core import CounterfactualProbs, Scores, frechet_bounds, probs_from_p11
from .distributions import (
    BBParams,
    LatentModel,
    _dirichlet_logpdf,
    _dirichlet_logpdf_nodes,
    _gd_logpdf,
    _gd_logpdf_nodes,
    _noise_logpdf,
    as_generator,
    sample_compositions,
)
from .errors import (
    DegenerateSegmentError,
    DomainError,
    EffectiveSampleSizeError,
    FamilyMismatchError,
    QuadratureFailure,
)
from .quadrature import RULE_TAGS, get_rule, segment_integrals


@dataclass(frozen=True, slots=True)
class QuadratureConfig:
    """Numerical budgets for posterior computation.

    Attributes
    ----------
    rule : str
        Quadrature rule tag for noiseless posteriors, one of RULE_TAGS.
    nodes : int
        Node budget for the rule.
    tolerance : float
        Relative tolerance on the posterior p11 mean, measured against the
        segment width, checked via an embedded coarser rule.  The check is
        conservative (the coarse rule's error dominates the difference),
        so the default leaves headroom above the full rule's actual error.
    mc_budget : int
        Importance-sampling draw count for noisy families.
    mc_seed : int
        Seed for the importance sampler; part of the result's identity.
    min_ess : float
        Effective-sample-size floor below which noisy inference refuses
        to report a mean.
    """

    rule: str = "tanh-sinh"
    nodes: int = 801
    tolerance: float = 1e-4
    mc_budget: int = 100_000
    mc_seed: int = 0
    min_ess: float = 100.0

    def __post_init__(self) -> None:
        if self.rule not in RULE_TAGS:
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.nodes < 9 or self.mc_budget < 2 or self.tolerance <= 0:
            raise ValueError("quadrature budgets must be positive")


@dataclass(frozen=True, slots=True)
class PosteriorResult:
    """A posterior mean with its normalizer and accuracy diagnostics.

    ``log_evidence`` is the log of the (unnormalized) integral of the
    latent density along the segment, which is exactly the model's score
    density at the conditioning point; it is NaN for degenerate segments
    and an MC estimate for noisy families.  ``error_estimate`` is an
    absolute estimate for the p11 component of the mean (quadrature) or
    the largest per-component standard error (importance sampling).
    """

    mean: CounterfactualProbs
    log_evidence: float
    error_estimate: float
    node_count: int = 0
    draw_count: int = 0
    ess: float | None = None


def _latent_logpdf(model: LatentModel) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(model.params, BBParams):
        params = model.params
        return lambda comps: _dirichlet_logpdf(params, comps)
    params = model.params
    return lambda comps: _gd_logpdf(params, comps)


def _latent_logpdf_nodes(
    model: LatentModel,
) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    if isinstance(model.params, BBParams):
        params = model.params
        return lambda comps, log_comps: _dirichlet_logpdf_nodes(
            params, comps, log_comps
        )
    params = model.params
    return lambda comps, log_comps: _gd_logpdf_nodes(params, comps, log_comps)


def population_estimate(model: LatentModel) -> CounterfactualProbs:
    """First moments of the latent composition, for any family.

    Dirichlet-based families return m_ij / M.  Stick-breaking families
    multiply out the per-stick beta means: each component takes its
    stick's share of whatever mass the earlier sticks left standing.
    """
    if isinstance(model.params, BBParams):
        m = model.params
        total = m.total
        return CounterfactualProbs(
            m.m00 / total, m.m10 / total, m.m01 / total, m.m11 / total
        )
    g = model.params
    share1 = g.a1 / (g.a1 + g.b1)
    share2 = g.a2 / (g.a2 + g.b2)
    share3 = g.a3 / (g.a3 + g.b3)
    left1 = 1.0 - share1
    left2 = left1 * (1.0 - share2)
    return CounterfactualProbs(
        share1,
        share2 * left1,
        share3 * left2,
        left2 * (1.0 - share3),
    )


def _require_noiseless(model: LatentModel, op: str) -> None:
    if model.noisy:
        raise FamilyMismatchError(
            f"{op} conditions on exact scores; family {model.family!r} carries "
            "observation noise (use posterior_mean_noisy)"
        )


def posterior_log_density_p11(model: LatentModel, s: Scores, p11: float) -> float:
    """Unnormalized log posterior of p11 given exactly observed scores.

    Along the Frechet segment the scores freeze three degrees of freedom
    of the composition, so the posterior density at p11 is simply the
    latent density evaluated at probs_from_p11(s, p11).
    """
    _require_noiseless(model, "posterior_log_density_p11")
    interval = frechet_bounds(s)
    if interval.degenerate:
        raise DegenerateSegmentError(
            f"scores {s.as_tuple()} admit only p11={interval.lower!r}; "
            "the posterior is a point mass"
        )
    p11 = float(p11)
    if not interval.lower < p11 < interval.upper:
        raise DomainError(
            f"p11={p11!r} not strictly inside "
            f"({interval.lower!r}, {interval.upper!r})"
        )
    comps = probs_from_p11(s, p11)
    logpdf = _latent_logpdf(model)
    return float(logpdf(np.array(comps.as_tuple())))


def _posterior_p11_batch(
    model: LatentModel,
    z0: np.ndarray,
    z1: np.ndarray,
    q: QuadratureConfig,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Posterior p11 means for many score rows at once.

    Returns (mean_p11, log_evidence, worst_error).  Raises
    QuadratureFailure if the embedded coarser rule disagrees with the full
    rule by more than the configured tolerance on any row.
    """
    logpdf = _latent_logpdf_nodes(model)
    rule = get_rule(q.rule, q.nodes)
    log_ev, mean_p11 = segment_integrals(logpdf, z0, z1, rule)
    _, mean_half = segment_integrals(logpdf, z0, z1, rule.half)
    width = np.minimum(z0, z1) - np.maximum(0.0, z0 + z1 - 1.0)
    err = np.abs(mean_p11 - mean_half) + 1e-15
    live = width > 0.0
    rel = np.zeros_like(err)
    rel[live] = err[live] / width[live]
    worst = float(rel.max()) if rel.size else 0.0
    if worst > q.tolerance:
        bad = int(np.argmax(rel))
        raise QuadratureFailure(
            f"segment quadrature error {worst:.3e} above tolerance "
            f"{q.tolerance:.1e} at scores ({z0[bad]!r}, {z1[bad]!r}) "
            f"with {rule.n_nodes} nodes"
        )
    return mean_p11, log_ev, float(err.max()) if err.size else 0.0


def posterior_mean(
    model: LatentModel, s: Scores, q: QuadratureConfig = QuadratureConfig()
) -> PosteriorResult:
    """Posterior mean of the joint probabilities given exact scores.

    Only p11 requires integration; the remaining components follow from
    the identities, so the mean inherits marginal consistency
    (mean.p10 + mean.p11 = z0 and mean.p01 + mean.p11 = z1) exactly.
    Degenerate segments short-circuit to the forced point mass.
    """
    _require_noiseless(model, "posterior_mean")
    interval = frechet_bounds(s)
    if interval.degenerate:
        return PosteriorResult(
            mean=probs_from_p11(s, interval.lower),
            log_evidence=math.nan,
            error_estimate=0.0,
        )
    z0 = np.array([s.z0])
    z1 = np.array([s.z1])
    mean_p11, log_ev, err = _posterior_p11_batch(model, z0, z1, q)
    rule = get_rule(q.rule, q.nodes)
    return PosteriorResult(
        mean=probs_from_p11(s, float(mean_p11[0])),
        log_evidence=float(log_ev[0]),
        error_estimate=err,
        node_count=rule.n_nodes,
    )


def _interior(values: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    return np.clip(values, floor, 1.0 - floor)


def posterior_mean_noisy(
    model: LatentModel, observed: Scores, q: QuadratureConfig = QuadratureConfig()
) -> PosteriorResult:
    """Posterior mean of the joint probabilities given noisy scores.

    The joint density over (latent scores, p11) is the latent composition
    density times one beta-noise factor per arm.  It is integrated by
    self-normalized importance sampling with a defensive half-and-half
    mixture proposal: one half draws the latent composition from its
    prior, the other draws latent scores from the beta noise law centered
    on the observed scores (so the proposal survives both a dominant prior
    and a dominant likelihood) with p11 placed on the resulting segment by
    an arcsine draw, whose endpoint loading absorbs integrable density
    singularities there.

    The reported mean need not have its p11 inside frechet_bounds of the
    observed scores: the observation noise decouples the two.

    Raises EffectiveSampleSizeError when the weights degenerate below
    q.min_ess, rather than returning an estimate with hidden variance.
    """
    if not model.noisy:
        raise FamilyMismatchError(
            f"posterior_mean_noisy needs a noisy family, got {model.family!r}"
        )
    if not (0.0 < observed.z0 < 1.0 and 0.0 < observed.z1 < 1.0):
        raise DomainError(
            f"observed scores must be interior under noise, got {observed.as_tuple()}"
        )
    kappa = model.noise.kappa
    if math.isinf(kappa):
        raise DomainError(
            "kappa=inf carries no observation noise; use posterior_mean"
        )
    rng = as_generator(q.mc_seed)
    latent_logpdf = _latent_logpdf(model)
    k_total = int(q.mc_budget)
    k_prior = k_total // 2

    # Prior-driven half: full composition draws.
    prior_comps = sample_compositions(model, k_prior, rng)
    # Likelihood-driven half: latent scores near the observation, then an
    # arcsine-distributed p11 along the implied segment.
    k_like = k_total - k_prior
    a0, b0 = kappa * observed.z0, kappa * (1.0 - observed.z0)
    a1, b1 = kappa * observed.z1, kappa * (1.0 - observed.z1)
    zeta0 = _interior(rng.beta(a0, b0, size=k_like))
    zeta1 = _interior(rng.beta(a1, b1, size=k_like))
    angle = 0.5 * math.pi * rng.random(k_like)
    x = _interior(np.sin(angle) ** 2)
    xc = _interior(np.cos(angle) ** 2)
    lower = np.maximum(0.0, zeta0 + zeta1 - 1.0)
    upper = np.minimum(zeta0, zeta1)
    width = upper - lower
    like_comps = np.stack(
        [
            np.maximum(1.0 - zeta0 - zeta1, 0.0) + width * x,
            (zeta0 - upper) + width * xc,
            (zeta1 - upper) + width * xc,
            lower + width * x,
        ],
        axis=-1,
    )
    comps = np.concatenate([prior_comps, like_comps], axis=0)
    comps = np.clip(comps, 1e-300, 1.0)

    s0 = comps[:, 1] + comps[:, 3]
    s1 = comps[:, 2] + comps[:, 3]
    s0 = _interior(s0)
    s1 = _interior(s1)

    log_target = (
        latent_logpdf(comps)
        + _noise_logpdf(kappa, np.full_like(s0, observed.z0), s0)
        + _noise_logpdf(kappa, np.full_like(s1, observed.z1), s1)
    )

    # Mixture proposal density at every draw, in the (zeta0, zeta1, p11)
    # coordinates (unit Jacobian relative to the composition).
    all_lower = np.maximum(0.0, s0 + s1 - 1.0)
    all_width = np.minimum(s0, s1) - all_lower
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.clip((comps[:, 3] - all_lower) / np.where(all_width > 0, all_width, 1.0), 1e-12, 1.0 - 1e-12)
        log_q_like = (
            _noise_logpdf(kappa, s0, np.full_like(s0, observed.z0))
            + _noise_logpdf(kappa, s1, np.full_like(s1, observed.z1))
            - math.log(math.pi)
            - 0.5 * (np.log(frac) + np.log1p(-frac))
            - np.log(np.where(all_width > 0, all_width, np.inf))
        )
    log_q_prior = latent_logpdf(comps)
    log_proposal = np.logaddexp(
        math.log(k_prior / k_total) + log_q_prior,
        math.log(k_like / k_total) + log_q_like,
    )
    log_w = log_target - log_proposal
    log_w = np.where(np.isfinite(log_w), log_w, -np.inf)

    log_sum = logsumexp(log_w)
    if not np.isfinite(log_sum):
        raise EffectiveSampleSizeError("all importance weights vanished")
    ess = float(np.exp(2.0 * log_sum - logsumexp(2.0 * log_w)))
    if ess < q.min_ess:
        raise EffectiveSampleSizeError(
            f"effective sample size {ess:.1f} below the floor {q.min_ess:.0f} "
            f"at {k_total} draws"
        )
    weights = np.exp(log_w - log_sum)
    mean = weights @ comps
    mean = mean / mean.sum()
    spread = np.sqrt(((comps - mean) ** 2 * weights[:, None] ** 2).sum(axis=0))
    return PosteriorResult(
        mean=CounterfactualProbs(*mean),
        log_evidence=float(log_sum - math.log(k_total)),
        error_estimate=float(spread.max()),
        draw_count=k_total,
        ess=ess,
    )
