"""Parameter estimation from samples of score pairs.

The moment route (fit_bb_mom) inverts the closed-form Dirichlet moments.
The likelihood route (fit_gbb) climbs the integrated score density of the
generalized Dirichlet with a simplex search, starting from the moment
fit. Noisy variants first strip the observation noise out of the sample
moments, then reuse the noiseless machinery.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
from scipy.optimize import minimize

from scipy.special import logsumexp

from .core import INPUT_TOL, Scores
from .distributions import (
    FAMILIES,
    BBParams,
    GDParams,
    LatentModel,
    NoiseParams,
    _gd_exponents,
    _gd_log_bases,
    _gd_log_norm,
    gd_reduction,
)
from .errors import (
    ClampWarning,
    DegenerateVarianceError,
    OptimizerFailure,
    OutOfBoundsError,
    TooFewSamplesError,
)
from .quadrature import get_rule, segment_nodes

M_COMBINE_RULES = ("arithmetic", "geometric")

# Parameters are searched in log space inside this symmetric box, i.e.
# raw values within [1e-6, 1e6].
_LOG_PARAM_BOX = 13.8

_VARIANCE_FLOOR = 1e-8


class ScoreSample(NamedTuple):
    """A sample of predicted score pairs, stored column-wise.

    Both arrays are read-only float64 of equal length N >= 4 with values
    in [0, 1].  Use from_pairs to build one with validation; the raw
    constructor trusts its inputs.
    """

    z0: np.ndarray
    z1: np.ndarray

    @property
    def n(self) -> int:
        return self.z0.shape[0]

    @classmethod
    def from_pairs(cls, pairs: Iterable[Scores] | np.ndarray) -> "ScoreSample":
        if isinstance(pairs, np.ndarray):
            arr = np.asarray(pairs, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise OutOfBoundsError(
                    f"expected an (N, 2) array of score pairs, got shape {arr.shape}"
                )
            z0, z1 = arr[:, 0].copy(), arr[:, 1].copy()
        else:
            listed = list(pairs)
            z0 = np.array([s.z0 for s in listed], dtype=float)
            z1 = np.array([s.z1 for s in listed], dtype=float)
        return cls.from_arrays(z0, z1)

    @classmethod
    def from_arrays(cls, z0: np.ndarray, z1: np.ndarray) -> "ScoreSample":
        z0 = np.asarray(z0, dtype=float)
        z1 = np.asarray(z1, dtype=float)
        if z0.shape != z1.shape or z0.ndim != 1:
            raise OutOfBoundsError(
                f"score columns must be equal-length vectors, got shapes "
                f"{z0.shape} and {z1.shape}"
            )
        if z0.shape[0] < 4:
            raise TooFewSamplesError(
                f"need at least 4 score pairs to fit, got {z0.shape[0]}"
            )
        for name, col in (("z0", z0), ("z1", z1)):
            if not np.all(np.isfinite(col)):
                raise OutOfBoundsError(f"column {name} contains non-finite scores")
            if col.min() < -INPUT_TOL or col.max() > 1.0 + INPUT_TOL:
                bad = int(np.argmax((col < -INPUT_TOL) | (col > 1.0 + INPUT_TOL)))
                raise OutOfBoundsError(
                    f"column {name} has score {col[bad]!r} at row {bad}, "
                    "outside [0, 1]"
                )
        z0 = np.clip(z0, 0.0, 1.0)
        z1 = np.clip(z1, 0.0, 1.0)
        z0.flags.writeable = False
        z1.flags.writeable = False
        return cls(z0, z1)


class SampleMoments(NamedTuple):
    """First and second moments of a score sample (or their latent analogue)."""

    mean0: float
    mean1: float
    var0: float
    var1: float
    cov: float

    def validate(self) -> "SampleMoments":
        if self.var0 < 0.0 or self.var1 < 0.0:
            raise OutOfBoundsError(f"negative variance in {self}")
        bound = math.sqrt(self.var0 * self.var1)
        if abs(self.cov) > bound * (1.0 + 1e-9) + 1e-15:
            raise OutOfBoundsError(
                f"covariance {self.cov!r} violates the Cauchy-Schwarz bound "
                f"{bound!r}"
            )
        return self


@dataclass(frozen=True, slots=True)
class FitConfig:
    """Knobs shared by all fitting routines.

    clamp_epsilon is the smallest admissible shape parameter; anything
    below it is lifted there (with a ClampWarning) so fitted densities
    stay integrable.  optimizer_budget caps likelihood evaluations for
    the simplex search; a budget of 0 skips refinement and returns the
    moment-based initialization.  kappa, when None, defaults to
    sample size / 20 at fit time.  deconvolve controls whether the noisy
    fits correct the sample moments for observation noise before
    inverting them.
    """

    clamp_epsilon: float = 1e-3
    m_combine: str = "arithmetic"
    optimizer_budget: int = 2000
    quadrature_nodes: int = 201
    kappa: float | None = None
    deconvolve: bool = True

    def __post_init__(self) -> None:
        if self.clamp_epsilon <= 0.0:
            raise ValueError("clamp_epsilon must be positive")
        if self.m_combine not in M_COMBINE_RULES:
            raise ValueError(
                f"m_combine must be one of {M_COMBINE_RULES}, got {self.m_combine!r}"
            )
        if self.optimizer_budget < 0:
            raise ValueError("optimizer_budget must be >= 0")
        if self.quadrature_nodes < 9:
            raise ValueError("quadrature_nodes must be at least 9")
        if self.kappa is not None and not self.kappa > 0.0:
            raise ValueError("kappa must be positive when given")


def resolve_kappa(cfg: FitConfig, n: int) -> float:
    """Noise spread for a fit: the configured value, else scaled to N."""
    if cfg.kappa is not None:
        return float(cfg.kappa)
    return n / 20.0


def sample_moments(s: ScoreSample) -> SampleMoments:
    """Unbiased means, variances, and covariance of a score sample."""
    if s.n < 4:
        raise TooFewSamplesError(f"need at least 4 score pairs, got {s.n}")
    mean0 = float(s.z0.mean())
    mean1 = float(s.z1.mean())
    d0 = s.z0 - mean0
    d1 = s.z1 - mean1
    denom = s.n - 1
    var0 = float(d0 @ d0 / denom)
    var1 = float(d1 @ d1 / denom)
    cov = float(d0 @ d1 / denom)
    # Perfectly correlated samples can land a hair outside the
    # Cauchy-Schwarz bound in floating point; pull them back in.
    bound = math.sqrt(var0 * var1)
    cov = max(-bound, min(bound, cov))
    return SampleMoments(mean0, mean1, var0, var1, cov).validate()


def _precision_hat(mean: float, var: float, arm: str) -> float:
    if var <= 0.0:
        raise DegenerateVarianceError(
            f"sample variance of {arm} is {var!r}; the moment equations "
            "need strictly positive variance"
        )
    m_hat = mean * (1.0 - mean) / var - 1.0
    if m_hat <= 0.0:
        raise DegenerateVarianceError(
            f"variance {var!r} of {arm} exceeds the Bernoulli bound "
            f"{mean * (1.0 - mean)!r}; implied precision is non-positive"
        )
    return m_hat


def bb_params_from_moments(mom: SampleMoments, cfg: FitConfig) -> BBParams:
    """Invert the Dirichlet moment equations for the given moments.

    The two per-arm precision estimates are combined per cfg.m_combine.
    Components falling below cfg.clamp_epsilon are clamped there and a
    ClampWarning is issued naming them.
    """
    mom.validate()
    m0_hat = _precision_hat(mom.mean0, mom.var0, "the treated arm (z0)")
    m1_hat = _precision_hat(mom.mean1, mom.var1, "the control arm (z1)")
    if cfg.m_combine == "arithmetic":
        m_total = 0.5 * (m0_hat + m1_hat)
    else:
        m_total = math.sqrt(m0_hat * m1_hat)
    m11 = m_total * (mom.cov * (m_total + 1.0) + mom.mean0 * mom.mean1)
    m10 = mom.mean0 * m_total - m11
    m01 = mom.mean1 * m_total - m11
    m00 = m_total - m10 - m01 - m11
    raw = {"m00": m00, "m10": m10, "m01": m01, "m11": m11}
    low = [name for name, value in raw.items() if value < cfg.clamp_epsilon]
    if low:
        warnings.warn(
            f"moment inversion produced {', '.join(low)} below "
            f"{cfg.clamp_epsilon}; clamped",
            ClampWarning,
            stacklevel=2,
        )
    eps = cfg.clamp_epsilon
    return BBParams(max(m00, eps), max(m10, eps), max(m01, eps), max(m11, eps))


def fit_bb_mom(s: ScoreSample, cfg: FitConfig = FitConfig()) -> BBParams:
    """Method-of-moments fit of the Dirichlet composition parameters."""
    return bb_params_from_moments(sample_moments(s), cfg)


def _interior_scores(s: ScoreSample) -> tuple[np.ndarray, np.ndarray]:
    # Boundary scores would contribute log(0) segment widths to the
    # likelihood; nudging them keeps every observation informative.
    tiny = 1e-9
    return np.clip(s.z0, tiny, 1.0 - tiny), np.clip(s.z1, tiny, 1.0 - tiny)


def _gbb_loglik_evaluator(s: ScoreSample, nodes: int):
    """Build a fast sample log-likelihood function for stick-breaking fits.

    Each pair's density is the integral of the generalized Dirichlet
    density along its Frechet segment.  The quadrature nodes depend only
    on the scores, so their factor logarithms are computed once here;
    every subsequent parameter evaluation is a single matrix product plus
    a log-sum-exp, which is what makes the simplex search affordable.
    """
    z0, z1 = _interior_scores(s)
    rule = get_rule("tanh-sinh", nodes)
    comps, log_comps, _, width = segment_nodes(z0, z1, rule)
    log_bases = _gd_log_bases(comps, log_comps)
    log_w = rule.log_w
    log_width_total = float(np.log(width).sum())
    n = z0.shape[0]

    def loglik(g: GDParams) -> float:
        node_terms = log_bases @ _gd_exponents(g) + log_w
        per_pair = logsumexp(node_terms, axis=1)
        return float(per_pair.sum() + log_width_total + n * _gd_log_norm(g))

    return loglik


def gbb_sample_loglik(g: GDParams, s: ScoreSample, nodes: int = 201) -> float:
    """Sample log-likelihood of score pairs under the stick-breaking model."""
    return _gbb_loglik_evaluator(s, nodes)(g)


_TRUST_RADIUS = 2.0
_CHECK_REFINE = 8


def _refine_gd(init: GDParams, s: ScoreSample, cfg: FitConfig) -> GDParams:
    """Profile-likelihood refinement of the stick-breaking concentrations.

    Each beta factor q_i ~ Beta(a_i, b_i) is reparameterized by its mean
    r_i = a_i / (a_i + b_i) and concentration s_i = a_i + b_i.  The means
    stay pinned at the moment-matched initialization: they determine every
    first moment of the composition, so whatever the search does, the
    population summary of the fit stays equal to the moment fit's.  On
    misspecified samples a free search over all six parameters buys
    likelihood by dragging those means off the data moments, which is
    exactly the failure mode this parameterization removes.

    The Nelder-Mead search runs over the three log concentrations inside
    a trust region of _TRUST_RADIUS around the start, where the
    likelihood quadrature stays accurate (far outside it the integrands
    become sharper than the rule resolves and the search would climb
    integration error).  The winner is re-checked against the
    initialization on a much finer rule before being accepted, so
    callers can rely on never losing ground relative to the
    initialization.
    """
    loglik = _gbb_loglik_evaluator(s, cfg.quadrature_nodes)
    means = np.array(
        [
            init.a1 / (init.a1 + init.b1),
            init.a2 / (init.a2 + init.b2),
            init.a3 / (init.a3 + init.b3),
        ]
    )

    def params_at(log_conc: np.ndarray) -> GDParams:
        conc = np.exp(log_conc)
        a = means * conc
        b = (1.0 - means) * conc
        return GDParams(a[0], a[1], a[2], b[0], b[1], b[2])

    def neg_loglik(log_conc: np.ndarray) -> float:
        value = -loglik(params_at(log_conc))
        return value if math.isfinite(value) else math.inf

    x0 = np.clip(
        np.log(
            np.array(
                [init.a1 + init.b1, init.a2 + init.b2, init.a3 + init.b3]
            )
        ),
        -_LOG_PARAM_BOX,
        _LOG_PARAM_BOX,
    )
    f0 = neg_loglik(x0)
    if not math.isfinite(f0):
        raise OptimizerFailure(
            "sample log-likelihood is non-finite at the initialization; "
            "the sample is incompatible with the model"
        )
    lo = np.maximum(x0 - _TRUST_RADIUS, -_LOG_PARAM_BOX)
    hi = np.minimum(x0 + _TRUST_RADIUS, _LOG_PARAM_BOX)
    result = minimize(
        neg_loglik,
        x0,
        method="Nelder-Mead",
        bounds=list(zip(lo, hi)),
        options={
            "maxfev": cfg.optimizer_budget,
            "fatol": 1e-6 * max(1.0, abs(f0)),
            "xatol": 1e-4,
        },
    )
    if not math.isfinite(result.fun) or result.fun >= f0:
        return init
    refined = params_at(result.x)
    check = _gbb_loglik_evaluator(s, _CHECK_REFINE * (cfg.quadrature_nodes - 1) + 1)
    if check(refined) > check(init):
        return refined
    return init


def fit_gbb(s: ScoreSample, cfg: FitConfig = FitConfig()) -> GDParams:
    """Maximum-likelihood fit of the stick-breaking composition.

    Starts from the moment fit mapped through gd_reduction and refines
    with a Nelder-Mead search over the log concentrations of the three
    beta factors (their means stay at the moment-matched values), capped
    at cfg.optimizer_budget likelihood evaluations.
    """
    init = gd_reduction(fit_bb_mom(s, cfg))
    if cfg.optimizer_budget == 0:
        return init
    return _refine_gd(init, s, cfg)


def deconvolve_moments(raw: SampleMoments, noise: NoiseParams) -> SampleMoments:
    """Strip beta observation noise out of sample moments.

    The noise is mean-preserving and independent across arms, so only
    the variances change: each latent variance is recovered from the law
    of total variance.  Latent variances that come out non-positive
    (sample spread below what the noise alone explains) are clamped to a
    small floor with a ClampWarning, and the covariance is pulled back
    inside the Cauchy-Schwarz bound it implies.
    """
    raw.validate()
    if noise.exact:
        return raw
    kappa = noise.kappa
    out = []
    clamped = []
    for arm, mean, var in (("var0", raw.mean0, raw.var0), ("var1", raw.mean1, raw.var1)):
        latent = (var * (kappa + 1.0) - mean * (1.0 - mean)) / kappa
        if latent <= _VARIANCE_FLOOR:
            clamped.append(arm)
            latent = _VARIANCE_FLOOR
        out.append(latent)
    if clamped:
        warnings.warn(
            f"deconvolution drove {', '.join(clamped)} to the floor "
            f"{_VARIANCE_FLOOR}; the sample is barely wider than the noise",
            ClampWarning,
            stacklevel=2,
        )
    var0, var1 = out
    bound = math.sqrt(var0 * var1)
    cov = max(-bound, min(bound, raw.cov))
    return SampleMoments(raw.mean0, raw.mean1, var0, var1, cov).validate()


def fit_nbb(s: ScoreSample, cfg: FitConfig = FitConfig()) -> LatentModel:
    """Fit the noisy Dirichlet family: deconvolve moments, then invert."""
    noise = NoiseParams(resolve_kappa(cfg, s.n))
    mom = sample_moments(s)
    if cfg.deconvolve:
        mom = deconvolve_moments(mom, noise)
    params = bb_params_from_moments(mom, cfg)
    return LatentModel("nbb", params, noise)


def fit_ngbb(s: ScoreSample, cfg: FitConfig = FitConfig()) -> LatentModel:
    """Fit the noisy stick-breaking family.

    Deconvolved moments seed the initialization; the likelihood climbed
    by the simplex search is the same integrated score density used by
    fit_gbb, evaluated at the observed scores.
    """
    noise = NoiseParams(resolve_kappa(cfg, s.n))
    mom = sample_moments(s)
    if cfg.deconvolve:
        mom = deconvolve_moments(mom, noise)
    init = gd_reduction(bb_params_from_moments(mom, cfg))
    if cfg.optimizer_budget == 0:
        return LatentModel("ngbb", init, noise)
    return LatentModel("ngbb", _refine_gd(init, s, cfg), noise)


def fit_model(s: ScoreSample, family: str, cfg: FitConfig = FitConfig()) -> LatentModel:
    """Fit any of the four families and wrap the result in a LatentModel."""
    if family == "bb":
        return LatentModel("bb", fit_bb_mom(s, cfg))
    if family == "gbb":
        return LatentModel("gbb", fit_gbb(s, cfg))
    if family == "nbb":
        return fit_nbb(s, cfg)
    if family == "ngbb":
        return fit_ngbb(s, cfg)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
