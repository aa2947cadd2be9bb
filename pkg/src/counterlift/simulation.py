"""Synthetic campaign generators and the repeated-experiment harness.

Two data-generating processes are provided.  The Gaussian process builds
outcome probabilities from a shared linear index through a sigmoid, draws
joint potential outcomes under a configurable copula, and leaves score
estimation to the uplift learner.  The bivariate-beta process draws the
latent composition of each record directly from a Dirichlet prior, so its
(noised) latent scores stand in for predicted ones and no learner runs.

run_experiment repeats either process, fits every estimator on each
repetition, and aggregates squared errors into an ExperimentReport whose
cells mirror the usual results table: estimator by level, each holding a
mean and standard deviation across repetitions.  Cells whose estimated
cost exceeds the configured budget are skipped up front, which is what
keeps the noisy-family individual columns out of a default run.
"""

from __future__ import annotations

import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.stats import multivariate_normal, norm

from .core import CounterfactualProbs, Scores, independence_estimate, midpoint_estimate
from .distributions import BBParams, LatentModel, NoiseParams, beta_noise
from .errors import ClampWarning, CounterliftError
from .fitting import (
    FitConfig,
    ScoreSample,
    fit_bb_mom,
    fit_gbb,
    fit_nbb,
    fit_ngbb,
)
from .inference import (
    QuadratureConfig,
    _posterior_p11_batch,
    population_estimate,
    posterior_mean_noisy,
)
from .uplift import CampaignRecord, UpliftConfig, predict_scores_batch, train_tlearner_arrays

DGP_TAGS = ("gaussian", "bivariate-beta")
# The literature calls the second process a "Dirichlet simulation" after
# its latent prior, and "bb" is a convenient shorthand; accept both
# spellings but report one name.
DGP_ALIASES = {"dirichlet": "bivariate-beta", "bb": "bivariate-beta"}

COPULA_TAGS = ("independent", "comonotone", "gaussian-copula")

ESTIMATORS = ("independence", "midpoint", "bb", "nbb", "gbb", "ngbb")
LEVELS = ("population", "individual")

_MODEL_FAMILIES = ("bb", "nbb", "gbb", "ngbb")
_NOISY_FAMILIES = ("nbb", "ngbb")


@dataclass(frozen=True, slots=True)
class SimConfig:
    """Everything a simulated experiment depends on.

    The Gaussian fields (copula, rho, rate_range, rate_gap_range,
    weight_norm_range, n_features) shape the outcome model: a weight
    vector is drawn per repetition from N(0, 1/n) subject to the norm
    window, the control-arm outcome rate is drawn from rate_range, and
    the treated rate sits rate_gap below it, with intercepts calibrated
    so the population rates hit those targets exactly.  The
    bivariate-beta fields (bb_m, bb_prior_range, noise_kappa) control
    the latent Dirichlet draw and the beta observation noise; when bb_m
    is None each repetition draws a fresh parameter vector uniformly
    from the prior range.

    cell_budget_s caps the estimated cost of one repetition of one
    report cell.  The estimate comes from a fixed cost model rather than
    the wall clock, so the same config always skips the same cells and
    reports stay reproducible run to run.
    """

    dgp: str = "gaussian"
    n_samples: int = 5000
    repetitions: int = 30
    n_features: int = 3
    copula: str = "comonotone"
    rho: float = 0.5
    rate_range: tuple[float, float] = (0.22, 0.30)
    rate_gap_range: tuple[float, float] = (0.008, 0.015)
    weight_norm_range: tuple[float, float] = (0.7, 1.3)
    bb_m: BBParams | None = None
    bb_prior_range: tuple[float, float] = (0.5, 5.0)
    noise_kappa: float = 250.0
    master_seed: int = 0
    fit_budget: int = 200
    cell_budget_s: float = 60.0
    threads: int | None = None

    def __post_init__(self) -> None:
        tag = DGP_ALIASES.get(self.dgp, self.dgp)
        if tag not in DGP_TAGS:
            raise ValueError(f"dgp must be one of {DGP_TAGS}, got {self.dgp!r}")
        object.__setattr__(self, "dgp", tag)
        if self.copula not in COPULA_TAGS:
            raise ValueError(
                f"copula must be one of {COPULA_TAGS}, got {self.copula!r}"
            )
        if self.n_samples <= 0 or self.repetitions <= 0 or self.n_features <= 0:
            raise ValueError("n_samples, repetitions, n_features must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")
        lo, hi = self.rate_range
        glo, ghi = self.rate_gap_range
        if not 0.0 < lo <= hi < 1.0:
            raise ValueError(f"rate_range must satisfy 0 < lo <= hi < 1, got {self.rate_range}")
        if not 0.0 < glo <= ghi < lo:
            raise ValueError(
                "rate_gap_range must satisfy 0 < lo <= hi and stay below the "
                f"smallest control rate, got {self.rate_gap_range}"
            )
        wlo, whi = self.weight_norm_range
        if not 0.0 < wlo <= whi:
            raise ValueError(f"weight_norm_range must be positive and ordered, got {self.weight_norm_range}")
        plo, phi = self.bb_prior_range
        if not 0.0 < plo <= phi:
            raise ValueError(f"bb_prior_range must be positive and ordered, got {self.bb_prior_range}")
        if self.noise_kappa <= 0.0:
            raise ValueError("noise_kappa must be positive (inf for no noise)")
        if self.fit_budget < 0:
            raise ValueError("fit_budget must be >= 0")
        if self.cell_budget_s <= 0.0:
            raise ValueError("cell_budget_s must be positive")
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be None or >= 1")


@dataclass(frozen=True, slots=True)
class SimulatedDataset:
    """One synthetic campaign with its ground truth attached.

    true_probs rows follow the fixed component order (p00, p10, p01,
    p11) and satisfy the marginal identities against true_scores by
    construction.  observed_scores holds the noised latent scores of the
    bivariate-beta process; it is None for the Gaussian process, where
    scores come from a trained uplift model instead.
    """

    features: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    true_scores: np.ndarray
    true_probs: np.ndarray
    population: CounterfactualProbs
    observed_scores: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = self.treatment.shape[0]
        if self.features.shape[0] != n or self.outcome.shape[0] != n:
            raise ValueError("features, treatment, outcome must share their first dimension")
        if self.true_scores.shape != (n, 2) or self.true_probs.shape != (n, 4):
            raise ValueError("ground-truth arrays have inconsistent shapes")
        drift0 = np.abs(self.true_probs[:, 1] + self.true_probs[:, 3] - self.true_scores[:, 0])
        drift1 = np.abs(self.true_probs[:, 2] + self.true_probs[:, 3] - self.true_scores[:, 1])
        if max(drift0.max(initial=0.0), drift1.max(initial=0.0)) > 1e-9:
            raise ValueError("ground-truth probs do not match ground-truth scores")

    @property
    def n(self) -> int:
        return self.treatment.shape[0]

    @property
    def records(self) -> list[CampaignRecord]:
        """Materialize the sample as campaign records (built on demand)."""
        return [
            CampaignRecord(self.features[i], int(self.treatment[i]), int(self.outcome[i]))
            for i in range(self.n)
        ]

    def record_truth(self, i: int) -> tuple[Scores, CounterfactualProbs]:
        z = self.true_scores[i]
        p = self.true_probs[i]
        return Scores(float(z[0]), float(z[1])), CounterfactualProbs(*map(float, p))


# Gauss-Hermite nodes for averaging a sigmoid over a normal index; 64
# nodes hold the rate calibration well below the 1e-12 brentq tolerance.
_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(64)
_GH_W = _GH_W / _GH_W.sum()


def _mean_rate(offset: float, scale: float) -> float:
    return float(_GH_W @ (1.0 / (1.0 + np.exp(-(scale * _GH_X + offset)))))


def _offset_for_rate(rate: float, scale: float) -> float:
    """Intercept at which the population outcome rate equals rate."""
    return brentq(lambda c: _mean_rate(c, scale) - rate, -12.0, 12.0, xtol=1e-12)


def _joint_p11(z0: np.ndarray, z1: np.ndarray, copula: str, rho: float) -> np.ndarray:
    if copula == "independent":
        return z0 * z1
    if copula == "comonotone":
        return np.minimum(z0, z1)
    if rho >= 1.0:
        return np.minimum(z0, z1)
    if rho <= -1.0:
        return np.maximum(0.0, z0 + z1 - 1.0)
    if rho == 0.0:
        return z0 * z1
    grid = np.column_stack([norm.ppf(z0), norm.ppf(z1)])
    bvn = multivariate_normal(mean=[0.0, 0.0], cov=[[1.0, rho], [rho, 1.0]])
    return np.asarray(bvn.cdf(grid), dtype=float)


def _draw_joint_outcomes(
    z0: np.ndarray, z1: np.ndarray, copula: str, rho: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Potential outcome pairs whose joint law matches _joint_p11."""
    n = z0.shape[0]
    if copula == "independent" or (copula == "gaussian-copula" and rho == 0.0):
        u = rng.random((n, 2))
        return (u[:, 0] < z0).astype(np.int8), (u[:, 1] < z1).astype(np.int8)
    if copula == "comonotone" or (copula == "gaussian-copula" and rho >= 1.0):
        u = rng.random(n)
        return (u < z0).astype(np.int8), (u < z1).astype(np.int8)
    if copula == "gaussian-copula" and rho <= -1.0:
        u = rng.random(n)
        return (u < z0).astype(np.int8), (1.0 - u < z1).astype(np.int8)
    e = rng.standard_normal((n, 2))
    g0 = e[:, 0]
    g1 = rho * e[:, 0] + np.sqrt(1.0 - rho * rho) * e[:, 1]
    return (g0 < norm.ppf(z0)).astype(np.int8), (g1 < norm.ppf(z1)).astype(np.int8)


def _probs_from_scores_p11(z0: np.ndarray, z1: np.ndarray, p11: np.ndarray) -> np.ndarray:
    return np.stack([1.0 - z0 - z1 + p11, z0 - p11, z1 - p11, p11], axis=1)


def gen_gaussian(cfg: SimConfig, seed) -> SimulatedDataset:
    """One repetition of the Gaussian outcome-model process.

    Both arms share the linear index w.x: the control arm converts it to
    an outcome probability through sigmoid(w.x + c0) and the treated arm
    through sigmoid(w.x + c1) with c1 < c0, so treatment lowers every
    record's outcome probability and the uplift signal is carried by the
    intercept gap.  The per-repetition draws happen in a fixed order
    (rates, weights, features, outcome noise, assignment), which is part
    of the reproducibility contract.

    The weight vector is drawn from N(0, 1/n) and redrawn until its norm
    falls inside cfg.weight_norm_range; without the window, near-zero
    draws produce score distributions too narrow for any moment fit to
    see.  Intercepts are calibrated against the realized weight norm so
    the population outcome rates land exactly on the drawn targets.
    """
    rng = np.random.default_rng(seed)
    n, d = cfg.n_samples, cfg.n_features
    r0 = rng.uniform(*cfg.rate_range)
    gap = rng.uniform(*cfg.rate_gap_range)
    wlo, whi = cfg.weight_norm_range
    while True:
        w = rng.normal(0.0, 1.0 / np.sqrt(d), d)
        if wlo <= float(np.linalg.norm(w)) <= whi:
            break
    scale = float(np.linalg.norm(w))
    c0 = _offset_for_rate(r0, scale)
    c1 = _offset_for_rate(r0 - gap, scale)
    x = rng.normal(0.0, 1.0, (n, d))
    index = x @ w
    z0 = 1.0 / (1.0 + np.exp(-(index + c0)))
    z1 = 1.0 / (1.0 + np.exp(-(index + c1)))
    p11 = _joint_p11(z0, z1, cfg.copula, cfg.rho)
    probs = _probs_from_scores_p11(z0, z1, p11)
    y0, y1 = _draw_joint_outcomes(z0, z1, cfg.copula, cfg.rho, rng)
    t = rng.integers(0, 2, n).astype(np.int8)
    y = np.where(t == 0, y0, y1).astype(np.int8)
    return SimulatedDataset(
        features=x,
        treatment=t,
        outcome=y,
        true_scores=np.stack([z0, z1], axis=1),
        true_probs=probs,
        population=CounterfactualProbs(*probs.mean(axis=0)),
    )


def gen_bb(cfg: SimConfig, seed) -> SimulatedDataset:
    """One repetition of the bivariate-beta process.

    Each record's composition comes straight from the latent Dirichlet
    prior, its outcome pair from one categorical draw over the four
    joint cells, and its observed scores from mean-preserving beta noise
    around the latent ones.  There are no covariates; the noised scores
    take the place of model predictions downstream.  The population
    truth is the prior mean m/M rather than the sample average, matching
    how the fitted models are scored at the population level.
    """
    rng = np.random.default_rng(seed)
    n = cfg.n_samples
    m = cfg.bb_m
    if m is None:
        lo, hi = cfg.bb_prior_range
        m = BBParams(*rng.uniform(lo, hi, 4))
    probs = rng.dirichlet(m.as_array(), size=n)
    cats = (rng.random(n)[:, None] > probs.cumsum(axis=1)).sum(axis=1)
    y0 = ((cats == 1) | (cats == 3)).astype(np.int8)
    y1 = ((cats == 2) | (cats == 3)).astype(np.int8)
    z0 = probs[:, 1] + probs[:, 3]
    z1 = probs[:, 2] + probs[:, 3]
    observed = np.stack(
        [beta_noise(z0, cfg.noise_kappa, rng), beta_noise(z1, cfg.noise_kappa, rng)],
        axis=1,
    )
    t = rng.integers(0, 2, n).astype(np.int8)
    y = np.where(t == 0, y0, y1).astype(np.int8)
    return SimulatedDataset(
        features=np.zeros((n, 0)),
        treatment=t,
        outcome=y,
        true_scores=np.stack([z0, z1], axis=1),
        true_probs=probs,
        population=CounterfactualProbs(*(m.as_array() / m.total)),
        observed_scores=observed,
    )


def squared_error(est: CounterfactualProbs, truth: CounterfactualProbs) -> float:
    """Mean over the four components of the squared estimation error."""
    diff = np.asarray(est.as_tuple()) - np.asarray(truth.as_tuple())
    return float(np.mean(diff * diff))


@dataclass(frozen=True, slots=True)
class CellResult:
    """One estimator-by-level cell of the report."""

    status: str  # "ok" | "skipped" | "failed"
    mean: float | None = None
    std: float | None = None
    per_rep: tuple[float, ...] = ()
    runtime_s: float = 0.0
    message: str | None = None


@dataclass(frozen=True, slots=True)
class ExperimentReport:
    """Aggregated squared-error statistics for one simulated experiment.

    Wall-clock runtimes are carried for inspection but are not part of
    the report's reproducible content; serializers are expected to leave
    them out when byte-stable output matters.
    """

    dgp: str
    n_samples: int
    repetitions: int
    cells: dict[tuple[str, str], CellResult] = field(default_factory=dict)

    def cell(self, estimator: str, level: str) -> CellResult:
        return self.cells[(estimator, level)]


# Rough per-record cost model (seconds) behind the skip decision, sized
# on a development box.  Only the ratios against cell_budget_s matter,
# and the one decision that hinges on them at the default budget (the
# noisy-family individual cells, ~50 ms per record against everything
# else at well under a millisecond) has orders of magnitude of slack.
_COST_BASELINE = 2e-8
_COST_MOMENT_FIT = 5e-8
_COST_GD_EVAL = 6e-9  # per likelihood evaluation per quadrature node
_COST_SEGMENT_NODE = 2.2e-10  # noiseless posterior, per node
_COST_NOISY_DRAW = 5e-7  # noisy posterior, per importance draw


def _nominal_rep_seconds(estimator: str, level: str, cfg: SimConfig) -> float:
    """Estimated cost of one repetition of one cell, for budget gating."""
    n = cfg.n_samples
    if estimator in ("independence", "midpoint"):
        return _COST_BASELINE * n
    if level == "population":
        if estimator in ("bb", "nbb"):
            return _COST_MOMENT_FIT * n
        evals = max(cfg.fit_budget, 1)
        return _COST_GD_EVAL * evals * FitConfig().quadrature_nodes * n
    if estimator in _NOISY_FAMILIES:
        return _COST_NOISY_DRAW * QuadratureConfig().mc_budget * n
    return _COST_SEGMENT_NODE * QuadratureConfig().nodes * n


def _active_cells(cfg: SimConfig) -> set[tuple[str, str]]:
    active: set[tuple[str, str]] = set()
    for est in ESTIMATORS:
        pop_cost = _nominal_rep_seconds(est, "population", cfg)
        ind_cost = _nominal_rep_seconds(est, "individual", cfg)
        if est in _MODEL_FAMILIES and pop_cost > cfg.cell_budget_s:
            # With the population cell out, the individual cell would pay
            # for the family's fit on its own.
            ind_cost += pop_cost
        if pop_cost <= cfg.cell_budget_s:
            active.add((est, "population"))
        if ind_cost <= cfg.cell_budget_s:
            active.add((est, "individual"))
    return active


def _mean_individual_error(est: np.ndarray, truth: np.ndarray) -> float:
    diff = est - truth
    return float(np.mean(diff * diff))


def _individual_from_p11(z0: np.ndarray, z1: np.ndarray, p11: np.ndarray) -> np.ndarray:
    lo = np.maximum(0.0, z0 + z1 - 1.0)
    hi = np.minimum(z0, z1)
    pinned = np.clip(p11, lo, hi)
    return np.maximum(_probs_from_scores_p11(z0, z1, pinned), 0.0)


def _rep_cells(
    cfg: SimConfig,
    ds: SimulatedDataset,
    scores: np.ndarray,
    active: set[tuple[str, str]],
) -> dict[tuple[str, str], tuple[float, float] | CounterliftError]:
    """All active cell values for one repetition, as (error, seconds).

    A fitting or inference failure is recorded under the affected
    family's cells instead of propagating, so one misbehaving estimator
    cannot take the rest of the repetition down with it.
    """
    out: dict[tuple[str, str], tuple[float, float] | CounterliftError] = {}
    z0 = np.clip(scores[:, 0], 1e-9, 1.0 - 1e-9)
    z1 = np.clip(scores[:, 1], 1e-9, 1.0 - 1e-9)
    truth = ds.true_probs
    q = QuadratureConfig()

    mean_scores = Scores(float(z0.mean()), float(z1.mean()))
    for name, estimate in (
        ("independence", independence_estimate),
        ("midpoint", midpoint_estimate),
    ):
        if (name, "population") in active:
            t0 = time.perf_counter()
            err = squared_error(estimate(mean_scores), ds.population)
            out[(name, "population")] = (err, time.perf_counter() - t0)
        if (name, "individual") in active:
            t0 = time.perf_counter()
            if name == "independence":
                est = _individual_from_p11(z0, z1, z0 * z1)
            else:
                lo = np.maximum(0.0, z0 + z1 - 1.0)
                est = _individual_from_p11(z0, z1, 0.5 * (lo + np.minimum(z0, z1)))
            out[(name, "individual")] = (
                _mean_individual_error(est, truth),
                time.perf_counter() - t0,
            )

    sample = ScoreSample.from_arrays(z0.copy(), z1.copy())
    fit_cfg = FitConfig(
        optimizer_budget=cfg.fit_budget,
        kappa=cfg.noise_kappa if cfg.dgp == "bivariate-beta" else None,
    )
    fitters = {
        "bb": lambda: LatentModel("bb", fit_bb_mom(sample, fit_cfg)),
        "nbb": lambda: fit_nbb(sample, fit_cfg),
        "gbb": lambda: LatentModel("gbb", fit_gbb(sample, fit_cfg)),
        "ngbb": lambda: fit_ngbb(sample, fit_cfg),
    }
    for family in _MODEL_FAMILIES:
        pop_key = (family, "population")
        ind_key = (family, "individual")
        if pop_key not in active and ind_key not in active:
            continue
        try:
            t0 = time.perf_counter()
            model = fitters[family]()
            fit_seconds = time.perf_counter() - t0
            if pop_key in active:
                t0 = time.perf_counter()
                err = squared_error(population_estimate(model), ds.population)
                out[pop_key] = (err, fit_seconds + time.perf_counter() - t0)
            if ind_key in active:
                t0 = time.perf_counter()
                if family in _NOISY_FAMILIES:
                    rows = np.empty((ds.n, 4))
                    for i in range(ds.n):
                        res = posterior_mean_noisy(
                            model, Scores(float(z0[i]), float(z1[i])), q
                        )
                        rows[i] = res.mean.as_tuple()
                    err = _mean_individual_error(rows, truth)
                else:
                    p11, _, _ = _posterior_p11_batch(model, z0, z1, q)
                    err = _mean_individual_error(_individual_from_p11(z0, z1, p11), truth)
                out[ind_key] = (err, time.perf_counter() - t0)
        except CounterliftError as exc:
            for key in (pop_key, ind_key):
                if key in active and key not in out:
                    out[key] = exc
    return out


def _run_repetition(
    cfg: SimConfig, child: np.random.SeedSequence, active: set[tuple[str, str]]
) -> dict[tuple[str, str], tuple[float, float] | CounterliftError]:
    data_seed, learner_seed = child.spawn(2)
    rng = np.random.default_rng(data_seed)
    try:
        if cfg.dgp == "gaussian":
            ds = gen_gaussian(cfg, rng)
            learner_cfg = UpliftConfig(seed=int(learner_seed.generate_state(1)[0] % 2**31))
            model = train_tlearner_arrays(ds.features, ds.treatment, ds.outcome, cfg=learner_cfg)
            scores = predict_scores_batch(model, ds.features)
        else:
            ds = gen_bb(cfg, rng)
            scores = ds.observed_scores
        return _rep_cells(cfg, ds, scores, active)
    except CounterliftError as exc:
        # Data generation or score prediction failed, so no cell can be
        # computed for this repetition at all.
        return {key: exc for key in active}


def run_experiment(cfg: SimConfig = SimConfig()) -> ExperimentReport:
    """Run the full repeated experiment described by cfg.

    Repetitions execute concurrently on a thread pool, each from its own
    spawned seed, and results are aggregated in repetition order so the
    report is a pure function of the config no matter how many workers
    ran.  Fitting clamp warnings are routine on strongly dependent data
    (the moment inversion pins tiny components at the floor) and are
    suppressed for the duration of the run.
    """
    active = _active_cells(cfg)
    children = np.random.SeedSequence(cfg.master_seed).spawn(cfg.repetitions)
    workers = cfg.threads or min(cfg.repetitions, os.cpu_count() or 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClampWarning)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(_run_repetition, cfg, child, active) for child in children
                ]
                rep_results = [f.result() for f in futures]
        else:
            rep_results = [_run_repetition(cfg, child, active) for child in children]

    cells: dict[tuple[str, str], CellResult] = {}
    for est in ESTIMATORS:
        for level in LEVELS:
            key = (est, level)
            if key not in active:
                cells[key] = CellResult(status="skipped")
                continue
            failure = next(
                (r[key] for r in rep_results if isinstance(r[key], CounterliftError)),
                None,
            )
            if failure is not None:
                cells[key] = CellResult(status="failed", message=str(failure))
                continue
            values = tuple(float(r[key][0]) for r in rep_results)
            seconds = float(sum(r[key][1] for r in rep_results))
            arr = np.array(values)
            cells[key] = CellResult(
                status="ok",
                mean=float(arr.mean()),
                std=float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
                per_rep=values,
                runtime_s=seconds,
            )
    return ExperimentReport(
        dgp=cfg.dgp,
        n_samples=cfg.n_samples,
        repetitions=cfg.repetitions,
        cells=cells,
    )
