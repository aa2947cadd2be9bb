"""Quadrature rules on (0, 1) and the Frechet-segment integrator.

The posterior over p11 given a score pair lives on a segment whose
endpoints force one joint-probability component to zero, so integrands can
carry integrable power singularities x^(a-1) at both ends, with a as small
as the fitting clamp allows (1e-3 or so).  The default rule is a tanh-sinh
(double-exponential) scheme whose nodes approach the endpoints closely
enough to resolve such spikes; a composite Gauss-Legendre rule is
available for smooth cases.

Node positions are kept in two forms: as values (x and 1 - x separately,
avoiding cancellation) and as logarithms of the distance to each endpoint.
The log forms stay exact far beyond the point where the values round to 0
or 1, which is what lets the tanh-sinh range run wide enough to shrink the
truncated tail of an x^(a-1) spike below any reported tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import logsumexp

RULE_TAGS = ("tanh-sinh", "gauss-legendre")

# Half-width of the tanh-sinh node range in the transform variable.  The
# truncated tail of an endpoint spike x^(a-1) weighs about
# exp(-pi*a*sinh(T)); at T = 10 that is below 1e-14 even for a = 1e-3.
# The nodes this deep are handled in log space, so the value range of
# float64 is not a constraint.
_T_MAX = 10.0


@dataclass(frozen=True)
class QuadRule:
    """Nodes and log weights for integrating over the open interval (0, 1).

    x and xc hold the node positions measured from each endpoint (xc is
    1 - x without cancellation); log_x and log_xc hold their logarithms,
    exact even where the values themselves round to 0 or 1.  half is an
    embedded coarser rule used for error estimates.
    """

    x: np.ndarray
    xc: np.ndarray
    log_x: np.ndarray
    log_xc: np.ndarray
    log_w: np.ndarray
    half: "QuadRule | None"

    @property
    def n_nodes(self) -> int:
        return self.x.size


def _log_cosh(u: np.ndarray) -> np.ndarray:
    a = np.abs(u)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def _log_sigmoid(v: np.ndarray) -> np.ndarray:
    return np.minimum(v, 0.0) - np.log1p(np.exp(-np.abs(v)))


def _tanh_sinh_arrays(
    k: int, h: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    t = h * np.arange(-k, k + 1)
    u = 0.5 * math.pi * np.sinh(t)
    # x = (1 + tanh u) / 2 is the logistic function of 2u; evaluating both
    # tails through the logistic keeps tiny endpoint distances exact.
    with np.errstate(over="ignore"):
        x = 1.0 / (1.0 + np.exp(-2.0 * u))
        xc = 1.0 / (1.0 + np.exp(2.0 * u))
    log_x = _log_sigmoid(2.0 * u)
    log_xc = _log_sigmoid(-2.0 * u)
    log_w = math.log(h) + math.log(math.pi / 4.0) + _log_cosh(t) - 2.0 * _log_cosh(u)
    return x, xc, log_x, log_xc, log_w


def _tanh_sinh_rule(n_nodes: int) -> QuadRule:
    k = max(4, (n_nodes - 1) // 2)
    if k % 2:
        k += 1
    h = _T_MAX / k
    half = QuadRule(*_tanh_sinh_arrays(k // 2, 2.0 * h), None)
    return QuadRule(*_tanh_sinh_arrays(k, h), half)


def _gauss_legendre_arrays(
    panels: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(16)
    edges = np.linspace(0.0, 1.0, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    scale = 0.5 * (edges[1] - edges[0])
    x = (mid[:, None] + scale * nodes[None, :]).ravel()
    xc = 1.0 - x
    w = np.broadcast_to(scale * weights[None, :], (panels, 16)).ravel()
    return x, xc, np.log(x), np.log(xc), np.log(w)


def _gauss_legendre_rule(n_nodes: int) -> QuadRule:
    panels = max(1, round(n_nodes / 16))
    half = QuadRule(*_gauss_legendre_arrays(max(1, panels // 2)), None)
    return QuadRule(*_gauss_legendre_arrays(panels), half)


@lru_cache(maxsize=32)
def get_rule(tag: str, n_nodes: int) -> QuadRule:
    """Build (or fetch a cached copy of) a quadrature rule.

    ``tag`` is one of RULE_TAGS; ``n_nodes`` is a target node budget, which
    the construction may round slightly to keep the rule symmetric.
    """
    if tag == "tanh-sinh":
        return _tanh_sinh_rule(n_nodes)
    if tag == "gauss-legendre":
        return _gauss_legendre_rule(n_nodes)
    raise ValueError(f"unknown quadrature rule {tag!r}")


def segment_nodes(
    z0: np.ndarray, z1: np.ndarray, rule: QuadRule
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Joint-probability components along each row's Frechet segment.

    Parameters
    ----------
    z0, z1 : arrays of shape (N,)
        Score pairs; rows with a degenerate segment are the caller's
        business (their width comes back as 0 and the components sit at
        the forced point).
    rule : QuadRule

    Returns
    -------
    comps : array of shape (N, K, 4)
        Components (p00, p10, p01, p11) at each node.
    log_comps : array of shape (N, K, 4)
        Logs of the same components.  For the components that vanish at a
        segment endpoint these come from the rule's log-distance arrays,
        so they remain exact where the values underflow.
    p11 : array of shape (N, K)
    width : array of shape (N,)

    Every component is assembled as "value at the nearer segment endpoint
    plus a nonnegative increment", which keeps the small components exact
    near the endpoints instead of losing them to cancellation.
    """
    z0 = np.asarray(z0, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    lower = np.maximum(0.0, z0 + z1 - 1.0)
    upper = np.minimum(z0, z1)
    width = upper - lower
    x = rule.x[None, :]
    xc = rule.xc[None, :]
    wid = width[:, None]
    p11 = lower[:, None] + wid * x
    p10 = (z0 - upper)[:, None] + wid * xc
    p01 = (z1 - upper)[:, None] + wid * xc
    p00 = np.maximum(1.0 - z0 - z1, 0.0)[:, None] + wid * x
    comps = np.stack([p00, p10, p01, p11], axis=-1)

    base = np.stack(
        [np.maximum(1.0 - z0 - z1, 0.0), z0 - upper, z1 - upper, lower],
        axis=-1,
    )
    log_node = np.stack(
        [rule.log_x, rule.log_xc, rule.log_xc, rule.log_x], axis=-1
    )
    with np.errstate(divide="ignore"):
        log_width = np.log(width)
        log_plain = np.log(comps)
    log_comps = np.where(
        (base == 0.0)[:, None, :],
        log_width[:, None, None] + log_node[None, :, :],
        log_plain,
    )
    return comps, log_comps, p11, width


def segment_integrals(
    log_pdf_nodes: Callable[[np.ndarray, np.ndarray], np.ndarray],
    z0: np.ndarray,
    z1: np.ndarray,
    rule: QuadRule,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate a latent composition density along each Frechet segment.

    For each score pair the integrand is the composition density evaluated
    at probs_from_p11(scores, p11), as a function of p11 over the segment.
    ``log_pdf_nodes`` receives the node components and their logs (from
    segment_nodes) and returns the log density per node.

    Returns
    -------
    log_evidence : (N,) array
        Log of the integral; -inf where the segment is degenerate.
    mean_p11 : (N,) array
        The density-weighted mean of p11; on degenerate segments, the
        forced point.
    """
    z0 = np.asarray(z0, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    lower = np.maximum(0.0, z0 + z1 - 1.0)
    width = np.minimum(z0, z1) - lower
    log_evidence = np.full(z0.shape, -np.inf)
    mean_p11 = lower.copy()
    live = width > 0.0
    if not np.any(live):
        return log_evidence, mean_p11
    comps, log_comps, p11, live_width = segment_nodes(z0[live], z1[live], rule)
    log_f = log_pdf_nodes(comps, log_comps) + rule.log_w[None, :]
    log_f = np.where(np.isfinite(log_f), log_f, -np.inf)
    log_norm = logsumexp(log_f, axis=1)
    safe_norm = np.where(np.isfinite(log_norm), log_norm, 0.0)
    weights = np.exp(log_f - safe_norm[:, None])
    live_mean = (weights * p11).sum(axis=1)
    # A row whose density vanished at every node has no posterior to speak
    # of; fall back to the segment midpoint rather than emit garbage.
    dead = ~np.isfinite(log_norm)
    if np.any(dead):
        live_mean[dead] = (lower[live] + 0.5 * live_width)[dead]
    log_evidence[live] = log_norm + np.log(live_width)
    mean_p11[live] = live_mean
    return log_evidence, mean_p11
