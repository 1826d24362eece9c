"""Exponential decay-rate fitting over an h-ladder.

The central judgement everywhere in this package is whether a magnitude
sequence g(h) over a ladder behaves like C * exp(-delta/h) with delta > 0.
``fit_decay`` makes that call and returns a ``DecayFit`` with a verdict.

The rate estimate is the h -> 0 extrapolation of the local slopes

    delta_k = -(log g_k+1 - log g_k) / (1/h_k+1 - 1/h_k)

fitted linearly against the geometric-mean scale of each rung pair.  For a
pure exponential the slopes are constant and the intercept is exact; for a
polynomially bounded family (g ~ h^p) the slopes are proportional to h and
extrapolate to zero, so such families are never classified exponentially
small regardless of the ladder.  A raw least-squares slope of log g against
-1/h would instead report a spurious positive rate of order p*h_mean.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = ["DecayFit", "DecayThresholds", "fit_decay", "weighted_sup"]

#: delta below which a fitted rate does not count as exponential smallness.
#: An artifact convention (no finite computation can certify delta > 0
#: exactly); recorded in every serialized fit.
DELTA_MIN_DEFAULT = 0.05
RHO_MIN_DEFAULT = 0.98

EXP_SMALL = "EXP_SMALL"
NOT_EXP_SMALL = "NOT_EXP_SMALL"
INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class DecayThresholds:
    delta_min: float = DELTA_MIN_DEFAULT
    rho_min: float = RHO_MIN_DEFAULT


@dataclass(frozen=True)
class DecayFit:
    """Result of fitting |g(h)| ~ C exp(-delta/h).

    delta_hat   fitted rate (per unit 1/h), >= 0; +inf when every sample
                sits at the numerical floor.
    log_c_hat   fitted log-prefactor.
    r_squared   R^2 of the plain linear fit of log|g| against -1/h.
    verdict     EXP_SMALL / NOT_EXP_SMALL / INCONCLUSIVE.
    n_used      rungs that entered the fit (above the underflow floor).
    n_underflow rungs excluded as underflow (counted as smallness evidence).
    n_trimmed   largest-h rungs dropped as pre-asymptotic transient.
    """

    delta_hat: float
    log_c_hat: float
    r_squared: float
    verdict: str
    n_used: int = 0
    n_underflow: int = 0
    delta_min: float = DELTA_MIN_DEFAULT
    rho_min: float = RHO_MIN_DEFAULT
    n_trimmed: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "delta_hat": self.delta_hat,
                "log_c_hat": self.log_c_hat,
                "r_squared": self.r_squared,
                "verdict": self.verdict,
                "n_used": self.n_used,
                "n_underflow": self.n_underflow,
                "delta_min": self.delta_min,
                "rho_min": self.rho_min,
                "n_trimmed": self.n_trimmed,
            }
        )

    @staticmethod
    def from_json(s: str) -> "DecayFit":
        return DecayFit(**json.loads(s))


def _r_squared(y: np.ndarray, x: np.ndarray) -> tuple:
    """OLS fit y = a + b x; returns (a, b, R^2).  R^2 = 1 for constant y."""
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    if ss_tot < 1e-28:
        return coef[0], coef[1], 1.0 if ss_res < 1e-26 else 0.0
    return coef[0], coef[1], 1.0 - ss_res / ss_tot


def _local_slope_intercept(h: np.ndarray, logm: np.ndarray) -> float:
    """h->0 extrapolation of local decay slopes (weighted by span of 1/h)."""
    inv = 1.0 / h
    dinv = np.diff(inv)
    slopes = -np.diff(logm) / dinv
    hbar = np.sqrt(h[:-1] * h[1:])
    w = dinv**2
    A = np.column_stack([np.ones_like(hbar), hbar])
    AtW = A.T * w
    try:
        coef = np.linalg.solve(AtW @ A, AtW @ slopes)
    except np.linalg.LinAlgError:
        return float(np.average(slopes, weights=w))
    return float(coef[0])


def fit_decay(
    samples,
    delta_min: float = DELTA_MIN_DEFAULT,
    rho_min: float = RHO_MIN_DEFAULT,
    noise_floor: float = 0.0,
) -> DecayFit:
    """Classify a magnitude sequence over an h-ladder.

    ``samples`` is an iterable of (h, magnitude) with distinct positive h
    and finite magnitudes >= 0.  ``noise_floor`` is an absolute magnitude
    below which values are attributed to quadrature noise; like underflow,
    such rungs are excluded from the fit but count as smallness evidence
    (genuinely exponentially small data hits the floor quickly, and
    discarding it silently would bias toward INCONCLUSIVE).
    """
    pairs = [(float(h), float(m)) for h, m in samples]
    if len(pairs) < 8:
        raise ValueError("need at least 8 samples")
    h = np.array([p[0] for p in pairs])
    m = np.array([p[1] for p in pairs])
    if np.any(~np.isfinite(h)) or np.any(~np.isfinite(m)):
        raise ValueError("non-finite input")
    if np.any(h <= 0) or len(set(h.tolist())) != len(h):
        raise ValueError("h values must be positive and distinct")
    if np.any(m < 0):
        raise ValueError("magnitudes must be >= 0")

    order = np.argsort(-h)  # decreasing h
    h, m = h[order], m[order]

    m_max = float(m.max())
    if m_max == 0.0:
        return DecayFit(math.inf, -math.inf, 1.0, EXP_SMALL, 0, len(m), delta_min, rho_min)

    floor = max(100.0 * np.finfo(float).eps * m_max, noise_floor)
    keep = m > floor
    n_under = int(np.count_nonzero(~keep))

    if np.count_nonzero(keep) < 5:
        # Underflow envelope: observing m(h) <= floor forces
        # delta >= h * log(m_max / floor) if the family obeys C e^{-d/h}.
        h_under = h[~keep]
        delta_env = float(np.max(h_under) * np.log(m_max / floor)) if h_under.size else math.inf
        return DecayFit(
            delta_env, float(np.log(m_max)), 1.0, EXP_SMALL, int(np.count_nonzero(keep)),
            n_under, delta_min, rho_min,
        )

    hk, logm = h[keep], np.log(m[keep])

    # Sup-type sequences cross over between competing exponential branches;
    # discard largest-h rungs while doing so improves the linear fit, so the
    # fit sees the asymptotic branch.  At least 8 rungs always remain.
    best_t, best_r2 = 0, -np.inf
    for t in range(0, max(1, hk.size - 8 + 1)):
        _, _, r2_t = _r_squared(np.log(m[keep][t:]), -1.0 / hk[t:])
        if r2_t > best_r2 + 1e-12:
            best_t, best_r2 = t, r2_t
    n_trimmed = best_t
    hk, logm = hk[best_t:], logm[best_t:]
    inv = 1.0 / hk

    _, slope_exp, r2_exp = _r_squared(logm, -inv)
    _, _, r2_poly = _r_squared(logm, np.log(hk))

    delta_hat = max(0.0, _local_slope_intercept(hk, logm))
    log_c_hat = float(np.mean(logm + delta_hat * inv))

    underflow_support = n_under > 0
    if delta_hat >= delta_min and (r2_exp >= rho_min or underflow_support):
        verdict = EXP_SMALL
    elif delta_hat < delta_min / 2 and r2_poly >= r2_exp - 1e-12 and not underflow_support:
        verdict = NOT_EXP_SMALL
    else:
        verdict = INCONCLUSIVE

    return DecayFit(
        delta_hat, log_c_hat, float(r2_exp), verdict,
        int(hk.size), n_under, delta_min, rho_min, n_trimmed,
    )


def weighted_sup(family, h: float, region, weight_power: int = 0) -> float:
    """sup over the region's grid nodes of (1 + |x|^2)^N |f(h, x)|.

    ``region`` must be contained in the family's support box.
    """
    if weight_power < 0:
        raise ValueError("weight_power must be >= 0")
    if not family.support_box.contains_box(region):
        raise ValueError("region must be contained in the support box")
    if np.any(region.widths < 0) or region.dim != family.dim:
        raise ValueError("empty or mismatched region")
    step = family.grid_step(h)
    axes = region.grid(step)
    if family.dim == 1:
        pts = axes[0]
        w = (1.0 + pts**2) ** weight_power
        vals = np.abs(family(h, pts))
    else:
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        w = (1.0 + np.sum(pts**2, axis=1)) ** weight_power
        vals = np.abs(family(h, pts))
    return float(np.max(w * vals))
