"""Phase-space support estimation for h-indexed families.

A scan classifies every node of a phase window by fitting the decay of the
weighted transform magnitude max_N (1+x^2+xi^2)^N |T_h u(x,xi)| over a
ladder.  The complement of the EXP_SMALL region is the numerical estimate
of where the family keeps mass as h -> 0.  A uniform check instead takes
the sup over all window nodes at distance > eps from a target set K before
fitting, which is the stronger, tail-sensitive notion.

Only finitely many weight powers can be tested; the set used is recorded
in the result metadata rather than claimed complete.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .decay import (DecayFit, DecayThresholds, EXP_SMALL, INCONCLUSIVE,
                    NOT_EXP_SMALL, fit_decay)
from .grids import Box, HLadder, SampledFamily
from .transforms import PhasePoint, fbi_forward, fbi_on_grid, window_radius

__all__ = [
    "PhaseWindow",
    "PhaseSet",
    "MicrosupportMap",
    "microsupport_scan",
    "uniform_small_check",
    "BumpFamily",
    "bump_family",
    "AnalyticMap1D",
    "pullback_family",
    "pullback_predicted_nodes",
    "product_family",
    "product_microsupport",
    "ContainmentReport",
]

#: Polynomial weights applied before fitting; three powers suffice to catch
#: polynomial growth at window scale (documented limitation).
DEFAULT_WEIGHT_POWERS = (0, 2, 4)

#: Magnitudes below this fraction of the per-rung window maximum are
#: attributed to quadrature noise and treated like underflow.
NOISE_REL = 1e-9


@dataclass(frozen=True)
class PhaseWindow:
    """Product box in R^d x R^d with scan steps."""

    box: Box  # 2d-dimensional
    x_step: float
    xi_step: float

    def __post_init__(self):
        if self.x_step <= 0 or self.xi_step <= 0:
            raise ValueError("steps must be positive")
        if self.box.dim != 2:
            raise ValueError("phase window is for d = 1 (box in R^2)")

    def axes(self):
        (xlo, klo), (xhi, khi) = self.box.lo, self.box.hi
        nx = max(2, int(round((xhi - xlo) / self.x_step)) + 1)
        nk = max(2, int(round((khi - klo) / self.xi_step)) + 1)
        return np.linspace(xlo, xhi, nx), np.linspace(klo, khi, nk)

    @property
    def cell_diag(self) -> float:
        return float(np.hypot(self.x_step, self.xi_step))


@dataclass
class PhaseSet:
    """Finite union of balls and boxes in phase space, with exact distance."""

    balls: list = field(default_factory=list)   # (center ndarray, radius)
    boxes: list = field(default_factory=list)   # (lo ndarray, hi ndarray)

    @staticmethod
    def from_points(points, radius: float = 0.0) -> "PhaseSet":
        return PhaseSet(balls=[(np.asarray(p, dtype=float), float(radius)) for p in points])

    @staticmethod
    def box(lo, hi) -> "PhaseSet":
        return PhaseSet(boxes=[(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))])

    def dist(self, pts: np.ndarray) -> np.ndarray:
        """Euclidean distance from each point to the union (exact)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.full(pts.shape[0], np.inf)
        for c, r in self.balls:
            out = np.minimum(out, np.maximum(0.0, np.linalg.norm(pts - c, axis=1) - r))
        for lo, hi in self.boxes:
            clamped = np.clip(pts, lo, hi)
            out = np.minimum(out, np.linalg.norm(pts - clamped, axis=1))
        return out

    def bounding_box(self):
        los, his = [], []
        for c, r in self.balls:
            los.append(c - r)
            his.append(c + r)
        for lo, hi in self.boxes:
            los.append(lo)
            his.append(hi)
        if not los:
            raise ValueError("empty set")
        return np.min(los, axis=0), np.max(his, axis=0)


@dataclass
class MicrosupportMap:
    """Per-node decay fits and verdicts over a phase window."""

    window: PhaseWindow
    ladder: HLadder
    xs: np.ndarray
    xis: np.ndarray
    delta: np.ndarray          # (nx, nxi)
    r_squared: np.ndarray      # (nx, nxi)
    verdicts: np.ndarray       # (nx, nxi) of str
    quality_low: bool
    weight_powers: tuple
    metadata: dict = field(default_factory=dict)

    def flagged_nodes(self):
        """(x, xi) nodes that are NOT_EXP_SMALL (mass-carrying)."""
        idx = np.argwhere(self.verdicts == NOT_EXP_SMALL)
        return [(float(self.xs[i]), float(self.xis[j])) for i, j in idx]

    def non_small_nodes(self):
        """NOT_EXP_SMALL plus INCONCLUSIVE nodes (conservative flag set)."""
        idx = np.argwhere(self.verdicts != EXP_SMALL)
        return [(float(self.xs[i]), float(self.xis[j])) for i, j in idx]

    def verdict_at(self, x: float, xi: float) -> str:
        i = int(np.argmin(np.abs(self.xs - x)))
        j = int(np.argmin(np.abs(self.xis - xi)))
        return str(self.verdicts[i, j])

    def inconclusive_fraction(self) -> float:
        return float(np.mean(self.verdicts == INCONCLUSIVE))

    def to_csv(self, path: str):
        import csv

        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "xi", "delta_hat", "r2", "verdict"])
            for i, x in enumerate(self.xs):
                for j, k in enumerate(self.xis):
                    wr.writerow([x, k, self.delta[i, j], self.r_squared[i, j],
                                 self.verdicts[i, j]])


def _weighted_mags(xs, xis, absT, powers):
    xx, kk = np.meshgrid(xs, xis, indexing="ij")
    w2 = 1.0 + xx**2 + kk**2
    best = np.zeros_like(absT)
    for n in powers:
        best = np.maximum(best, w2**n * absT)
    return best


def microsupport_scan(
    u: SampledFamily,
    window: PhaseWindow,
    ladder: HLadder,
    weight_powers: Sequence[int] = DEFAULT_WEIGHT_POWERS,
    thresholds: DecayThresholds = DecayThresholds(),
    noise_rel: float = NOISE_REL,
) -> MicrosupportMap:
    """Classify every window node by transform decay over the ladder."""
    xs, xis = window.axes()
    mags = np.empty((len(ladder), xs.size, xis.size))
    for r, h in enumerate(ladder):
        absT = np.abs(fbi_on_grid(u, xs, xis, h))
        floor = noise_rel * float(absT.max(initial=0.0))
        absT = np.where(absT > floor, absT, 0.0)
        mags[r] = _weighted_mags(xs, xis, absT, tuple(weight_powers))

    delta = np.empty((xs.size, xis.size))
    r2 = np.empty_like(delta)
    verd = np.empty(delta.shape, dtype=object)
    hs = list(ladder)
    for i in range(xs.size):
        for j in range(xis.size):
            fit = fit_decay(zip(hs, mags[:, i, j]), thresholds.delta_min,
                            thresholds.rho_min)
            delta[i, j] = fit.delta_hat
            r2[i, j] = fit.r_squared
            verd[i, j] = fit.verdict
    quality_low = float(np.mean(verd == INCONCLUSIVE)) > 0.20
    return MicrosupportMap(
        window, ladder, xs, xis, delta, r2, verd, quality_low,
        tuple(weight_powers),
        metadata={"delta_min": thresholds.delta_min, "rho_min": thresholds.rho_min,
                  "noise_rel": noise_rel},
    )


def uniform_small_check(
    u: SampledFamily,
    K: PhaseSet,
    epsilon: float,
    window: PhaseWindow,
    ladder: HLadder,
    weight_powers: Sequence[int] = DEFAULT_WEIGHT_POWERS,
    thresholds: DecayThresholds = DecayThresholds(),
    noise_rel: float = NOISE_REL,
) -> DecayFit:
    """Fit the per-rung sup of weighted magnitude over the eps-complement of K."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    lo, hi = K.bounding_box()
    wlo, whi = np.asarray(window.box.lo), np.asarray(window.box.hi)
    if np.any(lo - epsilon < wlo - 1e-12) or np.any(hi + epsilon > whi + 1e-12):
        raise ValueError("window does not contain the eps-collar of K")

    xs, xis = window.axes()
    xx, kk = np.meshgrid(xs, xis, indexing="ij")
    pts = np.column_stack([xx.ravel(), kk.ravel()])
    far = (K.dist(pts) > epsilon).reshape(xx.shape)
    if not np.any(far):
        raise ValueError("no window nodes outside the eps-collar")

    sups = []
    for h in ladder:
        absT = np.abs(fbi_on_grid(u, xs, xis, h))
        floor = noise_rel * float(absT.max(initial=0.0))
        absT = np.where(absT > floor, absT, 0.0)
        w = _weighted_mags(xs, xis, absT, tuple(weight_powers))
        sups.append(float(np.max(w[far])))
    return fit_decay(zip(list(ladder), sups), thresholds.delta_min, thresholds.rho_min)


# ---------------------------------------------------------------------------
# bump families


def _phi(t):
    out = np.zeros_like(t, dtype=float)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = _phi(t)
    b = _phi(1.0 - t)
    return a / (a + b + 1e-300)


def plateau(x, in_lo, in_hi, out_lo, out_hi):
    """C-infinity bump: 1 on [in_lo, in_hi], 0 outside [out_lo, out_hi]."""
    x = np.asarray(x, dtype=float)
    up = smoothstep((x - out_lo) / max(in_lo - out_lo, 1e-300))
    down = 1.0 - smoothstep((x - in_hi) / max(out_hi - in_hi, 1e-300))
    return up * down


POINT_GAUSSIAN = "POINT_GAUSSIAN"
PLATEAU = "PLATEAU"
TIME_STEP = "TIME_STEP"


@dataclass
class BumpFamily:
    kind: str
    params: dict
    realization: SampledFamily
    c_h: Optional[Callable[[float], float]] = None  # PLATEAU normalization


def bump_family(kind: str, params: dict, ladder: HLadder) -> BumpFamily:
    """Construct asymptotically-frequency-free cutoff families.

    POINT_GAUSSIAN: chi(x) exp(-(x-y0)^2 / 2h), chi a plateau equal to one
    near y0.  PLATEAU: mollification of a plateau bump with a cut-off
    normalized Gaussian; equals 1 on the requested interval exactly (the
    normalization and the convolution use identical quadrature nodes).
    TIME_STEP: the one-dimensional plateau construction glued to the
    constant 1 at the upper end, rescaled so the result is 1 for t >= delta
    and 0 for t <= -delta.
    """
    h_min = ladder.h_min
    if kind == POINT_GAUSSIAN:
        y0 = float(params.get("center", 0.0))
        r = float(params.get("radius", 1.0))

        def ev(h, pts):
            pts = np.asarray(pts, dtype=float)
            chi = plateau(pts, y0 - r / 2, y0 + r / 2, y0 - r, y0 + r)
            return chi * np.exp(-((pts - y0) ** 2) / (2 * h)) + 0j

        fam = SampledFamily(1, Box((y0 - r - 0.5,), (y0 + r + 0.5,)), ev,
                            grid_step_hint=r / 40.0, label="point_gaussian")
        return BumpFamily(POINT_GAUSSIAN, {"center": y0, "radius": r}, fam)

    if kind == PLATEAU:
        a, b = (float(v) for v in params.get("interval", (-1.0, 1.0)))
        # mollifier support comparable to sqrt(h_max) keeps the
        # normalization defect decaying at a resolvable rate (~ db^2/8)
        db = float(params.get("mollifier_support", 1.0))
        if db <= 0 or b < a:
            raise ValueError("need positive mollifier support and a <= b")
        # mollifier nodes: resolve the narrowest Gaussian and the cutoffs
        step = min(np.sqrt(h_min) / 6.0, db / 200.0)
        ynodes = np.arange(-db, db + step / 2, step)
        chi_tilde = plateau(ynodes, -db / 2, db / 2, -db, db)
        wq = np.ones_like(ynodes)
        wq[0] = wq[-1] = 0.5
        wq = wq * step

        def c_of_h(h: float) -> float:
            g = (2 * np.pi * h) ** (-0.5) * np.exp(-(ynodes**2) / (2 * h))
            return float(np.sum(chi_tilde * g * wq))

        def ev(h, pts):
            pts = np.atleast_1d(np.asarray(pts, dtype=float))
            g = (2 * np.pi * h) ** (-0.5) * np.exp(-(ynodes**2) / (2 * h))
            core = chi_tilde * g * wq
            # b is 1 on [a-db, b+db], 0 outside [a-2db, b+2db]
            bvals = plateau(pts[:, None] - ynodes[None, :], a - db, b + db,
                            a - 2 * db, b + 2 * db)
            return (bvals @ core) / c_of_h(h) + 0j

        box = Box((a - 3 * db - 0.5,), (b + 3 * db + 0.5,))
        fam = SampledFamily(1, box, ev, grid_step_hint=db / 50.0, label="plateau_bump")
        return BumpFamily(PLATEAU, {"interval": (a, b), "mollifier_support": db},
                          fam, c_h=c_of_h)

    if kind == TIME_STEP:
        d_req = float(params.get("delta", 1.0))
        t_max = float(params.get("t_max", 6.0 * d_req))
        if d_req <= 0:
            raise ValueError("delta must be positive")
        base = bump_family(PLATEAU, {"interval": (0.0, 1.0),
                                     "mollifier_support": 1.0 / 3.0}, ladder)

        def ev(h, pts):
            pts = np.atleast_1d(np.asarray(pts, dtype=float))
            xs = pts / d_req
            out = np.ones(xs.size, dtype=complex)
            low = xs <= 1.0
            if np.any(low):
                out[low] = base.realization(h, xs[low])
            return out

        box = Box((-1.5 * d_req,), (t_max,))
        fam = SampledFamily(1, box, ev, grid_step_hint=d_req / 50.0, label="time_step")
        return BumpFamily(TIME_STEP, {"delta": d_req, "t_max": t_max}, fam)

    raise ValueError(f"unknown bump kind {kind!r}")


# ---------------------------------------------------------------------------
# pullbacks and products


@dataclass(frozen=True)
class AnalyticMap1D:
    """Closed-form map R -> R with closed-form derivative."""

    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    label: str = ""


def pullback_family(u: SampledFamily, F: AnalyticMap1D, chi: BumpFamily) -> SampledFamily:
    """chi_h(x) * u_h(F(x)); defined where chi's support maps into u's box."""
    if u.dim != 1:
        raise NotImplementedError("pullbacks are d = 1")
    box = chi.realization.support_box
    test = np.linspace(box.lo[0], box.hi[0], 64)
    fx = np.asarray(F.f(test), dtype=float)
    if np.any(fx < u.support_box.lo[0]) or np.any(fx > u.support_box.hi[0]):
        raise ValueError("map image leaves the support box of u on supp(chi)")

    def ev(h, pts):
        pts = np.atleast_1d(np.asarray(pts, dtype=float))
        return chi.realization(h, pts) * u(h, np.asarray(F.f(pts), dtype=float))

    fam = SampledFamily(1, box, ev,
                        grid_step_hint=chi.realization.grid_step_hint,
                        label=f"pullback[{F.label}]")
    # oscillation of u(F(x)) in x is |dF| * (u's frequency)
    dmax = float(np.max(np.abs(F.df(test))))
    fam.osc_freq_over_h = dmax * float(getattr(u, "osc_freq_over_h", 0.0))
    return fam


def pullback_predicted_nodes(nodes, F: AnalyticMap1D, x_range, n_seeds: int = 400):
    """Map phase nodes through (x, dF(x)^T eta) for (F(x), eta) in the set.

    For each (x_u, xi_u), solves F(x*) = x_u on ``x_range`` (all simple
    roots) and emits (x*, dF(x*) * xi_u).
    """
    from scipy.optimize import brentq

    lo, hi = x_range
    xs = np.linspace(lo, hi, n_seeds)
    out = []
    for x_u, xi_u in nodes:
        vals = np.asarray(F.f(xs), dtype=float) - x_u
        for i in range(xs.size - 1):
            if vals[i] == 0.0:
                root = xs[i]
            elif vals[i] * vals[i + 1] < 0:
                root = brentq(lambda t: float(F.f(np.array([t]))[0]) - x_u,
                              xs[i], xs[i + 1])
            else:
                continue
            out.append((float(root), float(F.df(np.array([root]))[0] * xi_u)))
    return out


def product_family(u: SampledFamily, v: SampledFamily) -> SampledFamily:
    """Pointwise product family on the common support box."""
    lo = tuple(max(a, b) for a, b in zip(u.support_box.lo, v.support_box.lo))
    hi = tuple(min(a, b) for a, b in zip(u.support_box.hi, v.support_box.hi))
    box = Box(lo, hi)
    hints = [s for s in (u.grid_step_hint, v.grid_step_hint) if s is not None]

    def ev(h, pts):
        return u(h, pts) * v(h, pts)

    fam = SampledFamily(u.dim, box, ev,
                        grid_step_hint=min(hints) if hints else None,
                        label=f"({u.label})*({v.label})")
    fam.osc_freq_over_h = float(getattr(u, "osc_freq_over_h", 0.0)) + float(
        getattr(v, "osc_freq_over_h", 0.0))
    return fam


@dataclass(frozen=True)
class ContainmentReport:
    ok: bool
    max_dist_cells: float
    offenders: tuple


def product_microsupport(
    u: SampledFamily,
    v: SampledFamily,
    window: PhaseWindow,
    ladder: HLadder,
    **scan_kw,
):
    """Scan u*v and report whether its mass-carrying nodes sit within one
    grid cell of the fiberwise sum of the factors' mass-carrying nodes."""
    scan_u = microsupport_scan(u, window, ladder, **scan_kw)
    scan_v = microsupport_scan(v, window, ladder, **scan_kw)
    scan_uv = microsupport_scan(product_family(u, v), window, ladder, **scan_kw)

    cell = window.cell_diag
    fiber_sum = [
        (xu, ku + kv)
        for (xu, ku) in scan_u.flagged_nodes()
        for (xv, kv) in scan_v.flagged_nodes()
        if abs(xu - xv) <= window.x_step + 1e-12
    ]
    offenders = []
    max_d = 0.0
    for node in scan_uv.flagged_nodes():
        if fiber_sum:
            d = min(np.hypot(node[0] - p[0], node[1] - p[1]) for p in fiber_sum)
        else:
            d = np.inf
        max_d = max(max_d, d / cell)
        if d > cell + 1e-12:
            offenders.append(node)
    report = ContainmentReport(len(offenders) == 0, float(max_d), tuple(offenders))
    if scan_uv.quality_low:
        warnings.warn("product scan has a high INCONCLUSIVE fraction", UserWarning)
    return scan_uv, report
