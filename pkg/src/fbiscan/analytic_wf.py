"""Singular-direction detection for fixed (h-independent) distributions.

A distribution u is scanned as the constant family: at each base point x
and unit direction the ladder decay of |T_h(chi u)(x, xi_hat)| decides
whether the direction is singular.  INCONCLUSIVE verdicts are flagged as
singular (false positives are safe for the downstream unique-continuation
predicates, false negatives are not).

Sign convention (pinned here, validated by the oracles in the tests):
with the transform phase e^{+i(x-y)xi/h}, positive-energy content
int_0^inf e^{-i m t} drho(m) concentrates its transform mass at xi = -mh,
so its singular direction at a non-analytic point is xi = -1 (LOWER).
Correspondingly the strip kernel's top-edge boundary value K_u(x + i - i0)
carries the LOWER directions and the bottom edge carries UPPER.

The second detector decomposes u through the strip kernel
K(z) = (1/4) sech(pi z / 2): K_u = K * u is holomorphic in |Im z| < 1 and
u is recovered as the sum of the two edge boundary values.  A direction is
clean iff K_u extends analytically across the corresponding edge.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import wofz

from .decay import DecayFit, DecayThresholds, EXP_SMALL, fit_decay
from .grids import Box, HLadder, SampledFamily
from .microsupport import plateau
from .transforms import alpha_h, fbi_forward, window_radius

__all__ = [
    "Subject",
    "subject_from_function",
    "subject_point_mass",
    "subject_heaviside",
    "subject_from_closed_fbi",
    "WfaReport",
    "wfa_detect",
    "SechKernel",
    "sech_decompose",
    "RadiusEstimate",
    "analyticity_radius",
    "OneSidedResult",
    "one_sided_check",
]

NOISE_REL = 1e-9
#: absolute quadrature noise relative to the per-rung transform amplitude
NOISE_ABS_REL = 1e-12


def cerfc(z):
    """Complementary error function of complex argument (Faddeeva based)."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape, dtype=complex)
    pos = z.real >= 0
    out[pos] = np.exp(-z[pos] ** 2) * wofz(1j * z[pos])
    out[~pos] = 2.0 - np.exp(-z[~pos] ** 2) * wofz(-1j * z[~pos])
    return out if out.shape else complex(out)


@dataclass
class Subject:
    """Fixed distribution with a transform evaluator.

    Exactly one evaluation route is required: ``fbi(h, x, xi) -> complex``
    (closed form, used as-is) or ``func(t) -> complex`` (windowed
    quadrature with a plateau cutoff equal to one on the scan collar).
    ``func`` additionally enables the strip-kernel detector.
    """

    dim: int = 1
    fbi: Optional[Callable] = None
    func: Optional[Callable] = None
    support: tuple = (-20.0, 20.0)
    label: str = ""
    grid_step_hint: Optional[float] = None
    #: closed form for K_u(z) when available (overrides convolution)
    sech_Ku: Optional[Callable] = None

    def __post_init__(self):
        if self.fbi is None and self.func is None:
            raise ValueError("subject needs an fbi or func evaluator")

    def cutoff_family(self, window_lo: float, window_hi: float,
                      collar: float = 1.0) -> SampledFamily:
        """chi * u with chi a plateau equal to one on the window collar."""
        if self.func is None:
            raise ValueError("no function route for this subject")
        lo = max(self.support[0], window_lo - 3 * collar)
        hi = min(self.support[1], window_hi + 3 * collar)
        in_lo, in_hi = window_lo - collar, window_hi + collar
        f = self.func

        def ev(h, pts):
            pts = np.atleast_1d(np.asarray(pts, dtype=float))
            chi = plateau(pts, in_lo, in_hi, lo, hi)
            return chi * np.asarray(f(pts), dtype=complex)

        return SampledFamily(1, Box((lo,), (hi,)), ev,
                             grid_step_hint=self.grid_step_hint,
                             label=f"cutoff[{self.label}]")


def subject_from_function(func, support=(-20.0, 20.0), label="",
                          grid_step_hint=None) -> Subject:
    return Subject(func=func, support=tuple(support), label=label,
                   grid_step_hint=grid_step_hint)


def subject_point_mass(y0: float = 0.0, weight: complex = 1.0) -> Subject:
    """Point measure: T_h = w alpha_h e^{-(x-y0)^2/2h} e^{i(x-y0)xi/h}."""

    def fbi(h, x, xi):
        return weight * alpha_h(h, 1) * np.exp(
            -((x - y0) ** 2) / (2 * h) + 1j * (x - y0) * xi / h
        )

    def Ku(z):
        return weight * 0.25 / np.cosh(np.pi * (z - y0) / 2.0)

    return Subject(fbi=fbi, label=f"delta@{y0}", sech_Ku=Ku)


def subject_heaviside(a: float = 0.0) -> Subject:
    """Unit step 1_{t >= a}; transform in closed form via complex erfc."""

    def fbi(h, x, xi):
        c = (a - x) / math.sqrt(2 * h)
        b = math.sqrt(2.0 / h) * xi
        zeta = c + 0.5j * b
        val = math.sqrt(2 * h) * (math.sqrt(math.pi) / 2.0) * np.exp(
            -(b**2) / 4.0
        ) * cerfc(zeta)
        return alpha_h(h, 1) * val

    def func(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return (t >= a).astype(complex)

    return Subject(fbi=fbi, func=func, support=(a - 0.0, 60.0),
                   label=f"heaviside@{a}")


def subject_from_closed_fbi(fbi, label="", dim=1) -> Subject:
    return Subject(dim=dim, fbi=fbi, label=label)


@dataclass
class WfaReport:
    """Per-base-point singular-direction report.

    ``directions`` holds +-1 for d=1 or angles (radians) for d=2.
    A direction is flagged when its verdict is not EXP_SMALL.
    """

    base_points: list
    directions: np.ndarray
    fits: list  # fits[i][j]: DecayFit at base i, direction j
    ladder: HLadder
    metadata: dict = field(default_factory=dict)

    def flagged(self, i: int) -> list:
        return [float(self.directions[j]) for j, f in enumerate(self.fits[i])
                if f.verdict != EXP_SMALL]

    def flagged_map(self) -> dict:
        return {tuple(np.atleast_1d(p)): self.flagged(i)
                for i, p in enumerate(self.base_points)}

    def is_empty(self) -> bool:
        return all(not self.flagged(i) for i in range(len(self.base_points)))

    def to_csv(self, path: str):
        import csv

        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "direction", "delta_hat", "r2", "verdict"])
            for i, p in enumerate(self.base_points):
                for j, d in enumerate(self.directions):
                    f = self.fits[i][j]
                    wr.writerow([p, d, f.delta_hat, f.r_squared, f.verdict])


def _directions(dim: int, n_angles: int = 64) -> np.ndarray:
    if dim == 1:
        return np.array([1.0, -1.0])
    return np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)


def wfa_detect(
    subject: Subject,
    base_points: Sequence,
    ladder: HLadder,
    directions: Optional[np.ndarray] = None,
    thresholds: DecayThresholds = DecayThresholds(),
    noise_rel: float = NOISE_REL,
    n_angles: int = 64,
) -> WfaReport:
    """Scan unit directions at each base point for ladder decay failure."""
    dirs = directions if directions is not None else _directions(subject.dim, n_angles)
    base_points = [np.atleast_1d(np.asarray(p, dtype=float)) for p in base_points]

    fam = None
    if subject.fbi is None:
        los = min(float(p[0]) for p in base_points)
        his = max(float(p[0]) for p in base_points)
        fam = subject.cutoff_family(los, his)

    hs = list(ladder)
    mags = np.empty((len(base_points), len(dirs), len(hs)))
    for r, h in enumerate(hs):
        for i, p in enumerate(base_points):
            if subject.dim == 1:
                x = float(p[0])
                for j, s in enumerate(dirs):
                    if subject.fbi is not None:
                        val = subject.fbi(h, x, float(s))
                    else:
                        from .transforms import PhasePoint

                        val = fbi_forward(fam, PhasePoint((x,), (float(s),)), h,
                                          check_tail=False)
                    mags[i, j, r] = abs(val)
            else:
                for j, th in enumerate(dirs):
                    xi = (math.cos(th), math.sin(th))
                    mags[i, j, r] = abs(subject.fbi(h, tuple(p), xi))

    fits = []
    for i in range(len(base_points)):
        row = []
        for j in range(len(dirs)):
            seq = mags[i, j]
            floor = noise_rel * float(seq.max(initial=0.0))
            row.append(fit_decay(zip(hs, seq), thresholds.delta_min,
                                 thresholds.rho_min, noise_floor=floor))
        fits.append(row)
    return WfaReport(
        [p if p.size > 1 else float(p[0]) for p in base_points],
        np.asarray(dirs), fits, ladder,
        metadata={"delta_min": thresholds.delta_min, "rho_min": thresholds.rho_min},
    )


# ---------------------------------------------------------------------------
# strip-kernel route


@dataclass(frozen=True)
class SechKernel:
    """K(z) = (1/4) sech(pi z / 2): holomorphic on |Im z| < 1, with
    int K(x + iy) dx = pi for every |y| < 1, and the real part a
    delta-family as y -> +-1."""

    def __call__(self, z):
        return 0.25 / np.cosh(np.pi * np.asarray(z, dtype=complex) / 2.0)


def sech_decompose(u: Callable, z: complex, support=(-30.0, 30.0),
                   points: Optional[list] = None) -> complex:
    """K_u(z) = int K(z - t) u(t) dt for |Im z| < 1.

    ``u`` maps a real array to complex values with integrable tails.  Near
    the strip edges the kernel peaks sharply at t = Re z; adaptive
    quadrature with a breakpoint hint there keeps the cost bounded.
    """
    z = complex(z)
    if abs(z.imag) >= 1.0:
        raise ValueError("evaluation point must satisfy |Im z| < 1")
    K = SechKernel()

    def integrand_re(t):
        return (K(z - t) * u(np.atleast_1d(t))[0]).real

    def integrand_im(t):
        return (K(z - t) * u(np.atleast_1d(t))[0]).imag

    lo, hi = support
    pts = points if points is not None else [z.real]
    pts = [p for p in pts if lo < p < hi]
    re, _ = quad(integrand_re, lo, hi, points=pts, limit=300)
    im, _ = quad(integrand_im, lo, hi, points=pts, limit=300)
    return complex(re, im)


# ---------------------------------------------------------------------------
# analyticity radius


@dataclass(frozen=True)
class RadiusEstimate:
    radius: float
    trend: str          # "stable" | "shrinking" | "unbounded_growth"
    k_star: int         # highest derivative order actually used
    root_sequence: tuple  # |a_k|^(1/k) for k = 1..k_star


def _cauchy_coeffs(f: Callable, center: complex, r: float, k_max: int,
                   n_samples: int = 256) -> np.ndarray:
    th = 2 * np.pi * np.arange(n_samples) / n_samples
    zs = center + r * np.exp(1j * th)
    vals = np.asarray([complex(f(z)) for z in zs])
    coeffs = np.fft.fft(vals) / n_samples
    ks = np.arange(k_max + 1)
    return coeffs[: k_max + 1] / r**ks


def analyticity_radius(
    f: Optional[Callable] = None,
    center: complex = 0.0,
    k_max: int = 20,
    circle_radius: Optional[float] = None,
    derivatives: Optional[Sequence[float]] = None,
    real_only: bool = False,
) -> RadiusEstimate:
    """Radius of convergence estimate 1 / limsup |a_k|^{1/k}.

    Routes: Taylor coefficients from Cauchy-integral quadrature on circles
    (complex-evaluable ``f``); a least-squares polynomial proxy on a real
    stencil (``real_only``, unstable beyond moderate order and tagged as
    such); or caller-supplied ``derivatives`` (a_k = f^(k)/k! computed from
    them).  The trend tag reports whether |a_k|^{1/k} is stable, shrinking
    (entire-function behaviour), or growing without bound (zero radius).
    """
    if derivatives is not None:
        ders = np.asarray(derivatives, dtype=float)
        k_max = min(k_max, ders.size - 1)
        a = np.array([ders[k] / math.factorial(k) for k in range(k_max + 1)])
        k_star = k_max
    elif f is None:
        raise ValueError("need f, or derivatives")
    elif real_only:
        r = circle_radius if circle_radius is not None else 0.5
        xs = r * np.cos(np.pi * (np.arange(4 * k_max) + 0.5) / (4 * k_max))
        ys = np.asarray([float(np.real(f(center + x))) for x in xs])
        # polynomial proxy; conditioning limits the usable order
        V = np.vander(xs / r, k_max + 1, increasing=True)
        coef, *_ = np.linalg.lstsq(V, ys, rcond=None)
        a = coef / r ** np.arange(k_max + 1)
        k_star = min(k_max, 12)
    else:
        r0 = circle_radius if circle_radius is not None else 0.5
        prev = None
        a = None
        k_star = k_max
        for j in range(4):
            r = r0 * 0.6**j
            cur = _cauchy_coeffs(f, center, r, k_max)
            if prev is not None:
                scale = np.maximum(np.abs(prev), np.abs(cur)) + 1e-300
                agree = np.abs(prev - cur) / scale
                if np.max(agree[1 : k_max // 2 + 1]) < 1e-6:
                    a = prev
                    break
            prev = cur
        if a is None:
            a = prev

    ks = np.arange(1, k_star + 1)
    mag = np.abs(a[1 : k_star + 1])
    nz = mag > 1e-290
    if not np.any(nz):
        return RadiusEstimate(math.inf, "stable", k_star, ())
    roots = np.where(nz, mag ** (1.0 / ks), 0.0)
    tail = roots[nz][-max(3, int(np.count_nonzero(nz) // 3)):]
    est = float(np.max(tail))
    radius = math.inf if est < 1e-3 else 1.0 / est

    # trend of |a_k|^{1/k} over the upper half of available orders
    upk = ks[nz][len(ks[nz]) // 2:]
    upr = roots[nz][len(ks[nz]) // 2:]
    if upk.size >= 3 and np.all(upr > 0):
        slope = np.polyfit(np.log(upk), np.log(upr), 1)[0]
        if slope > 0.35:
            trend = "unbounded_growth"
        elif slope < -0.35:
            trend = "stable" if math.isinf(radius) else "shrinking"
        else:
            trend = "stable"
    else:
        trend = "stable"
    if trend == "unbounded_growth":
        radius = 0.0
    if radius > 1e3:
        radius = math.inf
    return RadiusEstimate(radius, trend, int(k_star), tuple(roots))


# ---------------------------------------------------------------------------
# one-sided check


UPPER = "UPPER"
LOWER = "LOWER"
BOTH = "BOTH"
NONE = "NONE"


@dataclass(frozen=True)
class OneSidedResult:
    verdict: str
    fbi_verdict: str
    sech_verdict: Optional[str]
    disagree: bool
    detail: dict


def _edge_singular(Ku: Callable, x0: float, edge: int,
                   eps_list=(0.2, 0.1, 0.05)) -> bool:
    """Does K_u fail to extend across Im z = edge (+1 or -1) near x0?

    Singular edge: the local convergence radius at x0 + i*edge*(1 - eps)
    tracks eps; analytic extension: the radius stays bounded below.
    """
    ratios = []
    for eps in eps_list:
        c = complex(x0, edge * (1.0 - eps))
        est = analyticity_radius(Ku, center=c, k_max=10, circle_radius=0.6 * eps)
        ratios.append((est.radius if math.isfinite(est.radius) else 1e6) / eps)
    small = sum(1 for r in ratios[-2:] if r < 2.5)
    return small == 2


def one_sided_check(subject: Subject, x0: float, ladder: HLadder,
                    thresholds: DecayThresholds = DecayThresholds(),
                    sech_support=(-30.0, 30.0)) -> OneSidedResult:
    """Which half-lines at x0 carry singular directions (d = 1).

    Runs the ladder detector at directions +-1 and cross-validates with
    strip-kernel edge analyticity (+1 direction <-> bottom edge, -1 <->
    top edge).  Detector disagreement returns BOTH with a DISAGREE flag.
    """
    rep = wfa_detect(subject, [x0], ladder, thresholds=thresholds)
    flag_plus = rep.fits[0][0].verdict != EXP_SMALL
    flag_minus = rep.fits[0][1].verdict != EXP_SMALL
    table = {(True, True): BOTH, (True, False): UPPER,
             (False, True): LOWER, (False, False): NONE}
    fbi_v = table[(flag_plus, flag_minus)]

    sech_v = None
    if subject.sech_Ku is not None or subject.func is not None:
        if subject.sech_Ku is not None:
            Ku = subject.sech_Ku
        else:
            def Ku(z):
                return sech_decompose(subject.func, z, support=sech_support)
        top = _edge_singular(Ku, x0, +1)      # carries -1 directions
        bottom = _edge_singular(Ku, x0, -1)   # carries +1 directions
        sech_v = table[(bottom, top)]

    disagree = sech_v is not None and sech_v != fbi_v
    verdict = BOTH if disagree else fbi_v
    if disagree:
        warnings.warn(f"direction detectors disagree at x0={x0}: "
                      f"ladder={fbi_v}, strip={sech_v}", UserWarning)
    return OneSidedResult(verdict, fbi_v, sech_v, disagree,
                          {"delta_plus": rep.fits[0][0].delta_hat,
                           "delta_minus": rep.fits[0][1].delta_hat})
