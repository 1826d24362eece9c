"""Gaussian-windowed phase-space transforms.

Conventions, fixed once for the whole package (d = 1 or 2):

    coherent state   psi_{x0,xi0,h}(y) = (pi h)^{-d/4}
                         * exp(-(y-x0)^2 / 2h) * exp(+i (y-x0).xi0 / h)

    forward          (T_h f)(x,xi) = alpha_h * int exp(-(x-y)^2/2h)
                         * exp(+i (x-y).xi / h) f(y) dy,
                     alpha_h = 2^{-d/2} (pi h)^{-3d/4}

    scaled Fourier   (F_h f)(xi) = (2 pi h)^{-d/2} int f(y) e^{-i y.xi/h} dy

With these phases T_h f(x,xi) = 2^{-d/2} (pi h)^{-d/2} <psi_{x,xi,h}, f>_L2
and F_h psi_{x0,xi0,h}(eta) = (pi h)^{-d/4} e^{-i x0.eta/h}
e^{-(eta-xi0)^2/2h}; the realized Fourier phase is e^{-i x0.eta/h}.
Conjugation covariance: T_h f(x,xi) = conj(T_h conj(f)(x,-xi)).

Quadrature is trapezoid on grids fine enough for both the Gaussian window
(>= 4 nodes per sqrt(h)) and the phase (>= 8 nodes per oscillation); with
the 1e-18 window truncation this is spectrally accurate (<= 1e-8 relative
for grid-resolved inputs).  Batches along a xi-line at fixed x go through
one chirp-z transform; batches along an x-line at fixed xi go through a
sliding-window FFT convolution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.signal import czt, fftconvolve

from .grids import Box, SampledFamily

__all__ = [
    "PhasePoint",
    "alpha_h",
    "window_radius",
    "coherent_state",
    "semiclassical_fourier",
    "fbi_forward",
    "fbi_on_grid",
    "FbiField",
    "make_fbi_field",
    "fbi_adjoint_reconstruct",
    "RadialResult",
    "fbi_radial_reconstruct",
    "fbi_modified",
    "fbi_classical",
    "dbar_residual",
    "TailMassWarning",
]

EPS_CUT = 1e-18  # Gaussian window truncation level
TAIL_TOL = 1e-10


class TailMassWarning(UserWarning):
    """Support box too small to contain the numerically relevant mass."""


@dataclass(frozen=True)
class PhasePoint:
    """Point (x, xi) in phase space R^d x R^d; scalars accepted for d=1."""

    x: tuple
    xi: tuple

    def __post_init__(self):
        x = tuple(float(v) for v in np.atleast_1d(self.x))
        xi = tuple(float(v) for v in np.atleast_1d(self.xi))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)
        if len(x) != len(xi):
            raise ValueError("x and xi must have equal dimension")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise ValueError("phase point components must be finite")

    @property
    def dim(self) -> int:
        return len(self.x)


def alpha_h(h: float, d: int = 1) -> float:
    return 2.0 ** (-d / 2.0) * (np.pi * h) ** (-3.0 * d / 4.0)


def window_radius(h: float) -> float:
    """Radius at which exp(-r^2/2h) falls to the truncation level."""
    return float(np.sqrt(2.0 * h * np.log(1.0 / EPS_CUT)))


def _quad_step(h: float, xi_max: float, hint: Optional[float], osc_over_h: float) -> float:
    step = np.sqrt(h) / 4.0
    freq = (xi_max + osc_over_h) / h  # radians per unit length
    if freq > 0:
        step = min(step, np.pi / (4.0 * freq))
    if hint is not None:
        step = min(step, hint)
    return step


def coherent_state(center: PhasePoint, h_ref: float) -> SampledFamily:
    """L2-normalized Gaussian wave packet family centered at ``center``.

    The support box is sized for the reference rung ``h_ref``; the evaluator
    accepts any rung h <= h_ref (smaller rungs localize further inside).
    """
    if h_ref <= 0:
        raise ValueError("h_ref must be positive")
    d = center.dim
    x0 = np.asarray(center.x)
    xi0 = np.asarray(center.xi)
    R = window_radius(h_ref)
    box = Box(tuple(x0 - R), tuple(x0 + R))

    def ev(h, pts):
        pts = np.asarray(pts, dtype=float)
        if d == 1:
            dy = pts - x0[0]
            quad_form = dy**2
            phase = dy * xi0[0]
        else:
            dy = pts - x0
            quad_form = np.sum(dy**2, axis=-1)
            phase = dy @ xi0
        return (np.pi * h) ** (-d / 4.0) * np.exp(-quad_form / (2 * h) + 1j * phase / h)

    fam = SampledFamily(dim=d, support_box=box, evaluator=ev,
                        label=f"coherent@{center.x},{center.xi}")
    fam.osc_freq_over_h = float(np.max(np.abs(xi0)))  # oscillation xi0/h at rung h
    return fam


def _osc_over_h(f: SampledFamily) -> float:
    return float(getattr(f, "osc_freq_over_h", 0.0))


def _check_tail(f: SampledFamily, h: float):
    if f.tail_fraction(h) > TAIL_TOL:
        warnings.warn(
            f"support box of {f.label or 'family'} may truncate mass at h={h:g}",
            TailMassWarning,
            stacklevel=3,
        )


def _axis_nodes(lo: float, hi: float, step: float):
    n = max(9, int(np.ceil((hi - lo) / step)) + 1)
    return np.linspace(lo, hi, n)


def semiclassical_fourier(f: SampledFamily, h: float, xi) -> np.ndarray:
    """(2 pi h)^{-d/2} int f(y) exp(-i y.xi/h) dy, vectorized over xi."""
    xi_arr = np.atleast_2d(np.asarray(xi, dtype=float)) if f.dim == 2 else np.atleast_1d(
        np.asarray(xi, dtype=float)
    )
    _check_tail(f, h)
    if f.dim == 1:
        xi_max = float(np.max(np.abs(xi_arr))) if xi_arr.size else 0.0
        step = _quad_step(h, xi_max, f.grid_step_hint, _osc_over_h(f))
        y = _axis_nodes(f.support_box.lo[0], f.support_box.hi[0], step)
        vals = f(h, y)
        w = np.ones_like(y)
        w[0] = w[-1] = 0.5
        dy = y[1] - y[0]
        out = (vals * w) @ np.exp(-1j * np.outer(y, xi_arr) / h) * dy
        out = out * (2 * np.pi * h) ** (-0.5)
        return out if np.ndim(xi) else out[0]
    # d = 2: tensor trapezoid
    xi_max = float(np.max(np.abs(xi_arr)))
    step = _quad_step(h, xi_max, f.grid_step_hint, _osc_over_h(f))
    ax = [_axis_nodes(f.support_box.lo[k], f.support_box.hi[k], step) for k in range(2)]
    xx, yy = np.meshgrid(ax[0], ax[1], indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    vals = f(h, pts).reshape(xx.shape)
    w0 = np.ones(ax[0].size); w0[0] = w0[-1] = 0.5
    w1 = np.ones(ax[1].size); w1[0] = w1[-1] = 0.5
    d0 = ax[0][1] - ax[0][0]
    d1 = ax[1][1] - ax[1][0]
    out = np.empty(xi_arr.shape[0], dtype=complex)
    for i, (k0, k1) in enumerate(xi_arr):
        phase = np.exp(-1j * (xx * k0 + yy * k1) / h)
        out[i] = np.sum(vals * phase * np.outer(w0, w1)) * d0 * d1
    out *= (2 * np.pi * h) ** (-1.0)
    return out if np.asarray(xi).ndim == 2 else out[0]


def _fbi_xi_batch_1d(f: SampledFamily, x: float, xis: np.ndarray, h: float) -> np.ndarray:
    """T_h f(x, xi) for one x and many xi (d=1)."""
    R = window_radius(h)
    lo = max(f.support_box.lo[0], x - R)
    hi = min(f.support_box.hi[0], x + R)
    if hi <= lo:
        return np.zeros(xis.size, dtype=complex)
    xi_max = float(np.max(np.abs(xis))) if xis.size else 0.0
    step = _quad_step(h, xi_max, f.grid_step_hint, _osc_over_h(f))
    y = _axis_nodes(lo, hi, step)
    dy = y[1] - y[0]
    g = f(h, y) * np.exp(-((x - y) ** 2) / (2 * h))
    w = np.ones_like(y)
    w[0] = w[-1] = 0.5
    b = g * w

    uniform = (
        xis.size >= 8
        and np.allclose(np.diff(xis), xis[1] - xis[0], rtol=0, atol=1e-12 * (1 + xi_max))
        and abs(xis[1] - xis[0]) > 0
    )
    if uniform:
        delta = xis[1] - xis[0]
        # sum_k b_k exp(-i y_k xi_j / h) as a chirp-z transform along the
        # unit circle: z_j = exp(i dy xi_j / h) = a * w**-j.
        a = np.exp(1j * dy * xis[0] / h)
        wz = np.exp(-1j * dy * delta / h)
        core = czt(b, m=xis.size, w=wz, a=a)
        core = core * np.exp(-1j * y[0] * xis / h)
    else:
        core = b @ np.exp(-1j * np.outer(y, xis) / h)
    return alpha_h(h, 1) * np.exp(1j * x * xis / h) * core * dy


def _fbi_x_line_1d(f: SampledFamily, xs: np.ndarray, xi: float, h: float) -> np.ndarray:
    """T_h f(x, xi) for a uniform x-line at fixed xi via FFT convolution."""
    dx = xs[1] - xs[0]
    step = _quad_step(h, abs(xi), f.grid_step_hint, _osc_over_h(f))
    m = max(1, int(np.ceil(dx / step)))
    dy = dx / m
    R = window_radius(h)
    K = int(np.ceil(R / dy))
    y0 = xs[0] - K * dy
    n = int(round((xs[-1] - xs[0]) / dy)) + 2 * K + 1
    y = y0 + dy * np.arange(n)
    inside = (y >= f.support_box.lo[0] - 1e-12) & (y <= f.support_box.hi[0] + 1e-12)
    vals = np.zeros(n, dtype=complex)
    if np.any(inside):
        vals[inside] = f(h, y[inside])
    vals = vals * np.exp(-1j * y * xi / h)
    u = dy * np.arange(-K, K + 1)
    kernel = np.exp(-(u**2) / (2 * h))
    conv = fftconvolve(vals, kernel, mode="same") * dy
    idx = K + m * np.arange(xs.size)
    return alpha_h(h, 1) * np.exp(1j * xs * xi / h) * conv[idx]


def _fbi_point_2d(f: SampledFamily, x: np.ndarray, xi: np.ndarray, h: float) -> complex:
    R = window_radius(h)
    lo = np.maximum(np.asarray(f.support_box.lo), x - R)
    hi = np.minimum(np.asarray(f.support_box.hi), x + R)
    if np.any(hi <= lo):
        return 0.0 + 0.0j
    xi_max = float(np.max(np.abs(xi)))
    step = _quad_step(h, xi_max, f.grid_step_hint, _osc_over_h(f))
    a0 = _axis_nodes(lo[0], hi[0], step)
    a1 = _axis_nodes(lo[1], hi[1], step)
    xx, yy = np.meshgrid(a0, a1, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    vals = f(h, pts).reshape(xx.shape)
    dx0 = xx - x[0]
    dx1 = yy - x[1]
    ker = np.exp(-(dx0**2 + dx1**2) / (2 * h) - 1j * (dx0 * xi[0] + dx1 * xi[1]) / h)
    w0 = np.ones(a0.size); w0[0] = w0[-1] = 0.5
    w1 = np.ones(a1.size); w1[0] = w1[-1] = 0.5
    val = np.sum(vals * ker * np.outer(w0, w1)) * (a0[1] - a0[0]) * (a1[1] - a1[0])
    return alpha_h(h, 2) * val


def fbi_forward(f: SampledFamily, pts, h: float, check_tail: bool = True) -> np.ndarray:
    """Windowed transform T_h f at a batch of phase points.

    ``pts`` is a PhasePoint, an iterable of PhasePoints, or an array of
    shape (n, 2d).  Points sharing a base x are served by one windowed
    chirp-z transform when their xi values form a uniform line.
    """
    single = isinstance(pts, PhasePoint)
    if single:
        pts = [pts]
    plist = [p if isinstance(p, PhasePoint) else PhasePoint(tuple(np.atleast_1d(p)[: f.dim]),
                                                            tuple(np.atleast_1d(p)[f.dim:]))
             for p in pts]
    if check_tail:
        _check_tail(f, h)
    out = np.empty(len(plist), dtype=complex)
    if f.dim == 1:
        xs = np.array([p.x[0] for p in plist])
        xis = np.array([p.xi[0] for p in plist])
        for xval in np.unique(xs):
            sel = np.where(xs == xval)[0]
            order = sel[np.argsort(xis[sel])]
            out[order] = _fbi_xi_batch_1d(f, float(xval), xis[order], h)
    else:
        for i, p in enumerate(plist):
            out[i] = _fbi_point_2d(f, np.asarray(p.x), np.asarray(p.xi), h)
    return out[0] if single else out


def fbi_on_grid(f: SampledFamily, xs: np.ndarray, xis: np.ndarray, h: float) -> np.ndarray:
    """T_h f on the product grid xs x xis (d=1), shape (len(xs), len(xis))."""
    out = np.empty((xs.size, xis.size), dtype=complex)
    for i, x in enumerate(xs):
        out[i] = _fbi_xi_batch_1d(f, float(x), np.asarray(xis, dtype=float), h)
    return out


@dataclass
class FbiField:
    """Per-rung phase-space samples of T_h f on a fixed window grid."""

    source_label: str
    window: Box  # box in R^{2d}: (x..., xi...)
    dim: int
    data: dict = field(default_factory=dict)  # h -> (x_axis, xi_axis, values)

    def rungs(self):
        return sorted(self.data.keys(), reverse=True)

    def alpha(self, h: float) -> float:
        return alpha_h(h, self.dim)

    def to_csv(self, path: str):
        import csv

        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["h", "x", "xi", "re", "im"])
            for h in self.rungs():
                xa, ka, v = self.data[h]
                for i, x in enumerate(xa):
                    for j, k in enumerate(ka):
                        wr.writerow([h, x, k, v[i, j].real, v[i, j].imag])

    def header_json(self) -> str:
        import json

        hs = self.rungs()
        meta = {
            "source": self.source_label,
            "window_lo": list(self.window.lo),
            "window_hi": list(self.window.hi),
            "rungs": hs,
            "alpha_h": {str(h): self.alpha(h) for h in hs},
            "grid_shape": {str(h): list(self.data[h][2].shape) for h in hs},
            "x_step": {str(h): float(self.data[h][0][1] - self.data[h][0][0]) for h in hs},
            "xi_step": {str(h): float(self.data[h][1][1] - self.data[h][1][0]) for h in hs},
        }
        return json.dumps(meta, sort_keys=True)


def make_fbi_field(
    f: SampledFamily,
    window: Box,
    ladder,
    recon_radius: Optional[float] = None,
) -> FbiField:
    """Sample T_h f over a phase-space window for every ladder rung (d=1).

    ``recon_radius`` bounds |y - x| for later adjoint reconstruction; the
    xi-axis step must resolve the phase e^{i(y-x)xi/h} for such y.
    """
    if f.dim != 1:
        raise NotImplementedError("fields are stored for d = 1")
    xlo, klo = window.lo
    xhi, khi = window.hi
    if recon_radius is None:
        recon_radius = 0.5 * (xhi - xlo) + 2.0
    fld = FbiField(source_label=f.label, window=window, dim=1)
    for h in ladder:
        xi_osc = recon_radius / h  # phase frequency in xi during reconstruction
        dxi = min(np.sqrt(h) / 4.0, np.pi / (4.0 * xi_osc))
        x_osc = (max(abs(klo), abs(khi)) + _osc_over_h(f)) / h
        dx = min(np.sqrt(h) / 4.0, np.pi / (4.0 * max(x_osc, 1e-12)))
        xa = _axis_nodes(xlo, xhi, dx)
        ka = _axis_nodes(klo, khi, dxi)
        fld.data[h] = (xa, ka, fbi_on_grid(f, xa, ka, h))
    return fld


def fbi_adjoint_reconstruct(field: FbiField, y: float, h: float) -> complex:
    """Coherent superposition (2 pi h)^{-d/2} int T(x,xi) psi_{x,xi,h}(y).

    Quadrature over the field's stored window grid; warns when the window
    boundary carries non-negligible mass.
    """
    if h not in field.data:
        raise KeyError(f"rung {h} not sampled in this field")
    xa, ka, T = field.data[h]
    edge = max(
        float(np.max(np.abs(T[0, :]))),
        float(np.max(np.abs(T[-1, :]))),
        float(np.max(np.abs(T[:, 0]))),
        float(np.max(np.abs(T[:, -1]))),
    )
    if edge > 1e-6 * max(1e-300, float(np.max(np.abs(T)))):
        warnings.warn("phase-space window may be too small for reconstruction",
                      TailMassWarning, stacklevel=2)
    dy = y - xa[:, None]
    psi = (np.pi * h) ** (-0.25) * np.exp(
        -(dy**2) / (2 * h) + 1j * dy * ka[None, :] / h
    )
    wx = np.ones(xa.size); wx[0] = wx[-1] = 0.5
    wk = np.ones(ka.size); wk[0] = wk[-1] = 0.5
    integrand = T * psi * np.outer(wx, wk)
    val = np.sum(integrand) * (xa[1] - xa[0]) * (ka[1] - ka[0])
    return complex((2 * np.pi * h) ** (-0.5) * val)


@dataclass(frozen=True)
class RadialResult:
    value: complex
    flag: Optional[str]
    h_lo: float
    tail_estimate: float


def fbi_radial_reconstruct(u: SampledFamily, x: float, h_lo: float = 5e-3,
                           rel_tol: float = 1e-6) -> RadialResult:
    """Reconstruct u(x) from T_h u via the radial scale integral (d=1).

    u(x) = 2^{-d/2-1} pi^{-d/4} int_{|xi|=1} int_0^inf h^{-1-d/4}
           (1 + xi (h/i) d/dx) T_h u(x, xi) dh dxi,
    with the two-point sphere {+-1} carrying counting measure.  The h
    integral is truncated below at ``h_lo``; the omitted small-h tail is
    estimated from the fitted exponential decay of the integrand and must
    stay below 1e-4 of the reconstructed value, else the result is flagged
    INCONCLUSIVE.
    """
    if u.dim != 1:
        raise NotImplementedError("radial reconstruction is d = 1 only")

    def integrand(h: float) -> complex:
        dstep = np.sqrt(h) / 128.0
        total = 0.0 + 0.0j
        for xi in (1.0, -1.0):
            pts = [PhasePoint((x,), (xi,)),
                   PhasePoint((x + dstep,), (xi,)),
                   PhasePoint((x - dstep,), (xi,))]
            t0, tp, tm = fbi_forward(u, pts, h, check_tail=False)
            grad = (tp - tm) / (2 * dstep)
            total += t0 + xi * (h / 1j) * grad
        return h ** (-1.25) * total

    flag = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        re_val, re_err = quad(lambda h: integrand(h).real, h_lo, np.inf, limit=200)
        im_val, im_err = quad(lambda h: integrand(h).imag, h_lo, np.inf, limit=200)
        if any(issubclass(w.category, Warning) and "maximum" in str(w.message).lower()
               for w in caught):
            flag = "INCONCLUSIVE"
    val = 2.0 ** (-1.5) * np.pi ** (-0.25) * (re_val + 1j * im_val)

    # Small-h tail: integrand ~ h^{-5/4} C e^{-delta/h}; bound the omission.
    g1, g2 = abs(integrand(h_lo)), abs(integrand(2 * h_lo))
    if g1 > 0 and g2 > g1:
        delta_est = 0.0
    elif g1 > 0:
        delta_est = np.log(g2 / g1) / (1 / (2 * h_lo) - 1 / h_lo)
    else:
        delta_est = np.inf
    tail = g1 * h_lo  # conservative: |int_0^{h_lo}| <= sup * h_lo for decaying integrand
    if delta_est <= 0:
        tail = np.inf
    if abs(val) > 0 and tail > 1e-4 * abs(val):
        flag = flag or "INCONCLUSIVE"
    if re_err + im_err > max(rel_tol * abs(val), 1e-12):
        flag = flag or "INCONCLUSIVE"
    return RadialResult(complex(val), flag, h_lo, float(tail))


def fbi_modified(f: SampledFamily, pt: PhasePoint, h: float, mu: float) -> complex:
    """Transform with Gaussian weight exp(-mu (x-y)^2 / 2h).

    Evaluated through the exact rescaling identity
    T_{mu,h} f(x, xi) = mu^{-d/2} T_{h/mu} f(x, xi/mu).
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    d = f.dim
    scaled = PhasePoint(pt.x, tuple(v / mu for v in pt.xi))
    return complex(mu ** (-d / 2.0) * fbi_forward(f, scaled, h / mu))


def fbi_classical(u: SampledFamily, x: float, xi: float) -> complex:
    """Unnormalized transform int e^{-|xi|(x-y)^2/2} e^{i(x-y)xi} u(y) dy.

    Equals the h = 1/|xi| slice of the scaled transform with the
    normalization alpha_h removed: T_h u(x, xi/|xi|) / alpha_h.
    """
    axi = abs(float(xi))
    if axi == 0:
        raise ValueError("xi must be nonzero")
    h = 1.0 / axi
    val = fbi_forward(u, PhasePoint((float(x),), (float(np.sign(xi)),)), h,
                      check_tail=False)
    return complex(val / alpha_h(h, 1))


def dbar_residual(f: SampledFamily, h: float, window: Box, n_check: int = 16) -> float:
    """Max relative discrete Cauchy-Riemann defect of e^{xi^2/2h} T_h f.

    Checks the equivalent first-order identity on T = T_h f,
        (1/2) dT/dx - (i/2) dT/dxi - (i xi / 2h) T = 0,
    at interior nodes of the phase window, via 5-point central stencils.
    The defect is measured against the natural scale of the individual
    terms, |dT/dx| + |dT/dxi| + (|xi|/h)|T| + |T|/sqrt(h).
    """
    if f.dim != 1:
        raise NotImplementedError("d = 1 check only")
    (xlo, klo), (xhi, khi) = window.lo, window.hi
    xs = np.linspace(xlo, xhi, n_check + 2)[1:-1]
    ks = np.linspace(klo, khi, n_check + 2)[1:-1]
    step = np.sqrt(h) * 2e-3
    worst = 0.0
    for x, k in zip(xs, ks):
        pts = [
            PhasePoint((x,), (k,)),
            PhasePoint((x + step,), (k,)),
            PhasePoint((x - step,), (k,)),
            PhasePoint((x,), (k + step,)),
            PhasePoint((x,), (k - step,)),
        ]
        t0, txp, txm, tkp, tkm = fbi_forward(f, pts, h, check_tail=False)
        dx = (txp - txm) / (2 * step)
        dk = (tkp - tkm) / (2 * step)
        resid = 0.5 * dx - 0.5j * dk - 0.5j * (k / h) * t0
        scale = abs(dx) + abs(dk) + (abs(k) / h) * abs(t0) + abs(t0) / np.sqrt(h)
        if scale > 0:
            worst = max(worst, abs(resid) / scale)
    return worst
