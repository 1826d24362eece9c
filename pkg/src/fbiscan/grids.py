"""Boxes, scale ladders, and h-indexed sampled families.

Everything downstream works on functions of a scale parameter h in (0, 1]:
a family is an evaluator (h, points) -> complex values together with a box
outside which the family is numerically negligible.  Grids are uniform; the
default step resolves a Gaussian of variance h_min by >= 4 nodes per
standard deviation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Box",
    "HLadder",
    "make_h_ladder",
    "SampledFamily",
    "DEFAULT_LADDER",
]


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box in R^d, d = 1 or 2."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi):
            raise ValueError("lo and hi must have equal length")
        if len(lo) not in (1, 2):
            raise ValueError("only d = 1 or 2 supported")
        if not all(np.isfinite(lo)) or not all(np.isfinite(hi)):
            raise ValueError("box corners must be finite")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError("need lo <= hi componentwise")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    def contains(self, pts: np.ndarray, atol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        lo = np.asarray(self.lo) - atol
        hi = np.asarray(self.hi) + atol
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def contains_box(self, other: "Box", atol: float = 1e-12) -> bool:
        return all(a <= b + atol for a, b in zip(self.lo, other.lo)) and all(
            a >= b - atol for a, b in zip(self.hi, other.hi)
        )

    def grid(self, step: float) -> list:
        """Per-axis node arrays with spacing <= step, endpoints included."""
        axes = []
        for a, b in zip(self.lo, self.hi):
            n = max(2, int(np.ceil((b - a) / step)) + 1)
            axes.append(np.linspace(a, b, n))
        return axes


@dataclass(frozen=True)
class HLadder:
    """Strictly decreasing geometric-ish sequence of scales h in (0, 1].

    At least 8 rungs; consecutive ratios confined to [0.5, 0.95] so that
    log-magnitude differences between rungs stay well conditioned.
    """

    rungs: tuple

    def __post_init__(self):
        r = tuple(float(v) for v in self.rungs)
        object.__setattr__(self, "rungs", r)
        arr = np.asarray(r)
        if arr.size < 8:
            raise ValueError("ladder needs at least 8 rungs")
        if np.any(arr <= 0) or np.any(arr > 1):
            raise ValueError("rungs must lie in (0, 1]")
        if np.any(np.diff(arr) >= 0):
            raise ValueError("rungs must be strictly decreasing")
        ratios = arr[1:] / arr[:-1]
        if np.any(ratios < 0.5 - 1e-12) or np.any(ratios > 0.95 + 1e-12):
            raise ValueError("consecutive rung ratios must lie in [0.5, 0.95]")

    def __iter__(self):
        return iter(self.rungs)

    def __len__(self):
        return len(self.rungs)

    @property
    def h_min(self) -> float:
        return self.rungs[-1]

    @property
    def h_max(self) -> float:
        return self.rungs[0]

    def scaled(self, factor: float) -> "HLadder":
        return HLadder(tuple(h * factor for h in self.rungs))

    def to_json(self) -> str:
        return json.dumps({"rungs": list(self.rungs)})

    @staticmethod
    def from_json(s: str) -> "HLadder":
        return HLadder(tuple(json.loads(s)["rungs"]))


def make_h_ladder(h_max: float, ratio: float, count: int) -> HLadder:
    """Geometric ladder h_max * ratio**k, k = 0 .. count-1."""
    if not (0 < h_max <= 1):
        raise ValueError(f"h_max must lie in (0, 1], got {h_max}")
    if not (0.5 <= ratio <= 0.95):
        raise ValueError(f"ratio must lie in [0.5, 0.95], got {ratio}")
    if count < 8:
        raise ValueError(f"count must be >= 8, got {count}")
    return HLadder(tuple(h_max * ratio**k for k in range(count)))


#: 16 rungs from 0.5 down by factor 0.8: spans ~10 decades of e^{-0.5/h}
#: without hitting double-precision underflow.
DEFAULT_LADDER = make_h_ladder(0.5, 0.8, 16)


@dataclass
class SampledFamily:
    """h-indexed family of complex-valued functions on a box in R^d.

    ``evaluator(h, pts)`` must accept a float scale and an array of points
    (shape (n,) for d=1, (n, 2) for d=2) and return complex values of shape
    (n,).  ``grid_step_hint`` caps the quadrature step when the function
    varies faster than the Gaussian windows used by the transforms.
    """

    dim: int
    support_box: Box
    evaluator: Callable[[float, np.ndarray], np.ndarray]
    grid_step_hint: Optional[float] = None
    label: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.support_box.dim != self.dim:
            raise ValueError("support_box dimension mismatch")

    def __call__(self, h: float, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        out = self.evaluator(float(h), pts)
        return np.asarray(out, dtype=complex)

    def grid_step(self, h_min: float, user_step: Optional[float] = None) -> float:
        """min(sqrt(h_min)/4, hints): resolves the narrowest Gaussian."""
        step = np.sqrt(h_min) / 4.0
        if self.grid_step_hint is not None:
            step = min(step, self.grid_step_hint)
        if user_step is not None:
            step = min(step, user_step)
        return step

    def cached_samples(self, h: float, step: Optional[float] = None):
        """Uniform-grid samples of the rung-h member (cached per (h, step))."""
        step = step if step is not None else self.grid_step(h)
        key = (float(h), float(step))
        if key not in self._cache:
            axes = self.support_box.grid(step)
            if self.dim == 1:
                pts = axes[0]
                vals = self(h, pts)
            else:
                xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
                pts = np.column_stack([xx.ravel(), yy.ravel()])
                vals = self(h, pts).reshape(xx.shape)
            self._cache[key] = (axes, vals)
        return self._cache[key]

    def l1_norm(self, h: float) -> float:
        axes, vals = self.cached_samples(h)
        mag = np.abs(vals)
        if self.dim == 1:
            return float(np.trapezoid(mag, axes[0]))
        inner = np.trapezoid(mag, axes[1], axis=1)
        return float(np.trapezoid(inner, axes[0]))

    def tail_fraction(self, h: float) -> float:
        """Boundary-sample heuristic for mass the box fails to contain."""
        axes, vals = self.cached_samples(h)
        l1 = self.l1_norm(h)
        if l1 == 0.0:
            return 0.0
        if self.dim == 1:
            edge = 0.5 * (abs(vals[0]) + abs(vals[-1]))
            scale = axes[0][-1] - axes[0][0]
        else:
            edge = 0.25 * (
                np.mean(np.abs(vals[0, :]))
                + np.mean(np.abs(vals[-1, :]))
                + np.mean(np.abs(vals[:, 0]))
                + np.mean(np.abs(vals[:, -1]))
            )
            scale = max(axes[0][-1] - axes[0][0], axes[1][-1] - axes[1][0])
        return float(edge * scale / l1)


def constant_family(value: complex, box: Box) -> SampledFamily:
    val = complex(value)

    def ev(h, pts):
        pts = np.asarray(pts, dtype=float)
        n = pts.shape[0] if pts.ndim else 1
        return np.full(n, val, dtype=complex)

    return SampledFamily(dim=box.dim, support_box=box, evaluator=ev, label="const")
