"""fbiscan: numerical phase-space localization and causal-geometry toolkit.

Core pipeline: Gaussian-windowed transforms of h-indexed function families
(:mod:`fbiscan.transforms`), exponential decay-rate fitting over scale
ladders (:mod:`fbiscan.decay`), phase-space support scans
(:mod:`fbiscan.microsupport`), singular-direction detection for fixed
distributions (:mod:`fbiscan.analytic_wf`), exact conic-set calculus and
unique-continuation predicates (:mod:`fbiscan.wf_calculus`), causal
geometry on gridded 1+1 Lorentzian charts (:mod:`fbiscan.spacetime`), and
worked physics experiments (:mod:`fbiscan.qft_examples`).
"""

from .grids import Box, HLadder, SampledFamily, make_h_ladder, DEFAULT_LADDER
from .decay import DecayFit, DecayThresholds, fit_decay, weighted_sup

__all__ = [
    "Box",
    "HLadder",
    "SampledFamily",
    "make_h_ladder",
    "DEFAULT_LADDER",
    "DecayFit",
    "DecayThresholds",
    "fit_decay",
    "weighted_sup",
]

__version__ = "0.1.0"
