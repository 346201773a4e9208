"""Bright/dark hybrid-mode coefficients for pairs of mechanical modes.

For two modes coupled to the cavity with ``G11``, ``G12`` the hybrid modes

    B1 = (G11 b1 + G12 b2) / G+,    B2 = (G12 b1 - G11 b2) / G+

diagonalize the cavity coupling. ``B2`` is dark when both the frequency
mismatch coupling ``xi_w`` and the nonlinearity mismatch coupling ``xi_L``
vanish. Only the coefficients are computed here; no dynamics run in the
hybrid basis.
"""

from dataclasses import dataclass
from itertools import combinations
import math

__all__ = ["DEFAULT_THRESHOLD", "HybridModeAnalysis", "hybrid_params", "is_dark",
           "pairwise_dark_scan"]

DEFAULT_THRESHOLD = 1e-9


@dataclass(frozen=True)
class HybridModeAnalysis:
    omega_1w: float
    omega_2w: float
    omega_1L: float
    omega_2L: float
    G_plus: float
    xi_w: float
    xi_L: float
    dark: bool

    def to_dict(self):
        return dict(self.__dict__)


def hybrid_params(omega1, omega2, Lambda1, Lambda2, G11, G12, threshold=DEFAULT_THRESHOLD):
    """Hybrid frequencies, shifts and cross couplings of a mode pair.

    Raises
    ------
    ValueError
        If both couplings vanish.
    """
    s = G11 * G11 + G12 * G12
    if s == 0.0:
        raise ValueError("zero coupling vector: G11 = G12 = 0")
    c11 = G11 * G11 / s
    c12 = G12 * G12 / s
    mix = G11 * G12 / s
    xi_w = (omega1 - omega2) * mix
    xi_L = (Lambda1 - Lambda2) * mix
    return HybridModeAnalysis(
        omega_1w=omega1 * c11 + omega2 * c12,
        omega_2w=omega1 * c12 + omega2 * c11,
        omega_1L=Lambda1 * c11 + Lambda2 * c12,
        omega_2L=Lambda1 * c12 + Lambda2 * c11,
        G_plus=math.sqrt(s),
        xi_w=xi_w,
        xi_L=xi_L,
        dark=abs(xi_w) < threshold and abs(xi_L) < threshold,
    )


def is_dark(analysis, threshold=DEFAULT_THRESHOLD):
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    return abs(analysis.xi_w) < threshold and abs(analysis.xi_L) < threshold


def pairwise_dark_scan(p, threshold=DEFAULT_THRESHOLD):
    """All unordered mode pairs ``(j, k)`` (1-based, ``j < k``) that form a dark mode.

    Pairs where both couplings vanish carry no cavity coupling at all and
    are skipped.
    """
    if p.n_modes < 2:
        raise ValueError("pairwise scan needs at least two mechanical modes")
    pairs = []
    for j, k in combinations(range(p.n_modes), 2):
        if p.G1[j] == 0.0 and p.G1[k] == 0.0:
            continue
        h = hybrid_params(p.omega[j], p.omega[k], p.Lambda[j], p.Lambda[k],
                          p.G1[j], p.G1[k])
        if is_dark(h, threshold):
            pairs.append((j + 1, k + 1))
    return pairs
