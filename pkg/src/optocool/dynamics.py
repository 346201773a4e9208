"""Linearized covariance dynamics for one cavity mode and N mechanical modes.

Quadrature ordering is ``(X_a, Y_a, X_b1, Y_b1, ..., X_bN, Y_bN)``. Formulas
in docstrings use 1-based indices to match that vector; storage is 0-based,
so mechanical mode ``j`` (1-based) occupies rows ``2j`` and ``2j + 1``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .model import EffectiveParams, validate
from .numkernel import eigenvalues, integrate_matrix_ode, lyapunov_residual, solve_lyapunov

__all__ = [
    "DEFAULT_MARGIN",
    "LinearModel",
    "CoolingResult",
    "CovarianceTrajectory",
    "build_drift",
    "build_noise",
    "build_model",
    "is_stable",
    "phonon_numbers",
    "cavity_occupation",
    "cooling_point",
    "evolve_cooling",
    "thermal_covariance",
]

DEFAULT_MARGIN = 1e-12


@dataclass
class LinearModel:
    A: np.ndarray
    D: np.ndarray
    params: EffectiveParams

    @property
    def dim(self):
        return self.A.shape[0]


@dataclass
class CoolingResult:
    """Steady state of one parameter point.

    ``V``, ``n`` and ``n_cavity`` are ``None`` when the drift matrix is not
    strictly stable, since no steady state exists there.
    """

    stable: bool
    max_re_eigenvalue: float
    V: np.ndarray = None
    n: np.ndarray = None
    n_cavity: float = None
    lyapunov_residual: float = None
    eigenvalues: np.ndarray = field(default=None, repr=False)

    def to_record(self, params=None):
        rec = {}
        if params is not None:
            rec["inputs"] = params.to_dict()
        rec.update(
            stable=self.stable,
            max_re_eigenvalue=self.max_re_eigenvalue,
            n=None if self.n is None else [float(x) for x in self.n],
            n_cavity=self.n_cavity,
            residual=self.lyapunov_residual,
        )
        return rec


def build_drift(p):
    """Drift matrix ``A`` of dimension ``2(N + 1)``.

    Cavity block::

        [ |chi| cos2phi - k/2,   |chi| sin2phi + dc ]
        [ |chi| sin2phi - dc,   -|chi| cos2phi - k/2 ]

    mechanical block ``j``: ``[[-g_j/2, w_j], [-w_j - 4 L_j, -g_j/2]]``, and
    couplings ``2 G_j`` at ``(Y_a, X_bj)`` and ``(Y_bj, X_a)``.
    """
    validate(p)
    N = p.n_modes
    A = np.zeros((2 * N + 2, 2 * N + 2))
    c = math.cos(2.0 * p.phi)
    s = math.sin(2.0 * p.phi)
    A[0, 0] = p.chi_mag * c - 0.5 * p.kappa1
    A[0, 1] = p.chi_mag * s + p.delta_c
    A[1, 0] = p.chi_mag * s - p.delta_c
    A[1, 1] = -p.chi_mag * c - 0.5 * p.kappa1
    for j in range(N):
        x, y = 2 * j + 2, 2 * j + 3
        A[x, x] = A[y, y] = -0.5 * p.gamma[j]
        A[x, y] = p.omega[j]
        A[y, x] = -p.omega[j] - 4.0 * p.Lambda[j]
        A[1, x] = 2.0 * p.G1[j]
        A[y, 0] = 2.0 * p.G1[j]
    return A


def build_noise(p):
    """Diagonal noise matrix ``diag(k/2, k/2, g_1(2n_1+1)/2, ...)``."""
    validate(p)
    mech = np.array(p.gamma) * (2.0 * p.bath_occupations() + 1.0) / 2.0
    return np.diag(np.concatenate([[0.5 * p.kappa1] * 2, np.repeat(mech, 2)]))


def build_model(p):
    return LinearModel(build_drift(p), build_noise(p), p)


def is_stable(A, margin=DEFAULT_MARGIN):
    """Routh-Hurwitz test through the spectrum.

    Returns ``(flag, max_re)`` where the flag requires
    ``max Re(lambda) < -margin * ||A||_F``; exactly marginal points count as
    unstable.
    """
    A = np.asarray(A, dtype=float)
    ev = eigenvalues(A)
    mr = float(np.max(ev.real))
    return mr < -margin * float(np.linalg.norm(A)), mr


def phonon_numbers(V, n_modes):
    """``n_j = (V[2j+1, 2j+1] + V[2j+2, 2j+2] - 1) / 2`` (1-based)."""
    V = np.asarray(V, dtype=float)
    if V.shape != (2 * n_modes + 2, 2 * n_modes + 2):
        raise ValueError(
            f"covariance has shape {V.shape}, expected {2 * n_modes + 2} square"
        )
    d = np.diag(V)[2:]
    return 0.5 * (d[0::2] + d[1::2] - 1.0)


def cavity_occupation(V):
    return 0.5 * (V[0, 0] + V[1, 1] - 1.0)


def thermal_covariance(p, cavity_occupation=0.0):
    """Uncorrelated state with each mechanical mode at its bath occupation."""
    n = p.bath_occupations()
    diag = np.concatenate([[cavity_occupation + 0.5] * 2, np.repeat(n + 0.5, 2)])
    return np.diag(diag)


def cooling_point(p, margin=DEFAULT_MARGIN):
    """Steady-state phonon numbers for one effective parameter point."""
    A = build_drift(p)
    D = build_noise(p)
    ev = eigenvalues(A)
    mr = float(np.max(ev.real))
    if not mr < -margin * float(np.linalg.norm(A)):
        return CoolingResult(False, mr, eigenvalues=ev)
    V = solve_lyapunov(A, D, check_stability=False)
    res = lyapunov_residual(A, V, D) / float(np.linalg.norm(D))
    return CoolingResult(
        stable=True,
        max_re_eigenvalue=mr,
        V=V,
        n=phonon_numbers(V, p.n_modes),
        n_cavity=float(cavity_occupation(V)),
        lyapunov_residual=res,
        eigenvalues=ev,
    )


@dataclass
class CovarianceTrajectory:
    times: np.ndarray
    V: list
    n: np.ndarray
    n_cavity: np.ndarray
    stable: bool
    error_estimate: float


def evolve_cooling(p, V0, times, tol=1e-9):
    """Integrate the covariance equation and sample it at ``times``.

    ``times`` must be nondecreasing and start at or after zero. Unstable
    parameter points are integrated anyway and flagged through ``stable``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise ValueError("times must be nonnegative and nondecreasing")
    A = build_drift(p)
    D = build_noise(p)
    stable, _ = is_stable(A)
    V = np.array(V0, dtype=float)
    t = 0.0
    samples = []
    err = 0.0
    for t_next in times:
        if t_next > t:
            r = integrate_matrix_ode(A, D, V, t_next - t, tol=tol)
            V, err = r.V, err + r.error_estimate
            t = t_next
        samples.append(V.copy())
    n = np.array([phonon_numbers(S, p.n_modes) for S in samples])
    nc = np.array([cavity_occupation(S) for S in samples])
    return CovarianceTrajectory(times, samples, n, nc, stable, err)
