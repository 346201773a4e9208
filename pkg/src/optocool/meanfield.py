"""Classical steady state of the driven cavity + Duffing oscillators.

The amplitudes ``z = (alpha1, alpha2, beta_1..beta_N)`` obey

    d alpha1/dt = -(i dc + k1/2) alpha1 + chi0 conj(alpha1) alpha2 + eps1
    d alpha2/dt = -(i dc' + k2/2) alpha2 - chi0/2 alpha1^2 + eps2
    d beta_j/dt = -(i w_j + g_j/2) beta_j + i g1_j |alpha1|^2 + i g2_j |alpha2|^2
                  - i eta_j (16 x_j^3 + 12 x_j),     x_j = Re beta_j

Everything is solved in units of ``omega[0]``. The solver first relaxes the
equations in pseudo-time with linearly implicit Euler steps whose size grows
as the residual falls (this follows the branch connected to the start
state), then polishes the result with damped Newton iterations.
"""

from dataclasses import dataclass, replace
import logging

import numpy as np

from .model import MeanFieldState, drive_amplitudes, validate
from .numkernel import SingularMatrixError, lu_solve

__all__ = [
    "MeanFieldSolverConfig",
    "MeanFieldDivergenceError",
    "meanfield_rhs",
    "meanfield_jacobian",
    "solve_meanfield",
    "sweep_meanfield",
    "MeanFieldRow",
]

log = logging.getLogger(__name__)

STRATEGIES = ("relaxation+newton", "relaxation", "newton")


class MeanFieldDivergenceError(ArithmeticError):
    """Amplitudes exceeded the blow-up bound; no stable classical fixed point."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class MeanFieldSolverConfig:
    """Solver controls.

    ``tolerance`` bounds ``|rhs| / max(eps1, eps2, 1)``; ``time_step_init`` is
    the first pseudo-time step in units of ``1/omega_1``.
    """

    tolerance: float = 1e-10
    max_iterations: int = 500
    time_step_init: float = 0.1
    strategy: str = "relaxation+newton"
    relaxation_tolerance: float = 1e-6
    blowup: float = 1e9

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.time_step_init > 0:
            raise ValueError("time_step_init must be positive")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")


class _Scaled:
    # physical parameters in units of omega_1
    def __init__(self, p):
        w1 = p.omega[0]
        self.w1 = w1
        eps1, eps2 = drive_amplitudes(p)
        self.eps1 = eps1 / w1
        self.eps2 = eps2 / w1
        self.dc = p.delta_c / w1
        self.dcp = p.delta_c_prime / w1
        self.k1 = p.kappa1 / w1
        self.k2 = p.kappa2 / w1
        self.chi0 = p.chi0 / w1
        self.omega = np.array(p.omega) / w1
        self.gamma = np.array(p.gamma) / w1
        self.g1 = np.array(p.g1) / w1
        self.g2 = np.array(p.g2) / w1
        self.eta = np.array(p.eta) / w1
        self.drive_scale = max(self.eps1, self.eps2, 1.0)

    def rhs(self, z):
        a1, a2, b = z[0], z[1], z[2:]
        x = b.real
        out = np.empty_like(z)
        out[0] = -(1j * self.dc + 0.5 * self.k1) * a1 + self.chi0 * np.conj(a1) * a2 + self.eps1
        out[1] = -(1j * self.dcp + 0.5 * self.k2) * a2 - 0.5 * self.chi0 * a1 * a1 + self.eps2
        out[2:] = (
            -(1j * self.omega + 0.5 * self.gamma) * b
            + 1j * self.g1 * abs(a1) ** 2
            + 1j * self.g2 * abs(a2) ** 2
            - 1j * self.eta * (16.0 * x ** 3 + 12.0 * x)
        )
        return out

    def jacobian(self, z):
        # d f = J dz + K conj(dz); real Jacobian from (J, K)
        n = z.size
        a1, a2, b = z[0], z[1], z[2:]
        J = np.zeros((n, n), dtype=complex)
        K = np.zeros((n, n), dtype=complex)
        J[0, 0] = -(1j * self.dc + 0.5 * self.k1)
        K[0, 0] = self.chi0 * a2
        J[0, 1] = self.chi0 * np.conj(a1)
        J[1, 1] = -(1j * self.dcp + 0.5 * self.k2)
        J[1, 0] = -self.chi0 * a1
        duff = -0.5j * self.eta * (48.0 * b.real ** 2 + 12.0)
        idx = np.arange(2, n)
        J[idx, idx] = -(1j * self.omega + 0.5 * self.gamma) + duff
        K[idx, idx] = duff
        J[idx, 0] = 1j * self.g1 * np.conj(a1)
        K[idx, 0] = 1j * self.g1 * a1
        J[idx, 1] = 1j * self.g2 * np.conj(a2)
        K[idx, 1] = 1j * self.g2 * a2
        dx = J + K
        dy = 1j * (J - K)
        return np.block([[dx.real, dy.real], [dx.imag, dy.imag]])

    def residual(self, z):
        return float(np.linalg.norm(self.rhs(z))) / self.drive_scale


def _split(z):
    return np.concatenate([z.real, z.imag])


def _join(v):
    n = v.size // 2
    return v[:n] + 1j * v[n:]


def meanfield_rhs(state, p):
    """Time derivatives ``(alpha1', alpha2', beta_j')`` in rad/s."""
    sc = _Scaled(p)
    return sc.rhs(state.as_vector()) * sc.w1


def meanfield_jacobian(state, p):
    """Real Jacobian of the scaled right-hand side, ordering ``(Re z, Im z)``."""
    return _Scaled(p).jacobian(state.as_vector())


def _check_blowup(z, cfg, it):
    if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > cfg.blowup:
        raise MeanFieldDivergenceError(
            f"mean-field amplitudes exceeded {cfg.blowup:g} after {it} iterations",
            MeanFieldState.from_vector(np.nan_to_num(z), converged=False, iterations=it),
        )


def _relax(sc, z, cfg, target, budget):
    # switched-evolution-relaxation pseudo-transient continuation
    h = cfg.time_step_init
    r = sc.residual(z)
    it = 0
    eye = np.eye(2 * z.size)
    while r > target and it < budget:
        it += 1
        M = eye / h - sc.jacobian(z)
        try:
            dz = _join(lu_solve(M, _split(sc.rhs(z))))
        except SingularMatrixError:
            h *= 0.5
            continue
        z_new = z + dz
        _check_blowup(z_new, cfg, it)
        r_new = sc.residual(z_new)
        if r_new < r * (1.0 + 1e-12) or h <= cfg.time_step_init:
            h = min(h * max(r / max(r_new, 1e-300), 0.5), 1e12)
            z, r = z_new, r_new
        else:
            h *= 0.25
    return z, r, it


def _newton(sc, z, cfg, target, budget):
    r = sc.residual(z)
    it = 0
    while r > target and it < budget:
        it += 1
        try:
            step = -_join(lu_solve(sc.jacobian(z), _split(sc.rhs(z))))
        except SingularMatrixError:
            break
        lam = 1.0
        while lam > 1e-6:
            z_try = z + lam * step
            _check_blowup(z_try, cfg, it)
            r_try = sc.residual(z_try)
            if r_try < r:
                break
            lam *= 0.5
        else:
            break
        z, r = z_try, r_try
    return z, r, it


def solve_meanfield(p, cfg=None, initial=None):
    """Steady-state classical amplitudes for physical parameters ``p``.

    Parameters
    ----------
    p : PhysicalParams
    cfg : MeanFieldSolverConfig, optional
    initial : MeanFieldState, optional
        Warm start; defaults to the zero state.

    Returns
    -------
    MeanFieldState
        With ``converged`` false if the residual target was not met within
        ``cfg.max_iterations``; the best iterate is returned in that case.

    Raises
    ------
    MeanFieldDivergenceError
        If any amplitude exceeds ``cfg.blowup``.
    """
    cfg = cfg or MeanFieldSolverConfig()
    validate(p)
    sc = _Scaled(p)
    z = (initial.as_vector() if initial is not None
         else np.zeros(p.n_modes + 2, dtype=complex))
    if z.size != p.n_modes + 2:
        raise ValueError("initial state has the wrong number of modes")
    budget = cfg.max_iterations
    total = 0
    if cfg.strategy in ("relaxation+newton", "relaxation"):
        target = cfg.tolerance if cfg.strategy == "relaxation" else max(
            cfg.relaxation_tolerance, cfg.tolerance)
        z, r, it = _relax(sc, z, cfg, target, budget)
        total += it
        budget -= it
    if cfg.strategy in ("relaxation+newton", "newton"):
        z, r, it = _newton(sc, z, cfg, cfg.tolerance, max(budget, 1))
        total += it
    r = sc.residual(z)
    converged = r <= cfg.tolerance
    if not converged:
        log.warning("mean field not converged: residual %.3e after %d iterations", r, total)
    return MeanFieldState.from_vector(
        z, residual_norm=r, iterations=total, converged=converged,
        strategy=cfg.strategy, tolerance=cfg.tolerance,
    )


@dataclass
class MeanFieldRow:
    P: float
    state: MeanFieldState
    error: str = ""

    @property
    def converged(self):
        return self.state.converged and not self.error


def sweep_meanfield(p, powers, cfg=None, warm_start=True):
    """Solve the mean field for ``P1 = P2 = P`` over ascending ``powers``.

    Each point starts from the previous fixed point when ``warm_start`` is
    set. Failing points are kept as flagged rows.
    """
    powers = [float(x) for x in powers]
    if not powers:
        raise ValueError("powers must be nonempty")
    if any(b < a for a, b in zip(powers, powers[1:])):
        raise ValueError("powers must be ascending")
    cfg = cfg or MeanFieldSolverConfig()
    rows = []
    prev = None
    for P in powers:
        q = replace(p, P1=P, P2=P)
        try:
            st = solve_meanfield(q, cfg, initial=prev if warm_start else None)
            rows.append(MeanFieldRow(P, st))
            if st.converged:
                prev = st
        except MeanFieldDivergenceError as exc:
            rows.append(MeanFieldRow(P, exc.state, error=str(exc)))
    return rows
