"""Parameter types and the physical -> effective parameter map.

Two parameter levels exist:

* :class:`PhysicalParams` holds laboratory inputs in SI units (rad/s, W, J s).
* :class:`EffectiveParams` holds the inputs of the linearized model, all
  frequencies expressed in units of the first mechanical frequency.

Coupling values given as ``G_1j = G_2j = 1e-4 w1`` for the mean-field preset are
read as the bare couplings ``g1``/``g2``, since ``G_kj = g_kj * alpha_k`` is a
derived quantity.
"""

from dataclasses import dataclass, field, fields, replace
import math

import numpy as np

__all__ = [
    "HBAR",
    "ValidationError",
    "PhysicalParams",
    "EffectiveParams",
    "MeanFieldState",
    "validate",
    "drive_amplitude",
    "drive_amplitudes",
    "effective_from_physical",
]

HBAR = 1.054571817e-34  # J s


class ValidationError(ValueError):
    """Invalid parameter value; ``field`` names the offending attribute."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def _as_tuple(values):
    if np.isscalar(values):
        return (float(values),)
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class PhysicalParams:
    """Laboratory-level parameters, SI units.

    Per-mode quantities (``omega``, ``gamma``, ``g1``, ``g2``, ``eta``) are
    sequences of length ``n_modes``. ``delta_c`` and ``delta_c_prime`` are
    the effective detunings entering the mean-field equations; they are taken
    as given rather than solved for self-consistently.
    """

    omega: tuple
    gamma: tuple
    g1: tuple
    g2: tuple
    eta: tuple
    omega_c: float
    omega_L: float
    kappa1: float
    kappa2: float
    chi0: float
    P1: float
    P2: float
    delta_c: float
    delta_c_prime: float
    hbar: float = HBAR

    def __post_init__(self):
        for name in ("omega", "gamma", "g1", "g2", "eta"):
            object.__setattr__(self, name, _as_tuple(getattr(self, name)))

    @property
    def n_modes(self):
        return len(self.omega)


@dataclass(frozen=True)
class EffectiveParams:
    """Inputs of the linearized covariance model, in units of omega_1.

    ``n_th`` is either a single bath occupation shared by all mechanical modes
    or one value per mode.
    """

    omega: tuple
    gamma: tuple
    G1: tuple
    Lambda: tuple
    kappa1: float
    delta_c: float
    chi_mag: float = 0.0
    phi: float = 0.5 * math.pi
    n_th: object = 0.0

    def __post_init__(self):
        for name in ("omega", "gamma", "G1", "Lambda"):
            object.__setattr__(self, name, _as_tuple(getattr(self, name)))
        if not np.isscalar(self.n_th):
            object.__setattr__(self, "n_th", _as_tuple(self.n_th))
        else:
            object.__setattr__(self, "n_th", float(self.n_th))

    @property
    def n_modes(self):
        return len(self.omega)

    def bath_occupations(self):
        """Per-mode thermal occupations as an array of length ``n_modes``."""
        if isinstance(self.n_th, tuple):
            return np.array(self.n_th)
        return np.full(self.n_modes, self.n_th)

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})

    def with_mode_count(self, n):
        """Copy with every per-mode array truncated to the first ``n`` modes."""
        kw = {name: getattr(self, name)[:n] for name in ("omega", "gamma", "G1", "Lambda")}
        if isinstance(self.n_th, tuple):
            kw["n_th"] = self.n_th[:n]
        return replace(self, **kw)


@dataclass
class MeanFieldState:
    """Classical steady-state amplitudes.

    ``residual_norm`` is the norm of the mean-field right-hand side divided by
    ``max(eps1, eps2, 1)`` (all in units of omega_1).
    """

    alpha1: complex
    alpha2: complex
    beta: np.ndarray
    residual_norm: float = 0.0
    iterations: int = 0
    converged: bool = True
    strategy: str = ""
    tolerance: float = field(default=float("nan"), repr=False)

    def __post_init__(self):
        self.alpha1 = complex(self.alpha1)
        self.alpha2 = complex(self.alpha2)
        self.beta = np.asarray(self.beta, dtype=complex).reshape(-1)

    @property
    def n_modes(self):
        return self.beta.size

    @property
    def beta_phase(self):
        return np.angle(self.beta)

    def as_vector(self):
        return np.concatenate([[self.alpha1, self.alpha2], self.beta])

    @classmethod
    def from_vector(cls, z, **kw):
        z = np.asarray(z, dtype=complex)
        return cls(z[0], z[1], z[2:], **kw)

    @classmethod
    def vacuum(cls, n_modes):
        return cls(0.0, 0.0, np.zeros(n_modes, dtype=complex))


def _check_length(name, values, n):
    if len(values) != n:
        raise ValidationError(name, f"expected {n} entries, got {len(values)}")


def _check_positive(name, value):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise ValidationError(name, "must be finite")
    if np.any(arr <= 0):
        raise ValidationError(name, f"must be positive, got {value}")


def _check_nonnegative(name, value):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise ValidationError(name, "must be finite")
    if np.any(arr < 0):
        raise ValidationError(name, f"must be nonnegative, got {value}")


def _check_finite(name, value):
    if not np.all(np.isfinite(np.asarray(value, dtype=float))):
        raise ValidationError(name, "must be finite")


def validate(params, n_modes=None):
    """Check all invariants of a parameter set and return it unchanged.

    ``n_modes`` optionally pins the expected mode count; otherwise the length
    of ``omega`` defines it.

    Raises
    ------
    ValidationError
        Naming the first offending field.
    """
    n = params.n_modes if n_modes is None else int(n_modes)
    if n < 1:
        raise ValidationError("n_modes", "at least one mechanical mode is required")
    _check_length("omega", params.omega, n)
    if isinstance(params, PhysicalParams):
        for name in ("gamma", "g1", "g2", "eta"):
            _check_length(name, getattr(params, name), n)
        for name in ("omega", "gamma", "omega_c", "omega_L", "kappa1", "kappa2", "hbar"):
            _check_positive(name, getattr(params, name))
        for name in ("P1", "P2"):
            _check_nonnegative(name, getattr(params, name))
        for name in ("g1", "g2", "eta", "chi0", "delta_c", "delta_c_prime"):
            _check_finite(name, getattr(params, name))
    elif isinstance(params, EffectiveParams):
        for name in ("gamma", "G1", "Lambda"):
            _check_length(name, getattr(params, name), n)
        if isinstance(params.n_th, tuple):
            _check_length("n_th", params.n_th, n)
        for name in ("omega", "gamma", "kappa1"):
            _check_positive(name, getattr(params, name))
        for name in ("Lambda", "n_th", "chi_mag"):
            _check_nonnegative(name, getattr(params, name))
        for name in ("G1", "delta_c", "phi"):
            _check_finite(name, getattr(params, name))
    else:
        raise TypeError(f"cannot validate {type(params).__name__}")
    return params


def drive_amplitude(P, kappa, omega_drive, hbar=HBAR):
    """Drive amplitude ``sqrt(2 kappa P / (hbar omega_drive))`` in rad/s.

    The photon flux ``P / (hbar omega)`` needs the hbar divisor once powers
    are given in watts.
    """
    if P < 0:
        raise ValidationError("P", f"must be nonnegative, got {P}")
    _check_positive("kappa", kappa)
    _check_positive("omega_drive", omega_drive)
    _check_positive("hbar", hbar)
    return math.sqrt(2.0 * kappa * P / (hbar * omega_drive))


def drive_amplitudes(p):
    """(eps1, eps2) for the fundamental (at omega_L) and second-harmonic drive."""
    eps1 = drive_amplitude(p.P1, p.kappa1, p.omega_L, p.hbar)
    eps2 = drive_amplitude(p.P2, p.kappa2, 2.0 * p.omega_L, p.hbar)
    return eps1, eps2


def effective_from_physical(p, mf, n_th=0.0, zero_phase=False, require_converged=True):
    """Linearized-model parameters from a mean-field solution.

    Parameters
    ----------
    p : PhysicalParams
    mf : MeanFieldState
    n_th : float or sequence
        Bath occupation(s); not part of the physical parameter set.
    zero_phase : bool
        Evaluate the Duffing shift with the mechanical phase set to zero.

    Returns
    -------
    EffectiveParams
        ``Lambda_j = 3 eta_j (4 |beta_j|^2 cos^2(phi_bj) + 1)``,
        ``G1_j = |g1_j alpha_1|``, ``chi = chi0 alpha_2 = |chi| exp(2 i phi)``,
        all divided by ``omega[0]``.
    """
    validate(p)
    if require_converged and not mf.converged:
        raise ValidationError("mean_field", "mean-field state is not converged")
    if mf.n_modes != p.n_modes:
        raise ValidationError("beta", f"expected {p.n_modes} amplitudes, got {mf.n_modes}")
    w1 = p.omega[0]
    eta = np.array(p.eta)
    if zero_phase:
        x = np.abs(mf.beta)
    else:
        x = mf.beta.real  # |beta| cos(phi_b)
    Lam = 3.0 * eta * (4.0 * x ** 2 + 1.0)
    G1 = np.abs(np.array(p.g1) * mf.alpha1)
    chi = p.chi0 * mf.alpha2
    return EffectiveParams(
        omega=np.array(p.omega) / w1,
        gamma=np.array(p.gamma) / w1,
        G1=G1 / w1,
        Lambda=Lam / w1,
        kappa1=p.kappa1 / w1,
        delta_c=p.delta_c / w1,
        chi_mag=abs(chi) / w1,
        phi=0.5 * math.atan2(chi.imag, chi.real) if chi != 0 else 0.0,
        n_th=n_th,
    )
