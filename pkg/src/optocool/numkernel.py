"""Dense numerical kernels.

LU with partial pivoting, nonsymmetric eigenvalues (balancing, Householder
Hessenberg reduction, Francis double-shift QR), the continuous Lyapunov
equation via Kronecker vectorization, and an adaptive RK4 propagator for
the covariance equation ``dV/dt = A V + V A^T + D``.

Matrices are plain ``numpy.ndarray`` values; every routine copies its inputs
and is safe to call concurrently.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NumericalError",
    "SingularMatrixError",
    "ConvergenceError",
    "UnstableMatrixError",
    "StepUnderflowError",
    "lu_factor",
    "lu_solve",
    "balance",
    "hessenberg",
    "eigenvalues",
    "max_real_part",
    "solve_lyapunov",
    "lyapunov_residual",
    "integrate_matrix_ode",
    "MatrixODEResult",
]

_EPS = np.finfo(float).eps


class NumericalError(ArithmeticError):
    """Base class for kernel failures."""


class SingularMatrixError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class UnstableMatrixError(NumericalError):
    """Raised when a Lyapunov solve is requested for a non-Hurwitz matrix."""

    def __init__(self, message, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues


class StepUnderflowError(NumericalError):
    pass


def _square(M, name="M"):
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {M.shape}")
    return M


# ---------------------------------------------------------------------------
# LU decomposition


def lu_factor(M):
    """LU factorization with partial pivoting, ``P M = L U``.

    Returns the packed factors (unit lower triangle implied) and the pivot
    permutation as an index array.
    """
    LU = _square(M)
    n = LU.shape[0]
    perm = np.arange(n)
    scale = np.max(np.abs(LU)) if n else 0.0
    tiny = n * _EPS * scale
    for k in range(n):
        p = k + int(np.argmax(np.abs(LU[k:, k])))
        if abs(LU[p, k]) <= tiny or LU[p, k] == 0.0:
            raise SingularMatrixError(
                f"matrix is singular to working precision (pivot {k})"
            )
        if p != k:
            LU[[k, p]] = LU[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        LU[k + 1:, k] /= LU[k, k]
        LU[k + 1:, k + 1:] -= np.outer(LU[k + 1:, k], LU[k, k + 1:])
    return LU, perm


def _lu_substitute(LU, perm, b):
    n = LU.shape[0]
    y = np.array(b, dtype=np.result_type(LU, b))[perm]
    for i in range(1, n):
        y[i] -= LU[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - LU[i, i + 1:] @ y[i + 1:]) / LU[i, i]
    return y


def lu_solve(M, b, refine=1):
    """Solve ``M x = b`` by Gaussian elimination with partial pivoting.

    Parameters
    ----------
    M : (n, n) array_like
    b : (n,) array_like
    refine : int
        Number of iterative-refinement sweeps applied after the direct solve.

    Raises
    ------
    SingularMatrixError
        If a pivot vanishes relative to ``n * eps * max|M|``.
    """
    M = _square(M)
    b = np.asarray(b, dtype=float)
    if b.shape != (M.shape[0],):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({M.shape[0]},)")
    LU, perm = lu_factor(M)
    x = _lu_substitute(LU, perm, b)
    for _ in range(refine):
        x = x + _lu_substitute(LU, perm, b - M @ x)
    return x


# ---------------------------------------------------------------------------
# Eigenvalues


def balance(M):
    """Parlett-Reinsch balancing by powers of two.

    Returns a matrix similar to ``M`` with rows and columns of comparable
    norm; eigenvalues are unchanged exactly since only exponent bits move.
    """
    A = _square(M)
    n = A.shape[0]
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(n):
            c = np.sum(np.abs(A[:, i])) - abs(A[i, i])
            r = np.sum(np.abs(A[i, :])) - abs(A[i, i])
            if c == 0.0 or r == 0.0:
                continue
            g = r / radix
            f = 1.0
            s = c + r
            while c < g:
                f *= radix
                c *= sqrdx
            g = r * radix
            while c > g:
                f /= radix
                c /= sqrdx
            if (c + r) / f < 0.95 * s:
                done = False
                A[i, :] /= f
                A[:, i] *= f
    return A


def hessenberg(M):
    """Reduce ``M`` to upper Hessenberg form by Householder similarity."""
    H = _square(M)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        v[0] += np.copysign(alpha, x[0])
        v /= np.linalg.norm(v)
        H[k + 1:, k:] -= 2.0 * np.outer(v, v @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H


def _hqr(H, max_iter_per_eig=60):
    # Francis double-shift QR on an upper Hessenberg matrix (EISPACK hqr).
    a = H.copy()
    n = a.shape[0]
    wr = np.zeros(n)
    wi = np.zeros(n)
    anorm = np.sum(np.abs(a))
    nn = n - 1
    t = 0.0
    while nn >= 0:
        its = 0
        while True:
            # look for a single small subdiagonal element
            l = nn
            while l >= 1:
                s = abs(a[l - 1, l - 1]) + abs(a[l, l])
                if s == 0.0:
                    s = anorm
                if abs(a[l, l - 1]) <= _EPS * s:
                    a[l, l - 1] = 0.0
                    break
                l -= 1
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = np.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + np.copysign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = 0.0
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = z
                    wi[nn] = -z
                nn -= 2
                break
            if its >= max_iter_per_eig:
                raise ConvergenceError(
                    f"QR iteration did not converge for eigenvalue {nn}"
                )
            if its == 10 or its == 20:
                # exceptional shift
                t += x
                for i in range(nn + 1):
                    a[i, i] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                x = y = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                if u <= _EPS * v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i, i - 2] = 0.0
                if i != m + 2:
                    a[i, i - 3] = 0.0
            k = m
            while k <= nn - 1:
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = np.copysign(np.sqrt(p * p + q * q + r * r), p)
                if s != 0.0:
                    if k == m:
                        if l != m:
                            a[k, k - 1] = -a[k, k - 1]
                    else:
                        a[k, k - 1] = -s * x
                    p += s
                    x = p / s
                    y = q / s
                    z = r / s
                    q /= p
                    r /= p
                    # row modification
                    if k != nn - 1:
                        rows = a[k:k + 3, k:nn + 1]
                        pp = rows[0] + q * rows[1] + r * rows[2]
                        rows[0] -= pp * x
                        rows[1] -= pp * y
                        rows[2] -= pp * z
                    else:
                        rows = a[k:k + 2, k:nn + 1]
                        pp = rows[0] + q * rows[1]
                        rows[0] -= pp * x
                        rows[1] -= pp * y
                    # column modification
                    mmin = nn if nn < k + 3 else k + 3
                    cols = a[l:mmin + 1, k:k + 3]
                    if k != nn - 1:
                        pp = x * cols[:, 0] + y * cols[:, 1] + z * cols[:, 2]
                        cols[:, 0] -= pp
                        cols[:, 1] -= pp * q
                        cols[:, 2] -= pp * r
                    else:
                        pp = x * cols[:, 0] + y * cols[:, 1]
                        cols[:, 0] -= pp
                        cols[:, 1] -= pp * q
                k += 1
    return wr + 1j * wi


def eigenvalues(M):
    """Eigenvalues of a real square matrix.

    The matrix is balanced, reduced to Hessenberg form and iterated with the
    Francis double-shift QR algorithm. Complex eigenvalues come out as exact
    conjugate pairs, positive imaginary part first.

    Raises
    ------
    ConvergenceError
        If a single eigenvalue needs more than 60 QR sweeps.
    """
    M = _square(M)
    if M.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    if not np.all(np.isfinite(M)):
        raise NumericalError("matrix has non-finite entries")
    return _hqr(hessenberg(balance(M)))


def max_real_part(M):
    return float(np.max(eigenvalues(M).real))


# ---------------------------------------------------------------------------
# Lyapunov equation


def lyapunov_residual(A, X, Q):
    """Frobenius norm of ``A X + X A^T + Q``."""
    A = np.asarray(A, dtype=float)
    X = np.asarray(X, dtype=float)
    return float(np.linalg.norm(A @ X + X @ A.T + Q))


def solve_lyapunov(A, Q, check_stability=True, margin=1e-12):
    """Solve ``A X + X A^T + Q = 0`` for symmetric ``X``.

    The equation is vectorized as ``(I kron A + A kron I) vec(X) = -vec(Q)``
    and solved densely with :func:`lu_solve`. For the matrix sizes used here
    (at most a few tens) this is cheaper to get right than Bartels-Stewart.

    Parameters
    ----------
    A : (n, n) array_like
        Drift matrix; must be Hurwitz when ``check_stability`` is set.
    Q : (n, n) array_like
        Symmetric source term.
    margin : float
        Relative stability margin, see :func:`optocool.dynamics.is_stable`.

    Raises
    ------
    UnstableMatrixError
        With the offending eigenvalues attached.
    SingularMatrixError
    """
    A = _square(A, "A")
    Q = _square(Q, "Q")
    n = A.shape[0]
    if Q.shape != A.shape:
        raise ValueError(f"Q has shape {Q.shape}, expected {A.shape}")
    if not np.allclose(Q, Q.T, rtol=1e-12, atol=1e-300):
        raise ValueError("Q must be symmetric")
    if check_stability:
        ev = eigenvalues(A)
        bound = -margin * np.linalg.norm(A)
        if np.max(ev.real) >= bound:
            bad = ev[ev.real >= bound]
            raise UnstableMatrixError(
                f"drift matrix is not strictly stable; eigenvalues {bad}", ev
            )
    eye = np.eye(n)
    K = np.kron(eye, A) + np.kron(A, eye)
    # column-major vec
    x = lu_solve(K, -Q.reshape(-1, order="F"), refine=2)
    X = x.reshape(n, n, order="F")
    return 0.5 * (X + X.T)


# ---------------------------------------------------------------------------
# Covariance ODE


@dataclass
class MatrixODEResult:
    V: np.ndarray
    t: float
    error_estimate: float
    n_steps: int
    n_rejected: int


def _rk4_step(f, V, h):
    k1 = f(V)
    k2 = f(V + 0.5 * h * k1)
    k3 = f(V + 0.5 * h * k2)
    k4 = f(V + h * k3)
    W = V + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return 0.5 * (W + W.T)


def integrate_matrix_ode(A, D, V0, t_final, tol=1e-9, h0=None, h_min=1e-14,
                         max_steps=10_000_000):
    """Propagate ``dV/dt = A V + V A^T + D`` from ``V0`` to ``t_final``.

    Classic RK4 with step-doubling error control: each step is compared
    against two half steps, rejected steps are halved, and accepted steps
    with a comfortable margin are doubled. The local error is measured in the
    max norm relative to ``max(1, max|V|)``. ``V`` is symmetrized after every
    stage combination.

    Returns
    -------
    MatrixODEResult
        ``error_estimate`` is the sum of accepted local error estimates.

    Raises
    ------
    StepUnderflowError
        If the step falls below ``h_min * max(1, t_final)``.
    """
    A = _square(A, "A")
    D = _square(D, "D")
    V = _square(V0, "V0")
    if not np.allclose(V, V.T, rtol=1e-12, atol=1e-300):
        raise ValueError("V0 must be symmetric")
    V = 0.5 * (V + V.T)
    if t_final < 0:
        raise ValueError("t_final must be nonnegative")
    if t_final == 0:
        return MatrixODEResult(V, 0.0, 0.0, 0, 0)

    def f(X):
        AX = A @ X
        return AX + AX.T + D

    scale_A = np.linalg.norm(A, ord=np.inf)
    # keep 2*h*|A| inside the real-axis RK4 stability interval
    h_max = 1.0 / scale_A if scale_A > 0 else t_final
    h = min(h0 if h0 is not None else 0.1 * h_max, h_max, t_final)
    h_floor = h_min * max(1.0, t_final)
    t = 0.0
    err_total = 0.0
    steps = rejected = 0
    while t < t_final:
        if steps + rejected > max_steps:
            raise NumericalError("matrix ODE exceeded the step budget")
        h = min(h, t_final - t)
        full = _rk4_step(f, V, h)
        half = _rk4_step(f, _rk4_step(f, V, 0.5 * h), 0.5 * h)
        # Richardson: error of the two-half-step solution
        err = np.max(np.abs(half - full)) / 15.0
        scale = max(1.0, float(np.max(np.abs(half))))
        if not np.isfinite(err):
            raise NumericalError("matrix ODE produced non-finite values")
        if err <= tol * scale:
            V = half + (half - full) / 15.0
            V = 0.5 * (V + V.T)
            t = t + h if t_final - t - h > h_floor else t_final
            err_total += err
            steps += 1
            if err < tol * scale / 64.0:
                h = min(2.0 * h, h_max)
        else:
            rejected += 1
            h *= 0.5
            if h < h_floor:
                raise StepUnderflowError(f"step size underflow at t={t:g}")
    return MatrixODEResult(V, t, err_total, steps, rejected)
