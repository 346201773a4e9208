import math
from dataclasses import replace

import numpy as np
import pytest

from optocool.meanfield import (
    MeanFieldDivergenceError,
    MeanFieldSolverConfig,
    meanfield_jacobian,
    meanfield_rhs,
    solve_meanfield,
    sweep_meanfield,
)
from optocool.model import MeanFieldState, drive_amplitudes
from optocool.sweep import fig2_physical

W1 = 2 * math.pi * 20e6


def linear(p):
    return replace(p, chi0=0.0, g1=(0.0,) * p.n_modes, g2=(0.0,) * p.n_modes,
                   eta=(0.0,) * p.n_modes)


class TestRHS:
    def test_origin_no_drive(self):
        p = replace(fig2_physical(), P1=0.0, P2=0.0)
        assert np.all(meanfield_rhs(MeanFieldState.vacuum(2), p) == 0)

    def test_origin_with_drive(self):
        p = fig2_physical()
        eps1, eps2 = drive_amplitudes(p)
        f = meanfield_rhs(MeanFieldState.vacuum(2), p)
        assert f[0] == pytest.approx(eps1, rel=1e-14)
        assert f[1] == pytest.approx(eps2, rel=1e-14)
        assert np.all(f[2:] == 0)

    def test_linear_fixed_point(self):
        p = linear(fig2_physical())
        eps1, eps2 = drive_amplitudes(p)
        a1 = eps1 / (1j * p.delta_c + p.kappa1 / 2)
        a2 = eps2 / (1j * p.delta_c_prime + p.kappa2 / 2)
        f = meanfield_rhs(MeanFieldState(a1, a2, [0, 0]), p)
        assert np.abs(f).max() <= 1e-12 * eps1

    def test_duffing_term(self):
        # only the mechanical Duffing force acts on a real beta
        p = replace(linear(fig2_physical()), eta=(1e-4 * W1,) * 2, P1=0.0, P2=0.0,
                    gamma=(0.0 + 1e-12,) * 2)
        b = 3.0
        f = meanfield_rhs(MeanFieldState(0, 0, [b, 0]), p)
        expected = -1j * W1 * b - 1j * 1e-4 * W1 * (16 * b ** 3 + 12 * b)
        assert f[2] == pytest.approx(expected, rel=1e-9)

    def test_jacobian_finite_difference(self):
        p = fig2_physical()
        rng = np.random.default_rng(0)
        z = rng.normal(size=4) * 30 + 1j * rng.normal(size=4) * 30
        st = MeanFieldState.from_vector(z)
        J = meanfield_jacobian(st, p)
        h = 1e-6
        n = z.size
        fd = np.zeros_like(J)
        for k in range(2 * n):
            dz = np.zeros(n, dtype=complex)
            dz[k % n] = h if k < n else 1j * h
            fp = meanfield_rhs(MeanFieldState.from_vector(z + dz), p) / W1
            fm = meanfield_rhs(MeanFieldState.from_vector(z - dz), p) / W1
            d = (fp - fm) / (2 * h)
            fd[:, k] = np.concatenate([d.real, d.imag])
        np.testing.assert_allclose(J, fd, rtol=1e-5, atol=1e-6 * np.abs(J).max())


class TestSolve:
    def test_zero_drive(self):
        st = solve_meanfield(replace(fig2_physical(), P1=0.0, P2=0.0))
        assert st.converged
        assert st.alpha1 == 0 and st.alpha2 == 0 and np.all(st.beta == 0)

    @pytest.mark.parametrize("strategy", ["relaxation+newton", "relaxation", "newton"])
    def test_closed_form(self, strategy):
        p = linear(fig2_physical())
        eps1, eps2 = np.array(drive_amplitudes(p)) / W1
        a1 = eps1 / (1j * 10.0 + 50.0)
        a2 = eps2 / (1j * 20.0 + 1000.0)
        st = solve_meanfield(p, MeanFieldSolverConfig(strategy=strategy))
        assert st.converged
        assert abs(st.alpha1 - a1) / abs(a1) < 1e-10
        assert abs(st.alpha2 - a2) / abs(a2) < 1e-10

    def test_residual_bound(self):
        cfg = MeanFieldSolverConfig(tolerance=1e-10)
        p = fig2_physical()
        st = solve_meanfield(p, cfg)
        assert st.converged and st.residual_norm <= 1e-10
        eps = max(*(np.array(drive_amplitudes(p)) / W1), 1.0)
        post = np.linalg.norm(meanfield_rhs(st, p) / W1) / eps
        assert post <= cfg.tolerance

    def test_strategies_agree(self):
        p = fig2_physical()
        tol = 1e-10
        a = solve_meanfield(p, MeanFieldSolverConfig(tolerance=tol, strategy="relaxation"))
        b = solve_meanfield(p, MeanFieldSolverConfig(tolerance=tol, strategy="newton"))
        c = solve_meanfield(p, MeanFieldSolverConfig(tolerance=tol))
        for x, y in ((a, b), (a, c)):
            d = np.abs(x.as_vector() - y.as_vector()).max() / np.abs(x.as_vector()).max()
            assert d <= 10 * tol

    def test_warm_start(self):
        p = fig2_physical()
        st = solve_meanfield(p)
        again = solve_meanfield(p, initial=st)
        assert again.iterations <= 1

    def test_nonconvergence_reported(self):
        st = solve_meanfield(fig2_physical(),
                             MeanFieldSolverConfig(max_iterations=1, strategy="relaxation"))
        assert not st.converged
        assert st.residual_norm > st.tolerance

    def test_divergence(self):
        with pytest.raises(MeanFieldDivergenceError):
            solve_meanfield(fig2_physical(), MeanFieldSolverConfig(blowup=1.0))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MeanFieldSolverConfig(tolerance=0.0)
        with pytest.raises(ValueError):
            MeanFieldSolverConfig(max_iterations=0)
        with pytest.raises(ValueError):
            MeanFieldSolverConfig(strategy="bisection")


class TestSweep:
    def test_zero_power(self):
        rows = sweep_meanfield(fig2_physical(), [0.0])
        assert len(rows) == 1
        assert rows[0].converged
        assert abs(rows[0].state.alpha2) == 0 and np.all(rows[0].state.beta == 0)

    def test_monotone_and_smooth(self):
        powers = np.linspace(4e-6 / 50, 4e-6, 50)
        rows = sweep_meanfield(fig2_physical(), powers)
        assert all(r.converged for r in rows)
        a1 = np.array([abs(r.state.alpha1) for r in rows])
        a2 = np.array([abs(r.state.alpha2) for r in rows])
        b = np.array([np.abs(r.state.beta) for r in rows])
        for col in (a1, a2, b[:, 0], b[:, 1]):
            assert np.all(np.diff(col) > 0)
        # continuity: adjacent rows differ by less than the largest increment
        # of a sqrt(P) law over the same grid
        rel = np.abs(np.diff(a2)) / a2[1:]
        assert rel.max() < 0.5

    def test_requires_ascending(self):
        with pytest.raises(ValueError):
            sweep_meanfield(fig2_physical(), [2e-6, 1e-6])
        with pytest.raises(ValueError):
            sweep_meanfield(fig2_physical(), [])

    def test_divergent_point_flagged(self):
        rows = sweep_meanfield(fig2_physical(), [0.0, 4e-6],
                               MeanFieldSolverConfig(blowup=5.0))
        assert rows[0].converged
        assert not rows[1].converged and rows[1].error
