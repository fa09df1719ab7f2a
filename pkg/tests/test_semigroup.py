"""Tests for the exact linearized semigroup and the kernel probes."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from cnsplab.grid import forward, make_grid
from cnsplab.lpaley import build_partition
from cnsplab.semigroup import (BlockKernelProbe, ModelParams, apply_semigroup,
                               critical_xi0, default_j0, dispersion_growth,
                               eigenvalues, green_symbol,
                               kernel_l1_profile, matexp_oracle,
                               propagate_fields)
from cnsplab.solver import CnspState

PARAMS = ModelParams(mu1_bar=1.0, mu2_bar=0.0, kappa=1.0, gamma=1.0)


class TestEigenvalues:
    def test_zero_frequency_pure_oscillation(self):
        lp, lm = eigenvalues(0.0, PARAMS)
        assert np.isclose(complex(lp), 1j)
        assert np.isclose(complex(lm), -1j)

    def test_unit_frequency_against_dense_eigensolver(self):
        # 2x2 coupling matrix [[0, -1], [kappa + gamma xi^2, -mubar xi^2]]
        r = 1.0
        A = np.array([[0.0, -1.0], [1.0 + r ** 2, -2.0 * r ** 2]])
        dense = sorted(np.linalg.eigvals(A), key=lambda z: z.imag)
        lp, lm = eigenvalues(r, PARAMS)
        assert np.isclose(complex(lm), dense[0], atol=1e-12)
        assert np.isclose(complex(lp), dense[1], atol=1e-12)
        assert np.isclose(complex(lp), -1 + 1j, atol=1e-12)

    def test_determinant_identity_at_high_frequency(self):
        r = 1e3
        lp, lm = eigenvalues(r, PARAMS)
        det = complex(lp * lm)
        assert abs(det - (1.0 + r ** 2)) / (1.0 + r ** 2) < 1e-10

    def test_params_validation(self):
        with pytest.raises(ValueError):
            ModelParams(mu1_bar=-1.0)
        with pytest.raises(ValueError):
            ModelParams(mu1_bar=1.0, mu2_bar=-0.6)  # mu1 + 2 mu2 <= 0


class TestCriticalRadius:
    def test_closed_form_and_bisection(self):
        xi0 = critical_xi0(PARAMS)
        assert np.isclose(xi0, np.sqrt((1 + np.sqrt(5.0)) / 2.0))
        assert np.isclose(xi0, 1.27202, atol=1e-5)

        def quartic(x):
            return (PARAMS.mu_bar ** 2 / 4) * x ** 4 - x ** 2 - 1.0

        lo, hi = 0.1, 10.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if quartic(mid) < 0 else (lo, mid)
        assert abs(xi0 - lo) < 1e-12
        assert abs(quartic(xi0)) < 1e-12

    def test_monotone_in_viscosity(self):
        vals = [critical_xi0(ModelParams(mu1_bar=m / 2)) for m in (1, 2, 4, 8)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_discriminant_sign_change(self):
        xi0 = critical_xi0(PARAMS)
        for eps, sign in ((-1e-6, -1.0), (1e-6, 1.0)):
            r = xi0 + eps
            disc = PARAMS.mu_bar ** 2 * r ** 4 - 4 * (1 + r ** 2)
            assert np.sign(disc) == sign


class TestGreenSymbol:
    def test_identity_at_t0(self):
        for d in (1, 2, 3):
            xi = np.full(d, 0.6)
            G = green_symbol(0.0, xi, PARAMS).matrix
            assert np.max(np.abs(G - np.eye(d + 1))) < 1e-13

    def test_solenoidal_heat_action(self):
        xi = np.array([0.8, 0.0])
        t = 1.3
        G = green_symbol(t, xi, PARAMS).matrix
        v = np.array([0.0, 0.0, 1.0])  # velocity perpendicular to xi
        out = G @ v
        assert np.isclose(out[2], np.exp(-PARAMS.mu1_bar * 0.64 * t), atol=1e-14)
        assert abs(out[0]) < 1e-14 and abs(out[1]) < 1e-14

    def test_against_matexp_oracle(self):
        rng = np.random.default_rng(0)
        xi0 = critical_xi0(PARAMS)
        worst = 0.0
        for i in range(2000):
            d = 2 if i % 3 else 3
            u = rng.integers(0, 10)
            if u < 6:
                r = 10.0 ** rng.uniform(-3, 3)
            elif u < 8:
                r = xi0 * (1 + rng.uniform(-0.2, 0.2))
            else:
                r = (1e-3, 1e3, xi0)[int(rng.integers(0, 3))]
            t = (0.0, 10.0 ** rng.uniform(-3, 1), 10.0)[int(rng.integers(0, 3))]
            direction = rng.standard_normal(d)
            direction /= np.linalg.norm(direction)
            xi = r * direction
            err = np.max(np.abs(green_symbol(t, xi, PARAMS).matrix
                                - matexp_oracle(t, xi, PARAMS)))
            worst = max(worst, float(err))
        assert worst < 1e-9

    def test_oracle_semigroup_property(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            r = 10.0 ** rng.uniform(-2, 1.5)
            xi = r * np.array([0.6, -0.8])
            t, s = rng.uniform(0.05, 2.0, size=2)
            G1 = matexp_oracle(t + s, xi, PARAMS)
            G2 = matexp_oracle(t, xi, PARAMS) @ matexp_oracle(s, xi, PARAMS)
            assert np.max(np.abs(G1 - G2)) < 1e-11

    def test_oracle_zero_matrix(self):
        assert np.array_equal(matexp_oracle(0.0, np.array([0.4, 0.3]), PARAMS),
                              np.eye(3))

    def test_oracle_decoupled_solenoidal_closed_form(self):
        xi = np.array([0.5, 0.0])
        t = 2.0
        E = matexp_oracle(t, xi, PARAMS)
        assert abs(E[2, 2] - np.exp(-PARAMS.mu1_bar * 0.25 * t)) < 1e-14


class TestApplySemigroup:
    def _state(self, seed=0, n=32, L=16 * np.pi):
        g = make_grid(2, n, L)
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(g.shape)
        a -= a.mean()
        u = rng.standard_normal((2,) + g.shape)
        return CnspState(grid=g, params=PARAMS, a_hat=forward(g, a),
                         flow_hat=forward(g, u), form="velocity")

    def test_t0_identity(self):
        st = self._state()
        out = apply_semigroup(0.0, st)
        assert np.array_equal(out.a_hat, st.a_hat)
        assert np.array_equal(out.flow_hat, st.flow_hat)

    def test_pure_solenoidal_is_heat(self):
        from cnsplab.grid import apply_projector
        st = self._state(seed=1)
        sol = apply_projector(st.grid, "P", st.flow_hat)
        st = st.with_fields(a_hat=np.zeros_like(st.a_hat), flow_hat=sol)
        t = 0.7
        out = apply_semigroup(t, st)
        heat = np.exp(-PARAMS.mu1_bar * st.grid.xi2 * t)
        assert np.max(np.abs(out.a_hat)) < 1e-14
        assert np.max(np.abs(out.flow_hat - heat * sol)) < 1e-12

    def test_single_mode_against_ode_integration(self):
        # fine explicit integration of the compressible 2x2 coupling system
        g = make_grid(2, 16, 8 * np.pi)
        idx = (2, 1)
        k = np.array([g.ks[0][idx], g.ks[1][idx]])
        r = float(np.linalg.norm(k))
        a0, V0 = 0.7 - 0.2j, -0.3 + 0.5j

        def rhs(t, y):
            U, V = y[0] + 1j * y[1], y[2] + 1j * y[3]
            dU = -V
            dV = -PARAMS.mu_bar * r ** 2 * V + (1.0 + r ** 2) * U
            return [dU.real, dU.imag, dV.real, dV.imag]

        # coupling variables: U = a/|xi| (so dU/dt = -V), V = (xi.u)/|xi| * i
        U0 = a0 / r
        W0 = 1j * V0
        t_end = 2.0
        sol = solve_ivp(rhs, (0, t_end), [U0.real, U0.imag, W0.real, W0.imag],
                        rtol=1e-12, atol=1e-14, dense_output=True)
        Uf = sol.y[0, -1] + 1j * sol.y[1, -1]
        Wf = sol.y[2, -1] + 1j * sol.y[3, -1]

        a_hat = np.zeros(g.shape, complex)
        u_hat = np.zeros((2,) + g.shape, complex)
        a_hat[idx] = a0
        u_hat[0][idx], u_hat[1][idx] = k / r * V0
        a_t, u_t = propagate_fields(t_end, g, a_hat, u_hat, PARAMS)
        a_ref = Uf * r
        V_ref = Wf / 1j
        assert abs(a_t[idx] - a_ref) / abs(a_ref) < 1e-8
        Vt = (k[0] * u_t[0][idx] + k[1] * u_t[1][idx]) / r
        assert abs(Vt - V_ref) / abs(V_ref) < 1e-8

    def test_mean_free_required(self):
        st = self._state()
        bad = st.with_fields(a_hat=st.a_hat + 0.1 * (st.grid.xi2 == 0))
        with pytest.raises(ValueError, match="mean-free"):
            apply_semigroup(1.0, bad)

    def test_low_block_contraction_diagnostic(self):
        # in the weighted variables (Lambda^{-1} H a, u) the propagator
        # contracts low blocks at a rate ~ 2^{2j}: the measurable form of the
        # low-frequency linear estimate
        g = make_grid(2, 128, 64 * np.pi)
        part = build_partition(g, default_j0(PARAMS))
        rng = np.random.default_rng(4)
        a0 = forward(g, rng.standard_normal(g.shape))
        a0.flat[0] = 0
        u0 = forward(g, rng.standard_normal((2,) + g.shape))
        from cnsplab.lpaley import block_lp_norms
        xin = np.where(g.xi > 0, g.xi, 1.0)
        wgt = (PARAMS.kappa + PARAMS.gamma * g.xi2) / xin  # Lambda^{-1} H

        def pair_block(a_hat, u_hat, j):
            i = part.js.index(j)
            return (block_lp_norms(part, a_hat, 2.0, weight=wgt)[i]
                    + block_lp_norms(part, u_hat, 2.0)[i])

        rates = []
        for j in range(part.j_min + 1, part.j0):
            tau = 4.0 ** (-j)
            a_t, u_t = propagate_fields(tau, g, a0, u0, PARAMS)
            rates.append(-np.log(pair_block(a_t, u_t, j)
                                 / pair_block(a0, u0, j)))
        rates = np.array(rates)
        assert np.all(rates > 0.2)          # uniform contraction
        assert rates.max() / rates.min() < 4.0


class TestKernelProbes:
    def test_t0_constant_across_blocks(self):
        vals = [kernel_l1_profile(j, 0.0, PARAMS) for j in (-2, -4, -6)]
        assert max(vals) / min(vals) < 1.01
        assert 3.0 < vals[0] < 6.0  # the L^1 norm of the annulus kernel

    def test_probe_requires_oversampling(self):
        with pytest.raises(ValueError, match="oversample"):
            BlockKernelProbe(-3, PARAMS, t_max=1.0, oversample=2)

    def test_tail_is_resolved(self):
        probe = BlockKernelProbe(-4, PARAMS, t_max=16 * 4.0 ** 4)
        _, _, tail = probe.profile(16 * 4.0 ** 4)
        assert tail < 5e-3

    def test_dimension_guard(self):
        with pytest.raises(NotImplementedError):
            BlockKernelProbe(-3, PARAMS, t_max=1.0, dim=3)


class TestDispersionGrowth:
    def test_normalized_at_t0(self):
        out = dispersion_growth(-4, [0.0, 4.0 ** 4], 1.0, PARAMS)
        assert np.isclose(out[0], 1.0, atol=1e-12)

    def test_block_too_close_to_degeneracy(self):
        with pytest.raises(ValueError, match="discriminant"):
            dispersion_growth(0, [1.0], 0.0, PARAMS)

    def test_p_validation(self):
        with pytest.raises(ValueError, match="p must be"):
            dispersion_growth(-4, [1.0], 1.0, PARAMS, p=2.0)

    def test_acoustic_vs_klein_gordon(self):
        js = [-4, -5, -6]
        acoustic, kg = [], []
        for j in js:
            t = 4.0 ** (-j)
            acoustic.append(float(dispersion_growth(j, [t], 0.0, PARAMS)[0]))
            kg.append(float(dispersion_growth(j, [t], 1.0, PARAMS)[0]))
        slope = np.polyfit(js, np.log2(acoustic), 1)[0]
        assert abs(slope - (-0.5)) <= 0.3
        assert max(kg) / min(kg) < 3.0


class TestHeatMaximalRegularity:
    def test_block_smoothing_constant_is_uniform(self):
        # integral of 2^{2j} ||heat block|| dt stays comparable to the data,
        # uniformly over blocks (the discrete maximal-regularity diagnostic)
        g = make_grid(2, 64, 16 * np.pi)
        part = build_partition(g, j0=1)
        rng = np.random.default_rng(5)
        from cnsplab.lpaley import block_lp_norms
        fh = forward(g, rng.standard_normal(g.shape))
        fh.flat[0] = 0
        consts = []
        for j in part.js[1:-1]:
            tau = np.linspace(0, 64.0 * 4.0 ** (-j), 257)
            vals = []
            for t in tau:
                heat = np.exp(-g.xi2 * t)
                vals.append(block_lp_norms(part, heat * fh, 2.0)[part.js.index(j)])
            integral = 4.0 ** j * np.trapezoid(vals, tau)
            consts.append(integral / vals[0])
        consts = np.array(consts)
        assert consts.max() / consts.min() < 3.0
