"""Tests for data synthesis, rate fitting, Lyapunov functionals, predictions."""

import numpy as np
import pytest

from cnsplab.decay import (DecayProfile, LyapunovRecorder, box_valid_until,
                           decay_experiment, fit_rate, lyapunov_D, lyapunov_X,
                           predicted_exponent, profile_flatness, sigma0_bound,
                           smooth_log_window, synth_initial, write_decay_csv)
from cnsplab.grid import forward, make_grid
from cnsplab.lpaley import BesovSpec, besov_norm, build_partition
from cnsplab.semigroup import ModelParams, default_j0
from cnsplab.solver import CnspState, StepperConfig, run

PARAMS = ModelParams()


def _setup(n=64, L=32 * np.pi, d=2):
    g = make_grid(d, n, L)
    part = build_partition(g, default_j0(PARAMS))
    return g, part


class TestProfileValidation:
    def test_sigma0_bounds(self):
        assert sigma0_bound(2, 2.0) == -1.0
        assert sigma0_bound(3, 2.0) == -1.5
        assert sigma0_bound(3, 1.0) == 0.0  # p' = inf

    def test_window_enforced(self):
        prof = DecayProfile(sigma1=0.9)  # d/p - 1 = 0 for d=2, p=2
        with pytest.raises(ValueError, match="admissible window"):
            prof.validate_window(2)

    def test_flavor_and_style_checked(self):
        with pytest.raises(ValueError):
            DecayProfile(sigma1=-1.0, flavor="nope")
        with pytest.raises(ValueError):
            DecayProfile(sigma1=-1.0, style="nope")


class TestSynthInitial:
    def test_zero_amplitude(self):
        g, part = _setup()
        st = synth_initial(DecayProfile(sigma1=-1.0, amplitude=0.0), g, part)
        assert np.max(np.abs(st.a_hat)) == 0.0
        assert np.max(np.abs(st.flow_hat)) == 0.0

    def test_flatness_audit(self):
        g, part = _setup()
        prof = DecayProfile(sigma1=-1.0, amplitude=1e-3, seed=0)
        st = synth_initial(prof, g, part)
        audit = profile_flatness(st, part, prof)
        assert audit["ratio_a"] < 1.5
        assert audit["ratio_m"] < 1.5

    def test_classical_style_flatness(self):
        g, part = _setup()
        prof = DecayProfile(sigma1=-1.0, amplitude=1e-3, style="classical")
        st = synth_initial(prof, g, part)
        audit = profile_flatness(st, part, prof)
        assert audit["ratio_a"] < 1.5

    def test_seed_changes_phases_not_norms(self):
        g, part = _setup()
        spec = BesovSpec(-1.0, 2.0, np.inf)
        states = [synth_initial(DecayProfile(sigma1=-1.0, seed=s), g, part)
                  for s in (0, 1)]
        n0 = besov_norm(states[0].flow_hat[0], spec, part)
        n1 = besov_norm(states[1].flow_hat[0], spec, part)
        assert abs(n0 / n1 - 1.0) < 0.02
        assert np.max(np.abs(states[0].flow_hat - states[1].flow_hat)) > 0

    def test_mean_free(self):
        g, part = _setup()
        st = synth_initial(DecayProfile(sigma1=-1.0), g, part)
        assert st.a_hat.flat[0] == 0.0

    def test_deterministic_flavor_reproducible(self):
        g, part = _setup()
        prof = DecayProfile(sigma1=-1.0, flavor="deterministic_powerlaw")
        s1 = synth_initial(prof, g, part)
        s2 = synth_initial(prof, g, part)
        assert np.array_equal(s1.a_hat, s2.a_hat)
        assert np.max(np.abs(s1.a_hat.imag)) == 0.0  # real spectral data

    def test_unreachable_sigma1_on_tiny_box(self):
        g = make_grid(2, 16, 2 * np.pi)  # xi_min = 1: no low blocks
        part = build_partition(g, 1)
        with pytest.raises(ValueError, match="unreachable"):
            synth_initial(DecayProfile(sigma1=-1.0, jtop=part.j_min), g, part)


class TestPredictedExponent:
    def test_paper_values(self):
        assert predicted_exponent("density", 0.0, -2.0) == 1.5
        assert predicted_exponent("velocity", 0.0, -1.0, d=3, p=1.0) == 0.5
        assert predicted_exponent("density", 0.0, -1.5, d=3, p=2.0) == 1.25

    def test_affine_in_sigma_with_slope_half(self):
        for q in ("density", "momentum", "velocity"):
            e0 = predicted_exponent(q, 0.0, -1.0)
            e1 = predicted_exponent(q, 1.0, -1.0, d=3, p=2.0)
            assert e1 - e0 == 0.5

    def test_density_momentum_gap_is_half(self):
        s, s1 = 0.3, -1.2
        gap = (predicted_exponent("density", s, s1)
               - predicted_exponent("momentum", s, s1))
        assert gap == 0.5

    def test_range_violations_named(self):
        with pytest.raises(ValueError, match="sigma1 - 1"):
            predicted_exponent("density", -3.0, -1.0)
        with pytest.raises(ValueError, match="d/p"):
            predicted_exponent("momentum", 2.0, -1.0, d=2, p=2.0)
        with pytest.raises(ValueError, match="min"):
            predicted_exponent("velocity", -1.6, -1.0, d=2, p=2.0)


class TestFitRate:
    def test_exact_power_law(self):
        t = np.geomspace(1, 100, 60)
        e, hw = fit_rate(t, 3.0 * (1 + t) ** -0.75, (2, 90))
        assert abs(e - 0.75) < 1e-6
        assert hw < 1e-6

    def test_noisy_power_law_monte_carlo(self):
        t = np.geomspace(1, 100, 120)
        errs = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            series = (1 + t) ** -0.75 * (1 + 0.05 * rng.standard_normal(len(t)))
            e, _ = fit_rate(t, series, (2, 90))
            errs.append(e - 0.75)
        assert np.max(np.abs(errs)) <= 0.05
        assert abs(np.mean(errs)) < 0.01

    def test_constant_series(self):
        t = np.geomspace(1, 50, 40)
        e, _ = fit_rate(t, np.full_like(t, 2.5), (1, 50))
        assert abs(e) < 1e-9

    def test_window_guards(self):
        t = np.geomspace(1, 100, 60)
        v = (1 + t) ** -1.0
        with pytest.raises(ValueError, match="degenerate"):
            fit_rate(t, v, (5, 5))
        with pytest.raises(ValueError, match="12 samples"):
            fit_rate(t, v, (98, 100))


class TestSmoothing:
    def test_power_law_exponent_invariant(self):
        t = np.geomspace(1, 100, 200)
        raw = 2.0 * (1 + t) ** -0.6
        sm = smooth_log_window(t, raw, 1.4)
        e_raw, _ = fit_rate(t, raw, (3, 80))
        e_sm, _ = fit_rate(t, sm, (3, 80))
        assert abs(e_sm - e_raw) < 5e-3

    def test_oscillation_removed(self):
        t = np.geomspace(1, 100, 400)
        osc = (1 + t) ** -0.5 * (1.0 + 0.5 * np.cos(7.0 * t))
        e, _ = fit_rate(t, smooth_log_window(t, osc, 1.35), (3, 80))
        assert abs(e - 0.5) < 0.03


class TestLyapunov:
    def _recorded(self, amp=1e-3, nt=9, t_end=4.0):
        g, part = _setup(n=32, L=16 * np.pi)
        prof = DecayProfile(sigma1=-1.0, amplitude=amp)
        st = synth_initial(prof, g, part).with_fields(params=PARAMS)
        rec = LyapunovRecorder(part, p=2.0)
        from cnsplab.semigroup import apply_semigroup
        for t in np.linspace(0, t_end, nt):
            rec(t, apply_semigroup(t, st, PARAMS))
        return rec

    def test_zero_state(self):
        g, part = _setup(n=32, L=16 * np.pi)
        rec = LyapunovRecorder(part, p=2.0)
        zero = CnspState(grid=g, params=PARAMS,
                         a_hat=np.zeros(g.shape, complex),
                         flow_hat=np.zeros((2,) + g.shape, complex),
                         form="momentum")
        rec(0.0, zero)
        assert lyapunov_X(rec, 2.0, 0.0) == 0.0
        assert lyapunov_D(rec, 2.0, 2.0, 0.0) == 0.0

    def test_x_nondecreasing_and_bounded_on_linear_run(self):
        rec = self._recorded()
        ts = np.asarray(rec.times)
        vals = [lyapunov_X(rec, 2.0, t) for t in ts[1:]]
        assert all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:]))
        assert vals[-1] <= 3.0 * lyapunov_X(rec, 2.0, ts[1])

    def test_d_closed_form_single_block_constant_field(self):
        # constant-in-time single-plateau field, M = 1 on [0, 1]:
        # sup tau^1 N = N, int tau^1 N dtau = N/2 for each active term
        g = make_grid(2, 32, 2 * np.pi)
        part = build_partition(g, 0)
        x = g.coordinates()
        f = np.cos(x[0] + x[1])  # block 0 plateau, |k| = sqrt(2)
        st = CnspState(grid=g, params=PARAMS, a_hat=forward(g, f) * 0,
                       flow_hat=np.stack([forward(g, f),
                                          np.zeros(g.shape, complex)]),
                       form="momentum")
        rec = LyapunovRecorder(part, p=2.0)
        for t in np.linspace(0, 1, 101):
            rec(t, st)
        # only u-terms are active (a = 0); block 0 is high (j0 = 0):
        # sup tau ||(Lam a, u)||_{d/p-1}^h + int tau ||(a, Lam u)||_{d/p}
        from cnsplab.grid import lp_norm
        from cnsplab.lpaley import block_lp_norms
        nu = block_lp_norms(part, st.flow_hat, 2.0)[part.js.index(0)]
        lam_u = block_lp_norms(part, st.flow_hat, 2.0,
                               weight=g.xi)[part.js.index(0)]
        expect = 1.0 * nu + 0.5 * (2.0 ** (0 * 1.0)) * lam_u
        got = lyapunov_D(rec, 2.0, 1.0, 1.0)
        assert np.isclose(got, expect, rtol=1e-10)

    def test_m_validation(self):
        rec = self._recorded(nt=3, t_end=1.0)
        with pytest.raises(ValueError, match="M"):
            lyapunov_D(rec, 2.0, 0.5, 1.0)


class TestDecayExperiment:
    def test_exponent_monotone_in_sigma(self):
        # fitted linear-semigroup exponents increase with sigma, slope ~ 1/2;
        # the window starts once the dominant block is below the data ceiling
        g, part = _setup(n=64, L=32 * np.pi)
        prof = DecayProfile(sigma1=-1.0, amplitude=1e-3)
        reports, info = decay_experiment(
            g, PARAMS, part, prof, sigmas=(-0.5, 0.0, 0.5),
            linear_only=True, n_samples=160, seeds=(0,),
            fit_window=(10.0, 32.0))
        dens = {r.sigma: r.fitted_exponent for r in reports
                if r.quantity == "density"}
        assert dens[-0.5] < dens[0.0] < dens[0.5]
        slope = (dens[0.5] - dens[-0.5]) / 1.0
        assert abs(slope - 0.5) <= 0.1

    def test_fit_window_must_respect_box(self):
        g, part = _setup(n=32, L=8 * np.pi)
        prof = DecayProfile(sigma1=-1.0)
        with pytest.raises(ValueError, match="box validity"):
            decay_experiment(g, PARAMS, part, prof, sigmas=(0.0,),
                             fit_window=(1.0, 10 * box_valid_until(g)))

    def test_report_csv(self, tmp_path):
        g, part = _setup(n=32, L=16 * np.pi)
        prof = DecayProfile(sigma1=-1.0)
        reports, _ = decay_experiment(g, PARAMS, part, prof, sigmas=(0.0,),
                                      n_samples=48, seeds=(0,))
        path = tmp_path / "r.csv"
        write_decay_csv(path, reports)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("quantity,p,sigma,sigma1,fitted")
        assert len(lines) == 1 + len(reports)

    def test_nonlinear_path_runs(self):
        g, part = _setup(n=32, L=16 * np.pi)
        prof = DecayProfile(sigma1=-1.0, amplitude=1e-4)
        reports, info = decay_experiment(
            g, PARAMS, part, prof, sigmas=(0.0,), linear_only=False,
            stepper_config=StepperConfig(dt=0.5), n_samples=48, seeds=(0,))
        assert all(np.isfinite(r.fitted_exponent) for r in reports)
