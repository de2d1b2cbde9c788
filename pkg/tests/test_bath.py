"""Bath toolkit: spectral densities, correlation functions, discrete
influence-functional coefficients, and pseudomode embeddings."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opendicke import bath

ALPHA = 0.3


@pytest.fixture(scope="module")
def ohmic():
    return bath.SpectralDensity(alpha=ALPHA)


@pytest.fixture(scope="module")
def tanh_bath():
    return bath.SpectralDensity(
        form="tanh-lindblad", alpha=0.0, gamma_phi=0.4, beta_T=1e-3)


@pytest.fixture(scope="module")
def ohmic_corr(ohmic):
    grid = np.arange(0.0, 20.0001, 0.1)
    return bath.bath_correlation(ohmic, np.inf, grid)


def single_term_correlation(c, nu, t_max=10.0, dt=0.05):
    t = np.arange(0.0, t_max + dt / 2, dt)
    return bath.BathCorrelation(times=t, values=c * np.exp(-nu * t), beta_T=np.inf)


# ---------------------------------------------------------------------------
# spectral density


class TestSpectralDensity:
    def test_ohmic_vanishes_at_origin(self, ohmic):
        assert bath.eval_spectral_density(ohmic, 0.0) == 0.0

    def test_ohmic_unit_frequency_value(self, ohmic):
        val = bath.eval_spectral_density(ohmic, 1.0)
        assert val == pytest.approx(0.15 * np.exp(-1.0), rel=1e-14)
        assert val == pytest.approx(0.055182, rel=1e-4)

    def test_tanh_saturates_at_high_frequency(self, tanh_bath):
        val = bath.eval_spectral_density(tanh_bath, 1e6)
        assert val == pytest.approx(0.4 / np.pi, rel=1e-12)

    def test_negative_frequency_rejected(self, ohmic):
        with pytest.raises(ValueError):
            bath.eval_spectral_density(ohmic, -0.1)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            bath.SpectralDensity(form="lorentzian")
        with pytest.raises(ValueError):
            bath.SpectralDensity(alpha=-0.1)
        with pytest.raises(ValueError):
            bath.SpectralDensity(omega_c=0.0)

    @settings(max_examples=50, deadline=None)
    @given(
        alpha=st.floats(0.0, 2.0),
        s=st.floats(0.25, 3.0),
        omega_c=st.floats(0.1, 10.0),
    )
    def test_ohmic_family_nonnegative(self, alpha, s, omega_c):
        J = bath.SpectralDensity(alpha=alpha, s=s, omega_c=omega_c)
        w = np.linspace(0.0, 20.0, 101)
        vals = bath.eval_spectral_density(J, w)
        assert np.all(vals >= 0.0)
        assert vals[0] == 0.0


# ---------------------------------------------------------------------------
# correlation function


class TestBathCorrelation:
    def test_zero_temperature_closed_form(self, ohmic_corr):
        t = ohmic_corr.times
        exact = 0.15 / (1.0 + 1j * t) ** 2
        assert np.max(np.abs(ohmic_corr.values - exact)) < 1e-9

    def test_initial_value(self, ohmic_corr):
        assert ohmic_corr.values[0] == pytest.approx(0.15, abs=1e-10)

    def test_envelope_decays_monotonically(self, ohmic_corr):
        mags = np.abs(ohmic_corr.values)
        assert np.all(np.diff(mags) < 0)

    def test_grid_spacing_property(self, ohmic_corr):
        assert ohmic_corr.dt == pytest.approx(0.1)

    def test_conjugate_symmetry(self, ohmic):
        grid = np.array([-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0])
        C = bath.bath_correlation(ohmic, np.inf, grid)
        for t, v in zip(C.times, C.values):
            mirrored = C.values[np.argmin(np.abs(C.times + t))]
            assert v == np.conj(mirrored)

    def test_large_finite_temperature_matches_zero_temperature(self, ohmic):
        grid = np.arange(0.0, 5.01, 0.5)
        cold = bath.bath_correlation(ohmic, 1e3, grid)
        zero = bath.bath_correlation(ohmic, np.inf, grid)
        rel = np.abs(cold.values - zero.values) / np.abs(zero.values)
        assert np.max(rel) < 1e-4

    def test_nonpositive_temperature_rejected(self, ohmic):
        with pytest.raises(ValueError):
            bath.bath_correlation(ohmic, 0.0, [0.0, 1.0])
        with pytest.raises(ValueError):
            bath.bath_correlation(ohmic, -2.0, [0.0, 1.0])

    def test_nondecaying_integrand_raises(self, tanh_bath):
        with pytest.raises(bath.QuadratureError):
            bath.bath_correlation(tanh_bath, 1e-3, [0.0, 1.0])


# ---------------------------------------------------------------------------
# exact single-spin decay envelope


class TestDephasingOracle:
    def test_unit_at_zero_time(self, ohmic):
        assert bath.dephasing_decay_oracle(ohmic, np.inf, 0.0) == 1.0

    def test_zero_coupling_is_flat(self):
        J = bath.SpectralDensity(alpha=0.0)
        for t in (0.5, 5.0):
            assert bath.dephasing_decay_oracle(J, np.inf, t) == pytest.approx(1.0, abs=1e-12)

    def test_zero_temperature_closed_form(self, ohmic):
        t = np.array([0.5, 1.0, 2.0, 5.0])
        env = bath.dephasing_decay_oracle(ohmic, np.inf, t)
        exact = (1.0 + t**2) ** (-ALPHA)
        assert np.max(np.abs(env / exact - 1.0)) < 1e-10

    def test_frozen_value_at_unit_time(self, ohmic):
        env = bath.dephasing_decay_oracle(ohmic, np.inf, 1.0)
        assert env == pytest.approx(2.0 ** (-0.3), rel=1e-12)
        assert env == pytest.approx(0.8123, abs=1e-4)

    def test_scalar_and_array_shapes(self, ohmic):
        scalar = bath.dephasing_decay_oracle(ohmic, np.inf, 1.0)
        arr = bath.dephasing_decay_oracle(ohmic, np.inf, [1.0, 2.0])
        assert isinstance(scalar, float)
        assert arr.shape == (2,)
        assert arr[0] == pytest.approx(scalar, rel=1e-12)

    def test_monotone_decay(self, ohmic):
        t = np.linspace(0.0, 10.0, 41)
        env = bath.dephasing_decay_oracle(ohmic, np.inf, t)
        assert np.all(np.diff(env) < 0)
        assert np.all(env > 0)

    def test_flat_spectrum_bath_is_exponential(self, tanh_bath):
        t = np.array([0.0, 0.5, 1.0, 3.0])
        env = bath.dephasing_decay_oracle(tanh_bath, tanh_bath.beta_T, t)
        assert np.allclose(env, np.exp(-2.0 * 0.4 * t), rtol=1e-12)


# ---------------------------------------------------------------------------
# discrete influence-functional coefficients


class TestEtaCoefficients:
    def test_flat_spectrum_is_memoryless(self, tanh_bath):
        eta = bath.eta_coefficients(tanh_bath, tanh_bath.beta_T, 0.1, 3)
        r0 = eta.eta[0].real
        assert r0 == pytest.approx(0.4 * 0.1 / 2.0, rel=1e-12)
        assert abs(eta.eta[1].real) < 1e-3 * r0
        assert abs(eta.eta[2].real) < 1e-3 * r0

    def test_memoryless_pattern_holds_at_every_temperature(self):
        # off-diagonal real parts stay (trivially) below any tolerance as
        # the temperature scale moves: the approach to the memoryless
        # pattern is monotone in beta_T * omega_c
        ratios = []
        for beta in (1.0, 0.1, 1e-3):
            J = bath.SpectralDensity(
                form="tanh-lindblad", alpha=0.0, gamma_phi=0.7, beta_T=beta)
            eta = bath.eta_coefficients(J, beta, 0.2, 2)
            ratios.append(abs(eta.eta[1].real) / eta.eta[0].real)
        assert all(r <= 1e-12 for r in ratios)
        assert all(b <= a + 1e-15 for a, b in zip(ratios, ratios[1:]))

    def test_ohmic_zero_temperature_first_coefficient(self, ohmic):
        dt = 0.1
        eta = bath.eta_coefficients(ohmic, np.inf, dt, 1)
        exact = 0.25 * ALPHA * np.log(1.0 + dt**2)
        assert eta.eta[0].real == pytest.approx(exact, rel=1e-10)

    def test_ohmic_memory_witness(self, ohmic):
        eta = bath.eta_coefficients(ohmic, np.inf, 0.1, 2)
        assert abs(eta.eta[1].real) > 1e-4 * abs(eta.eta[0].real)

    def test_validation(self, ohmic):
        with pytest.raises(ValueError):
            bath.eta_coefficients(ohmic, np.inf, 0.0, 2)
        with pytest.raises(ValueError):
            bath.eta_coefficients(ohmic, np.inf, 0.1, 0)

    def test_accumulated_decay_matches_oracle(self, ohmic):
        dt = 0.05
        eta = bath.eta_coefficients(ohmic, np.inf, dt, 40)
        for n in (5, 10, 20, 40):
            rebuilt = bath.coarse_grained_decay(eta, n)
            exact = -np.log(bath.dephasing_decay_oracle(ohmic, np.inf, n * dt))
            assert rebuilt == pytest.approx(exact, rel=0.02)

    def test_decay_horizon_validation(self, ohmic):
        eta = bath.eta_coefficients(ohmic, np.inf, 0.1, 3)
        with pytest.raises(ValueError):
            bath.coarse_grained_decay(eta, 5)


# ---------------------------------------------------------------------------
# reorganization-energy diagnosis


class TestReorganizationEnergy:
    @staticmethod
    def tanh_form(beta):
        return bath.SpectralDensity(
            form="tanh-lindblad", alpha=0.0, gamma_phi=np.pi, beta_T=beta)

    def test_zero_bath_is_zero(self):
        J = bath.SpectralDensity(alpha=0.0)
        res = bath.reorganization_energy(J, np.exp, 100.0)
        assert res.value == 0.0
        assert not res.diverged

    def test_ohmic_exponential_cutoff_value(self, ohmic):
        res = bath.reorganization_energy(ohmic, lambda x: np.exp(-x), 100.0)
        assert res.value == pytest.approx(ALPHA / 4.0, rel=1e-10)
        assert not res.diverged

    def test_temperature_scaling_with_soft_cutoff(self):
        # with gamma_phi = pi the value equals f(z) directly; f grows with
        # z and behaves as z/2 for small z
        f = {}
        for z in (0.01, 0.1, 1.0):
            res = bath.reorganization_energy(
                self.tanh_form(z), lambda x: np.exp(-x), 400.0)
            assert not res.diverged
            f[z] = res.value
        assert f[0.01] < f[0.1] < f[1.0]
        assert f[0.01] / 0.01 == pytest.approx(0.5, rel=1e-2)

    def test_ultraviolet_divergence_flagged(self):
        res = bath.reorganization_energy(self.tanh_form(1.0), lambda x: 1.0, 100.0)
        assert res.diverged
        assert res.value > 0


# ---------------------------------------------------------------------------
# exponential fitting


class TestExponentialFit:
    def test_single_term_recovery(self):
        c, nu = 0.12 + 0.03j, 0.8 + 1.3j
        fit = bath.fit_exponentials(single_term_correlation(c, nu), 1)
        assert len(fit) == 1
        assert abs(fit.c[0] - c) < 1e-8
        assert abs(fit.nu[0] - nu) < 1e-8

    def test_two_term_model_values_recovered(self):
        t = np.arange(0.0, 10.0001, 0.05)
        vals = 0.1 * np.exp(-(0.5 + 1.0j) * t) + 0.05 * np.exp(-(1.5 - 0.3j) * t)
        C = bath.BathCorrelation(times=t, values=vals, beta_T=np.inf)
        fit = bath.fit_exponentials(C, 2)
        assert np.max(np.abs(fit.evaluate(t) - vals)) < 1e-8
        assert fit.max_residual < 1e-8

    def test_real_coefficient_constraint(self):
        fit = bath.fit_exponentials(single_term_correlation(0.15, 1.0 + 0.5j), 1,
                                    real_coefficients=True)
        assert fit.c[0].imag == 0.0
        assert abs(fit.c[0] - 0.15) < 1e-8

    def test_zero_terms_rejected(self):
        with pytest.raises(ValueError):
            bath.fit_exponentials(single_term_correlation(0.1, 1.0), 0)

    def test_grid_must_start_at_zero(self):
        t = np.arange(1.0, 5.0, 0.05)
        C = bath.BathCorrelation(times=t, values=np.exp(-t), beta_T=np.inf)
        with pytest.raises(ValueError):
            bath.fit_exponentials(C, 1)

    def test_rank_deficiency_detected(self):
        with pytest.raises(bath.FitRankError):
            bath.fit_exponentials(single_term_correlation(0.1, 1.0 + 0.5j), 4)

    @pytest.mark.xfail(
        strict=True,
        reason="three decaying exponentials cannot represent this kernel to "
               "1e-3 of its initial value on [0, 20]; the measured floor is "
               "about 1e-2 and the automatic fitter escalates to five terms",
    )
    def test_three_terms_reach_target_residual(self, ohmic_corr):
        fit = bath.fit_exponentials(ohmic_corr, 3)
        assert fit.max_residual < 1e-3 * abs(ohmic_corr.values[0])

    def test_automatic_escalation_reaches_target(self, ohmic_corr):
        fit = bath.fit_correlation_auto(ohmic_corr)
        c0 = abs(ohmic_corr.values[0])
        assert fit.max_residual < 1e-3 * c0
        assert len(fit) == 5
        model = fit.evaluate(ohmic_corr.times)
        measured = np.max(np.abs(model - ohmic_corr.values))
        assert measured == pytest.approx(fit.max_residual, rel=1e-9)

    def test_loose_threshold_stops_early(self, ohmic_corr):
        c0 = abs(ohmic_corr.values[0])
        fit = bath.fit_correlation_auto(ohmic_corr, threshold=0.1 * c0)
        assert len(fit) == 3
        assert fit.max_residual < 0.1 * c0


# ---------------------------------------------------------------------------
# pseudomode embedding


class TestPseudomodeEmbedding:
    @staticmethod
    def one_mode_fit(c=0.15, nu=1.0 + 0.7j):
        return bath.fit_exponentials(single_term_correlation(c, nu), 1,
                                     real_coefficients=True)

    def test_build_from_single_term_fit(self):
        emb = bath.build_pseudomode_embedding(self.one_mode_fit(), 4)
        assert len(emb.modes) == 1
        lam, Om, ga = emb.modes[0]
        assert lam == pytest.approx(np.sqrt(0.15), rel=1e-7)
        assert Om == pytest.approx(0.7, rel=1e-7)
        assert ga == pytest.approx(2.0, rel=1e-7)
        assert emb.is_hermitian
        t = np.linspace(0.0, 5.0, 11)
        assert np.max(np.abs(emb.correlation(t) - 0.15 * np.exp(-(1 + 0.7j) * t))) < 1e-7
        assert bath.embedding_site_dims(emb) == (2, 4)

    def test_build_validation(self):
        fit = self.one_mode_fit()
        with pytest.raises(ValueError):
            bath.build_pseudomode_embedding(fit, 1)
        with pytest.raises(ValueError):
            bath.build_pseudomode_embedding(fit, (4, 4))
        with pytest.raises(ValueError):
            bath.build_pseudomode_embedding(fit, 4, residual_threshold=1e-30)
        growing = bath.ExponentialFit(
            c=np.array([1.0 + 0j]), nu=np.array([-0.1 + 1j]),
            window=(0.0, 10.0), max_residual=0.0)
        with pytest.raises(ValueError):
            bath.build_pseudomode_embedding(growing, 4)

    def test_empty_embedding_is_bare_spin(self):
        emb = bath.empty_embedding()
        assert len(emb.modes) == 0
        times, env = bath.dephasing_envelope(emb, 0.025, 5.0, 0.01)
        assert np.max(np.abs(env - 1.0)) < 1e-10

    def test_json_round_trip(self):
        emb = bath.PseudomodeEmbedding(
            modes=[(0.3 + 0.1j, 1.5, 2.0), (0.2j, -0.4, 0.6)],
            fock_cutoff=(4, 2), fit_residual=3e-3, label="round-trip")
        back = bath.embedding_from_json(bath.embedding_to_json(emb))
        assert back.modes == emb.modes
        assert back.mode_dims == emb.mode_dims
        assert back.fit_residual == emb.fit_residual
        assert back.label == emb.label
        assert not back.is_hermitian

    def test_fock_cutoff_convergence(self):
        fit = self.one_mode_fit(c=0.15, nu=1.0 + 1.0j)
        diffs = []
        for d in (4, 6):
            small = bath.build_pseudomode_embedding(fit, d)
            large = bath.build_pseudomode_embedding(fit, 2 * d)
            _, env_small = bath.dephasing_envelope(small, 0.025, 10.0, 0.02)
            _, env_large = bath.dephasing_envelope(large, 0.025, 10.0, 0.02)
            diffs.append(np.max(np.abs(env_small - env_large)))
        assert diffs[1] < diffs[0]
        assert diffs[1] < 1e-4

    def test_shipped_profiles_load(self):
        for profile, n_modes in (("compact", 2), ("accurate", 3)):
            emb = bath.default_embedding(profile)
            assert len(emb.modes) == n_modes
            assert all(ga > 0 for _, _, ga in emb.modes)
            assert emb.fit_residual > 0
            assert emb.is_hermitian
        # the interacting-run profile must keep its couplings on the real
        # axis so the extended site Hamiltonian is Hermitian
        compact = bath.default_embedding("compact")
        assert all(abs(np.imag(lam)) == 0 for lam, _, _ in compact.modes)
        with pytest.raises(KeyError):
            bath.default_embedding("imaginary")

    def test_compact_profile_envelope_within_declared_error(self, ohmic):
        emb = bath.default_embedding("compact")
        times, env = bath.dephasing_envelope(emb, 0.025, 20.0, 0.02)
        sub = slice(0, len(times), 20)
        exact = bath.dephasing_decay_oracle(ohmic, np.inf, times[sub])
        rel = np.max(np.abs(env[sub] - exact) / exact)
        assert rel <= emb.fit_residual

    def test_accurate_profile_envelope_within_one_percent(self, ohmic):
        emb = bath.default_embedding("accurate")
        times, env = bath.dephasing_envelope(emb, 0.025, 20.0, 0.01)
        sub = slice(0, len(times), 40)
        exact = bath.dephasing_decay_oracle(ohmic, np.inf, times[sub])
        rel = np.max(np.abs(env[sub] - exact) / exact)
        assert rel <= emb.fit_residual
        assert rel <= 1e-2
