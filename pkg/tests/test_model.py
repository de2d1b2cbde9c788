"""Model builders: parameter records, site Liouvillians, initial states."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opendicke import bath, hilbert as hb, model
from opendicke.integrate import rk4_integrate


def one_mode_embedding(c=0.15, nu=1.0 + 0.7j, d=3):
    t = np.arange(0.0, 10.0001, 0.05)
    C = bath.BathCorrelation(times=t, values=c * np.exp(-nu * t), beta_T=np.inf)
    fit = bath.fit_exponentials(C, 1, real_coefficients=True)
    return bath.build_pseudomode_embedding(fit, d)


class TestDickeParams:
    def test_defaults(self):
        p = model.DickeParams()
        assert p.Omega == 1.0
        assert p.kappa == 1.0
        assert p.omega_z == 0.025
        assert np.isinf(p.N)
        assert p.bath is None

    def test_validation(self):
        with pytest.raises(ValueError):
            model.DickeParams(kappa=-1.0)
        with pytest.raises(ValueError):
            model.DickeParams(g=-0.1)
        with pytest.raises(ValueError):
            model.DickeParams(N=1)
        model.DickeParams(N=2)  # smallest legal ensemble

    def test_with_bath_is_nondestructive(self):
        p = model.DickeParams()
        p2 = p.with_bath(model.MarkovianDephasing(gamma_phi=0.1))
        assert p.bath is None
        assert isinstance(p2.bath, model.MarkovianDephasing)
        assert p2.g == p.g


class TestResolveBath:
    def test_passthrough_for_resolved_backends(self):
        for b in (None, model.MarkovianDephasing(0.2), one_mode_embedding()):
            p = model.DickeParams(bath=b)
            assert model.resolve_bath(p) is p

    def test_zero_coupling_resolves_to_empty(self):
        p = model.DickeParams(bath=bath.SpectralDensity(alpha=0.0))
        r = model.resolve_bath(p)
        assert isinstance(r.bath, bath.PseudomodeEmbedding)
        assert len(r.bath.modes) == 0

    def test_default_density_resolves_to_shipped_fit(self):
        p = model.DickeParams(bath=bath.SpectralDensity())
        r = model.resolve_bath(p, profile="compact")
        assert isinstance(r.bath, bath.PseudomodeEmbedding)
        assert len(r.bath.modes) == 2

    def test_unfitted_density_rejected(self):
        p = model.DickeParams(bath=bath.SpectralDensity(alpha=0.55))
        with pytest.raises(ValueError):
            model.resolve_bath(p)


class TestSiteStructure:
    def test_site_dims(self):
        assert model.site_dims(model.DickeParams()) == (2,)
        p = model.DickeParams(bath=model.MarkovianDephasing(0.1))
        assert model.site_dims(p) == (2,)
        p = model.DickeParams(bath=one_mode_embedding(d=5))
        assert model.site_dims(p) == (2, 5)
        with pytest.raises(ValueError):
            model.site_dims(model.DickeParams(bath=bath.SpectralDensity()))

    def test_bare_site_hamiltonian(self):
        p = model.DickeParams(omega_z=0.025)
        L = model.site_liouvillian(p, drive=0.4)
        expected = 0.025 * hb.SZ + 0.4 * hb.SX
        assert np.allclose(L.H, expected)
        assert L.jumps == []

    def test_markovian_site_has_dephasing_jump(self):
        p = model.DickeParams(bath=model.MarkovianDephasing(0.3))
        L = model.site_liouvillian(p)
        assert len(L.jumps) == 1
        rate, op = L.jumps[0]
        assert rate == 0.3
        assert np.allclose(op, hb.SZ)

    def test_embedded_site_structure(self):
        emb = one_mode_embedding(d=4)
        p = model.DickeParams(bath=emb)
        L = model.site_liouvillian(p, drive=0.2)
        assert L.H.shape == (8, 8)
        assert len(L.jumps) == len(emb.modes)
        # the drive enters through sigma^x on the spin factor
        L0 = model.site_liouvillian(p, drive=0.0)
        dims = [2, 4]
        assert np.allclose(L.H - L0.H, 0.2 * hb.lift(hb.SX, dims, 0))

    def test_unresolved_bath_rejected(self):
        p = model.DickeParams(bath=bath.SpectralDensity())
        with pytest.raises(ValueError):
            model.site_liouvillian(p)


class TestMarkovianEnvelope:
    def test_coherence_decays_at_twice_the_rate(self):
        """The plain dephasing backend must reproduce the flat-spectrum
        envelope exp(-2 gamma_phi t), tying the Lindblad convention to the
        discrete-influence coefficients."""
        gamma_phi = 0.3
        p = model.DickeParams(bath=model.MarkovianDephasing(gamma_phi))
        L = model.site_liouvillian(p)
        rho0 = model.spin_state(np.pi / 2)
        records = []

        def observer(i, t, y):
            records.append((t, 2.0 * abs(y[0][0, 1])))

        rk4_integrate(lambda t, y: [hb.apply_liouvillian(L, y[0])],
                      [rho0], 5.0, 0.01, observer=observer)
        times = np.array([r[0] for r in records])
        env = np.array([r[1] for r in records])
        flat = bath.SpectralDensity(
            form="tanh-lindblad", gamma_phi=gamma_phi, beta_T=1.0)
        oracle = bath.dephasing_decay_oracle(flat, 1.0, times)
        assert np.max(np.abs(env - oracle)) < 1e-8


class TestInitialState:
    def test_seed_mapping(self):
        init = model.InitialState.from_seed(2.0, 0.05 - 0.02j)
        assert init.theta == 2.0
        assert init.q0 == pytest.approx(0.1)
        assert init.p0 == pytest.approx(-0.04)

    def test_photon_moment_amplitude(self):
        ph = model.PhotonMoments(q=0.4, p=-0.2)
        assert ph.a == pytest.approx(0.2 - 0.1j)

    @settings(max_examples=40, deadline=None)
    @given(theta=st.floats(0.0, 2 * np.pi))
    def test_spin_state_bloch_vector(self, theta):
        rho = model.spin_state(theta)
        assert np.trace(rho) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(rho, rho.conj().T)
        assert np.trace(rho @ rho).real == pytest.approx(1.0, abs=1e-12)
        sx, sy, sz = model.spin_expectations(rho, (2,))
        assert sx == pytest.approx(np.sin(theta), abs=1e-12)
        assert sy == pytest.approx(0.0, abs=1e-12)
        assert sz == pytest.approx(np.cos(theta), abs=1e-12)

    def test_poles(self):
        up = model.spin_state(0.0)
        down = model.spin_state(np.pi)
        assert np.allclose(up, np.diag([1.0, 0.0]))
        assert np.allclose(down, np.diag([0.0, 1.0]))


class TestBuildInitialState:
    def test_bare_mean_field_start(self):
        p = model.DickeParams()
        init = model.InitialState(theta=np.pi / 2, q0=0.3, p0=-0.1)
        rho_site, rho_pair, photon = model.build_initial_state(p, init)
        assert rho_site.shape == (2, 2)
        assert np.allclose(rho_pair, np.kron(rho_site, rho_site))
        assert photon.q == 0.3
        assert photon.p == -0.1
        assert photon.dn == photon.dx2 == photon.dxp == 0.0

    def test_finite_ensemble_has_vacuum_fluctuations(self):
        p = model.DickeParams(N=25)
        _, _, photon = model.build_initial_state(p, model.InitialState())
        assert photon.dx2 == pytest.approx(1.0 / 25.0)
        assert photon.dn == 0.0
        assert photon.dxp == 0.0

    def test_embedded_site_starts_in_mode_vacuum(self):
        emb = one_mode_embedding(d=4)
        p = model.DickeParams(bath=emb)
        theta = 1.1
        rho_site, _, _ = model.build_initial_state(p, model.InitialState(theta=theta))
        assert rho_site.shape == (8, 8)
        rho_spin = hb.partial_trace(rho_site, [2, 4], keep=[0])
        assert np.allclose(rho_spin, model.spin_state(theta))
        rho_mode = hb.partial_trace(rho_site, [2, 4], keep=[1])
        vac = np.zeros((4, 4))
        vac[0, 0] = 1.0
        assert np.allclose(rho_mode, vac)

    def test_embedded_expectations_match_bare(self):
        emb = one_mode_embedding(d=3)
        p = model.DickeParams(bath=emb)
        rho_site, _, _ = model.build_initial_state(p, model.InitialState(theta=0.7))
        sx, sy, sz = model.spin_expectations(rho_site, (2, 3))
        assert sx == pytest.approx(np.sin(0.7), abs=1e-12)
        assert sz == pytest.approx(np.cos(0.7), abs=1e-12)
