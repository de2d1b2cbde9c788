"""Mean-field dynamics: fixed points, trivial limits, solver order, sweeps."""

import numpy as np
import pytest

from opendicke import bath, meanfield, model

OMEGA = 1.0
KAPPA = 1.0
OMEGA_Z = 0.025


def superradiant_fixed_point(g):
    """Analytic bath-free fixed point: spin aligned with its effective field.

    The cavity shadows the spin, a = -i g sx / (i Omega + kappa), so the
    drive is -lambda sx with lambda = 2 g^2 Omega / (Omega^2 + kappa^2);
    alignment then pins sz = -omega_z / lambda on the Bloch sphere.
    """
    lam = 2.0 * g * g * OMEGA / (OMEGA**2 + KAPPA**2)
    sz = -OMEGA_Z / lam
    sx = np.sqrt(1.0 - sz * sz)
    re_a = -g * OMEGA * sx / (OMEGA**2 + KAPPA**2)
    im_a = -g * KAPPA * sx / (OMEGA**2 + KAPPA**2)
    return sx, sz, re_a, im_a


class TestTrivialLimits:
    def test_decoupled_cavity_closed_form(self):
        p = model.DickeParams(g=0.0)
        init = model.InitialState(theta=2.0, q0=0.1, p0=0.04)
        ts = meanfield.mf_run(p, init, 5.0, dt=0.01)
        a_exact = (0.05 + 0.02j) * np.exp((-1j * OMEGA - KAPPA) * ts.t)
        a_num = ts["re_a"] + 1j * ts["im_a"]
        assert np.max(np.abs(a_num - a_exact)) < 1e-10
        # with no coupling the spin only precesses: sz is exactly conserved
        assert np.max(np.abs(ts["sz"] - np.cos(2.0))) < 1e-14
        bloch = np.sqrt(ts["sx"] ** 2 + ts["sy"] ** 2 + ts["sz"] ** 2)
        assert np.max(np.abs(bloch - 1.0)) < 1e-10

    def test_inverted_spin_dark_cavity_is_frozen(self):
        ts = meanfield.mf_run(model.DickeParams(g=0.3),
                              model.InitialState(theta=np.pi), 20.0, dt=0.05)
        assert np.max(np.abs(ts["re_a"])) < 1e-14
        assert np.max(np.abs(ts["im_a"])) < 1e-14
        assert np.max(np.abs(ts["sx"])) < 1e-14
        assert np.max(np.abs(ts["sz"] + 1.0)) < 1e-14
        assert np.max(ts["n"]) < 1e-28

    def test_closed_undriven_spin_conserves_bloch_norm(self):
        p = model.DickeParams(kappa=0.0, g=0.0)
        ts = meanfield.mf_run(p, model.InitialState(theta=1.0), 100.0, dt=0.05)
        bloch = np.sqrt(ts["sx"] ** 2 + ts["sy"] ** 2 + ts["sz"] ** 2)
        assert np.max(np.abs(bloch - 1.0)) < 1e-8


class TestSuperradiantFixedPoint:
    def test_analytic_fixed_point_is_invariant(self):
        g = 0.2
        sx, sz, re_a, im_a = superradiant_fixed_point(g)
        init = model.InitialState(
            theta=np.arctan2(sx, sz), q0=2 * re_a, p0=2 * im_a)
        ts = meanfield.mf_run(model.DickeParams(g=g), init, 50.0, dt=0.05)
        assert np.max(np.abs(ts["sz"] - sz)) < 1e-12
        assert np.max(np.abs(ts["re_a"] - re_a)) < 1e-12
        assert np.max(np.abs(ts["im_a"] - im_a)) < 1e-12

    def test_attraction_with_weakly_damped_precession(self):
        """Generic starts spiral into the fixed point; the remaining spin
        precession is only cavity-damped, so compare window averages and
        require the swing to shrink."""
        g = 0.2
        _, sz_star, _, _ = superradiant_fixed_point(g)
        ts = meanfield.mf_run(model.DickeParams(g=g),
                              model.InitialState(theta=2.0), 800.0,
                              dt=0.05, record_every=4)
        early = (ts.t >= 300) & (ts.t < 400)
        late = (ts.t >= 700) & (ts.t <= 800)
        swing_early = ts["sz"][early].max() - ts["sz"][early].min()
        swing_late = ts["sz"][late].max() - ts["sz"][late].min()
        assert swing_late < swing_early
        assert abs(ts["sz"][late].mean() - sz_star) < 5e-3


class TestSolverContract:
    def test_fourth_order_convergence(self):
        p = model.DickeParams(g=0.2)
        init = model.InitialState(theta=2.0)
        ref = meanfield.mf_run(p, init, 5.0, dt=0.0125)
        errs = []
        for dt in (0.05, 0.025):
            run = meanfield.mf_run(p, init, 5.0, dt=dt)
            errs.append(abs(run["sz"][-1] - ref["sz"][-1])
                        + abs(run["re_a"][-1] - ref["re_a"][-1]))
        ratio = errs[0] / errs[1]
        assert 8.0 < ratio < 32.0

    def test_trace_preserved(self):
        ts = meanfield.mf_run(model.DickeParams(g=0.2),
                              model.InitialState(theta=2.0), 50.0, dt=0.05)
        assert ts["trace_defect"].max() < 1e-10

    def test_time_step_guard(self):
        with pytest.raises(ValueError):
            meanfield.mf_run(model.DickeParams(), model.InitialState(), 1.0, dt=0.2)

    def test_divergence_reported_with_location(self):
        init = model.InitialState(theta=1.0, q0=np.nan)
        with pytest.raises(meanfield.IntegrationDivergence) as exc:
            meanfield.mf_run(model.DickeParams(g=0.2), init, 1.0, dt=0.05)
        assert exc.value.t == 0.0
        assert exc.value.last_state is not None

    def test_record_every_subsamples_exactly(self):
        p = model.DickeParams(g=0.2)
        init = model.InitialState(theta=2.0)
        full = meanfield.mf_run(p, init, 10.0, dt=0.05)
        thin = meanfield.mf_run(p, init, 10.0, dt=0.05, record_every=5)
        assert np.array_equal(thin.t, full.t[::5])
        assert np.array_equal(thin["sz"], full["sz"][::5])

    def test_batched_run_matches_singles(self):
        p = model.DickeParams(g=0.2)
        inits = [model.InitialState(theta=1.0), model.InitialState(theta=2.5)]
        both = meanfield.mf_run(p, inits, 10.0, dt=0.05)
        assert both.meta["batch"] == 2
        for k, init in enumerate(inits):
            single = meanfield.mf_run(p, init, 10.0, dt=0.05)
            for col in ("sz", "re_a", "n"):
                assert np.max(np.abs(both[f"{col}_{k}"] - single[col])) < 1e-12


class TestBathBackends:
    def test_markovian_dephasing_stays_physical(self):
        p = model.DickeParams(g=0.2, bath=model.MarkovianDephasing(0.05))
        ts = meanfield.mf_run(p, model.InitialState(theta=2.0), 50.0, dt=0.01)
        assert ts["trace_defect"].max() < 1e-12
        assert ts["min_eig"].min() > -1e-12

    def test_embedded_bath_runs_and_monitors(self):
        p = model.DickeParams(g=0.2, bath=bath.SpectralDensity())
        ts = meanfield.mf_run(p, model.InitialState(theta=2.0), 20.0,
                              dt=0.01, embedding_profile="compact")
        assert ts.t[-1] == pytest.approx(20.0)
        assert ts["trace_defect"].max() < 1e-12
        assert ts["min_eig"].min() > -1e-3
        assert np.all(np.isfinite(ts["sz"]))


@pytest.fixture(scope="module")
def sweep():
    return meanfield.mf_steady_sweep(
        model.DickeParams(), [0.10, 0.20],
        model.InitialState(theta=np.pi, q0=0.01), 400.0, dt=0.05)


class TestSteadySweep:
    def test_normal_phase_is_dark(self, sweep):
        below = sweep[0]
        assert below.abs_a < 1e-4
        assert below.converged

    def test_superradiant_relations(self, sweep):
        above = sweep[1]
        assert above.abs_a > 0.05
        # quadrature lock Re a / Im a = Omega / kappa
        assert above.quadrature_ratio == pytest.approx(OMEGA / KAPPA, rel=1e-2)
        # cavity shadowing of the spin
        predicted = -above.g * OMEGA * above.sx / (OMEGA**2 + KAPPA**2)
        assert above.re_a == pytest.approx(predicted, rel=1e-2)

    def test_short_run_flags_drift(self):
        pts = meanfield.mf_steady_sweep(
            model.DickeParams(), [0.20],
            model.InitialState(theta=2.0, q0=0.05), 20.0, dt=0.05)
        assert not pts[0].converged
