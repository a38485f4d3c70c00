import numpy as np
import pytest

from metadob.errors import MissingWeights, NonFiniteState
from metadob.estimators import (
    AdaptiveState,
    EstimatorConfig,
    FcObserverState,
    adapt_step,
    buffer_admit,
    fc_step,
    make_estimator,
)
from metadob.metalearn import stack_block_features
from metadob.plant import PlantConfig
from metadob.representation import featurize_batch, init_params, windows_from_states

GRAVITY = np.array([0.0, 0.0, -9.81])


def run_observer_on_series(d_fn, l_gain, dt, T, d_model_fn=None):
    """Drive fc_step with a synthetic hover log: v = 0, u = -g - d(t) so
    the velocity never moves and the observer sees a clean residual."""
    obs = FcObserverState.create(3, l_gain)
    v = np.zeros(3)
    obs.start(v, np.zeros(3))           # d_hat(0) = 0
    ts = np.arange(dt, T + dt / 2, dt)
    d_tilde = [-d_fn(0.0)]
    for t in ts:
        u_prev = -GRAVITY - d_fn(t - dt)
        d_model = d_model_fn(t) if d_model_fn else np.zeros(3)
        obs, d_hat = fc_step(obs, d_model, v, GRAVITY + u_prev, dt)
        d_tilde.append(d_hat - d_fn(t))
    return np.array([0.0, *ts]), np.asarray(d_tilde)


class TestFcObserver:
    def test_zero_residual_fixed_point(self):
        # perfect model, aux initialized consistently: error stays at zero
        d = np.array([0.7, -0.3, 1.1])
        obs = FcObserverState.create(3, 8.0)
        v = np.zeros(3)
        u = -GRAVITY - d                  # hover compensation, v stays 0
        obs.start(v, d)                   # d_hat(0) = d_model(0) = d
        worst = 0.0
        for _ in range(int(5.0 / 0.01)):
            obs, d_hat = fc_step(obs, d, v, GRAVITY + u, 0.01)
            worst = max(worst, np.max(np.abs(d_hat - d)))
        assert worst < 1e-9

    def test_constant_disturbance_exponential_decay(self):
        l, dt = 8.0, 0.002
        t, d_tilde = run_observer_on_series(
            lambda tt: np.array([1.0, -0.5, 2.0]), l, dt, 5.0 / l)
        nrm = np.linalg.norm(d_tilde, axis=1)
        slope = np.polyfit(t, np.log(nrm), 1)[0]
        assert slope == pytest.approx(-l, rel=0.05)
        # pointwise: |d_tilde(t)| = |d_tilde(0)| e^{-l t} within 1%
        expected = nrm[0] * np.exp(-l * t)
        np.testing.assert_allclose(nrm, expected, rtol=0.01)

    def test_ramp_steady_state_error(self):
        l, c, dt = 8.0, 0.8, 0.002
        _, d_tilde = run_observer_on_series(
            lambda tt: np.array([c * tt, 0.0, 0.0]), l, dt, 6.0)
        steady = abs(d_tilde[-1][0])
        assert steady == pytest.approx(c / l, rel=0.02)

    def test_doubling_gain_halves_ramp_error(self):
        c, dt = 0.8, 0.002
        _, e1 = run_observer_on_series(lambda tt: np.array([c * tt, 0, 0]),
                                       8.0, dt, 6.0)
        _, e2 = run_observer_on_series(lambda tt: np.array([c * tt, 0, 0]),
                                       16.0, dt, 6.0)
        ratio = abs(e1[-1][0]) / abs(e2[-1][0])
        assert ratio == pytest.approx(2.0, rel=0.10)

    def test_nonfinite_raises(self):
        obs = FcObserverState.create(3, 8.0)
        with pytest.raises(NonFiniteState):
            fc_step(obs, np.full(3, np.nan), np.zeros(3), np.zeros(3), 0.01)


class TestAdaptStep:
    def test_empty_buffer_and_zero_gamma_is_identity(self):
        state = AdaptiveState.create(3, 4, p_gain=20.0, gamma=0.0)
        theta0 = state.theta.copy()
        adapt_step(state, np.ones(4), np.zeros(3), np.zeros(3), 0.01)
        np.testing.assert_array_equal(state.theta, theta0)

    def test_scalar_geometric_convergence(self):
        p, dt = 5.0, 0.01
        state = AdaptiveState.create(1, 1, p_gain=p, gamma=0.0, n_max=5)
        buffer_admit(state, np.array([1.0]), np.array([2.0]))
        steps = int(10.0 / (p * dt))
        for _ in range(steps):
            adapt_step(state, np.array([1.0]), np.array([2.0]), None, dt)
        assert state.theta[0, 0] == pytest.approx(2.0, rel=0.01)
        # the discrete error follows (1 - p dt)^k
        state2 = AdaptiveState.create(1, 1, p_gain=p, gamma=0.0, n_max=5)
        buffer_admit(state2, np.array([1.0]), np.array([2.0]))
        for k in range(25):
            adapt_step(state2, np.array([1.0]), np.array([2.0]), None, dt)
            expected = 2.0 * (1.0 - (1.0 - p * dt) ** (k + 1))
            assert state2.theta[0, 0] == pytest.approx(expected, rel=1e-9)

    def test_lyapunov_nonincreasing(self, rng):
        k = 3
        phis = rng.normal(size=(6, k))
        theta_star = rng.normal(size=(3, k))
        state = AdaptiveState.create(3, k, p_gain=20.0, gamma=0.0, n_max=10)
        for phi in phis:
            buffer_admit(state, phi, theta_star @ phi)
        v_prev = np.inf
        for _ in range(500):
            adapt_step(state, phis[0], theta_star @ phis[0], None, 0.01)
            v = np.sum((state.theta - theta_star) ** 2) / state.p_gain
            assert v <= v_prev + 1e-15
            v_prev = v

    def test_printed_law_variant_diverges_where_standard_converges(self, rng):
        k = 3
        phis = rng.normal(size=(6, k))
        theta_star = rng.normal(size=(3, k))
        errs = {}
        for printed in (False, True):
            state = AdaptiveState.create(3, k, p_gain=10.0, gamma=0.0,
                                         n_max=10, printed_law=printed)
            for phi in phis:
                buffer_admit(state, phi, theta_star @ phi)
            for j in range(800):
                adapt_step(state, phis[j % 6], theta_star @ phis[j % 6],
                           None, 0.01)
            errs[printed] = np.linalg.norm(state.theta - theta_star)
        assert errs[False] < 1e-3 * np.linalg.norm(theta_star)
        assert errs[True] > errs[False] * 10

    def test_clamp_flag(self):
        state = AdaptiveState.create(1, 1, p_gain=1e5, gamma=0.0, n_max=2,
                                     theta_max=1.0)
        buffer_admit(state, np.array([1.0]), np.array([100.0]))
        adapt_step(state, np.array([1.0]), np.array([100.0]), None, 0.01)
        assert state.clamp_hits > 0
        assert np.linalg.norm(state.theta) <= 1.0 + 1e-12

    def test_nan_measurement_raises(self):
        state = AdaptiveState.create(3, 2, p_gain=20.0, gamma=0.0)
        buffer_admit(state, np.ones(2), np.full(3, np.nan))
        with pytest.raises(NonFiniteState):
            adapt_step(state, np.ones(2), np.full(3, np.nan), None, 0.01)


class TestBufferAdmit:
    def test_empty_always_admits(self):
        state = AdaptiveState.create(3, 4, p_gain=1.0, n_max=3)
        buffer_admit(state, np.zeros(4), np.zeros(3))
        assert len(state.buffer_phi) == 1

    def test_duplicate_rejected_when_full(self):
        state = AdaptiveState.create(3, 3, p_gain=1.0, n_max=3)
        basis = np.eye(3)
        for row in basis:
            buffer_admit(state, row, np.zeros(3))
        before = [p.copy() for p in state.buffer_phi]
        buffer_admit(state, basis[0], np.ones(3))
        for a, b in zip(before, state.buffer_phi):
            np.testing.assert_array_equal(a, b)

    def test_full_column_rank_after_independent_rows(self, rng):
        n, k = 3, 4
        state = AdaptiveState.create(n, k, p_gain=1.0, n_max=10)
        # k linearly independent feature vectors
        A = rng.normal(size=(k, k)) + 3.0 * np.eye(k)
        for row in A:
            buffer_admit(state, row, np.zeros(n))
        stacked = stack_block_features(np.stack(state.buffer_phi), n)
        assert np.linalg.matrix_rank(stacked) == n * k

    def test_better_sample_replaces_weakest(self, rng):
        k = 3
        state = AdaptiveState.create(3, k, p_gain=1.0, n_max=3)
        # two strong directions plus a near-duplicate third
        buffer_admit(state, np.array([1.0, 0.0, 0.0]), np.zeros(3))
        buffer_admit(state, np.array([0.0, 1.0, 0.0]), np.zeros(3))
        buffer_admit(state, np.array([1.0, 1e-3, 0.0]), np.zeros(3))
        F = np.stack(state.buffer_phi)
        s_before = np.linalg.svd(F, compute_uv=False)[-1]
        buffer_admit(state, np.array([0.0, 0.0, 1.0]), np.zeros(3))
        F = np.stack(state.buffer_phi)
        s_after = np.linalg.svd(F, compute_uv=False)[-1]
        assert s_after > s_before
        assert len(state.buffer_phi) == 3


class TestEstimatorBank:
    def smooth_states(self, rng, steps, dt):
        t = np.arange(steps) * dt
        v = np.stack([0.6 * np.sin(0.9 * t + 0.3),
                      0.4 * np.cos(1.3 * t),
                      0.2 * np.sin(0.5 * t + 1.0)], axis=1)
        x = np.zeros((steps, 6))
        x[:, 3:] = v
        return x

    def test_first_order_matches_manual_fc_sequence(self, rng):
        plant = PlantConfig(dt=0.01)
        cfg = EstimatorConfig(kind="FirstOrder", l_gain=8.0)
        est = make_estimator(cfg, plant)
        xs = self.smooth_states(rng, 50, plant.dt)
        us = rng.normal(size=(50, 3))
        obs = FcObserverState.create(3, 8.0)
        for k in range(50):
            got = est.step(k * plant.dt, xs[k], us[k - 1] if k else np.zeros(3),
                           None, np.zeros(6))
            u_prev = us[k - 1] if k else np.zeros(3)
            obs, expected = fc_step(obs, np.zeros(3), xs[k, 3:],
                                    plant.gravity + u_prev, plant.dt)
            np.testing.assert_array_equal(got, expected)

    def test_first_order_is_metaadaptfc_with_zero_representation(self, rng):
        plant = PlantConfig(dt=0.01)
        rep = init_params(np.random.default_rng(0), m_delays=2, n=3, k=4,
                          hidden=(6,), phi_max=5.0, affine_slots=False)
        for W in rep.weights:
            W[:] = 0.0
        fo = make_estimator(EstimatorConfig(kind="FirstOrder", l_gain=8.0), plant)
        fc = make_estimator(EstimatorConfig(kind="MetaAdaptFC", l_gain=8.0,
                                            gamma=0.0), plant, rep=rep)
        xs = self.smooth_states(rng, 60, plant.dt)
        us = rng.normal(size=(60, 3))
        ds = rng.normal(size=(60, 3))
        for k in range(60):
            u_prev = us[k - 1] if k else np.zeros(3)
            a = fo.step(k * plant.dt, xs[k], u_prev, ds[k] if k else None,
                        np.zeros(6))
            b = fc.step(k * plant.dt, xs[k], u_prev, ds[k] if k else None,
                        np.zeros(6))
            np.testing.assert_array_equal(a, b)

    def test_l1_converges_to_constant_disturbance(self):
        plant = PlantConfig(dt=0.01)
        cfg = EstimatorConfig(kind="L1Adapt", l1_bandwidth=10.0)
        est = make_estimator(cfg, plant)
        d = np.array([0.5, -1.0, 0.8])
        u = np.zeros(3)
        x = np.zeros(6)
        t_settle = 5.0 / cfg.l1_bandwidth
        steps = int(t_settle / plant.dt) + 2
        for k in range(steps):
            d_hat = est.step(k * plant.dt, x, u, None, np.zeros(6))
            xn = x.copy()
            xn[3:] = x[3:] + plant.dt * (plant.gravity + u + d)
            x = xn
        assert np.linalg.norm(d_hat - d) < 0.02 * np.linalg.norm(d)

    def test_metals_matches_offline_ridge(self, rng):
        plant = PlantConfig(dt=0.01)
        rep = init_params(np.random.default_rng(1), m_delays=1, n=3, k=3,
                          hidden=(6,), phi_max=5.0, affine_slots=False)
        cfg = EstimatorConfig(kind="MetaLSFC", ls_window=6, lam2=1e-2)
        est = make_estimator(cfg, plant, rep=rep)
        xs = self.smooth_states(rng, 30, plant.dt)
        for k in range(30):
            est.step(k * plant.dt, xs[k], np.zeros(3),
                     rng.normal(size=3) if k else None, np.zeros(6))
        assert len(est.pairs) == 6
        np.testing.assert_allclose(est.theta_vec(), est.offline_theta(),
                                   atol=1e-10)

    def test_vanilla_nn_beats_first_order_on_drag(self):
        # closed-loop drag-only scenario: the exact drag model removes the
        # lag error entirely, the bare observer keeps chasing the residual
        from metadob.control import ControllerGains, Reference, make_feedback_law
        from metadob.disturbances import Scenario
        from metadob.plant import rollout
        plant = PlantConfig(dt=0.01)
        D = np.diag([0.4, 0.4, 0.25])
        scen = Scenario("drag", drag=D, mass=plant.mass)
        ref = Reference("circle", radius=1.5, period=6.0, center=(0, 0, 1))
        controller = make_feedback_law(ControllerGains(), plant, feedforward=False)
        errs = {}
        for kind in ("FirstOrder", "VanillaNN"):
            est = make_estimator(EstimatorConfig(kind=kind, drag=D), plant)
            log = rollout(controller, est, scen, ref, 6.0, plant)
            tail = slice(100, None)
            errs[kind] = float(np.mean((log.d_hat[tail] - log.d[tail]) ** 2))
        assert errs["VanillaNN"] < 0.2 * errs["FirstOrder"]

    def test_meta_warmup_returns_zero(self):
        plant = PlantConfig(dt=0.01)
        rep = init_params(np.random.default_rng(2), m_delays=3, n=3, k=4,
                          hidden=(6,), affine_slots=False)
        est = make_estimator(EstimatorConfig(kind="MetaAdapt"), plant, rep=rep)
        for k in range(3):
            out = est.step(k * plant.dt, np.ones(6), np.zeros(3),
                           np.ones(3), np.zeros(6))
            np.testing.assert_array_equal(out, np.zeros(3))

    def test_missing_weights(self):
        with pytest.raises(MissingWeights):
            make_estimator(EstimatorConfig(kind="MetaAdapt"), PlantConfig())


class TestAdaptationConvergence:
    def test_exact_model_converges_exponentially(self):
        rng = np.random.default_rng(0)
        k = 4
        rep = init_params(rng, m_delays=2, n=3, k=k, hidden=(8,), phi_max=5.0,
                          affine_slots=False)
        steps, dt = 1500, 0.01
        states = rng.normal(0.0, 1.0, size=(steps, 3))
        wins = windows_from_states(states, 2)
        rep.mu = wins.mean(axis=0)
        rep.sigma = np.maximum(wins.std(axis=0), 1e-8)
        phis = featurize_batch(rep, wins)
        theta_star = rng.normal(0.0, 1.0, size=(3, k))
        ad = AdaptiveState.create(3, k, p_gain=20.0, gamma=0.0, n_max=30)
        th_err = []
        for j in range(phis.shape[0]):
            d_true = theta_star @ phis[j]
            buffer_admit(ad, phis[j], d_true)
            adapt_step(ad, phis[j], d_true, None, dt)
            th_err.append(np.linalg.norm(ad.theta - theta_star))
        th_err = np.asarray(th_err)
        assert th_err[-1] < 1e-3 * th_err[0]
        assert ad.clamp_hits == 0
        t = np.arange(th_err.shape[0]) * dt
        mask = (t >= 0.3) & (th_err > 1e-11 * th_err[0])
        fit = np.polyfit(t[mask], np.log(th_err[mask]), 1)
        resid = np.log(th_err[mask]) - np.polyval(fit, t[mask])
        r2 = 1.0 - resid.var() / np.log(th_err[mask]).var()
        assert fit[0] < 0
        assert r2 > 0.95


class TestStateDump:
    def test_dump_is_text_with_kind(self):
        from metadob.estimators import state_dump
        plant = PlantConfig(dt=0.01)
        rep = init_params(np.random.default_rng(3), m_delays=2, n=3, k=6,
                          hidden=(6,))
        for kind in ("FirstOrder", "L1Adapt", "MetaAdaptFC", "MetaLSFC"):
            est = make_estimator(EstimatorConfig(kind=kind, drag=np.eye(3)),
                                 plant, rep=rep)
            est.step(0.0, np.zeros(6), np.zeros(3), None, np.zeros(6))
            dump = state_dump(est)
            assert isinstance(dump, str) and kind in dump
