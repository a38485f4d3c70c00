"""Disturbance estimator bank.

The feedback-calibrated observer integrates an auxiliary variable so no
state derivative is ever differentiated:

    aux' = -L (aux + d_model + L v + f + g u)
    d_hat = d_model + L v + aux

Along trajectories this realizes d_hat' = d_model' + L (d - d_hat): the
steady error scales with the rate of the model residual, not its size.
The model parameter is adapted online either by a concurrent-learning
law replaying a buffer of recorded (feature, measurement) pairs, or by a
sliding-window ridge solve.

Methods:
  FirstOrder    observer with d_model = 0
  VanillaNN     observer with a fixed linear drag model
  L1Adapt       velocity predictor + piecewise-constant adaptation + low-pass
  MetaAdapt     learned features, concurrent-learning theta, no observer
  MetaAdaptFC   MetaAdapt plus the feedback-calibrated observer
  MetaLSFC      sliding-window ridge theta plus the observer
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import MissingWeights, NonFiniteState
from .metalearn import ridge_solve, stack_block_features
from .plant import VEL, PlantConfig
from .representation import RepresentationParams, featurize

KINDS = ("FirstOrder", "VanillaNN", "L1Adapt", "MetaAdapt", "MetaAdaptFC", "MetaLSFC")


# -- feedback-calibrated observer --------------------------------------------

@dataclass
class FcObserverState:
    aux: np.ndarray                 # auxiliary variable, one entry per disturbed axis
    L: np.ndarray                   # positive-definite gain
    v_prev: np.ndarray = None       # velocity at the previous sample
    d_model_prev: np.ndarray = None
    _decay: np.ndarray = None       # cached e^{-L dt}
    _decay_dt: float = -1.0

    @classmethod
    def create(cls, n: int, l_gain) -> "FcObserverState":
        L = np.asarray(l_gain, dtype=float)
        if L.ndim == 0:
            L = float(L) * np.eye(n)
        return cls(aux=np.zeros(n), L=L)

    def start(self, v_sub, d_model) -> np.ndarray:
        """Anchor the auxiliary variable so the first output is the bare
        model prediction; returns that d_hat."""
        v = np.asarray(v_sub, dtype=float)
        self.aux = -self.L @ v
        self.v_prev = v.copy()
        self.d_model_prev = np.asarray(d_model, dtype=float).copy()
        return np.asarray(d_model, dtype=float).copy()

    def decay(self, dt: float) -> np.ndarray:
        if dt != self._decay_dt:
            self._decay = scipy.linalg.expm(-self.L * dt)
            self._decay_dt = dt
        return self._decay


def fc_step(state: FcObserverState, d_model, v_sub, f_plus_gu, dt: float):
    """Advance the auxiliary ODE

        aux' = -L (aux + d_model + L v + f + g u)

    over one sample and return (state', d_hat) with
    d_hat = d_model + L v + aux.

    The model term and f + g u are held over the interval (exact
    exponential step, no stiffness limit on L dt); the L v term is
    integrated with v(tau) interpolated linearly between its measured
    endpoints instead of held.  A held v leaves an O(L dt / 2 * accel)
    steady offset during maneuvers; with the interpolation a constant
    disturbance is tracked with zero bias at any L dt and the error
    recursion is d_hat' = e^{-L dt} d_hat + (I - e^{-L dt}) d."""
    d_model = np.asarray(d_model, dtype=float)
    v = np.asarray(v_sub, dtype=float)
    L = state.L
    if state.v_prev is None:
        d_hat = state.start(v, d_model)
        if not np.all(np.isfinite(d_hat)):
            raise NonFiniteState("observer output is not finite")
        return state, d_hat
    E = state.decay(dt)
    shrink = np.eye(L.shape[0]) - E            # I - e^{-L dt}
    dv = v - state.v_prev
    held = state.d_model_prev + np.asarray(f_plus_gu, dtype=float)
    aux = (E @ state.aux
           - shrink @ (held + L @ state.v_prev)
           - L @ dv + (shrink @ dv) / dt)
    d_hat = d_model + L @ v + aux
    if not np.all(np.isfinite(d_hat)):
        raise NonFiniteState("observer output is not finite")
    new = replace(state, aux=aux, v_prev=v.copy(), d_model_prev=d_model.copy())
    return new, d_hat


# -- concurrent-learning adaptation ------------------------------------------

@dataclass
class AdaptiveState:
    """theta as the (n, k) per-axis head plus the concurrent buffer.

    The buffer term is averaged over its occupancy: with a raw sum the
    explicit-Euler update is only stable for dt * P * lmax(sum phi phi^T)
    < 2, which a 30-sample buffer violates at ordinary gains.  Averaging
    is the same law with P rescaled by a positive constant, so the
    convergence claims are untouched.

    With `precondition` the gain matrix is p * (Gram/N + eps I)^-1, the
    covariance-style gain of composite adaptive laws: every excited
    direction then converges at rate ~p instead of p * lambda_i, which is
    what lets theta follow a drifting optimum through ill-conditioned
    features.  The plain scalar gain remains the default for the law
    itself.
    """

    theta: np.ndarray               # (n, k)
    p_gain: float
    gamma: float = 0.0
    n_max: int = 30
    theta_max: float = 50.0
    printed_law: bool = False       # keep the as-published sign/regressor for comparison
    precondition: bool = False
    precond_eps: float = 0.05       # relative Tikhonov floor on the gram
    max_age: int = 0                # steps a sample may stay buffered; 0 = forever
    buffer_phi: deque = field(default_factory=deque)
    buffer_d: deque = field(default_factory=deque)
    buffer_stamp: deque = field(default_factory=deque)
    tick: int = 0
    clamp_hits: int = 0

    @classmethod
    def create(cls, n: int, k: int, p_gain: float = 20.0, gamma: float = 0.0,
               n_max: int = 30, theta_max: float = 50.0,
               printed_law: bool = False, precondition: bool = False,
               precond_eps: float = 0.05, max_age: int = 0) -> "AdaptiveState":
        return cls(theta=np.zeros((n, k)), p_gain=p_gain, gamma=gamma,
                   n_max=n_max, theta_max=theta_max, printed_law=printed_law,
                   precondition=precondition, precond_eps=precond_eps,
                   max_age=max_age)

    @property
    def theta_vec(self) -> np.ndarray:
        return self.theta.ravel()


def buffer_admit(state: AdaptiveState, phi: np.ndarray, d_meas: np.ndarray) -> None:
    """Excitation-greedy buffer policy (the cited literature leaves it
    open): a sample is admitted if appending it increases the minimum
    singular value of the stacked regressor (always true while the
    buffer is filling); when over capacity, the row whose removal least
    decreases that singular value is evicted.  Samples adding no
    excitation (duplicates of an already well-covered direction) are
    rejected.

    With max_age > 0, rows older than that many admissions are dropped
    first: a recorded d_i is only a valid regression target while the
    underlying disturbance has not drifted away from it, so pure
    excitation-based retention would slowly poison the buffer whenever
    the environment is time-varying."""
    phi = np.asarray(phi, dtype=float)
    d_meas = np.asarray(d_meas, dtype=float)
    state.tick += 1
    if state.max_age > 0:
        while state.buffer_stamp and state.tick - state.buffer_stamp[0] > state.max_age:
            state.buffer_phi.popleft()
            state.buffer_d.popleft()
            state.buffer_stamp.popleft()
    if len(state.buffer_phi) < state.n_max:
        state.buffer_phi.append(phi)
        state.buffer_d.append(d_meas)
        state.buffer_stamp.append(state.tick)
        return
    F = np.stack(state.buffer_phi)
    gram = F.T @ F
    s_cur = np.linalg.eigvalsh(gram)[0]
    gram_plus = gram + np.outer(phi, phi)
    if np.linalg.eigvalsh(gram_plus)[0] <= s_cur * (1.0 + 1e-12):
        return
    state.buffer_phi.append(phi)
    state.buffer_d.append(d_meas)
    state.buffer_stamp.append(state.tick)
    rows = list(state.buffer_phi)
    best_j, best_s = -1, -np.inf
    for j, row in enumerate(rows):
        sj = np.linalg.eigvalsh(gram_plus - np.outer(row, row))[0]
        if sj > best_s:
            best_s, best_j = sj, j
    del state.buffer_phi[best_j]
    del state.buffer_d[best_j]
    del state.buffer_stamp[best_j]


def adapt_step(state: AdaptiveState, phi: np.ndarray, d_meas: np.ndarray,
               tracking_err: np.ndarray, dt: float) -> AdaptiveState:
    """Explicit-Euler step of the concurrent-learning law

        theta' = P mean_i phi_i (d_i - phi_i^T theta)^T
                 + Gamma outer(x_d - x, phi)

    followed by a norm clamp at theta_max.  `phi` is the current feature
    vector (used by the tracking-error term and by the printed-law
    variant); the buffer supplies the replay pairs."""
    phi = np.asarray(phi, dtype=float)
    theta = state.theta.copy()
    if state.buffer_phi:
        F = np.stack(state.buffer_phi)                       # (Nb, k)
        D = np.stack(state.buffer_d)                         # (Nb, n)
        if state.printed_law:
            resid = D - phi @ theta.T                        # d_i - phi_t(z) theta
            theta = theta - dt * state.p_gain * (resid.T @ F) / F.shape[0]
        else:
            resid = D - F @ theta.T                          # d_i - phi_t(z_i) theta
            drive = (F.T @ resid) / F.shape[0]               # (k, n)
            if state.precondition:
                gram = F.T @ F / F.shape[0]
                reg = state.precond_eps * np.trace(gram) / gram.shape[0] + 1e-9
                drive = np.linalg.solve(gram + reg * np.eye(gram.shape[0]), drive)
            theta = theta + dt * state.p_gain * drive.T
    if state.gamma != 0.0 and tracking_err is not None:
        theta = theta + dt * state.gamma * np.outer(
            np.asarray(tracking_err, dtype=float), phi)
    if not np.all(np.isfinite(theta)):
        raise NonFiniteState("adaptive parameter is not finite")
    norm = np.linalg.norm(theta)
    if norm > state.theta_max:
        theta *= state.theta_max / norm
        state.clamp_hits += 1
    state.theta = theta
    return state


# -- estimator bank -----------------------------------------------------------

@dataclass
class EstimatorConfig:
    """Kind plus every gain the bank understands; unused fields are
    ignored by kinds that do not need them."""

    kind: str = "FirstOrder"
    l_gain: float = 8.0             # observer gain (scalar -> diagonal)
    p_gain: float = 20.0            # adaptation gain
    gamma: float = 0.0              # tracking-error term (control tasks: 1.0)
    n_buffer: int = 30
    theta_max: float = 50.0
    lam2: float = 1e-2
    ls_window: int = 10
    l1_bandwidth: float = 10.0      # rad/s output low-pass
    l1_pole: float = 10.0           # velocity-predictor pole
    drag: np.ndarray = None         # VanillaNN model matrix
    printed_law: bool = False
    precondition: bool = True       # covariance-style adaptation gain
    buffer_max_age: int = 200       # steps before a buffered sample is retired

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.drag is not None:
            self.drag = np.asarray(self.drag, dtype=float)


class _FcEstimator:
    """Observer-only estimators; subclasses supply the model term."""

    def __init__(self, cfg: EstimatorConfig, plant: PlantConfig):
        self.cfg = cfg
        self.plant = plant
        self.obs = FcObserverState.create(3, cfg.l_gain)

    def model(self, t, x) -> np.ndarray:
        return np.zeros(3)

    def step(self, t, x, u_prev, d_meas, x_d) -> np.ndarray:
        v = np.asarray(x, dtype=float)[VEL]
        d_model = self.model(t, x)
        f_plus_gu = self.plant.gravity + np.asarray(u_prev, dtype=float)
        self.obs, d_hat = fc_step(self.obs, d_model, v, f_plus_gu, self.plant.dt)
        return d_hat


class FirstOrderEstimator(_FcEstimator):
    kind = "FirstOrder"


class VanillaNNEstimator(_FcEstimator):
    """Observer around a fixed linear drag model -(1/mass) D v."""

    kind = "VanillaNN"

    def __init__(self, cfg: EstimatorConfig, plant: PlantConfig):
        super().__init__(cfg, plant)
        if cfg.drag is None:
            raise ValueError("VanillaNN needs a drag matrix")

    def model(self, t, x) -> np.ndarray:
        return -(self.cfg.drag @ np.asarray(x, dtype=float)[VEL]) / self.plant.mass


class L1AdaptEstimator:
    """Velocity feedback plus a low-pass filter.

    The piecewise-constant adaptation of the usual velocity-predictor
    formulation inverts the one-step prediction residual exactly; with
    the input and gravity known, that inversion collapses algebraically
    to the finite-difference reconstruction (v_k - v_{k-1})/dt - g - u,
    so the predictor state is dropped and only the discrete low-pass at
    l1_bandwidth remains.  Unlike the e^{A dt}-weighted textbook law this
    carries no O(a dt) bias on constant disturbances."""

    kind = "L1Adapt"

    def __init__(self, cfg: EstimatorConfig, plant: PlantConfig):
        self.cfg = cfg
        self.plant = plant
        self._lp_alpha = 1.0 - np.exp(-cfg.l1_bandwidth * plant.dt)
        self._v_prev = None
        self._d_filt = np.zeros(3)

    def step(self, t, x, u_prev, d_meas, x_d) -> np.ndarray:
        v = np.asarray(x, dtype=float)[VEL]
        if self._v_prev is None:
            self._v_prev = v.copy()
            return np.zeros(3)
        fg = self.plant.gravity + np.asarray(u_prev, dtype=float)
        d_rec = (v - self._v_prev) / self.plant.dt - fg
        self._v_prev = v.copy()
        self._d_filt = self._d_filt + self._lp_alpha * (d_rec - self._d_filt)
        if not np.all(np.isfinite(self._d_filt)):
            raise NonFiniteState("L1 estimate is not finite")
        return self._d_filt.copy()


class _MetaBase:
    """Shared window/feature handling for the learned-model estimators."""

    def __init__(self, cfg: EstimatorConfig, plant: PlantConfig,
                 rep: RepresentationParams):
        if rep is None:
            raise MissingWeights(f"{self.kind} needs representation weights")
        self.cfg = cfg
        self.plant = plant
        self.rep = rep
        self.history = deque(maxlen=rep.m_delays + 1)

    def features(self, x) -> np.ndarray | None:
        """phi(z) for the current window, or None during warm-up."""
        self.history.append(np.asarray(x, dtype=float)[VEL].copy())
        if len(self.history) < self.rep.m_delays + 1:
            return None
        window = np.concatenate(list(self.history)[::-1])
        return featurize(self.rep, window)

    def tracking_error(self, x, x_d) -> np.ndarray:
        return np.asarray(x_d, dtype=float)[VEL] - np.asarray(x, dtype=float)[VEL]


class MetaAdaptEstimator(_MetaBase):
    """Learned model with the concurrent-learning law; d_hat is the raw
    model prediction (no observer correction)."""

    kind = "MetaAdapt"

    def __init__(self, cfg, plant, rep):
        super().__init__(cfg, plant, rep)
        self.adaptive = AdaptiveState.create(
            3, rep.k, p_gain=cfg.p_gain, gamma=cfg.gamma,
            n_max=cfg.n_buffer, theta_max=cfg.theta_max,
            printed_law=cfg.printed_law, precondition=cfg.precondition,
            max_age=cfg.buffer_max_age,
        )

    def step(self, t, x, u_prev, d_meas, x_d) -> np.ndarray:
        phi = self.features(x)
        if phi is None:
            return np.zeros(3)
        if d_meas is not None:
            buffer_admit(self.adaptive, phi, d_meas)
            adapt_step(self.adaptive, phi, d_meas,
                       self.tracking_error(x, x_d), self.plant.dt)
        return self.adaptive.theta @ phi


class MetaAdaptFCEstimator(_MetaBase):
    """Concurrent-learning adaptation plus the feedback-calibrated
    observer on the model residual."""

    kind = "MetaAdaptFC"

    def __init__(self, cfg, plant, rep):
        super().__init__(cfg, plant, rep)
        self.adaptive = AdaptiveState.create(
            3, rep.k, p_gain=cfg.p_gain, gamma=cfg.gamma,
            n_max=cfg.n_buffer, theta_max=cfg.theta_max,
            printed_law=cfg.printed_law, precondition=cfg.precondition,
            max_age=cfg.buffer_max_age,
        )
        self.obs = FcObserverState.create(3, cfg.l_gain)

    def step(self, t, x, u_prev, d_meas, x_d) -> np.ndarray:
        v = np.asarray(x, dtype=float)[VEL]
        phi = self.features(x)
        if phi is not None and d_meas is not None:
            buffer_admit(self.adaptive, phi, d_meas)
            adapt_step(self.adaptive, phi, d_meas,
                       self.tracking_error(x, x_d), self.plant.dt)
        d_model = self.adaptive.theta @ phi if phi is not None else np.zeros(3)
        f_plus_gu = self.plant.gravity + np.asarray(u_prev, dtype=float)
        self.obs, d_hat = fc_step(self.obs, d_model, v, f_plus_gu, self.plant.dt)
        return d_hat


class MetaLSFCEstimator(_MetaBase):
    """theta re-solved every step by ridge regression over the last
    ls_window (feature, measurement) pairs, plus the observer."""

    kind = "MetaLSFC"

    def __init__(self, cfg, plant, rep):
        super().__init__(cfg, plant, rep)
        self.pairs = deque(maxlen=cfg.ls_window)
        self.theta = np.zeros((3, rep.k))
        self.obs = FcObserverState.create(3, cfg.l_gain)

    def step(self, t, x, u_prev, d_meas, x_d) -> np.ndarray:
        v = np.asarray(x, dtype=float)[VEL]
        phi = self.features(x)
        if phi is not None and d_meas is not None:
            self.pairs.append((phi, np.asarray(d_meas, dtype=float)))
            F = np.stack([p for p, _ in self.pairs])
            D = np.stack([d for _, d in self.pairs])
            gram = F.T @ F + self.cfg.lam2 * np.eye(self.rep.k)
            self.theta = np.linalg.solve(gram, F.T @ D).T
        d_model = self.theta @ phi if phi is not None else np.zeros(3)
        f_plus_gu = self.plant.gravity + np.asarray(u_prev, dtype=float)
        self.obs, d_hat = fc_step(self.obs, d_model, v, f_plus_gu, self.plant.dt)
        return d_hat

    def theta_vec(self) -> np.ndarray:
        return self.theta.ravel()

    def offline_theta(self) -> np.ndarray:
        """Reference ridge solution over the current window (same data,
        same equation) for cross-checking."""
        F = np.stack([p for p, _ in self.pairs])
        D = np.stack([d for _, d in self.pairs])
        design = stack_block_features(F, 3)
        return ridge_solve(design, D.reshape(-1), self.cfg.lam2)


def state_dump(est) -> str:
    """One-line-per-field text summary of an estimator's mutable state."""
    lines = [f"kind: {est.kind}"]
    obs = getattr(est, "obs", None)
    if obs is not None:
        lines.append(f"observer aux: {np.array2string(obs.aux, precision=4)}")
        lines.append(f"observer L diag: {np.array2string(np.diag(obs.L), precision=3)}")
    adaptive = getattr(est, "adaptive", None)
    if adaptive is not None:
        lines.append(f"theta norm: {np.linalg.norm(adaptive.theta):.4f}")
        lines.append(f"buffer: {len(adaptive.buffer_phi)}/{adaptive.n_max}")
        lines.append(f"clamp hits: {adaptive.clamp_hits}")
    pairs = getattr(est, "pairs", None)
    if pairs is not None:
        lines.append(f"ls window: {len(pairs)}/{est.cfg.ls_window}")
        lines.append(f"theta norm: {np.linalg.norm(est.theta):.4f}")
    filt = getattr(est, "_d_filt", None)
    if filt is not None:
        lines.append(f"filtered estimate: {np.array2string(filt, precision=4)}")
    return "\n".join(lines)


_CLASSES = {
    "FirstOrder": FirstOrderEstimator,
    "VanillaNN": VanillaNNEstimator,
    "L1Adapt": L1AdaptEstimator,
    "MetaAdapt": MetaAdaptEstimator,
    "MetaAdaptFC": MetaAdaptFCEstimator,
    "MetaLSFC": MetaLSFCEstimator,
}

_META_KINDS = ("MetaAdapt", "MetaAdaptFC", "MetaLSFC")


def make_estimator(cfg: EstimatorConfig, plant: PlantConfig,
                   rep: RepresentationParams = None):
    """Instantiate one estimator; meta kinds require loaded weights."""
    cls = _CLASSES[cfg.kind]
    if cfg.kind in _META_KINDS:
        return cls(cfg, plant, rep)
    return cls(cfg, plant)
