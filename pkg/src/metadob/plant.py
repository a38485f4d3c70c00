"""Point-mass translational plant and closed-loop rollouts.

State x = [p, v] in R^6, input u is the commanded world-frame
acceleration, and the lumped disturbance acts on the velocity rows only:

    p' = v
    v' = gravity + u + d(t, x)

RK4 integration with u held over the step and d evaluated at the stage
times/states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataio import TrajectoryData, save_trajectory
from .errors import DimensionMismatch, NonFiniteState

POS = slice(0, 3)
VEL = slice(3, 6)


@dataclass
class PlantConfig:
    mass: float = 0.85                          # kg
    gravity: np.ndarray = None                  # m/s^2
    dt: float = 0.01                            # s

    def __post_init__(self):
        if self.gravity is None:
            self.gravity = np.array([0.0, 0.0, -9.81])
        self.gravity = np.asarray(self.gravity, dtype=float)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")

    @property
    def n(self) -> int:
        return 6

    @property
    def m(self) -> int:
        return 3


@dataclass
class SimState:
    t: float
    x: np.ndarray


@dataclass
class NoiseConfig:
    """Disturbance-measurement channel: Gaussian noise on the
    reconstructed acceleration, then a first-order low-pass."""

    std: float = 0.0                            # m/s^2
    time_constant: float = 0.02                 # s
    enabled: bool = False

    def __post_init__(self):
        if self.std < 0 or self.time_constant <= 0:
            raise ValueError("std must be >= 0 and time_constant > 0")


def dynamics(x: np.ndarray, u: np.ndarray, d: np.ndarray,
             cfg: PlantConfig) -> np.ndarray:
    """xdot = f(x) + g(x) u + d, with d on the velocity rows."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    d = np.asarray(d, dtype=float)
    if x.shape != (6,) or u.shape != (3,) or d.shape != (3,):
        raise DimensionMismatch(
            f"shapes x{x.shape} u{u.shape} d{d.shape}, expected (6,) (3,) (3,)"
        )
    xdot = np.empty(6)
    xdot[POS] = x[VEL]
    xdot[VEL] = cfg.gravity + u + d
    return xdot


def rk4_step(x: np.ndarray, u: np.ndarray, d_fn, t: float, dt: float,
             cfg: PlantConfig) -> np.ndarray:
    """Classical 4th-order step; u held constant, d_fn(t, x) sampled at
    the stage times and states."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    k1 = dynamics(x, u, d_fn(t, x), cfg)
    x2 = x + 0.5 * dt * k1
    k2 = dynamics(x2, u, d_fn(t + 0.5 * dt, x2), cfg)
    x3 = x + 0.5 * dt * k2
    k3 = dynamics(x3, u, d_fn(t + 0.5 * dt, x3), cfg)
    x4 = x + dt * k3
    k4 = dynamics(x4, u, d_fn(t + dt, x4), cfg)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"integration produced NaN/Inf at t={t}")
    return out


def disturbance_measurement(x_prev, x, u_prev, dt: float, gravity,
                            rng=None, noise: NoiseConfig = None) -> np.ndarray:
    """Finite-difference reconstruction of d on the velocity rows:
    (v_k - v_{k-1})/dt - gravity - u_{k-1}, plus optional Gaussian noise.
    Low-pass filtering is the caller's job (it owns the filter state)."""
    x_prev = np.asarray(x_prev, dtype=float)
    x = np.asarray(x, dtype=float)
    raw = (x[VEL] - x_prev[VEL]) / dt - np.asarray(gravity, dtype=float) - np.asarray(u_prev, dtype=float)
    if noise is not None and noise.enabled and noise.std > 0:
        raw = raw + rng.normal(0.0, noise.std, size=3)
    return raw


class MeasurementChannel:
    """Stateful wrapper: FD reconstruction -> noise -> first-order low-pass."""

    def __init__(self, cfg: PlantConfig, noise: NoiseConfig, rng=None):
        self.cfg = cfg
        self.noise = noise or NoiseConfig()
        self.rng = rng
        self._filt = None
        if self.noise.enabled:
            self._alpha = 1.0 - np.exp(-cfg.dt / self.noise.time_constant)
        else:
            self._alpha = 1.0          # filter bypassed

    def step(self, x_prev, x, u_prev) -> np.ndarray:
        raw = disturbance_measurement(
            x_prev, x, u_prev, self.cfg.dt, self.cfg.gravity,
            rng=self.rng, noise=self.noise,
        )
        if self._filt is None:
            self._filt = raw.copy()
        else:
            self._filt = self._filt + self._alpha * (raw - self._filt)
        return self._filt.copy()


@dataclass
class RolloutLog:
    t: np.ndarray               # (K+1,)
    x: np.ndarray               # (K+1, 6)
    u: np.ndarray               # (K+1, 3)
    d: np.ndarray               # (K+1, 3) injected disturbance
    d_hat: np.ndarray           # (K+1, 3) estimate (zeros when no estimator)
    d_meas: np.ndarray          # (K+1, 3) measurement channel output
    x_ref: np.ndarray           # (K+1, 6)
    diverged: bool = False

    def to_trajectory(self, dt: float, meta=None) -> TrajectoryData:
        return TrajectoryData(t=self.t, x=self.x, u=self.u, d=self.d,
                              dt=dt, meta=meta or {})


def rollout(controller, estimator, scenario, reference, T: float,
            cfg: PlantConfig, noise: NoiseConfig = None, rng=None) -> RolloutLog:
    """Closed-loop simulation with the fixed per-step order
    measure -> estimate -> control -> integrate.

    controller(t, x, x_d, xdot_d, d_hat) -> u
    estimator.step(t, x, u_prev, d_meas, x_d) -> d_hat, or None for the
    bare baseline.  On NaN/Inf the log is truncated and flagged.
    """
    steps = int(round(T / cfg.dt))
    K = steps + 1
    log = RolloutLog(
        t=np.zeros(K), x=np.zeros((K, 6)), u=np.zeros((K, 3)),
        d=np.zeros((K, 3)), d_hat=np.zeros((K, 3)), d_meas=np.zeros((K, 3)),
        x_ref=np.zeros((K, 6)),
    )
    channel = MeasurementChannel(cfg, noise, rng=rng)
    x_d0, _ = reference.state(0.0)
    x = x_d0.copy()
    u_prev = np.zeros(3)
    filled = K

    for k in range(K):
        t = k * cfg.dt
        x_d, xdot_d = reference.state(t)
        if k > 0:
            d_meas = channel.step(log.x[k - 1], x, u_prev)
        else:
            d_meas = None
        if estimator is not None:
            d_hat = estimator.step(t, x, u_prev, d_meas, x_d)
        else:
            d_hat = np.zeros(3)
        u = controller(t, x, x_d, xdot_d, d_hat)
        d = scenario.eval(t, x)

        log.t[k] = t
        log.x[k] = x
        log.u[k] = u
        log.d[k] = d
        log.d_hat[k] = d_hat
        log.d_meas[k] = d_meas if d_meas is not None else 0.0
        log.x_ref[k] = x_d

        if k < steps:
            try:
                x = rk4_step(x, u, scenario.eval, t, cfg.dt, cfg)
            except NonFiniteState:
                log.diverged = True
                filled = k + 1
                break
            u_prev = u

    if filled < K:
        for name in ("t", "x", "u", "d", "d_hat", "d_meas", "x_ref"):
            setattr(log, name, getattr(log, name)[:filled])
    return log


def collect_dataset(num_trajectories: int, ranges, cfg: PlantConfig,
                    out_dir, seed: int, duration: float = 20.0,
                    tier: str = "meta-learn", controller_factory=None,
                    reference_sampler=None) -> list:
    """Closed-loop data collection under the baseline controller (no
    feedforward) with randomized Fourier disturbances and randomized
    smooth references.  Writes one dataset file per non-diverged rollout
    and returns the written paths."""
    from pathlib import Path

    from .control import ControllerGains, make_feedback_law, sample_reference
    from .disturbances import Scenario, sample_profile

    if num_trajectories < 1:
        raise ValueError("num_trajectories must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if controller_factory is None:
        gains = ControllerGains()
        controller_factory = lambda: make_feedback_law(gains, cfg, feedforward=False)
    if reference_sampler is None:
        reference_sampler = sample_reference

    paths = []
    seeds = np.random.SeedSequence(seed).spawn(num_trajectories)
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        profile = sample_profile(rng, ranges, n=3)
        scenario = Scenario("fourier", profile=profile)
        reference = reference_sampler(rng, duration=duration)
        log = rollout(controller_factory(), None, scenario, reference,
                      duration, cfg)
        if log.diverged:
            continue
        meta = {
            "tier": tier,
            "index": i,
            "seed": seed,
            "scenario": scenario.to_dict(),
        }
        path = out / f"traj_{i:04d}.csv"
        save_trajectory(path, log.to_trajectory(cfg.dt, meta))
        paths.append(path)
    return paths
