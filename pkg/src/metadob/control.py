"""Baseline tracking controller and reference trajectories.

The control law inverts the trivially full-rank actuation of the
point-mass plant:

    u = a_d + Kp (p_d - p) + Kv (v_d - v) - gravity - d_hat

so with a perfect estimate the closed-loop error obeys
e'' = -Kv e' - Kp e.  The disturbance feedforward term is optional; the
estimation benchmark runs with it off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadParams, SingularActuation
from .plant import POS, VEL, PlantConfig


@dataclass
class ControllerGains:
    kp: np.ndarray = None
    kv: np.ndarray = None

    def __post_init__(self):
        if self.kp is None:
            self.kp = 4.0 * np.eye(3)
        if self.kv is None:
            self.kv = 4.0 * np.eye(3)
        self.kp = np.atleast_2d(np.asarray(self.kp, dtype=float))
        self.kv = np.atleast_2d(np.asarray(self.kv, dtype=float))


def feedback_law(x, x_d, xdot_d, d_hat, gains: ControllerGains,
                 cfg: PlantConfig, feedforward: bool = True) -> np.ndarray:
    """PD tracking with optional disturbance cancellation on the
    actuated (velocity) rows."""
    x = np.asarray(x, dtype=float)
    g_act = np.eye(3)          # actuation of the velocity rows; always full rank here
    if abs(np.linalg.det(g_act)) < 1e-12:
        raise SingularActuation("actuation matrix is singular")
    u = (xdot_d[VEL]
         + gains.kp @ (x_d[POS] - x[POS])
         + gains.kv @ (x_d[VEL] - x[VEL])
         - cfg.gravity)
    if feedforward:
        u = u - np.asarray(d_hat, dtype=float)
    return u


def make_feedback_law(gains: ControllerGains, cfg: PlantConfig,
                      feedforward: bool = True):
    """Bind gains/config into the rollout controller signature."""
    def controller(t, x, x_d, xdot_d, d_hat):
        return feedback_law(x, x_d, xdot_d, d_hat, gains, cfg, feedforward)
    return controller


class Reference:
    """Analytic reference trajectory: family in {circle, lemniscate,
    polynomial}; state(t) returns (x_d, xdot_d) with consistent
    derivatives."""

    def __init__(self, family: str, *, radius: float = 1.0, period: float = 8.0,
                 center=(0.0, 0.0, 1.0), phase: float = 0.0, coeffs=None,
                 duration: float = 20.0):
        self.family = family
        if family in ("circle", "lemniscate"):
            if radius <= 0 or period <= 0:
                raise BadParams(f"radius/period must be positive, got {radius}/{period}")
            self.radius = float(radius)
            self.omega = 2.0 * np.pi / float(period)
            self.center = np.asarray(center, dtype=float)
            self.phase = float(phase)
        elif family == "polynomial":
            if coeffs is None:
                raise BadParams("polynomial reference needs coeffs")
            self.coeffs = np.asarray(coeffs, dtype=float)      # (deg+1, 3), ascending
            if duration <= 0:
                raise BadParams("duration must be positive")
            self.duration = float(duration)
            self._dcoeffs = np.polynomial.polynomial.polyder(self.coeffs, 1, axis=0)
            self._ddcoeffs = np.polynomial.polynomial.polyder(self.coeffs, 2, axis=0)
        else:
            raise BadParams(f"unknown reference family {family!r}")

    def state(self, t: float):
        x_d = np.zeros(6)
        xdot_d = np.zeros(6)
        if self.family == "circle":
            a = self.omega * t + self.phase
            r, w = self.radius, self.omega
            x_d[POS] = self.center + r * np.array([np.cos(a), np.sin(a), 0.0])
            x_d[VEL] = r * w * np.array([-np.sin(a), np.cos(a), 0.0])
            acc = -r * w * w * np.array([np.cos(a), np.sin(a), 0.0])
        elif self.family == "lemniscate":
            # Gerono figure-eight: r [cos a, sin a cos a, 0]
            a = self.omega * t + self.phase
            r, w = self.radius, self.omega
            x_d[POS] = self.center + r * np.array(
                [np.cos(a), 0.5 * np.sin(2.0 * a), 0.0])
            x_d[VEL] = r * w * np.array([-np.sin(a), np.cos(2.0 * a), 0.0])
            acc = r * w * w * np.array([-np.cos(a), -2.0 * np.sin(2.0 * a), 0.0])
        else:
            tau = t / self.duration
            pv = np.polynomial.polynomial.polyval
            x_d[POS] = pv(tau, self.coeffs)
            x_d[VEL] = pv(tau, self._dcoeffs) / self.duration
            acc = pv(tau, self._ddcoeffs) / self.duration ** 2
        xdot_d[POS] = x_d[VEL]
        xdot_d[VEL] = acc
        return x_d, xdot_d


def make_reference(family: str, **params) -> Reference:
    return Reference(family, **params)


def sample_reference(rng: np.random.Generator, duration: float = 20.0,
                     speed_limit: float = 3.0) -> Reference:
    """Random smooth reference for data collection: circles and degree-5
    polynomials, rescaled so the peak speed stays under the limit."""
    if rng.random() < 0.5:
        radius = rng.uniform(0.6, 2.0)
        speed = rng.uniform(0.3, min(2.5, speed_limit))
        period = 2.0 * np.pi * radius / speed
        center = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1),
                           rng.uniform(0.5, 2.0)])
        return Reference("circle", radius=radius, period=period,
                         center=center, phase=rng.uniform(0, 2 * np.pi))
    coeffs = rng.normal(0.0, 1.0, size=(6, 3))
    coeffs[0] = rng.uniform(-1.0, 1.0, size=3) + np.array([0.0, 0.0, 1.0])
    ref = Reference("polynomial", coeffs=coeffs, duration=duration)
    tgrid = np.linspace(0.0, duration, 256)
    vmax = max(np.linalg.norm(ref.state(t)[0][VEL]) for t in tgrid)
    target = rng.uniform(0.4, 0.8) * speed_limit
    if vmax > 1e-9:
        coeffs[1:] *= target / vmax
    return Reference("polynomial", coeffs=coeffs, duration=duration)
