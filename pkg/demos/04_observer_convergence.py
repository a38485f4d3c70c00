#!/usr/bin/env python3
"""Convergence behavior of the feedback-calibrated observer.

Reproduces the two analytic properties the estimator bank is built on:
exponential decay at rate L for constant disturbances, and a steady
error of slope/L for ramps -- so doubling the gain halves the floor.
"""

import numpy as np

from metadob.estimators import FcObserverState, fc_step

GRAVITY = np.array([0.0, 0.0, -9.81])


def drive(d_fn, l_gain, dt=0.002, T=6.0):
    obs = FcObserverState.create(3, l_gain)
    obs.start(np.zeros(3), np.zeros(3))
    errs = [np.linalg.norm(d_fn(0.0))]
    for t in np.arange(dt, T, dt):
        u_prev = -GRAVITY - d_fn(t - dt)       # hover-compensated log
        obs, d_hat = fc_step(obs, np.zeros(3), np.zeros(3), GRAVITY + u_prev, dt)
        errs.append(np.linalg.norm(d_hat - d_fn(t)))
    return np.asarray(errs)


l = 8.0
const = drive(lambda t: np.array([1.0, -0.5, 2.0]), l, T=5.0 / l)
t = np.arange(const.size) * 0.002
slope = np.polyfit(t, np.log(const), 1)[0]
print(f"constant disturbance: fitted log-error slope {slope:.3f} (theory -{l})")

c = 0.8
for gain in (l, 2 * l):
    ramp = drive(lambda t: np.array([c * t, 0, 0]), gain)
    print(f"ramp, L = {gain:4.1f}: steady |d~| = {ramp[-1]:.4f}   "
          f"(theory c/L = {c / gain:.4f})")
print("doubling L halves the ramp floor; the residual rate, not its size,")
print("sets the observer's error.")
