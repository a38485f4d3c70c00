#!/usr/bin/env python3
"""Time-delay windows and the bounded feature map.

Builds embedding windows from a short velocity history, runs them through
a freshly initialized feature network and shows the pieces every
disturbance model in this package is made of: phi(z), its block-diagonal
stacking and the linear head theta.
"""

import numpy as np

from metadob import block_diag, embed, featurize, init_params, predict

rng = np.random.default_rng(7)

# three delayed states plus the current one -> a 12-entry window, newest first
history = [rng.normal(size=3) for _ in range(6)]
window = embed(history, m_delays=3, n=3)
print("window (newest first):")
print(np.round(window, 3))

params = init_params(rng, m_delays=3, n=3, k=12)
phi = featurize(params, window)
print(f"\nphi(z): k={params.k} features, {params.k_trunk} learned + "
      f"{params.n} state probes + 1 constant")
print(np.round(phi, 3))
print("bound check: max|phi| =", np.abs(phi).max(), "<= phi_max =", params.phi_max)

# the model disturbance is Phi_t(z) @ theta with Phi_t block-diagonal
theta = rng.normal(0, 0.3, size=3 * params.k)
phi_t = block_diag(phi, n=3)
print("\nPhi_t shape:", phi_t.shape, " d_model =", np.round(predict(phi_t, theta), 3))

# equivalently, per-axis dot products with the same vector reshaped
d_alt = theta.reshape(3, -1) @ phi
print("per-axis form agrees:", np.allclose(predict(phi_t, theta), d_alt))
