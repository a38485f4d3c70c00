"""Time-delay embedding and the bounded feature network.

The disturbance model everywhere in this package is

    d_model = Phi_t(z) @ theta,

where z is a window of recent states (newest first), phi(z) is a small
fully connected network with a squashed output layer, and Phi_t(z) is the
block-diagonal stacking of phi(z)^T (one block per disturbed axis).  The
squashing keeps every feature inside [-phi_max, phi_max] so that the
online adaptation laws act on a bounded regressor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InsufficientHistory

WEIGHTS_FORMAT = "metadob.weights/v1"


def embed(history, m_delays: int, n: int) -> np.ndarray:
    """Build the delayed-state window from a chronological state history.

    `history` is ordered oldest -> newest; the returned window is the
    concatenation of the most recent m_delays+1 states, newest first:
    [x_k, x_{k-1}, ..., x_{k-M}].

    Raises InsufficientHistory during warm-up (callers must fall back to
    d_model = 0 until enough states have been seen).
    """
    states = [np.asarray(s, dtype=float) for s in history]
    if len(states) < m_delays + 1:
        raise InsufficientHistory(
            f"need {m_delays + 1} states, have {len(states)}"
        )
    for s in states[-(m_delays + 1):]:
        if s.shape != (n,):
            raise DimensionMismatch(f"state shape {s.shape}, expected ({n},)")
    recent = states[-(m_delays + 1):][::-1]
    return np.concatenate(recent)


def windows_from_states(states: np.ndarray, m_delays: int) -> np.ndarray:
    """Vectorized embed() over a full trajectory.

    Row j of the result is the window whose newest state is states[j + M],
    so row j pairs with the disturbance sample at index j + M.
    """
    states = np.asarray(states, dtype=float)
    T = states.shape[0]
    if T < m_delays + 1:
        raise InsufficientHistory(f"trajectory of {T} states, need {m_delays + 1}")
    blocks = [states[m_delays - i: T - i] for i in range(m_delays + 1)]
    return np.concatenate(blocks, axis=1)


@dataclass
class RepresentationParams:
    """Weights of the feature network phi, plus frozen input statistics.

    Layers are (in, out)-shaped matrices applied as h @ W + b; all hidden
    layers use tanh and the output layer is soft-clipped to
    phi_max * tanh(pre / phi_max), which has unit small-signal gain and a
    hard bound |phi_j| < phi_max.  With `skip` the output layer also sees
    the standardized window directly, so state-linear disturbance
    structure (drag, constant offsets) lies in the feature span instead
    of having to be bent out of tanh units.
    """

    m_delays: int
    n: int
    k: int
    phi_max: float
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    mu: np.ndarray = None
    sigma: np.ndarray = None
    skip: bool = True
    affine_slots: bool = True

    def __post_init__(self):
        if self.mu is None:
            self.mu = np.zeros(self.input_dim)
        if self.sigma is None:
            self.sigma = np.ones(self.input_dim)
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)

    @property
    def input_dim(self) -> int:
        return self.n * (self.m_delays + 1)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def k_trunk(self) -> int:
        """Learned feature slots; the rest are the fixed affine probes
        (clipped standardized current state plus a constant)."""
        return self.k - (self.n + 1) if self.affine_slots else self.k

    def copy(self) -> "RepresentationParams":
        return RepresentationParams(
            m_delays=self.m_delays,
            n=self.n,
            k=self.k,
            phi_max=self.phi_max,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            mu=self.mu.copy(),
            sigma=self.sigma.copy(),
            skip=self.skip,
            affine_slots=self.affine_slots,
        )


def init_params(
    rng: np.random.Generator,
    m_delays: int = 3,
    n: int = 3,
    k: int = 12,
    hidden=(32, 32),
    phi_max: float = 5.0,
    skip: bool = True,
    affine_slots: bool = True,
) -> RepresentationParams:
    """Glorot-uniform initialization; biases start at zero.

    With affine_slots, n + 1 of the k features are fixed probes (clipped
    standardized current state, constant 1) and only the remaining
    k - n - 1 are learned; k must leave at least one learned slot.
    """
    skip = skip and len(hidden) > 0
    if affine_slots and k < n + 2:
        raise ValueError(f"k={k} leaves no learned slots beside the {n + 1} probes")
    params = RepresentationParams(m_delays=m_delays, n=n, k=k, phi_max=phi_max,
                                  skip=skip, affine_slots=affine_slots)
    sizes = [params.input_dim, *hidden, params.k_trunk]
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if skip and i == len(sizes) - 2:
            fan_in = fan_in + params.input_dim
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.biases.append(np.zeros(fan_out))
    return params


def feature_forward(params: RepresentationParams, Z: np.ndarray):
    """Batched forward pass.  Returns (phi (B,k), cache for feature_vjp).

    Feature layout: k_trunk learned slots (soft-clipped network outputs),
    then, when affine_slots is on, the soft-clipped standardized current
    state (n slots) and a constant 1.  The probes keep exact state-affine
    disturbance structure (drag, offsets) inside the feature span; all
    slots obey |phi_j| <= phi_max.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != params.input_dim:
        raise DimensionMismatch(
            f"window dim {Z.shape[1]}, network expects {params.input_dim}"
        )
    h = (Z - params.mu) / params.sigma
    acts = [h]
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ W + b)
        acts.append(h)
    last_in = np.concatenate([h, acts[0]], axis=1) if _has_skip(params) else h
    pre = last_in @ params.weights[-1] + params.biases[-1]
    t = np.tanh(pre / params.phi_max)
    phi = params.phi_max * t
    if params.affine_slots:
        probe_t = np.tanh(acts[0][:, :params.n] / params.phi_max)
        ones = np.ones((Z.shape[0], 1))
        phi = np.concatenate([phi, params.phi_max * probe_t, ones], axis=1)
        cache = (acts, last_in, t, probe_t)
    else:
        cache = (acts, last_in, t, None)
    return phi, cache


def _has_skip(params: RepresentationParams) -> bool:
    return params.skip and params.n_layers > 1


def feature_vjp(params: RepresentationParams, cache, dphi: np.ndarray):
    """Vector-Jacobian product of the forward pass.

    Given dJ/dphi for a batch, returns (grads, dZ) where grads is a list of
    (dW, db) per layer (summed over the batch) and dZ is dJ/dZ in raw
    (un-normalized) window coordinates.
    """
    acts, last_in, t, probe_t = cache
    grads = [None] * params.n_layers
    if params.affine_slots:
        d_trunk = dphi[:, :params.k_trunk]
        d_probe = dphi[:, params.k_trunk:params.k_trunk + params.n]
    else:
        d_trunk = dphi
        d_probe = None
    # output soft-clip: phi = phi_max * tanh(pre / phi_max)
    dpre = d_trunk * (1.0 - t * t)
    grads[-1] = (last_in.T @ dpre, dpre.sum(axis=0))
    dh_full = dpre @ params.weights[-1].T
    if _has_skip(params):
        hidden_dim = acts[-1].shape[1]
        dh = dh_full[:, :hidden_dim]
        dx_skip = dh_full[:, hidden_dim:]
    else:
        dh = dh_full
        dx_skip = 0.0
    for i in range(params.n_layers - 2, -1, -1):
        dpre = dh * (1.0 - acts[i + 1] * acts[i + 1])
        grads[i] = (acts[i].T @ dpre, dpre.sum(axis=0))
        dh = dpre @ params.weights[i].T
    dX = dh + dx_skip
    if d_probe is not None:
        dX[:, :params.n] += d_probe * (1.0 - probe_t * probe_t)
    dZ = dX / params.sigma
    return grads, dZ


def featurize(params: RepresentationParams, z: np.ndarray) -> np.ndarray:
    """Feature vector phi(z) for a single window; |phi_j| <= phi_max."""
    phi, _ = feature_forward(params, np.asarray(z, dtype=float)[None, :])
    return phi[0]


def featurize_batch(params: RepresentationParams, Z: np.ndarray) -> np.ndarray:
    phi, _ = feature_forward(params, Z)
    return phi


def feature_jacobian_z(params: RepresentationParams, z: np.ndarray) -> np.ndarray:
    """Jacobian d phi / d z, shape (k, len(z)).  Built feature-by-feature
    from the VJP; only used for verification, never in hot loops."""
    z = np.asarray(z, dtype=float)
    _, cache = feature_forward(params, z[None, :])
    rows = []
    for j in range(params.k):
        e = np.zeros((1, params.k))
        e[0, j] = 1.0
        _, dZ = feature_vjp(params, cache, e)
        rows.append(dZ[0])
    return np.stack(rows)


def block_diag(phi: np.ndarray, n: int) -> np.ndarray:
    """Stack n copies of phi^T on the block diagonal: (n, n*k).

    Row i carries phi in columns [i*k, (i+1)*k); everything else is zero,
    so Phi_t(z) @ vec(Theta) == Theta^T-free per-axis dot products.
    """
    phi = np.asarray(phi, dtype=float)
    k = phi.shape[0]
    out = np.zeros((n, n * k))
    for i in range(n):
        out[i, i * k:(i + 1) * k] = phi
    return out


def predict(phi_t: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Model disturbance d_model = Phi_t(z) @ theta."""
    phi_t = np.asarray(phi_t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if phi_t.shape[1] != theta.shape[0]:
        raise DimensionMismatch(
            f"Phi_t has {phi_t.shape[1]} columns, theta has {theta.shape[0]}"
        )
    return phi_t @ theta


def predict_from_features(phi: np.ndarray, theta: np.ndarray, n: int) -> np.ndarray:
    """Same as predict(block_diag(phi, n), theta) without materializing
    the block matrix; theta reshaped to (n, k) rows per axis."""
    theta = np.asarray(theta, dtype=float).reshape(n, -1)
    return theta @ np.asarray(phi, dtype=float)


# -- parameter flattening (optimizer state and finite-difference checks) ----

def flatten_params(params: RepresentationParams) -> np.ndarray:
    parts = []
    for W, b in zip(params.weights, params.biases):
        parts.append(W.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def unflatten_params(params: RepresentationParams, vec: np.ndarray) -> RepresentationParams:
    out = params.copy()
    i = 0
    for li, (W, b) in enumerate(zip(params.weights, params.biases)):
        out.weights[li] = vec[i:i + W.size].reshape(W.shape).copy()
        i += W.size
        out.biases[li] = vec[i:i + b.size].copy()
        i += b.size
    return out


def flatten_grads(grads) -> np.ndarray:
    parts = []
    for dW, db in grads:
        parts.append(dW.ravel())
        parts.append(db.ravel())
    return np.concatenate(parts)


# -- weight file ------------------------------------------------------------

def save_weights(params: RepresentationParams, path) -> None:
    doc = {
        "format": WEIGHTS_FORMAT,
        "m_delays": params.m_delays,
        "n": params.n,
        "k": params.k,
        "phi_max": params.phi_max,
        "skip": params.skip,
        "affine_slots": params.affine_slots,
        "mu": params.mu.tolist(),
        "sigma": params.sigma.tolist(),
        "layers": [
            {"w": W.tolist(), "b": b.tolist()}
            for W, b in zip(params.weights, params.biases)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_weights(path) -> RepresentationParams:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != WEIGHTS_FORMAT:
        raise DimensionMismatch(
            f"unknown weight format {doc.get('format')!r}, expected {WEIGHTS_FORMAT}"
        )
    params = RepresentationParams(
        m_delays=int(doc["m_delays"]),
        n=int(doc["n"]),
        k=int(doc["k"]),
        phi_max=float(doc["phi_max"]),
        skip=bool(doc.get("skip", False)),
        affine_slots=bool(doc.get("affine_slots", False)),
        weights=[np.asarray(l["w"], dtype=float) for l in doc["layers"]],
        biases=[np.asarray(l["b"], dtype=float) for l in doc["layers"]],
        mu=np.asarray(doc["mu"], dtype=float),
        sigma=np.asarray(doc["sigma"], dtype=float),
    )
    return params
