"""Bi-level meta-learning of the feature network.

Each task is a trajectory segment: the first N (window, disturbance)
pairs form the support set, the next H the query set.  The inner problem
fits the linear head theta by ridge regression on the support pairs; it
has the closed form

    theta* = (Phi^T Phi + lam2 I)^-1 Phi^T targets,

so the outer problem (query prediction loss as a function of the network
weights) is a single-level objective.  Gradients flow through the
closed-form solve analytically: the adjoint right-hand sides are solved
against the same factorized Gram matrix, never by unrolling an iterative
solver.

Because Phi_t(z) is block-diagonal (one phi^T block per axis), the
nk x nk ridge decouples into one k x k solve shared by all axes; the
batched trainer exploits that, while `ridge_solve` keeps the general
dense contract used by the sliding-window estimator and the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DivergenceDetected, NumericalFailure, TooShort
from .representation import (
    RepresentationParams,
    feature_forward,
    feature_vjp,
    init_params,
    windows_from_states,
)


@dataclass
class MetaConfig:
    """Hyperparameters of the segment trainer."""

    support_len: int = 10          # N, inner regression length
    query_len: int = 10            # H, outer prediction horizon
    m_delays: int = 3              # M, embedding depth beyond the current state
    lam1: float = 1e-4             # L1 weight on query features
    lam2: float = 1e-2             # ridge weight, must stay > 0
    k: int = 12                    # feature count incl. fixed affine probes
    hidden: tuple = (32, 32)
    skip: bool = True              # output layer also sees the raw window
    affine_slots: bool = True      # reserve n+1 slots for state/constant probes
    phi_max: float = 5.0
    learning_rate: float = 1e-3
    batch_size: int = 16
    epochs: int = 500
    val_fraction: float = 0.1
    patience: int = 25             # epochs without val improvement before stopping
    segment_stride: int = 0        # in pairs; 0 means disjoint (N + H)
    seed: int = 0

    def __post_init__(self):
        if self.support_len < 1 or self.query_len < 1:
            raise ValueError("support_len and query_len must be >= 1")
        if self.lam2 <= 0:
            raise ValueError("lam2 must be positive to keep the inner solve well-posed")

    @property
    def segment_pairs(self) -> int:
        return self.support_len + self.query_len

    @property
    def stride(self) -> int:
        return self.segment_stride if self.segment_stride > 0 else self.segment_pairs


@dataclass
class TrajectorySegment:
    """One task: aligned states and ground-truth disturbances.

    states has m_delays + N + H rows; window j (newest state j + M) pairs
    with disturbances[j + M].  Support pairs are j = 0..N-1, query pairs
    j = N..N+H-1.
    """

    states: np.ndarray
    disturbances: np.ndarray
    support_len: int
    query_len: int
    m_delays: int
    support_windows: np.ndarray = field(init=False)
    support_targets: np.ndarray = field(init=False)
    query_windows: np.ndarray = field(init=False)
    query_targets: np.ndarray = field(init=False)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.disturbances = np.asarray(self.disturbances, dtype=float)
        N, H, M = self.support_len, self.query_len, self.m_delays
        if self.states.shape[0] != M + N + H:
            raise TooShort(
                f"segment has {self.states.shape[0]} states, needs {M + N + H}"
            )
        if self.disturbances.shape[0] != self.states.shape[0]:
            raise TooShort("states and disturbances must be time-aligned")
        windows = windows_from_states(self.states, M)
        targets = self.disturbances[M:]
        self.support_windows = windows[:N]
        self.support_targets = targets[:N]
        self.query_windows = windows[N:N + H]
        self.query_targets = targets[N:N + H]


def slice_dataset(states, disturbances, cfg: MetaConfig):
    """Cut one trajectory into fixed-stride segments of N + H pairs.

    Pair j targets disturbances[j + M]; consecutive segments are disjoint
    in pair space (their windows may share up to M boundary states).
    """
    states = np.asarray(states, dtype=float)
    disturbances = np.asarray(disturbances, dtype=float)
    M, pairs, stride = cfg.m_delays, cfg.segment_pairs, cfg.stride
    n_pairs = states.shape[0] - M
    if n_pairs < pairs:
        raise TooShort(
            f"trajectory yields {max(n_pairs, 0)} pairs, a segment needs {pairs}"
        )
    segments = []
    for start in range(0, n_pairs - pairs + 1, stride):
        sl = slice(start, start + M + pairs)
        segments.append(
            TrajectorySegment(
                states=states[sl],
                disturbances=disturbances[sl],
                support_len=cfg.support_len,
                query_len=cfg.query_len,
                m_delays=M,
            )
        )
    return segments


# -- inner solve -------------------------------------------------------------

def ridge_solve(design: np.ndarray, targets: np.ndarray, lam2: float) -> np.ndarray:
    """theta* = (Phi^T Phi + lam2 I)^-1 Phi^T targets via Cholesky.

    lam2 > 0 makes the Gram matrix positive definite, so a factorization
    failure signals NaN/Inf inputs rather than rank deficiency.
    """
    design = np.asarray(design, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if lam2 <= 0:
        raise ValueError("lam2 must be positive")
    if design.shape[0] != targets.shape[0]:
        raise NumericalFailure(
            f"design has {design.shape[0]} rows, targets {targets.shape[0]}"
        )
    gram = design.T @ design + lam2 * np.eye(design.shape[1])
    rhs = design.T @ targets
    try:
        chol = scipy.linalg.cho_factor(gram, lower=True)
        theta = scipy.linalg.cho_solve(chol, rhs)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"ridge factorization failed: {exc}") from exc
    if not np.all(np.isfinite(theta)):
        raise NumericalFailure("ridge solution is not finite")
    return theta


def stack_block_features(features: np.ndarray, n: int) -> np.ndarray:
    """Stack per-sample block-diagonal feature matrices: (N*n, n*k)."""
    features = np.asarray(features, dtype=float)
    N, k = features.shape
    out = np.zeros((N * n, n * k))
    for a in range(n):
        out[a::n, a * k:(a + 1) * k] = features
    return out


def segment_theta(params: RepresentationParams, segment: TrajectorySegment,
                  cfg: MetaConfig) -> np.ndarray:
    """Inner ridge solution for one segment as the stacked vector
    vec(Xi) = Xi.ravel() with Xi the (n, k) per-axis head."""
    F, _ = feature_forward(params, segment.support_windows)
    n = segment.support_targets.shape[1]
    design = stack_block_features(F, n)
    targets = segment.support_targets.reshape(-1)
    return ridge_solve(design, targets, cfg.lam2)


# -- outer objective ---------------------------------------------------------

def _batch_loss_grad(params: RepresentationParams, segments, cfg: MetaConfig,
                     with_grad: bool):
    """Mean outer loss over a batch of equally-shaped segments, optionally
    with its gradient w.r.t. the network weights.

    Uses the per-axis decoupling of the block-diagonal ridge: one k x k
    solve per segment serves every axis.
    """
    B = len(segments)
    N, H = cfg.support_len, cfg.query_len
    sup_w = np.stack([s.support_windows for s in segments])
    sup_d = np.stack([s.support_targets for s in segments])
    qry_w = np.stack([s.query_windows for s in segments])
    qry_d = np.stack([s.query_targets for s in segments])
    k = params.k

    Z_all = np.concatenate([sup_w.reshape(B * N, -1), qry_w.reshape(B * H, -1)])
    phi_all, cache = feature_forward(params, Z_all)
    F = phi_all[:B * N].reshape(B, N, k)
    Fq = phi_all[B * N:].reshape(B, H, k)

    gram = np.einsum("bni,bnj->bij", F, F) + cfg.lam2 * np.eye(k)
    rhs = np.einsum("bni,bna->bia", F, sup_d)
    try:
        theta = np.linalg.solve(gram, rhs)                     # (B, k, n)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"batched ridge failed: {exc}") from exc
    pred = np.einsum("bhi,bia->bha", Fq, theta)
    resid = pred - qry_d

    mse_term = 0.5 * np.sum(resid * resid) / (H * B)
    l1_term = cfg.lam1 * np.sum(np.abs(Fq)) / (H * B)
    loss = mse_term + l1_term
    if not with_grad:
        return loss, None

    d_resid = resid / (H * B)
    d_theta = np.einsum("bhi,bha->bia", Fq, d_resid)
    d_Fq = np.einsum("bha,bia->bhi", d_resid, theta)
    d_Fq += (cfg.lam1 / (H * B)) * np.sign(Fq)
    adj = np.linalg.solve(gram, d_theta)                       # (B, k, n)
    d_F = np.einsum("bna,bka->bnk", sup_d, adj)
    cross = np.einsum("bia,bja->bij", adj, theta)              # S Theta^T
    d_F -= np.einsum("bnj,bji->bni", F, cross + cross.transpose(0, 2, 1))

    d_phi = np.concatenate([d_F.reshape(B * N, k), d_Fq.reshape(B * H, k)])
    grads, _ = feature_vjp(params, cache, d_phi)
    return loss, grads


def outer_loss(params: RepresentationParams, segment: TrajectorySegment,
               cfg: MetaConfig) -> float:
    """Query prediction loss (1/H) sum 1/2 ||Phi_t theta* - target||^2
    plus lam1 times the mean L1 norm of the query feature vectors."""
    loss, _ = _batch_loss_grad(params, [segment], cfg, with_grad=False)
    return loss


def meta_gradient(params: RepresentationParams, segment: TrajectorySegment,
                  cfg: MetaConfig):
    """Exact gradient of outer_loss w.r.t. the network weights, flowing
    through both the feature maps and the closed-form inner solve.
    Returns (grads, loss) with grads a per-layer list of (dW, db)."""
    loss, grads = _batch_loss_grad(params, [segment], cfg, with_grad=True)
    return grads, loss


# -- optimizer ---------------------------------------------------------------

@dataclass
class OptimizerState:
    """Adam moment accumulators, shaped like the parameter list."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = None
    v: list = None

    def init_like(self, params: RepresentationParams):
        self.m = [(np.zeros_like(W), np.zeros_like(b))
                  for W, b in zip(params.weights, params.biases)]
        self.v = [(np.zeros_like(W), np.zeros_like(b))
                  for W, b in zip(params.weights, params.biases)]
        self.step = 0

    def update(self, params: RepresentationParams, grads) -> None:
        self.step += 1
        corr1 = 1.0 - self.beta1 ** self.step
        corr2 = 1.0 - self.beta2 ** self.step
        for i, (dW, db) in enumerate(grads):
            for slot, g, target in ((0, dW, params.weights), (1, db, params.biases)):
                m = self.m[i][slot]
                v = self.v[i][slot]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                target[i] -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


# -- training loop -----------------------------------------------------------

@dataclass
class TrainResult:
    params: RepresentationParams
    history: list                 # dicts: epoch, train_loss, val_loss
    updates: int
    stopped: str                  # "epochs" | "patience"


def _mean_loss(params, segments, cfg, batch: int):
    total = 0.0
    for i in range(0, len(segments), batch):
        chunk = segments[i:i + batch]
        loss, _ = _batch_loss_grad(params, chunk, cfg, with_grad=False)
        total += loss * len(chunk)
    return total / len(segments)


def train(trajectories, cfg: MetaConfig) -> TrainResult:
    """Mini-batch Adam on the outer objective over all segments.

    trajectories: iterable of (states, disturbances) arrays.  Slicing,
    the validation split, weight init and shuffling all derive from
    cfg.seed, so two runs with the same seed produce bit-identical
    weights.
    """
    segments = []
    for states, dist in trajectories:
        try:
            segments.extend(slice_dataset(states, dist, cfg))
        except TooShort:
            continue
    if not segments:
        raise TooShort("dataset yields no complete segment")

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(segments))
    n_val = int(round(cfg.val_fraction * len(segments)))
    if len(segments) >= 5:
        n_val = max(n_val, 1)
    val = [segments[i] for i in order[:n_val]]
    tr = [segments[i] for i in order[n_val:]]
    if not tr:
        tr, val = val, []
    if not val:
        val = tr                   # tiny datasets validate on train

    n_dim = tr[0].support_targets.shape[1]
    params = init_params(
        rng, m_delays=cfg.m_delays, n=n_dim, k=cfg.k,
        hidden=tuple(cfg.hidden), phi_max=cfg.phi_max, skip=cfg.skip,
        affine_slots=cfg.affine_slots,
    )
    all_windows = np.concatenate(
        [np.concatenate([s.support_windows, s.query_windows]) for s in tr]
    )
    params.mu = all_windows.mean(axis=0)
    params.sigma = np.maximum(all_windows.std(axis=0), 1e-8)

    opt = OptimizerState(lr=cfg.learning_rate)
    opt.init_like(params)

    val0 = _mean_loss(params, val, cfg, cfg.batch_size)
    best_val = val0
    best_params = params.copy()
    best_epoch = 0
    history = []
    updates = 0
    stopped = "epochs"

    for epoch in range(1, cfg.epochs + 1):
        idx = rng.permutation(len(tr))
        running = 0.0
        for i in range(0, len(idx), cfg.batch_size):
            chunk = [tr[j] for j in idx[i:i + cfg.batch_size]]
            loss, grads = _batch_loss_grad(params, chunk, cfg, with_grad=True)
            opt.update(params, grads)
            updates += 1
            running += loss * len(chunk)
        train_loss = running / len(tr)
        val_loss = _mean_loss(params, val, cfg, cfg.batch_size)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})

        if not np.isfinite(val_loss) or val_loss > 10.0 * max(val0, 1e-30):
            raise DivergenceDetected(
                f"validation loss {val_loss:.3e} vs initial {val0:.3e} at epoch {epoch}"
            )
        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            best_epoch = epoch
        elif epoch - best_epoch >= cfg.patience:
            stopped = "patience"
            break

    return TrainResult(params=best_params, history=history, updates=updates,
                       stopped=stopped)
