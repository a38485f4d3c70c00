"""Experiment orchestration: dataset collection, training, the
six-method benchmark and the embedding/regression-length ablation.

Every run is driven by one JSON config document; sub-seeds are spawned
from the top-level seed so that a fixed (config, seed) pair reproduces
every output byte for byte.  All methods inside one benchmark see
identical disturbance realizations, references and measurement noise.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .control import ControllerGains, Reference, make_feedback_law, sample_reference
from .dataio import load_dataset, save_trajectory
from .disturbances import (
    FourierProfile,
    RandomizationRanges,
    Scenario,
    dataset_stats,
    sample_profile,
)
from .errors import IoFailure, MissingWeights
from .estimators import KINDS, AdaptiveState, EstimatorConfig, adapt_step, buffer_admit, make_estimator
from .metalearn import MetaConfig, TrainResult, slice_dataset, train
from .plant import NoiseConfig, PlantConfig, VEL, collect_dataset, rollout
from .representation import (
    RepresentationParams,
    featurize_batch,
    load_weights,
    save_weights,
    windows_from_states,
)

METRICS_FORMAT = "metadob.metrics/v1"
SUMMARY_FORMAT = "metadob.summary/v1"
FLOAT_FMT = "%.17g"


# -- configuration ------------------------------------------------------------

@dataclass
class ScenarioConfig:
    """Benchmark composite: random sine series + linear drag + a constant
    mass-uncertainty offset (-mass_ratio * gravity on the velocity rows).

    Drag dominates and the sine series stays small and slow, mirroring
    the mass-uncertainty/aerodynamic-drag simulated study: methods with
    a usable disturbance model separate cleanly from lag-limited
    observers, while the sine share probes robustness to effects outside
    the state-dependent structure.  vanilla_model_scale is the quality
    of the fixed drag model handed to the VanillaNN estimator (a learned
    model is never exact)."""

    amplitude: tuple = (0.05, 0.3)
    frequency: tuple = (0.2, 0.8)
    offset: tuple = (-0.3, 0.3)
    n_terms: tuple = (1, 2)
    mass_ratio: float = 0.12
    drag_diag: tuple = (1.2, 1.2, 0.8)
    vanilla_model_scale: float = 0.5

    def ranges(self) -> RandomizationRanges:
        return RandomizationRanges(
            amplitude=tuple(self.amplitude), frequency=tuple(self.frequency),
            offset=tuple(self.offset), n_terms=tuple(self.n_terms),
        )


@dataclass
class CollectConfig:
    num_trajectories: int = 40
    duration: float = 10.0
    tier: str = "meta-learn"            # "shifted" doubles amplitude/frequency
    amplitude: tuple = (0.0, 2.0)
    frequency: tuple = (0.0, 2.0)
    offset: tuple = (-1.0, 1.0)
    n_terms: tuple = (1, 4)

    def ranges(self) -> RandomizationRanges:
        base = RandomizationRanges(
            amplitude=tuple(self.amplitude), frequency=tuple(self.frequency),
            offset=tuple(self.offset), n_terms=tuple(self.n_terms),
        )
        return base.shifted() if self.tier == "shifted" else base


@dataclass
class BenchmarkConfig:
    T: float = 20.0
    n_seeds: int = 2
    methods: tuple = KINDS
    reference: dict = field(default_factory=lambda: {
        "family": "lemniscate", "radius": 1.6, "period": 6.5,
        "center": (0.0, 0.0, 1.0),
    })
    rmse_skip: float = 0.2              # leading fraction excluded from RMSE
    weights: str = "weights.json"


@dataclass
class AblationConfig:
    m_grid: tuple = (1, 3)
    n_grid: tuple = (5, 10, 20)
    query_len: int = 10
    num_trajectories: int = 16
    duration: float = 8.0
    eval_trajectories: int = 4
    epochs: int = 60
    online_skip: float = 1.0            # seconds of adaptation warm-up excluded


@dataclass
class EstimatorBankConfig:
    l_gain: float = 8.0
    p_gain: float = 20.0
    gamma_control: float = 1.0
    n_buffer: int = 30
    buffer_max_age: int = 150
    precondition: bool = True
    theta_max: float = 50.0
    ls_window: int = 10
    l1_bandwidth: float = 6.0
    l1_pole: float = 10.0
    lam2: float = 1e-2

    def estimator(self, kind: str, gamma: float, drag=None) -> EstimatorConfig:
        return EstimatorConfig(
            kind=kind, l_gain=self.l_gain, p_gain=self.p_gain, gamma=gamma,
            n_buffer=self.n_buffer, buffer_max_age=self.buffer_max_age,
            precondition=self.precondition, theta_max=self.theta_max,
            lam2=self.lam2, ls_window=self.ls_window,
            l1_bandwidth=self.l1_bandwidth, l1_pole=self.l1_pole, drag=drag,
        )


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "out"
    task: str = "eval"
    plant: PlantConfig = field(default_factory=PlantConfig)
    noise: NoiseConfig = field(default_factory=lambda: NoiseConfig(
        std=0.02, time_constant=0.02, enabled=True))
    controller: dict = field(default_factory=lambda: {"kp": 4.0, "kv": 4.0})
    estimators: EstimatorBankConfig = field(default_factory=EstimatorBankConfig)
    meta: MetaConfig = field(default_factory=MetaConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    collect: CollectConfig = field(default_factory=CollectConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    dataset_dir: str = "dataset"
    weights_out: str = "weights.json"

    def gains(self) -> ControllerGains:
        return ControllerGains(
            kp=float(self.controller.get("kp", 4.0)) * np.eye(3),
            kv=float(self.controller.get("kv", 4.0)) * np.eye(3),
        )

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["plant"]["gravity"] = list(self.plant.gravity)
        return _listify(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        kwargs = {}
        for name, sub in (("plant", PlantConfig), ("noise", NoiseConfig),
                          ("estimators", EstimatorBankConfig),
                          ("meta", MetaConfig), ("scenario", ScenarioConfig),
                          ("collect", CollectConfig),
                          ("benchmark", BenchmarkConfig),
                          ("ablation", AblationConfig)):
            if name in doc:
                kwargs[name] = sub(**doc.pop(name))
        return cls(**doc, **kwargs)


def _listify(obj):
    if isinstance(obj, dict):
        return {k: _listify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_listify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))


def config_hash(cfg: ExperimentConfig) -> str:
    """sha256 over the canonical config document; the output directory is
    excluded so relocating a run does not change its identity."""
    doc = cfg.to_dict()
    doc.pop("out_dir", None)
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


# -- metrics ------------------------------------------------------------------

@dataclass
class MetricsReport:
    methods: dict                      # name -> {estimation_rmse, tracking_rmse, diverged}
    config_hash: str
    seed: int

    def row(self, method: str) -> dict:
        return self.methods[method]


def _rmse(err: np.ndarray, skip_frac: float) -> float:
    skip = int(skip_frac * err.shape[0])
    tail = err[skip:]
    return float(np.sqrt(np.mean(tail * tail)))


def benchmark_scenario(cfg: ExperimentConfig, rng) -> Scenario:
    profile = sample_profile(rng, cfg.scenario.ranges(), n=3)
    drag = np.diag(np.asarray(cfg.scenario.drag_diag, dtype=float))
    children = [
        Scenario("fourier", profile=profile),
        Scenario("drag", drag=drag, mass=cfg.plant.mass),
        Scenario("step", vector=-cfg.scenario.mass_ratio * cfg.plant.gravity,
                 t_step=0.0),
    ]
    return Scenario("composite", children=children)


def run_benchmark(cfg: ExperimentConfig, rep: RepresentationParams,
                  out_dir=None) -> MetricsReport:
    """Paired-seed six-method benchmark plus the bare-baseline row.

    Estimation rollouts run the PD law without feedforward; control
    rollouts close the loop through -d_hat.  RMSEs are averaged over
    n_seeds scenario realizations and exclude the leading rmse_skip
    fraction of each rollout.
    """
    if rep is None:
        raise MissingWeights("benchmark needs a trained representation")
    bench = cfg.benchmark
    gains = cfg.gains()
    drag = cfg.scenario.vanilla_model_scale * np.diag(
        np.asarray(cfg.scenario.drag_diag, dtype=float))
    names = list(bench.methods) + ["none"]
    acc = {m: {"est": [], "trk": [], "diverged": False} for m in names}
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    for s in range(bench.n_seeds):
        scen_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, s]))
        scenario = benchmark_scenario(cfg, scen_rng)
        reference = Reference(**bench.reference)
        for task, feedforward in (("estimation", False), ("control", True)):
            controller = make_feedback_law(gains, cfg.plant, feedforward=feedforward)
            for method in names:
                if method == "none" and task == "control":
                    continue           # the bare baseline never compensates
                if method == "none":
                    est = None
                else:
                    gamma = cfg.estimators.gamma_control if feedforward else 0.0
                    est = make_estimator(
                        cfg.estimators.estimator(method, gamma, drag=drag),
                        cfg.plant, rep=rep,
                    )
                noise_rng = np.random.default_rng(
                    np.random.SeedSequence([cfg.seed, s, 104729]))
                log = rollout(controller, est, scenario, reference, bench.T,
                              cfg.plant, cfg.noise, rng=noise_rng)
                if log.diverged:
                    acc[method]["diverged"] = True
                    continue
                if task == "estimation":
                    acc[method]["est"].append(
                        _rmse(log.d_hat - log.d, bench.rmse_skip))
                    if method == "none":
                        acc[method]["trk"].append(
                            _rmse(log.x[:, :3] - log.x_ref[:, :3], bench.rmse_skip))
                else:
                    acc[method]["trk"].append(
                        _rmse(log.x[:, :3] - log.x_ref[:, :3], bench.rmse_skip))
                if out is not None and s == 0:
                    _write_rollout_csv(out / f"rollout_{task}_{method}.csv", log)

    methods = {}
    for m in names:
        methods[m] = {
            "estimation_rmse": float(np.mean(acc[m]["est"])) if acc[m]["est"] else float("nan"),
            "tracking_rmse": float(np.mean(acc[m]["trk"])) if acc[m]["trk"] else float("nan"),
            "diverged": acc[m]["diverged"],
        }
    return MetricsReport(methods=methods, config_hash=config_hash(cfg),
                         seed=cfg.seed)


def _write_rollout_csv(path, log) -> None:
    cols = (["t"] + [f"x{i}" for i in range(6)] + [f"u{i}" for i in range(3)]
            + [f"d{i}" for i in range(3)] + [f"dhat{i}" for i in range(3)]
            + [f"xd{i}" for i in range(6)])
    table = np.column_stack([log.t, log.x, log.u, log.d, log.d_hat, log.x_ref])
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    np.savetxt(buf, table, delimiter=",", fmt=FLOAT_FMT)
    Path(path).write_text(buf.getvalue())


# -- export -------------------------------------------------------------------

def export(report: MetricsReport, out_dir, cfg: ExperimentConfig = None) -> dict:
    """metrics.csv (schema v1: method, estimation_rmse, tracking_rmse,
    diverged) plus summary.json carrying the config hash."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        lines = ["method,estimation_rmse,tracking_rmse,diverged"]
        for name, row in report.methods.items():
            lines.append(
                f"{name},{row['estimation_rmse']:.17g},"
                f"{row['tracking_rmse']:.17g},{int(row['diverged'])}"
            )
        metrics_path = out / "metrics.csv"
        metrics_path.write_text("\n".join(lines) + "\n")
        summary = {
            "format": SUMMARY_FORMAT,
            "config_hash": report.config_hash,
            "seed": report.seed,
            "methods": report.methods,
        }
        summary_path = out / "summary.json"
        summary_path.write_text(json.dumps(summary, indent=1, sort_keys=True))
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out}: {exc}") from exc
    return {"metrics": metrics_path, "summary": summary_path}


def parse_metrics(path) -> MetricsReport:
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    if header != ["method", "estimation_rmse", "tracking_rmse", "diverged"]:
        raise IoFailure(f"unexpected metrics schema: {header}")
    methods = {}
    for line in lines[1:]:
        name, est, trk, div = line.split(",")
        methods[name] = {
            "estimation_rmse": float(est),
            "tracking_rmse": float(trk),
            "diverged": bool(int(div)),
        }
    return MetricsReport(methods=methods, config_hash="", seed=-1)


# -- training helpers ---------------------------------------------------------

def simulate_trajectories(num: int, ranges: RandomizationRanges,
                          cfg: ExperimentConfig, seed: int,
                          duration: float) -> list:
    """In-memory analogue of `collect`: closed-loop rollouts under the
    baseline controller, returning (velocity states, disturbance) pairs."""
    controller = make_feedback_law(cfg.gains(), cfg.plant, feedforward=False)
    out = []
    for ss in np.random.SeedSequence(seed).spawn(num):
        rng = np.random.default_rng(ss)
        profile = sample_profile(rng, ranges, n=3)
        scenario = Scenario("fourier", profile=profile)
        reference = sample_reference(rng, duration=duration)
        log = rollout(controller, None, scenario, reference, duration, cfg.plant)
        if not log.diverged:
            out.append((log.x[:, VEL], log.d))
    return out


def train_representation(trajectories, meta_cfg: MetaConfig) -> TrainResult:
    return train(trajectories, meta_cfg)


def write_training_curve(path, history) -> None:
    lines = ["epoch,train_loss,val_loss"]
    for row in history:
        lines.append(f"{row['epoch']},{row['train_loss']:.17g},{row['val_loss']:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


# -- ablation -----------------------------------------------------------------

def query_mse(params: RepresentationParams, trajectories, cfg: MetaConfig) -> float:
    """Direct-ridge prediction loss: fit theta on each segment's support
    pairs, report the plain per-component MSE over its query pairs."""
    total, count = 0.0, 0
    for states, dist in trajectories:
        for seg in slice_dataset(states, dist, cfg):
            F = featurize_batch(params, seg.support_windows)
            Fq = featurize_batch(params, seg.query_windows)
            gram = F.T @ F + cfg.lam2 * np.eye(params.k)
            theta = np.linalg.solve(gram, F.T @ seg.support_targets)
            resid = Fq @ theta - seg.query_targets
            total += float(np.sum(resid * resid))
            count += resid.size
    return total / count


def online_mse(params: RepresentationParams, trajectories, bank: EstimatorBankConfig,
               dt: float, skip_seconds: float = 1.0) -> float:
    """Online-adaptation prediction loss: run the concurrent-learning law
    along each trajectory with ground-truth measurements, scoring the
    one-step-ahead prediction (theta before seeing the current pair)."""
    total, count = 0.0, 0
    skip = int(round(skip_seconds / dt))
    for states, dist in trajectories:
        windows = windows_from_states(states, params.m_delays)
        targets = dist[params.m_delays:]
        phis = featurize_batch(params, windows)
        adaptive = AdaptiveState.create(
            3, params.k, p_gain=bank.p_gain, gamma=0.0,
            n_max=bank.n_buffer, theta_max=bank.theta_max,
            precondition=bank.precondition, max_age=bank.buffer_max_age,
        )
        for j in range(phis.shape[0]):
            pred = adaptive.theta @ phis[j]
            if j >= skip:
                err = pred - targets[j]
                total += float(err @ err)
                count += err.size
            buffer_admit(adaptive, phis[j], targets[j])
            adapt_step(adaptive, phis[j], targets[j], None, dt)
    return total / count


def run_ablation(cfg: ExperimentConfig, out_dir=None) -> list:
    """Train the (M, N) grid on the meta-learn tier and score both tiers
    with both adaptation modes.  Returns rows of
    (tier, M, N, mode, loss); optionally writes ablation.csv."""
    ab = cfg.ablation
    learn_ranges = cfg.collect.ranges()
    shifted_ranges = learn_ranges.shifted()
    train_set = simulate_trajectories(ab.num_trajectories, learn_ranges, cfg,
                                      seed=cfg.seed, duration=ab.duration)
    eval_sets = {
        "meta-learn": simulate_trajectories(
            ab.eval_trajectories, learn_ranges, cfg,
            seed=cfg.seed + 1_000_003, duration=ab.duration),
        "shifted": simulate_trajectories(
            ab.eval_trajectories, shifted_ranges, cfg,
            seed=cfg.seed + 2_000_003, duration=ab.duration),
    }

    rows = []
    for m_delays in ab.m_grid:
        for n_sup in ab.n_grid:
            mc = MetaConfig(
                support_len=int(n_sup), query_len=ab.query_len,
                m_delays=int(m_delays), lam1=cfg.meta.lam1, lam2=cfg.meta.lam2,
                k=cfg.meta.k, hidden=tuple(cfg.meta.hidden),
                phi_max=cfg.meta.phi_max, learning_rate=cfg.meta.learning_rate,
                batch_size=cfg.meta.batch_size, epochs=ab.epochs,
                patience=cfg.meta.patience, seed=cfg.seed,
            )
            result = train(train_set, mc)
            for tier, data in eval_sets.items():
                rows.append((tier, int(m_delays), int(n_sup), "ridge",
                             query_mse(result.params, data, mc)))
                rows.append((tier, int(m_delays), int(n_sup), "online",
                             online_mse(result.params, data, cfg.estimators,
                                        cfg.plant.dt, ab.online_skip)))
    if out_dir is not None:
        lines = ["tier,M,N,mode,loss"]
        for tier, m, n, mode, loss in rows:
            lines.append(f"{tier},{m},{n},{mode},{loss:.17g}")
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "ablation.csv").write_text("\n".join(lines) + "\n")
    return rows


# -- CLI task entry points ------------------------------------------------------

def collect_task(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out_dir)
    paths = collect_dataset(
        cfg.collect.num_trajectories, cfg.collect.ranges(), cfg.plant,
        out, seed=cfg.seed, duration=cfg.collect.duration,
        tier=cfg.collect.tier,
        controller_factory=lambda: make_feedback_law(
            cfg.gains(), cfg.plant, feedforward=False),
    )
    diverged = cfg.collect.num_trajectories - len(paths)
    lines = ["trajectory,max_abs,max_rate,rms"]
    for p in paths:
        from .dataio import load_trajectory
        stats = dataset_stats(load_trajectory(p).d, cfg.plant.dt)
        lines.append(f"{p.name},{stats['max_abs']:.17g},"
                     f"{stats['max_rate']:.17g},{stats['rms']:.17g}")
    (out / "stats.csv").write_text("\n".join(lines) + "\n")
    return {"trajectories": len(paths), "diverged": diverged, "out": str(out)}


def train_task(cfg: ExperimentConfig) -> dict:
    data = load_dataset(cfg.dataset_dir)
    trajectories = [(traj.velocity, traj.d) for traj in data]
    result = train_representation(trajectories, cfg.meta)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_weights(result.params, out / Path(cfg.weights_out).name)
    write_training_curve(out / "training_curve.csv", result.history)
    return {
        "epochs": len(result.history),
        "updates": result.updates,
        "stopped": result.stopped,
        "val_loss": result.history[-1]["val_loss"] if result.history else float("nan"),
        "out": str(out),
    }


def eval_task(cfg: ExperimentConfig) -> dict:
    weights = Path(cfg.benchmark.weights)
    if not weights.exists():
        raise MissingWeights(f"weights file not found: {weights}")
    rep = load_weights(weights)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = run_benchmark(cfg, rep, out_dir=out)
    export(report, out, cfg)
    return {"methods": list(report.methods), "out": str(out)}


def ablate_task(cfg: ExperimentConfig) -> dict:
    rows = run_ablation(cfg, out_dir=cfg.out_dir)
    return {"rows": len(rows), "out": str(cfg.out_dir)}
