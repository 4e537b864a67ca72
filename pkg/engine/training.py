"""
Non-Conservative Equilibrium Propagation Engine

Training module - builds the network for an experiment and runs the epoch loop.

Key responsibilities:
- Build (field, params) for symmetric-init, custom, fixed-ratio and feedforward runs
- Apply gradient estimates with per-group learning rates
- Evaluate test accuracy, test cost and Jacobian asymmetry after every epoch
- Log one metrics row per batch, abort on excessive divergence
- Write metrics CSV, manifest and final checkpoint into the run directory

Called by: app.py train / eval / sweep
Input: RunConfig (+ optional in-memory datasets)
Output: TrainingResult with final params, records and RunSummary

Example:
    trainer = Trainer(cfg)
    result = trainer.run()
    print(result.summary.final_accuracy)
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .asymmetry import mean_r_jac, r_str_metric
from .config import RunConfig, load_run_config
from .cost import QuadraticCost, readout
from .data_loader import N_CLASSES, DataLoader, Dataset, batches
from .dynamics import ForceField, RelaxationConfig, jacobian, relax
from .errors import DegenerateMetric, DivergenceAbort
from .feedforward import FeedforwardField, FeedforwardParams
from .fixed_ratio import FixedRatioField, FixedRatioParams, fixed_ratio_init
from .hopfield import HopfieldField, HopfieldParams, hidden_input_mask, init_hopfield, layered_mask
from .learners import GradientEstimate, NudgeConfig
from .metrics import EVAL_BATCH, MetricsRecord, RunSummary, summarize
from .reports import MetricsLogger, load_checkpoint, make_run_dir, save_checkpoint, save_manifest
from .run import estimate_batch

logger = logging.getLogger(__name__)

R_JAC_SAMPLES = 64
EVAL_STREAM = 7  # rng stream for evaluation initial states, independent of training


def build_model(cfg: RunConfig, n_in: int, rng: np.random.Generator,
                n_out: int = N_CLASSES) -> Tuple[ForceField, object]:
    """
    Network for cfg.experiment. Every initialization draws from Normal(0, 1/N),
    N = total neuron count (inputs included).
    """
    n_h = cfg.hidden_size
    n_dyn = n_h + n_out
    std = 1.0 / np.sqrt(n_in + n_dyn)

    if cfg.experiment == "symmetric-init":
        return HopfieldField(), init_hopfield(n_in, n_h, n_out, rng, symmetric=True)
    if cfg.experiment == "custom":
        return HopfieldField(), init_hopfield(n_in, n_h, n_out, rng, symmetric=False)
    if cfg.experiment == "feedforward":
        params = FeedforwardParams(
            J_in=rng.normal(0.0, std, size=(n_h, n_in)),
            W=rng.normal(0.0, std, size=(n_out, n_h)),
        )
        return FeedforwardField(), params
    if cfg.experiment == "fixed-ratio":
        in_mask = hidden_input_mask(n_h, n_out, n_in)
        params = fixed_ratio_init(
            n_dyn, std, cfg.r_str, int(rng.integers(2**31)),
            n_in=n_in, layer_mask=layered_mask(n_h, n_out), input_mask=in_mask,
        )
        J_in = rng.normal(0.0, std, size=(n_dyn, n_in))
        return FixedRatioField(), params.with_groups(J_in=J_in)
    raise ValueError(f"Unknown experiment {cfg.experiment!r}")


def field_for(params) -> ForceField:
    """Force field matching a parameter type (used when reloading checkpoints)."""
    if isinstance(params, FeedforwardParams):
        return FeedforwardField()
    if isinstance(params, FixedRatioParams):
        return FixedRatioField()
    if isinstance(params, HopfieldParams):
        return HopfieldField()
    raise ValueError(f"No force field for {type(params).__name__}")


def learning_rates(cfg: RunConfig, params) -> Dict[str, float]:
    """
    Per-group learning rate. J_in gets lr_input_hidden, every other group
    lr_hidden_output. input-only keeps the couplings frozen (gamma still trains).
    """
    rates = {}
    for name in params.groups():
        if name == "J_in":
            rates[name] = cfg.lr_input_hidden
        elif cfg.train_only == "input-only" and name != "gamma":
            rates[name] = 0.0
        else:
            rates[name] = cfg.lr_hidden_output
    return rates


def apply_update(params, estimate: GradientEstimate, rates: Dict[str, float]):
    """theta <- theta + lr * estimate (estimates already point along -dC/dtheta)."""
    current = params.groups()
    updates = {
        name: np.asarray(current[name]) + rate * estimate.grads[name]
        for name, rate in rates.items()
        if rate != 0.0 and name in estimate.grads
    }
    return params.with_groups(**updates)


def coupling_asymmetry(field_: ForceField, params) -> float:
    try:
        return r_str_metric(field_.as_hopfield(params).J_dyn)
    except DegenerateMetric:
        return float("nan")


@dataclass
class EvalResult:
    accuracy: float
    cost: float
    r_jac: Optional[float]
    n_diverged: int


def evaluate(field_: ForceField, params, dataset: Dataset, free_cfg: RelaxationConfig,
             seed: int, *, r_jac_samples: int = R_JAC_SAMPLES) -> EvalResult:
    """
    Free-phase inference on the whole dataset; pure in (params, dataset, seed).

    Diverged samples count as misclassified and are left out of the cost.
    """
    rng = np.random.default_rng([seed, EVAL_STREAM])
    n_dyn = field_.state_dim(params)
    x0 = rng.uniform(-1.0, 1.0, size=(len(dataset), n_dyn))
    free = relax(field_, params, dataset.images, x0, free_cfg, on_divergence="flag")
    ok = ~free.diverged

    predictions = readout(free.state, N_CLASSES)
    accuracy = float(np.mean((predictions == dataset.labels) & ok))
    costs = QuadraticCost(dataset.targets).value(free.state)
    mean_cost = float(np.mean(costs[ok])) if ok.any() else float("nan")

    r_jac = None
    head = np.flatnonzero(ok[:r_jac_samples])
    if len(head):
        jacs = jacobian(field_, params, dataset.images[head], free.state[head])
        try:
            r_jac = mean_r_jac(jacs)
        except DegenerateMetric:
            logger.debug("r_jac undefined on evaluation states")
    return EvalResult(accuracy, mean_cost, r_jac, free.n_diverged)


@dataclass
class TrainingResult:
    params: object
    records: List[MetricsRecord]
    summary: RunSummary
    run_dir: Optional[Path] = None
    files: Dict[str, str] = field(default_factory=dict)


class Trainer:
    """Mini-batch training of one configuration."""

    def __init__(self, cfg: RunConfig, train: Optional[Dataset] = None, test: Optional[Dataset] = None,
                 *, progress: bool = True, write_outputs: bool = True):
        self.cfg = cfg
        self.progress = progress
        self.write_outputs = write_outputs
        if train is None or test is None:
            loader = DataLoader(Path(cfg.data_dir))
            train = train if train is not None else loader.load_split("train", cfg.train_subset)
            test = test if test is not None else loader.load_split("test", cfg.test_subset)
        self.train = train
        self.test = test
        self.free_cfg = RelaxationConfig(dt=cfg.dt, max_steps=cfg.n_free, mode="fixed")
        self.nudge = NudgeConfig(cfg.beta, RelaxationConfig(dt=cfg.dt, max_steps=cfg.n_nudge, mode="fixed"))

    def run(self) -> TrainingResult:
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)
        field_, params = build_model(cfg, self.train.images.shape[1], rng)
        state_rng = np.random.default_rng([cfg.seed, 1])
        rates = learning_rates(cfg, params)
        n_dyn = field_.state_dim(params)

        run_dir = None
        metrics_log = None
        if self.write_outputs:
            run_dir = make_run_dir(Path(cfg.output_dir), experiment=cfg.experiment,
                                   method=cfg.method, seed=cfg.seed)
            metrics_log = MetricsLogger(run_dir / "metrics.csv")
        logger.info(f"Training {cfg.experiment}/{cfg.method} seed={cfg.seed} N_dyn={n_dyn} "
                    f"on {len(self.train)} samples")

        records: List[MetricsRecord] = []

        def emit(record: MetricsRecord) -> None:
            records.append(record)
            if metrics_log is not None:
                metrics_log.log(record)

        n_batches = int(np.ceil(len(self.train) / cfg.batch_size))
        r_str = coupling_asymmetry(field_, params)
        for epoch in range(1, cfg.epochs + 1):
            loop = tqdm(batches(self.train, cfg.batch_size, cfg.seed, epoch), total=n_batches,
                        desc=f"epoch {epoch}/{cfg.epochs}", disable=not self.progress, leave=False)
            for batch in loop:
                start = time.perf_counter()
                x0 = state_rng.uniform(-1.0, 1.0, size=(len(batch.labels), n_dyn))
                step = estimate_batch(field=field_, params=params, inputs=batch.inputs,
                                      targets=batch.targets, x0=x0, method=cfg.method,
                                      free_cfg=self.free_cfg, nudge=self.nudge)
                if step.n_diverged > cfg.divergence_limit * step.n_samples:
                    raise DivergenceAbort(
                        f"{step.n_diverged}/{step.n_samples} samples diverged in epoch {epoch} "
                        f"batch {batch.index}",
                        summary=step.diverged,
                    )
                if step.n_diverged:
                    logger.warning(f"Dropped {step.n_diverged}/{step.n_samples} diverged samples in epoch "
                                   f"{epoch} batch {batch.index}")
                params = apply_update(params, step.estimate, rates)
                r_str = coupling_asymmetry(field_, params)
                emit(MetricsRecord(epoch, batch.index, step.cost, None, r_str, None,
                                   (time.perf_counter() - start) * 1e3))
                loop.set_postfix(cost=f"{step.cost:.4f}")

            start = time.perf_counter()
            ev = evaluate(field_, params, self.test, self.free_cfg, cfg.seed)
            emit(MetricsRecord(epoch, EVAL_BATCH, ev.cost, ev.accuracy, r_str, ev.r_jac,
                               (time.perf_counter() - start) * 1e3))
            logger.info(f"epoch {epoch}: test accuracy {ev.accuracy:.4f}, cost {ev.cost:.4f}, r_str {r_str:.4f}")

        summary = summarize(records)
        files: Dict[str, str] = {}
        if run_dir is not None:
            files = {
                "metrics": str(run_dir / "metrics.csv"),
                "checkpoint": str(save_checkpoint(run_dir / "checkpoint.npz", params)),
            }
            files["manifest"] = str(save_manifest(run_dir / "manifest.json", config=cfg.to_dict(),
                                                  final_metrics=asdict(summary), files=files))
        return TrainingResult(params, records, summary, run_dir, files)


def run_training(cfg: RunConfig, train: Optional[Dataset] = None, test: Optional[Dataset] = None,
                 *, progress: bool = True, write_outputs: bool = True) -> TrainingResult:
    return Trainer(cfg, train, test, progress=progress, write_outputs=write_outputs).run()


CHECKPOINT_EXPERIMENTS = (
    (FeedforwardParams, "feedforward"),
    (FixedRatioParams, "fixed-ratio"),
    (HopfieldParams, "symmetric-init"),
)


@dataclass
class CheckpointEval:
    config: RunConfig
    result: EvalResult
    r_str: float
    n_samples: int
    config_source: str  # explicit path, manifest path, or "defaults"


def resolve_eval_config(checkpoint: Path, params, config_path: Optional[Path] = None,
                        overrides: Optional[Mapping[str, Any]] = None,
                        env: Optional[Mapping[str, str]] = None) -> Tuple[RunConfig, str]:
    """
    Evaluation protocol of a checkpoint.

    An explicit config wins, then the manifest.json saved beside the checkpoint,
    then the defaults of the experiment the parameter kind belongs to. Flag
    overrides apply on top in every case.
    """
    overrides = dict(overrides or {})
    if config_path is None:
        manifest = Path(checkpoint).with_name("manifest.json")
        if manifest.exists():
            config_path = manifest
        elif overrides.get("experiment") is None:
            overrides["experiment"] = next(e for cls, e in CHECKPOINT_EXPERIMENTS if isinstance(params, cls))
            logger.warning(f"No manifest beside {checkpoint}; evaluating with "
                           f"{overrides['experiment']} defaults")
    cfg = load_run_config(config_path, overrides, env)
    return cfg, str(config_path) if config_path is not None else "defaults"


def evaluate_checkpoint(checkpoint: Path, config_path: Optional[Path] = None,
                        overrides: Optional[Mapping[str, Any]] = None,
                        env: Optional[Mapping[str, str]] = None,
                        test: Optional[Dataset] = None) -> CheckpointEval:
    """Test-set metrics of a saved run, computed with the protocol it was trained under."""
    params = load_checkpoint(checkpoint)
    cfg, source = resolve_eval_config(checkpoint, params, config_path, overrides, env)
    if test is None:
        test = DataLoader(Path(cfg.data_dir)).load_split("test", cfg.test_subset)
    field_ = field_for(params)
    free_cfg = RelaxationConfig(dt=cfg.dt, max_steps=cfg.n_free, mode="fixed")
    ev = evaluate(field_, params, test, free_cfg, cfg.seed)
    return CheckpointEval(cfg, ev, coupling_asymmetry(field_, params), len(test), source)
