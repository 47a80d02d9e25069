"""Unsupervised training loop, evaluation, and report/log serialization.

Two variants share the loop and differ only in how network outputs become a
solution:

- ``proposed``: positive outputs (p, lam, mu) -> feasibility-preserving
  recovery (directions from the regularized solve, powers, max-AP scaling,
  fronthaul-tight quantization noise).
- ``dilearn``: the network emits the 2mk real/imaginary beamformer entries
  directly; the same max-AP scaling and quantization-noise rule are applied
  afterwards so the result is feasible too.

The loss is the negative mean recovered sum rate; there are no labels.
Training batches are sampled online from the channel generator by default
(fresh data every iteration); a fixed-dataset mode cycles a finite sample
list. Everything is deterministic given the config seed.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .channel import (
    ChannelSample,
    ConstraintBounds,
    OneRingParams,
    generate_dataset,
)
from .cranmodel import SystemInstance, check_feasibility, sum_rate
from .errors import ConfigurationError, DegenerateInputError, TrainingDivergedError
from .neuralnet import (
    AdamState,
    MlpConfig,
    MlpModel,
    PipelineResult,
    adam_step,
    backward,
    batch_features,
    forward,
    init_model,
    pipeline_gradient,
    recalibrate_stats,
)

VARIANTS = ("proposed", "dilearn")


@dataclass(frozen=True)
class TrainConfig:
    m: int
    k: int
    variant: str = "proposed"
    depth: int = 5
    hidden_width: int | None = None
    batch_size: int = 256
    max_iterations: int = 50_000
    validation_interval: int = 500
    patience: int = 10
    lr: float = 1e-3
    lr_decay: float = 0.5
    lr_patience: int | None = None
    min_lr: float = 1e-6
    seed: int = 0
    channel_params: OneRingParams = field(default_factory=OneRingParams)
    bounds: ConstraintBounds = field(default_factory=ConstraintBounds)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}")
        if self.batch_size < 2:
            raise ConfigurationError("batch size must be at least 2")
        if self.max_iterations < 1 or self.validation_interval < 1 or self.patience < 1:
            raise ConfigurationError("iteration/validation/patience counts must be positive")
        if self.lr < 0 or not (0 < self.lr_decay <= 1):
            raise ConfigurationError("invalid learning-rate schedule")

    def effective_lr_patience(self) -> int:
        if self.lr_patience is not None:
            return max(1, self.lr_patience)
        return max(1, self.patience // 2)

    def mlp_config(self) -> MlpConfig:
        return MlpConfig.for_system(
            self.m, self.k, self.variant, depth=self.depth, hidden_width=self.hidden_width
        )


def _seed_key(seed, *suffix) -> tuple:
    base = tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)
    return tuple(int(x) for x in base) + tuple(int(x) for x in suffix)


class OnlineSampleSource:
    """Fresh training batches from the channel generator (infinite data)."""

    def __init__(self, m, k, params=None, bounds=None, seed=0):
        self.m = m
        self.k = k
        self.params = params or OneRingParams()
        self.bounds = bounds or ConstraintBounds()
        self.seed = seed

    def batch(self, iteration: int, size: int) -> list[ChannelSample]:
        return generate_dataset(
            size, self.m, self.k, self.params, self.bounds, seed=_seed_key(self.seed, 1, iteration)
        )

    def finalization_batch(self, size: int) -> list[ChannelSample]:
        return generate_dataset(
            size, self.m, self.k, self.params, self.bounds, seed=_seed_key(self.seed, 3)
        )


class FixedSampleSource:
    """Batches drawn from a finite sample list (fixed-dataset mode)."""

    def __init__(self, samples: list[ChannelSample], seed=0):
        if not samples:
            raise ConfigurationError("fixed sample source needs at least one sample")
        self.samples = list(samples)
        self.seed = seed

    def batch(self, iteration: int, size: int) -> list[ChannelSample]:
        rng = np.random.default_rng(np.random.SeedSequence(list(_seed_key(self.seed, 1, iteration))))
        replace = len(self.samples) < size
        idx = rng.choice(len(self.samples), size=size, replace=replace)
        return [self.samples[i] for i in idx]

    def finalization_batch(self, size: int) -> list[ChannelSample]:
        return list(self.samples)


def _as_instances(batch) -> list[SystemInstance]:
    out = []
    for s in batch:
        out.append(s if isinstance(s, SystemInstance) else SystemInstance.from_sample(s))
    return out


def _dilearn_gradient(model: MlpModel, instances: list[SystemInstance]) -> PipelineResult:
    """Loss/gradients for the direct-beamformer variant (linear head)."""
    if not instances:
        raise ConfigurationError("empty batch")
    m, k = instances[0].h.shape
    if model.config.output_activation != "linear" or model.config.output_dim != 2 * m * k:
        raise ConfigurationError("model head does not match the direct-beamformer mapping")
    x = batch_features([inst.sample for inst in instances])
    out, cache = forward(model, x, mode="train")
    g_out = np.zeros_like(out)
    n = len(instances)
    mk = m * k
    sample_rates = np.full(n, np.nan)
    staged = []
    skipped = 0
    for b, inst in enumerate(instances):
        w = (out[b, :mk] + 1j * out[b, mk:]).reshape((m, k), order="F")
        row_power, istar = kernels.scale_stats(np.ascontiguousarray(w))
        rstar = row_power[istar]
        if rstar <= 0.0:
            skipped += 1
            continue
        staged.append((b, inst, w, row_power, istar))
    if not staged:
        raise DegenerateInputError("every sample in the batch was degenerate")
    n_valid = len(staged)
    gf = np.full(k, -1.0 / n_valid)
    total = 0.0
    for b, inst, w, row_power, istar in staged:
        h = np.ascontiguousarray(inst.h, dtype=np.complex128)
        s = np.sqrt(inst.effective_power / row_power[istar])
        v = np.ascontiguousarray(s * w)
        omega = (np.abs(v) ** 2).sum(axis=1) / inst.beta
        rates, amat, denom = kernels.rates_forward(h, v, omega)
        sample_rates[b] = rates.sum()
        total += sample_rates[b]
        gv, gomega = kernels.rates_backward(h, v, omega, amat, denom, gf)
        gv = gv + (2.0 / inst.beta) * gomega[:, None] * v
        gw = s * gv
        gs = float(np.sum(gv.real * w.real + gv.imag * w.imag))
        gr = -gs * s / (2.0 * row_power[istar])
        gw[istar, :] += 2.0 * gr * w[istar, :]
        flat = gw.ravel(order="F")
        g_out[b, :mk] = flat.real
        g_out[b, mk:] = flat.imag
    grads = backward(model, cache, g_out)
    mean_rate = total / n_valid
    return PipelineResult(
        loss=float(-mean_rate),
        grads=grads,
        mean_sum_rate=float(mean_rate),
        sample_rates=sample_rates,
        skipped=skipped,
    )


def batch_gradient(model: MlpModel, batch, variant: str = "proposed") -> PipelineResult:
    """Variant dispatch for loss + gradients on one batch."""
    instances = _as_instances(batch)
    if variant == "proposed":
        return pipeline_gradient(model, instances)
    if variant == "dilearn":
        return _dilearn_gradient(model, instances)
    raise ConfigurationError(f"unknown variant {variant!r}")


def loss_on_batch(model: MlpModel, batch, variant: str = "proposed") -> float:
    """Train-mode loss (negative mean recovered sum rate) on a batch."""
    return batch_gradient(model, batch, variant).loss


def recover_from_outputs(out_row: np.ndarray, inst: SystemInstance, variant: str):
    """Map one eval-mode output row to a feasible (v, omega); None if degenerate."""
    m, k = inst.h.shape
    h = np.ascontiguousarray(inst.h, dtype=np.complex128)
    if variant == "proposed":
        p = np.ascontiguousarray(out_row[:k])
        lam = np.ascontiguousarray(out_row[k : 2 * k])
        mu = np.ascontiguousarray(out_row[2 * k :])
        if not np.any(p > 0.0):
            return None
        status, _, _, _, _, _, _, v, omega = kernels.recover_forward(
            h, p, lam, mu, inst.effective_power, inst.beta
        )
        if status != -1:
            return None
        return v, omega
    mk = m * k
    w = (out_row[:mk] + 1j * out_row[mk:]).reshape((m, k), order="F")
    row_power, istar = kernels.scale_stats(np.ascontiguousarray(w))
    if row_power[istar] <= 0.0:
        return None
    v = w * np.sqrt(inst.effective_power / row_power[istar])
    omega = (np.abs(v) ** 2).sum(axis=1) / inst.beta
    return v, omega


@dataclass
class EvalReport:
    variant: str
    n: int
    mean_sum_rate: float
    rates: np.ndarray
    violations: int
    degenerate: int
    feasibility_tol: float


def evaluate(model: MlpModel, samples, variant: str = "proposed", tol: float = 1e-9) -> EvalReport:
    """Eval-mode inference + recovery + feasibility audit over ``samples``.

    A degenerate recovery counts as a violation and contributes rate 0.
    """
    instances = _as_instances(samples)
    if not instances:
        raise ConfigurationError("empty evaluation set")
    x = batch_features([inst.sample for inst in instances])
    out, _ = forward(model, x, mode="eval")
    n = len(instances)
    rates = np.zeros(n)
    violations = 0
    degenerate = 0
    for i, inst in enumerate(instances):
        sol = recover_from_outputs(out[i], inst, variant)
        if sol is None:
            degenerate += 1
            violations += 1
            continue
        v, omega = sol
        rates[i] = sum_rate(inst.h, v, omega)
        report = check_feasibility(v, omega, inst.power_budget, inst.beta, tol=tol)
        if not report.feasible:
            violations += 1
    return EvalReport(
        variant=variant,
        n=n,
        mean_sum_rate=float(rates.mean()),
        rates=rates,
        violations=violations,
        degenerate=degenerate,
        feasibility_tol=tol,
    )


@dataclass
class TrainReport:
    variant: str
    history: list
    best_iteration: int
    best_val_sum_rate: float
    final_val_sum_rate: float
    iterations_run: int
    stopped_early: bool
    skipped_samples: int
    final_lr: float


def train(config: TrainConfig, train_data, validation_data) -> tuple[MlpModel, TrainReport]:
    """Run the loop; returns the best-validation model (recalibrated) and report.

    ``train_data`` may be a sample source (``OnlineSampleSource`` /
    ``FixedSampleSource``) or a plain sample list (treated as fixed).
    ``validation_data`` is a fixed sample list evaluated every
    ``validation_interval`` iterations; training stops after ``patience``
    validations without improvement or at ``max_iterations``.
    """
    if isinstance(train_data, (list, tuple)):
        source = FixedSampleSource(list(train_data), seed=config.seed)
    else:
        source = train_data
    val_samples = list(validation_data)
    if not val_samples:
        raise ConfigurationError("validation set is empty")
    model = init_model(config.mlp_config(), seed=_seed_key(config.seed, 0))
    state = AdamState(lr=config.lr)
    lr_patience = config.effective_lr_patience()

    history = []
    best_val = -np.inf
    best_iteration = 0
    best_snapshot = model.copy()
    bad_validations = 0
    skipped_total = 0
    stopped_early = False
    interval_losses = []
    interval_wall = []
    iterations_run = 0

    for it in range(1, config.max_iterations + 1):
        t0 = time.perf_counter()
        batch = source.batch(it, config.batch_size)
        result = batch_gradient(model, batch, config.variant)
        if not np.isfinite(result.loss):
            bad = np.flatnonzero(~np.isfinite(result.sample_rates))
            idx = int(bad[0]) if bad.size else None
            raise TrainingDivergedError(it, idx)
        adam_step(model, result.grads, state)
        skipped_total += result.skipped
        iterations_run = it
        interval_losses.append(result.loss)
        interval_wall.append((time.perf_counter() - t0) * 1e3)
        if it % config.validation_interval == 0:
            val = evaluate(model, val_samples, config.variant).mean_sum_rate
            history.append(
                {
                    "iteration": it,
                    "train_loss": float(np.mean(interval_losses)),
                    "val_sum_rate": float(val),
                    "lr": state.lr,
                    "wall_ms": float(np.mean(interval_wall)),
                }
            )
            interval_losses = []
            interval_wall = []
            if val > best_val:
                best_val = val
                best_iteration = it
                best_snapshot = model.copy()
                bad_validations = 0
            else:
                bad_validations += 1
                if bad_validations % lr_patience == 0:
                    state.lr = max(state.lr * config.lr_decay, config.min_lr)
                if bad_validations >= config.patience:
                    stopped_early = True
                    break

    model = best_snapshot
    final_size = max(1024, config.batch_size)
    recalibrate_stats(model, batch_features(source.finalization_batch(final_size)))
    final_val = evaluate(model, val_samples, config.variant).mean_sum_rate
    report = TrainReport(
        variant=config.variant,
        history=history,
        best_iteration=best_iteration,
        best_val_sum_rate=float(best_val) if np.isfinite(best_val) else 0.0,
        final_val_sum_rate=float(final_val),
        iterations_run=iterations_run,
        stopped_early=stopped_early,
        skipped_samples=skipped_total,
        final_lr=state.lr,
    )
    return model, report


TRAIN_LOG_COLUMNS = ["iteration", "train_loss", "val_sum_rate", "lr", "wall_ms"]


def write_csv(path, columns: list[str], rows, metadata: dict | None = None) -> None:
    """CSV with deterministic float repr and '#'-prefixed metadata comments."""
    with open(path, "w", newline="") as f:
        for key in sorted((metadata or {}).keys()):
            f.write(f"# {key}={metadata[key]}\n")
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(x) if isinstance(x, float) else x for x in row])


def write_train_log(report: TrainReport, path, metadata: dict | None = None) -> None:
    rows = [[row[c] for c in TRAIN_LOG_COLUMNS] for row in report.history]
    write_csv(path, TRAIN_LOG_COLUMNS, rows, metadata)


def write_eval_csv(report: EvalReport, path, metadata: dict | None = None) -> None:
    meta = dict(metadata or {})
    meta.update(
        {
            "variant": report.variant,
            "mean_sum_rate": repr(report.mean_sum_rate),
            "violations": report.violations,
            "feasibility_tol": repr(report.feasibility_tol),
        }
    )
    rows = [[i, repr(float(r))] for i, r in enumerate(report.rates)]
    write_csv(path, ["sample_index", "sum_rate"], rows, meta)
