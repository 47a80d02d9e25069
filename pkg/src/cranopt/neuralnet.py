"""From-scratch MLP with BatchNorm, leaky-ReLU hidden layers and a softplus
("sigplus") positive output head, trained by hand-written reverse mode.

The training signal never uses labels: ``pipeline_gradient`` pushes the
network outputs through the feasibility-preserving recovery map and the rate
expression, and returns gradients of the negative mean sum rate with respect
to every trainable tensor. Complex intermediate gradients are packed as
g = dL/dRe + 1j * dL/dIm.

Layout conventions: batches are (batch, features); weights are
(fan_in, fan_out) so a layer computes ``x @ w + b``.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .channel import ChannelSample, interleave_complex
from .cranmodel import IntermediateParams, SystemInstance
from .errors import (
    ChecksumError,
    ConfigurationError,
    ContractViolationError,
    DegenerateInputError,
)
from .linalg import DefinitenessError

BN_EPS = 1e-12
BN_MOMENTUM = 0.99
CHECKPOINT_FORMAT = "cranopt-mlp"
CHECKPOINT_VERSION = 1

_ACTIVATIONS = ("sigplus", "linear")


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    output_dim: int
    depth: int = 5
    hidden_width: int = 64
    leak: float = 0.3
    output_activation: str = "sigplus"
    batchnorm: bool = True

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigurationError("layer widths must be positive")
        if self.depth < 1:
            raise ConfigurationError("need at least one affine layer")
        if self.depth > 1 and self.hidden_width < 1:
            raise ConfigurationError("hidden width must be positive")
        if not (0.0 < self.leak <= 1.0):
            raise ConfigurationError("leak must lie in (0, 1]")
        if self.output_activation not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown output activation {self.output_activation!r}")

    def layer_dims(self) -> list[int]:
        return [self.input_dim] + [self.hidden_width] * (self.depth - 1) + [self.output_dim]

    @classmethod
    def for_system(
        cls,
        m: int,
        k: int,
        variant: str = "proposed",
        depth: int = 5,
        hidden_width: int | None = None,
    ) -> "MlpConfig":
        """Network shape for an (m, k) system; width defaults to 13*m*k."""
        if variant == "proposed":
            out_dim, act = 2 * k + m, "sigplus"
        elif variant == "dilearn":
            out_dim, act = 2 * m * k, "linear"
        else:
            raise ConfigurationError(f"unknown variant {variant!r}")
        width = hidden_width if hidden_width is not None else int(np.ceil(13 * m * k))
        return cls(
            input_dim=2 * m * k + 2,
            output_dim=out_dim,
            depth=depth,
            hidden_width=width,
            output_activation=act,
        )


class MlpModel:
    """Parameter container. ``params`` holds trainables (w{l}, b{l}, and
    gamma{l}/beta{l} for BatchNorm layers), ``stats`` the running moments."""

    def __init__(self, config: MlpConfig, params: dict, stats: dict, finalized: bool = False):
        self.config = config
        self.params = params
        self.stats = stats
        self.finalized = finalized
        self._version = 0

    @property
    def version(self) -> int:
        return self._version

    def bump_version(self) -> None:
        self._version += 1

    def trainable_keys(self) -> list[str]:
        keys = []
        for l in range(self.config.depth):
            keys.extend([f"w{l}", f"b{l}"])
            if self.config.batchnorm and l < self.config.depth - 1:
                keys.extend([f"gamma{l}", f"beta{l}"])
        return keys

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.stats.items()},
            finalized=self.finalized,
        )


def _entropy(seed):
    if isinstance(seed, (tuple, list)):
        return [int(x) for x in seed]
    return int(seed)


def init_model(config: MlpConfig, seed=0) -> MlpModel:
    """Fan-in scaled uniform weights, zero biases, identity BatchNorm."""
    rng = np.random.default_rng(np.random.SeedSequence(_entropy(seed)))
    dims = config.layer_dims()
    params = {}
    stats = {}
    for l in range(config.depth):
        fan_in, fan_out = dims[l], dims[l + 1]
        bound = 1.0 / np.sqrt(fan_in)
        params[f"w{l}"] = rng.uniform(-bound, bound, (fan_in, fan_out))
        params[f"b{l}"] = np.zeros(fan_out)
        if config.batchnorm and l < config.depth - 1:
            params[f"gamma{l}"] = np.ones(fan_out)
            params[f"beta{l}"] = np.zeros(fan_out)
            stats[f"mean{l}"] = np.zeros(fan_out)
            stats[f"var{l}"] = np.ones(fan_out)
    return MlpModel(config, params, stats)


def lrelu(z, leak: float = 0.3):
    """Leaky ReLU: z for z >= 0, leak * z otherwise."""
    z = np.asarray(z)
    return np.where(z >= 0.0, z, leak * z)


def lrelu_grad(z, leak: float = 0.3):
    z = np.asarray(z)
    return np.where(z >= 0.0, 1.0, leak)


def sigplus(z):
    """Numerically safe softplus log(1 + e^z); strictly positive, ~z for large z."""
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def sigplus_grad(z):
    """Logistic sigmoid, computed without overflow on either tail."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class _LayerCache:
    d_in: np.ndarray
    z: np.ndarray
    zhat: np.ndarray | None
    istd: np.ndarray | None
    bn_out: np.ndarray


@dataclass
class MlpCache:
    mode: str
    version: int
    layers: list
    d_last: np.ndarray
    z_out: np.ndarray


def forward(model: MlpModel, x: np.ndarray, mode: str = "eval"):
    """Run the network; returns (outputs, cache for backward).

    Train mode normalizes with batch moments (batch size >= 2) and updates
    the running statistics with momentum 0.99; eval mode uses the stored
    running statistics and is row-independent.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    cfg = model.config
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise ConfigurationError(
            f"expected input of shape (batch, {cfg.input_dim}), got {x.shape}"
        )
    if mode == "train" and x.shape[0] < 2:
        raise ConfigurationError("train mode needs a batch of at least 2 rows")
    layers = []
    d = x
    for l in range(cfg.depth - 1):
        z = d @ model.params[f"w{l}"] + model.params[f"b{l}"]
        if cfg.batchnorm:
            if mode == "train":
                mean = z.mean(axis=0)
                var = z.var(axis=0)
                model.stats[f"mean{l}"] = (
                    BN_MOMENTUM * model.stats[f"mean{l}"] + (1.0 - BN_MOMENTUM) * mean
                )
                model.stats[f"var{l}"] = (
                    BN_MOMENTUM * model.stats[f"var{l}"] + (1.0 - BN_MOMENTUM) * var
                )
            else:
                mean = model.stats[f"mean{l}"]
                var = model.stats[f"var{l}"]
            istd = 1.0 / np.sqrt(var + BN_EPS)
            zhat = (z - mean) * istd
            bn_out = model.params[f"gamma{l}"] * zhat + model.params[f"beta{l}"]
        else:
            istd = None
            zhat = None
            bn_out = z
        layers.append(_LayerCache(d_in=d, z=z, zhat=zhat, istd=istd, bn_out=bn_out))
        d = lrelu(bn_out, cfg.leak)
    last = cfg.depth - 1
    z_out = d @ model.params[f"w{last}"] + model.params[f"b{last}"]
    out = sigplus(z_out) if cfg.output_activation == "sigplus" else z_out
    cache = MlpCache(mode=mode, version=model.version, layers=layers, d_last=d, z_out=z_out)
    return out, cache


def backward(model: MlpModel, cache: MlpCache, g_out: np.ndarray) -> dict:
    """Gradients of a scalar loss w.r.t. every trainable tensor.

    ``g_out`` is the loss gradient w.r.t. the network OUTPUTS (after the
    output activation). The cache must come from a train-mode forward on
    the current parameters.
    """
    if cache.mode != "train":
        raise ContractViolationError("backward needs a train-mode cache")
    if cache.version != model.version:
        raise ContractViolationError("cache is stale: parameters changed since forward")
    cfg = model.config
    g_out = np.asarray(g_out, dtype=np.float64)
    if g_out.shape != cache.z_out.shape:
        raise ConfigurationError(
            f"upstream gradient shape {g_out.shape} != output shape {cache.z_out.shape}"
        )
    grads = {}
    last = cfg.depth - 1
    gz = g_out * sigplus_grad(cache.z_out) if cfg.output_activation == "sigplus" else g_out
    grads[f"w{last}"] = cache.d_last.T @ gz
    grads[f"b{last}"] = gz.sum(axis=0)
    g = gz @ model.params[f"w{last}"].T
    for l in range(cfg.depth - 2, -1, -1):
        lc = cache.layers[l]
        g = g * lrelu_grad(lc.bn_out, cfg.leak)
        if cfg.batchnorm:
            grads[f"gamma{l}"] = (g * lc.zhat).sum(axis=0)
            grads[f"beta{l}"] = g.sum(axis=0)
            gzhat = g * model.params[f"gamma{l}"]
            gz_l = lc.istd * (
                gzhat
                - gzhat.mean(axis=0)
                - lc.zhat * (gzhat * lc.zhat).mean(axis=0)
            )
        else:
            gz_l = g
        grads[f"w{l}"] = lc.d_in.T @ gz_l
        grads[f"b{l}"] = gz_l.sum(axis=0)
        if l > 0:
            g = gz_l @ model.params[f"w{l}"].T
    return grads


def recalibrate_stats(model: MlpModel, x: np.ndarray) -> MlpModel:
    """Replace running moments with exact per-layer statistics over ``x``.

    Layer-sequential: each layer's moments are computed from activations
    produced with the already-recalibrated layers below, so a later
    eval-mode forward reproduces exactly the distribution measured here.
    """
    cfg = model.config
    x = np.ascontiguousarray(x, dtype=np.float64)
    d = x
    for l in range(cfg.depth - 1):
        z = d @ model.params[f"w{l}"] + model.params[f"b{l}"]
        if cfg.batchnorm:
            mean = z.mean(axis=0)
            var = z.var(axis=0)
            model.stats[f"mean{l}"] = mean
            model.stats[f"var{l}"] = var
            zhat = (z - mean) / np.sqrt(var + BN_EPS)
            bn_out = model.params[f"gamma{l}"] * zhat + model.params[f"beta{l}"]
        else:
            bn_out = z
        d = lrelu(bn_out, cfg.leak)
    model.finalized = True
    return model


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(model: MlpModel, grads: dict, state: AdamState):
    """One in-place Adam update over every trainable tensor."""
    state.t += 1
    b1c = 1.0 - state.beta1**state.t
    b2c = 1.0 - state.beta2**state.t
    for key in model.trainable_keys():
        g = grads[key]
        if key not in state.m:
            state.m[key] = np.zeros_like(model.params[key])
            state.v[key] = np.zeros_like(model.params[key])
        m = state.m[key]
        v = state.v[key]
        m += (1.0 - state.beta1) * (g - m)
        v += (1.0 - state.beta2) * (g * g - v)
        model.params[key] -= state.lr * (m / b1c) / (np.sqrt(v / b2c) + state.eps)
    model.bump_version()
    return model, state


def build_input_features(sample: ChannelSample) -> np.ndarray:
    """Flat features: Re/Im channel entries (interleaved, column-major by
    user), then the power budget in dB and the fronthaul capacity."""
    out = np.empty(2 * sample.m * sample.k + 2)
    out[:-2] = interleave_complex(sample.h)
    out[-2] = 10.0 * np.log10(sample.power_budget)
    out[-1] = sample.capacity
    return out


def batch_features(samples) -> np.ndarray:
    return np.stack([build_input_features(s) for s in samples])


def split_intermediate(out: np.ndarray, k: int, m: int) -> IntermediateParams:
    """Split network outputs (batch, 2k+m) into (p, lam, mu) blocks."""
    if out.shape[-1] != 2 * k + m:
        raise ConfigurationError(f"expected {2 * k + m} outputs, got {out.shape[-1]}")
    return IntermediateParams(
        p=out[..., :k], lam=out[..., k : 2 * k], mu=out[..., 2 * k :]
    )


@dataclass
class PipelineResult:
    loss: float
    grads: dict
    mean_sum_rate: float
    sample_rates: np.ndarray
    skipped: int


def pipeline_gradient(model: MlpModel, instances: list[SystemInstance]) -> PipelineResult:
    """Loss and gradients of the negative mean sum rate over a batch.

    Each sample's positive outputs (p, lam, mu) are recovered into a
    feasible (v, omega); the loss is minus the mean recovered sum rate.
    Samples whose p block underflowed to all-zero are excluded and counted
    in ``skipped``.
    """
    if not instances:
        raise ConfigurationError("empty batch")
    m, k = instances[0].h.shape
    if model.config.output_activation != "sigplus" or model.config.output_dim != 2 * k + m:
        raise ConfigurationError("model head does not match the recovery parameterization")
    x = batch_features([inst.sample for inst in instances])
    out, cache = forward(model, x, mode="train")
    g_out = np.zeros_like(out)
    n = len(instances)
    sample_rates = np.full(n, np.nan)
    recovered = []
    skipped = 0
    for b, inst in enumerate(instances):
        p = np.ascontiguousarray(out[b, :k])
        lam = np.ascontiguousarray(out[b, k : 2 * k])
        mu = np.ascontiguousarray(out[b, 2 * k :])
        if not np.any(p > 0.0):
            skipped += 1
            continue
        h = np.ascontiguousarray(inst.h, dtype=np.complex128)
        status, lower, ut, nrm, row_power, istar, s, v, omega = kernels.recover_forward(
            h, p, lam, mu, inst.effective_power, inst.beta
        )
        if status >= 0:
            raise DefinitenessError(status)
        if status == -3:
            raise DegenerateInputError(f"sample {b}: zero channel column")
        if status == -2:
            skipped += 1
            continue
        recovered.append((b, h, p, lower, ut, nrm, row_power, istar, s, v, omega))
    n_valid = len(recovered)
    if n_valid == 0:
        raise DegenerateInputError("every sample in the batch was degenerate")
    gf = np.full(k, -1.0 / n_valid)
    total = 0.0
    for b, h, p, lower, ut, nrm, row_power, istar, s, v, omega in recovered:
        inst = instances[b]
        rates, amat, denom = kernels.rates_forward(h, v, omega)
        sample_rates[b] = rates.sum()
        total += sample_rates[b]
        gv, gomega = kernels.rates_backward(h, v, omega, amat, denom, gf)
        gp, glam, gmu = kernels.recover_backward(
            h, p, inst.beta, lower, ut, nrm, row_power, istar, s, v, gv, gomega
        )
        g_out[b, :k] = gp
        g_out[b, k : 2 * k] = glam
        g_out[b, 2 * k :] = gmu
    grads = backward(model, cache, g_out)
    mean_rate = total / n_valid
    return PipelineResult(
        loss=float(-mean_rate),
        grads=grads,
        mean_sum_rate=float(mean_rate),
        sample_rates=sample_rates,
        skipped=skipped,
    )


def _canonical(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _array_block(arrays: dict) -> dict:
    return {
        key: {"shape": list(arr.shape), "data": arr.ravel(order="C").tolist()}
        for key, arr in arrays.items()
    }


def _arrays_from_block(block: dict) -> dict:
    return {
        key: np.asarray(rec["data"], dtype=np.float64).reshape(rec["shape"])
        for key, rec in block.items()
    }


def save_checkpoint(model: MlpModel, path, optimizer: AdamState | None = None, extra: dict | None = None) -> None:
    """Write model (and optionally optimizer state) as checksummed JSON.

    Floats are serialized via repr so arrays round-trip bit-exactly.
    """
    payload = {
        "config": asdict(model.config),
        "finalized": bool(model.finalized),
        "params": _array_block(model.params),
        "stats": _array_block(model.stats),
        "extra": extra or {},
    }
    if optimizer is not None:
        payload["optimizer"] = {
            "lr": optimizer.lr,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
            "t": optimizer.t,
            "m": _array_block(optimizer.m),
            "v": _array_block(optimizer.v),
        }
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "checksum": hashlib.sha256(_canonical(payload).encode()).hexdigest(),
        "payload": payload,
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, separators=(",", ":"))


def load_checkpoint(path):
    """Read a checkpoint; returns (model, optimizer state or None, extra dict).

    Raises ChecksumError when the stored digest does not match the content.
    """
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigurationError(f"not a model checkpoint: {doc.get('format')!r}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {doc.get('version')!r}")
    payload = doc["payload"]
    digest = hashlib.sha256(_canonical(payload).encode()).hexdigest()
    if digest != doc.get("checksum"):
        raise ChecksumError("checkpoint content does not match its checksum")
    config = MlpConfig(**payload["config"])
    model = MlpModel(
        config,
        _arrays_from_block(payload["params"]),
        _arrays_from_block(payload["stats"]),
        finalized=payload.get("finalized", False),
    )
    optimizer = None
    if "optimizer" in payload:
        opt = payload["optimizer"]
        optimizer = AdamState(
            lr=opt["lr"],
            beta1=opt["beta1"],
            beta2=opt["beta2"],
            eps=opt["eps"],
            t=opt["t"],
            m=_arrays_from_block(opt["m"]),
            v=_arrays_from_block(opt["v"]),
        )
    return model, optimizer, payload.get("extra", {})
