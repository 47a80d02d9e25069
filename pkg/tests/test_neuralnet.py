"""Network mechanics: initialization, BatchNorm train/eval semantics, the
hand-written backward pass against finite differences, Adam, checkpoints."""

import numpy as np
import pytest

from cranopt.channel import generate_dataset
from cranopt.cranmodel import SystemInstance
from cranopt.errors import ChecksumError, ConfigurationError, ContractViolationError, DegenerateInputError
from cranopt.neuralnet import (
    AdamState,
    MlpConfig,
    adam_step,
    backward,
    batch_features,
    build_input_features,
    forward,
    init_model,
    load_checkpoint,
    lrelu,
    lrelu_grad,
    pipeline_gradient,
    recalibrate_stats,
    save_checkpoint,
    sigplus,
    sigplus_grad,
    split_intermediate,
)


def test_config_shapes():
    cfg = MlpConfig.for_system(3, 2, "proposed")
    assert cfg.input_dim == 2 * 3 * 2 + 2
    assert cfg.output_dim == 2 * 2 + 3
    assert cfg.output_activation == "sigplus"
    assert cfg.hidden_width == 13 * 3 * 2
    assert cfg.layer_dims() == [14, 78, 78, 78, 78, 7]
    cfg2 = MlpConfig.for_system(3, 2, "dilearn", depth=4, hidden_width=32)
    assert cfg2.output_dim == 2 * 3 * 2
    assert cfg2.output_activation == "linear"
    assert cfg2.layer_dims() == [14, 32, 32, 32, 12]
    with pytest.raises(ConfigurationError):
        MlpConfig.for_system(2, 2, "wmmse")
    with pytest.raises(ConfigurationError):
        MlpConfig(input_dim=4, output_dim=2, depth=0)
    with pytest.raises(ConfigurationError):
        MlpConfig(input_dim=4, output_dim=2, leak=0.0)


def test_init_deterministic_and_scaled():
    cfg = MlpConfig(input_dim=16, output_dim=4, depth=3, hidden_width=25)
    a = init_model(cfg, seed=5)
    b = init_model(cfg, seed=5)
    for key in a.params:
        assert np.array_equal(a.params[key], b.params[key])
    c = init_model(cfg, seed=6)
    assert not np.array_equal(a.params["w0"], c.params["w0"])
    assert np.abs(a.params["w0"]).max() <= 1.0 / 4.0  # fan_in 16
    assert np.abs(a.params["w1"]).max() <= 1.0 / 5.0  # fan_in 25
    assert np.all(a.params["b0"] == 0.0)
    assert np.all(a.params["gamma0"] == 1.0)
    assert np.all(a.stats["var0"] == 1.0)
    # tuple seeds are accepted, reproducible, and position-sensitive
    d = init_model(cfg, seed=(5, 1))
    assert np.array_equal(d.params["w0"], init_model(cfg, seed=(5, 1)).params["w0"])
    assert not np.array_equal(a.params["w0"], d.params["w0"])
    assert not np.array_equal(d.params["w0"], init_model(cfg, seed=(5, 2)).params["w0"])


def test_activations():
    z = np.array([-2.0, -1e-12, 0.0, 3.0])
    assert np.allclose(lrelu(z), [-0.6, -3e-13, 0.0, 3.0])
    assert np.allclose(lrelu_grad(z), [0.3, 0.3, 1.0, 1.0])
    big = np.array([-800.0, -30.0, 0.0, 30.0, 800.0])
    sp = sigplus(big)
    assert np.all(np.isfinite(sp))
    assert np.all(sp >= 0.0)
    assert sp[0] == 0.0  # underflows to exactly zero far in the left tail
    assert abs(sp[2] - np.log(2.0)) < 1e-15
    assert abs(sp[4] - 800.0) < 1e-12
    g = sigplus_grad(big)
    assert np.all(np.isfinite(g))
    assert np.all((g >= 0) & (g <= 1.0))  # exp(-800) underflows to exactly 0
    assert np.all(np.diff(g) >= 0)
    assert abs(g[2] - 0.5) < 1e-15


def test_eval_forward_is_row_independent():
    cfg = MlpConfig(input_dim=6, output_dim=3, depth=3, hidden_width=10)
    model = init_model(cfg, seed=0)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 6))
    full, _ = forward(model, x, mode="eval")
    for i in range(8):
        row, _ = forward(model, x[i : i + 1], mode="eval")
        # BLAS may pick different kernels for (1, d) and (8, d) matmuls, so
        # agreement is to rounding, not bit-exact
        assert np.allclose(row[0], full[i], rtol=1e-12, atol=1e-12)


def test_train_mode_updates_stats_eval_does_not():
    cfg = MlpConfig(input_dim=6, output_dim=3, depth=3, hidden_width=10)
    model = init_model(cfg, seed=1)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((16, 6)) * 3.0 + 1.0
    before = {k: v.copy() for k, v in model.stats.items()}
    forward(model, x, mode="eval")
    for k in before:
        assert np.array_equal(model.stats[k], before[k])
    forward(model, x, mode="train")
    assert not np.array_equal(model.stats["mean0"], before["mean0"])
    # momentum 0.99: one step moves 1% of the way to the batch moment
    z = x @ model.params["w0"] + model.params["b0"]
    expect = 0.99 * before["mean0"] + 0.01 * z.mean(axis=0)
    assert np.allclose(model.stats["mean0"], expect)
    with pytest.raises(ConfigurationError):
        forward(model, x[:1], mode="train")
    with pytest.raises(ValueError):
        forward(model, x, mode="predict")


def test_backward_matches_finite_differences():
    # supervised probe loss sum(out * c) isolates the network backward from
    # the rate pipeline
    cfg = MlpConfig(input_dim=5, output_dim=4, depth=3, hidden_width=12)
    model = init_model(cfg, seed=2)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((8, 5))
    c = rng.standard_normal((8, 4))

    def loss():
        out, cache = forward(model, x, mode="train")
        return float((out * c).sum()), cache

    l0, cache = loss()
    grads = backward(model, cache, c)
    eps = 1e-6
    for key in model.trainable_keys():
        flat = model.params[key].ravel()
        g = grads[key].ravel()
        idx = np.linspace(0, flat.size - 1, min(6, flat.size)).astype(int)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            lp, _ = loss()
            flat[i] = orig - eps
            lm, _ = loss()
            flat[i] = orig
            fd = (lp - lm) / (2 * eps)
            # noise floor 1e-5: BatchNorm cancels hidden biases, leaving
            # analytic 0 vs FD round-off there
            assert abs(g[i] - fd) / max(abs(g[i]), abs(fd), 1e-5) < 1e-4, (
                f"{key}[{i}] analytic={g[i]:.6e} fd={fd:.6e}"
            )


def test_backward_cache_contract():
    cfg = MlpConfig(input_dim=4, output_dim=2, depth=2, hidden_width=6)
    model = init_model(cfg, seed=3)
    x = np.random.default_rng(3).standard_normal((4, 4))
    out, cache = forward(model, x, mode="eval")
    with pytest.raises(ContractViolationError):
        backward(model, cache, np.ones_like(out))
    out, cache = forward(model, x, mode="train")
    grads = backward(model, cache, np.ones_like(out))
    adam_step(model, grads, AdamState())
    with pytest.raises(ContractViolationError):
        backward(model, cache, np.ones_like(out))  # params moved, cache stale


def test_recalibrate_sets_exact_moments():
    cfg = MlpConfig(input_dim=5, output_dim=2, depth=3, hidden_width=7)
    model = init_model(cfg, seed=4)
    rng = np.random.default_rng(4)
    # skew the running stats first
    forward(model, rng.standard_normal((32, 5)) * 5.0, mode="train")
    x = rng.standard_normal((64, 5))
    recalibrate_stats(model, x)
    assert model.finalized
    # recompute layer by layer with the stored stats: each layer's input must
    # normalize to zero mean, unit variance under its recorded moments
    d = x
    for l in range(cfg.depth - 1):
        z = d @ model.params[f"w{l}"] + model.params[f"b{l}"]
        assert np.allclose(model.stats[f"mean{l}"], z.mean(axis=0))
        assert np.allclose(model.stats[f"var{l}"], z.var(axis=0))
        zhat = (z - z.mean(axis=0)) / np.sqrt(z.var(axis=0) + 1e-12)
        d = lrelu(model.params[f"gamma{l}"] * zhat + model.params[f"beta{l}"], cfg.leak)


def test_adam_first_step():
    cfg = MlpConfig(input_dim=3, output_dim=2, depth=1, batchnorm=False)
    model = init_model(cfg, seed=5)
    w0 = model.params["w0"].copy()
    g = np.full_like(w0, 0.25)
    grads = {"w0": g, "b0": np.zeros(2)}
    state = AdamState(lr=1e-2)
    version = model.version
    adam_step(model, grads, state)
    # bias-corrected first step reduces to lr * g / (|g| + eps)
    expect = w0 - 1e-2 * g / (np.abs(g) + state.eps)
    assert np.allclose(model.params["w0"], expect, rtol=0, atol=1e-12)
    assert state.t == 1
    assert model.version == version + 1


def test_feature_layout():
    s = generate_dataset(1, 2, 2, seed=6)[0]
    f = build_input_features(s)
    assert f.shape == (2 * 2 * 2 + 2,)
    assert f[0] == s.h[0, 0].real and f[1] == s.h[0, 0].imag
    assert f[2] == s.h[1, 0].real and f[3] == s.h[1, 0].imag
    assert f[-2] == 10.0 * np.log10(s.power_budget)
    assert f[-1] == s.capacity
    batch = batch_features([s, s])
    assert batch.shape == (2, 10)
    assert np.array_equal(batch[0], batch[1])


def test_split_intermediate():
    out = np.arange(7.0)
    params = split_intermediate(out, k=2, m=3)
    assert np.array_equal(params.p, [0.0, 1.0])
    assert np.array_equal(params.lam, [2.0, 3.0])
    assert np.array_equal(params.mu, [4.0, 5.0, 6.0])
    with pytest.raises(ConfigurationError):
        split_intermediate(out, k=3, m=3)


def test_pipeline_gradient_basics():
    samples = generate_dataset(6, 2, 2, seed=7)
    instances = [SystemInstance.from_sample(s) for s in samples]
    model = init_model(MlpConfig.for_system(2, 2, "proposed", depth=3, hidden_width=16), seed=7)
    res = pipeline_gradient(model, instances)
    assert res.loss == -res.mean_sum_rate
    assert res.skipped == 0
    assert np.all(np.isfinite(res.sample_rates))
    assert np.all(res.sample_rates > 0)
    assert set(res.grads) == set(model.trainable_keys())
    head_mismatch = init_model(MlpConfig.for_system(2, 2, "dilearn", depth=3, hidden_width=16), seed=7)
    with pytest.raises(ConfigurationError):
        pipeline_gradient(head_mismatch, instances)


def test_pipeline_gradient_skips_underflowed_powers():
    samples = generate_dataset(4, 2, 2, seed=8)
    instances = [SystemInstance.from_sample(s) for s in samples]
    model = init_model(MlpConfig.for_system(2, 2, "proposed", depth=2, hidden_width=8), seed=8)
    # push the p-head bias far negative: sigplus underflows to exactly 0
    model.params["b1"][:2] = -800.0
    with pytest.raises(DegenerateInputError):
        pipeline_gradient(model, instances)


def test_checkpoint_round_trip(tmp_path):
    cfg = MlpConfig(input_dim=6, output_dim=4, depth=3, hidden_width=9)
    model = init_model(cfg, seed=9)
    forward(model, np.random.default_rng(9).standard_normal((8, 6)), mode="train")
    state = AdamState(lr=3e-4)
    grads = {k: np.ones_like(model.params[k]) for k in model.trainable_keys()}
    adam_step(model, grads, state)
    path = tmp_path / "model.json"
    save_checkpoint(model, path, optimizer=state, extra={"note": "probe"})
    back, opt, extra = load_checkpoint(path)
    assert extra == {"note": "probe"}
    assert back.config == cfg
    assert back.finalized == model.finalized
    for key in model.params:
        assert np.array_equal(back.params[key], model.params[key])
    for key in model.stats:
        assert np.array_equal(back.stats[key], model.stats[key])
    assert opt.t == 1 and opt.lr == 3e-4
    for key in state.m:
        assert np.array_equal(opt.m[key], state.m[key])
    # rewriting the same model produces identical bytes
    path2 = tmp_path / "model2.json"
    save_checkpoint(model, path2, optimizer=state, extra={"note": "probe"})
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_tamper_and_format(tmp_path):
    model = init_model(MlpConfig(input_dim=3, output_dim=2, depth=2, hidden_width=4), seed=10)
    path = tmp_path / "m.json"
    save_checkpoint(model, path)
    text = path.read_text()
    path.write_text(text.replace('"finalized":false', '"finalized":true', 1))
    with pytest.raises(ChecksumError):
        load_checkpoint(path)
    other = tmp_path / "other.json"
    other.write_text('{"format": "something-else"}')
    with pytest.raises(ConfigurationError):
        load_checkpoint(other)
