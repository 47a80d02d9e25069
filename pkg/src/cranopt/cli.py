"""Command-line front end.

Subcommands: generate, train, eval, sweep, bench-time, verify. Every value
can come from (highest precedence first) a CLI flag, a flat key=value config
file, a named preset, or the builtin default; the master seed's builtin
default can additionally be overridden by the CRAN_SEED environment variable.
Every CSV written embeds the git revision, the master seed, and the full
effective config as '#' comment lines, so outputs are replayable.

Exit codes: 0 success, 1 verification/assertion failure, 2 usage error,
3 I/O error.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from ._accel import NUMBA_ENABLED, set_num_threads
from .baselines import LocalSearchConfig, local_search, mrt_uniform
from .channel import ConstraintBounds, generate_dataset, load_dataset, save_dataset
from .cranmodel import SystemInstance, sum_rate
from .errors import ConfigurationError, CranoptError
from .neuralnet import batch_features, forward, init_model, load_checkpoint, save_checkpoint
from .trainer import (
    FixedSampleSource,
    OnlineSampleSource,
    TrainConfig,
    evaluate,
    recover_from_outputs,
    train,
    write_csv,
    write_eval_csv,
    write_train_log,
)
from .verify import SUITES, run_suite

PRESETS = {
    "desk": {"m": 3, "k": 3, "depth": 5, "width": None, "batch_size": 256},
    "paper": {"m": 6, "k": 6, "depth": 11, "width": 480, "batch_size": 10_000},
}

# per-command option tables: name -> (type, builtin default)
_GENERATE_OPTS = {
    "m": (int, 3),
    "k": (int, 3),
    "n": (int, 1000),
    "seed": (int, None),
    "threads": (int, 1),
    "out": (str, None),
}
_TRAIN_OPTS = {
    "variant": (str, "proposed"),
    "m": (int, 3),
    "k": (int, 3),
    "depth": (int, 5),
    "width": (int, None),
    "batch_size": (int, 256),
    "max_iterations": (int, 50_000),
    "validation_interval": (int, 500),
    "patience": (int, 10),
    "lr": (float, 1e-3),
    "lr_decay": (float, 0.5),
    "lr_patience": (int, None),
    "min_lr": (float, 1e-6),
    "val_size": (int, 1000),
    "dataset": (str, None),
    "out_dir": (str, "."),
    "seed": (int, None),
    "threads": (int, 1),
}
_EVAL_OPTS = {
    "checkpoint": (str, None),
    "dataset": (str, None),
    "variant": (str, None),
    "m": (int, None),
    "k": (int, None),
    "n": (int, 1000),
    "seed": (int, None),
    "threads": (int, 1),
    "out": (str, None),
}
_SWEEP_OPTS = {
    "axis": (str, None),
    "values": (str, None),
    "fixed_snr": (float, 10.0),
    "fixed_capacity": (float, 10.0),
    "methods": (str, "mrt,local_search"),
    "checkpoint": (str, None),
    "dilearn_checkpoint": (str, None),
    "n": (int, 1000),
    "m": (int, None),
    "k": (int, None),
    "ls_restarts": (int, 3),
    "ls_max_iterations": (int, 400),
    "seed": (int, None),
    "threads": (int, 1),
    "out": (str, None),
}
_BENCH_OPTS = {
    "m": (int, 6),
    "k": (int, 6),
    "n": (int, 20),
    "batch_size": (int, 1),
    "methods": (str, "proposed,dilearn,mrt,local_search"),
    "checkpoint": (str, None),
    "dilearn_checkpoint": (str, None),
    "ls_restarts": (int, 3),
    "ls_max_iterations": (int, 400),
    "seed": (int, None),
    "threads": (int, 1),
    "out": (str, None),
}
_VERIFY_OPTS = {
    "suites": (str, "all"),
    "n": (int, None),
    "seed": (int, None),
    "threads": (int, 1),
}
_COMMAND_OPTS = {
    "generate": _GENERATE_OPTS,
    "train": _TRAIN_OPTS,
    "eval": _EVAL_OPTS,
    "sweep": _SWEEP_OPTS,
    "bench-time": _BENCH_OPTS,
    "verify": _VERIFY_OPTS,
}

_SWEEP_DEFAULT_VALUES = {"snr": "0,10,20,30", "capacity": "2,6,10"}


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=os.path.dirname(os.path.abspath(__file__)),
            capture_output=True,
            text=True,
            timeout=10,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _read_config_file(path: str) -> dict:
    entries = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            entries[key.strip().replace("-", "_")] = value.strip()
    return entries


def _cast(key: str, value, typ):
    if value is None or (isinstance(value, str) and value.lower() == "none"):
        return None
    try:
        return typ(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad value for {key}: {value!r}") from exc


def merge_config(command: str, args: argparse.Namespace) -> dict:
    """Builtin defaults <- preset <- config file <- CLI flags; CRAN_SEED fills
    the seed only when nothing else set it."""
    opts = _COMMAND_OPTS[command]
    cfg = {name: default for name, (_, default) in opts.items()}
    preset = getattr(args, "preset", None)
    if preset:
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}")
        for key, value in PRESETS[preset].items():
            if key in opts:
                cfg[key] = value
    config_path = getattr(args, "config", None)
    if config_path:
        for key, value in _read_config_file(config_path).items():
            if key not in opts:
                raise ConfigurationError(f"unknown config key {key!r} for {command}")
            cfg[key] = _cast(key, value, opts[key][0])
    for key in opts:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if cfg.get("seed") is None:
        env = os.environ.get("CRAN_SEED")
        cfg["seed"] = _cast("CRAN_SEED", env, int) if env else 0
    return cfg


def _metadata(command: str, cfg: dict, **extra) -> dict:
    meta = {
        "command": command,
        "git": _git_describe(),
        "seed": cfg.get("seed"),
        "config": " ".join(f"{k}={cfg[k]}" for k in sorted(cfg)),
        "numba": int(NUMBA_ENABLED),
    }
    meta.update(extra)
    return meta


def cmd_generate(cfg: dict) -> int:
    if cfg["n"] < 1:
        raise ConfigurationError("need n >= 1")
    if not cfg["out"]:
        raise ConfigurationError("generate requires --out")
    samples = generate_dataset(cfg["n"], cfg["m"], cfg["k"], seed=cfg["seed"])
    save_dataset(cfg["out"], samples, seed=cfg["seed"])
    print(f"wrote {cfg['n']} samples (m={cfg['m']}, k={cfg['k']}) to {cfg['out']}")
    return 0


def cmd_train(cfg: dict) -> int:
    seed = cfg["seed"]
    if cfg["dataset"]:
        samples, header = load_dataset(cfg["dataset"])
        m, k = int(header["m"]), int(header["k"])
        source = FixedSampleSource(samples, seed=seed)
    else:
        m, k = cfg["m"], cfg["k"]
        source = OnlineSampleSource(m, k, seed=seed)
    tc = TrainConfig(
        m=m,
        k=k,
        variant=cfg["variant"],
        depth=cfg["depth"],
        hidden_width=cfg["width"],
        batch_size=cfg["batch_size"],
        max_iterations=cfg["max_iterations"],
        validation_interval=cfg["validation_interval"],
        patience=cfg["patience"],
        lr=cfg["lr"],
        lr_decay=cfg["lr_decay"],
        lr_patience=cfg["lr_patience"],
        min_lr=cfg["min_lr"],
        seed=seed,
    )
    if cfg["val_size"] < 1:
        raise ConfigurationError("need val_size >= 1")
    val = generate_dataset(cfg["val_size"], m, k, seed=(seed, 2))
    model, report = train(tc, source, val)
    os.makedirs(cfg["out_dir"], exist_ok=True)
    ckpt_path = os.path.join(cfg["out_dir"], f"{cfg['variant']}.json")
    log_path = os.path.join(cfg["out_dir"], f"{cfg['variant']}_log.csv")
    save_checkpoint(
        model,
        ckpt_path,
        extra={
            "variant": cfg["variant"],
            "m": m,
            "k": k,
            "train_seed": seed,
            "best_iteration": report.best_iteration,
            "final_val_sum_rate": report.final_val_sum_rate,
        },
    )
    write_train_log(report, log_path, _metadata("train", cfg))
    print(
        f"trained {cfg['variant']} (m={m}, k={k}): {report.iterations_run} iterations,"
        f" best at {report.best_iteration}, final val mean sum-rate"
        f" {report.final_val_sum_rate:.6f}"
    )
    print(f"checkpoint: {ckpt_path}")
    print(f"log: {log_path}")
    return 0


def _load_model(path: str):
    model, _, extra = load_checkpoint(path)
    return model, (extra or {})


def cmd_eval(cfg: dict) -> int:
    if not cfg["checkpoint"]:
        raise ConfigurationError("eval requires --checkpoint")
    model, extra = _load_model(cfg["checkpoint"])
    variant = cfg["variant"] or extra.get("variant", "proposed")
    if cfg["dataset"]:
        samples, _ = load_dataset(cfg["dataset"])
    else:
        m = cfg["m"] or extra.get("m")
        k = cfg["k"] or extra.get("k")
        if not m or not k:
            raise ConfigurationError("eval needs --dataset, or --m/--k, or a checkpoint that records them")
        samples = generate_dataset(cfg["n"], int(m), int(k), seed=(cfg["seed"], 10, 0))
    report = evaluate(model, samples, variant)
    if cfg["out"]:
        write_eval_csv(report, cfg["out"], _metadata("eval", cfg, checkpoint=cfg["checkpoint"]))
        print(f"per-sample rates: {cfg['out']}")
    print(
        f"{variant}: mean sum-rate {report.mean_sum_rate:.6f} over {report.n} samples,"
        f" {report.violations} feasibility violations"
    )
    if variant == "proposed" and report.violations > 0:
        print("feasibility violations for the structured variant: failing", file=sys.stderr)
        return 1
    return 0


def _sweep_points(cfg: dict):
    axis = cfg["axis"]
    if axis not in _SWEEP_DEFAULT_VALUES:
        raise ConfigurationError("axis must be snr or capacity")
    raw = cfg["values"] or _SWEEP_DEFAULT_VALUES[axis]
    values = [float(v) for v in str(raw).split(",") if v != ""]
    if not values:
        raise ConfigurationError("empty --values")
    points = []
    for x in values:
        if axis == "snr":
            p, c = 10.0 ** (x / 10.0), cfg["fixed_capacity"]
        else:
            p, c = 10.0 ** (cfg["fixed_snr"] / 10.0), x
        points.append((x, p, c))
    return points


def cmd_sweep(cfg: dict) -> int:
    if not cfg["out"]:
        raise ConfigurationError("sweep requires --out")
    methods = [s.strip() for s in cfg["methods"].split(",") if s.strip()]
    models = {}
    m = cfg["m"]
    k = cfg["k"]
    for name, key in (("proposed", "checkpoint"), ("dilearn", "dilearn_checkpoint")):
        if name in methods:
            if not cfg[key]:
                raise ConfigurationError(f"method {name} needs --{key.replace('_', '-')}")
            model, extra = _load_model(cfg[key])
            models[name] = model
            m = m or extra.get("m")
            k = k or extra.get("k")
    if not m or not k:
        raise ConfigurationError("sweep needs --m/--k or a checkpoint that records them")
    m, k = int(m), int(k)
    seed = cfg["seed"]
    ls_config = LocalSearchConfig(
        restarts=cfg["ls_restarts"], max_iterations=cfg["ls_max_iterations"], seed=seed
    )
    rows = []
    for i, (x, p, c) in enumerate(_sweep_points(cfg)):
        bounds = ConstraintBounds(p_min=p, p_max=p, c_min=c, c_max=c)
        samples = generate_dataset(cfg["n"], m, k, bounds=bounds, seed=(seed, 10, i))
        for method in methods:
            if method in models:
                rates = evaluate(models[method], samples, method).rates
            elif method == "mrt":
                rates = np.array(
                    [sum_rate(s.h, *mrt_uniform(s.h, s.power_budget, s.capacity)) for s in samples]
                )
            elif method == "local_search":
                rates = np.array(
                    [local_search(s.h, s.power_budget, s.capacity, ls_config).sum_rate for s in samples]
                )
            else:
                raise ConfigurationError(f"unknown method {method!r}")
            rows.append([repr(float(x)), method, repr(float(rates.mean())), repr(float(rates.std())), len(rates)])
            print(f"{cfg['axis']}={x:g} {method}: mean {rates.mean():.6f}")
    write_csv(
        cfg["out"],
        ["axis_value", "method", "mean_rate", "std_rate", "n"],
        rows,
        _metadata("sweep", cfg, axis=cfg["axis"], m=m, k=k),
    )
    print(f"sweep table: {cfg['out']}")
    return 0


def _bench_model(name: str, cfg: dict, m: int, k: int):
    from .neuralnet import MlpConfig

    key = "checkpoint" if name == "proposed" else "dilearn_checkpoint"
    if cfg[key]:
        model, _ = _load_model(cfg[key])
        state = "trained"
    else:
        model = init_model(MlpConfig.for_system(m, k, name), seed=(cfg["seed"], 0))
        state = "untrained"
    return model, state


def cmd_bench_time(cfg: dict) -> int:
    if not cfg["out"]:
        raise ConfigurationError("bench-time requires --out")
    m, k, seed = cfg["m"], cfg["k"], cfg["seed"]
    methods = [s.strip() for s in cfg["methods"].split(",") if s.strip()]
    samples = generate_dataset(cfg["n"], m, k, seed=(seed, 11))
    instances = [SystemInstance.from_sample(s) for s in samples]
    ls_config = LocalSearchConfig(
        restarts=cfg["ls_restarts"], max_iterations=cfg["ls_max_iterations"], seed=seed
    )
    batch = max(1, cfg["batch_size"])
    rows = []
    means = {}
    states = {}
    for method in methods:
        if method in ("proposed", "dilearn"):
            model, states[method] = _bench_model(method, cfg, m, k)

            def run(chunk, model=model, method=method):
                x = batch_features([inst.sample for inst in chunk])
                out, _ = forward(model, x, mode="eval")
                for i, inst in enumerate(chunk):
                    recover_from_outputs(out[i], inst, method)

            chunks = [instances[i : i + batch] for i in range(0, len(instances), batch)]
        elif method == "mrt":

            def run(chunk):
                for inst in chunk:
                    mrt_uniform(inst.h, inst.power_budget, inst.sample.capacity)

            chunks = [[inst] for inst in instances]
        elif method == "local_search":

            def run(chunk):
                for inst in chunk:
                    local_search(inst.h, inst.power_budget, inst.sample.capacity, ls_config)

            chunks = [[inst] for inst in instances]
        else:
            raise ConfigurationError(f"unknown method {method!r}")
        run(instances[:1])  # warm up JIT paths before timing
        times = np.empty(len(chunks))
        for i, chunk in enumerate(chunks):
            t0 = time.perf_counter()
            run(chunk)
            times[i] = (time.perf_counter() - t0) / len(chunk)
        means[method] = float(np.average(times, weights=[len(c) for c in chunks]))
        p95 = float(np.percentile(times, 95))
        rows.append([method, len(instances), repr(means[method]), repr(p95)])
        print(f"{method}: mean {means[method] * 1e3:.3f} ms, p95 {p95 * 1e3:.3f} ms")
    meta = _metadata(
        "bench-time",
        cfg,
        m=m,
        k=k,
        inference_batch=batch,
        iterative_baseline="projected_gradient_multistart",
        model_state=" ".join(f"{name}={state}" for name, state in sorted(states.items())) or "none",
    )
    write_csv(cfg["out"], ["method", "n", "mean_s", "p95_s"], rows, meta)
    if "proposed" in means and "local_search" in means and means["proposed"] > 0:
        print(f"local_search/proposed time ratio: {means['local_search'] / means['proposed']:.1f}")
    print(f"timing table: {cfg['out']}")
    return 0


def cmd_verify(cfg: dict) -> int:
    names = list(SUITES) if cfg["suites"] == "all" else [s.strip() for s in cfg["suites"].split(",")]
    for name in names:
        if name not in SUITES:
            raise ConfigurationError(f"unknown suite {name!r}; have {', '.join(SUITES)}")
    failed = 0
    for name in names:
        result = run_suite(name, seed=cfg["seed"], n=cfg["n"])
        print(result.line())
        failed += result.failures
    return 1 if failed else 0


_HANDLERS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "bench-time": cmd_bench_time,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cranopt",
        description="Beamforming/fronthaul-compression experiments: data, training, baselines, benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, opts in _COMMAND_OPTS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", help="flat key=value file; CLI flags win")
        if command == "train":
            p.add_argument("--preset", choices=sorted(PRESETS), help="named defaults; file/flags win")
        for name, (typ, _) in opts.items():
            p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = merge_config(args.command, args)
        set_num_threads(cfg.get("threads") or 1)
        return _HANDLERS[args.command](cfg)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except CranoptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())
