"""``rednet`` command-line tool: train, restore, eval and ablate.

Runs are described by a JSON config with five sections::

    {
      "model":  {REDNetConfig fields},
      "train":  {TrainConfig fields},
      "data":   {"train_dir": ..., "patch_size": 32, "patch_count": 1000,
                 "corruption": {"kind": "gaussian", "levels": [30]}},
      "eval":   {"test_dir": ..., "corruption": {...}, "ensemble": false, "seed": 0},
      "output": {"checkpoint": ..., "loss_csv": ..., "report_csv": ..., "ablation_dir": ...}
    }

Unknown keys anywhere are an error. Relative paths resolve against the
directory holding the config file.

Exit codes: 0 success, 2 usage / config / file-format error, 3 data or
runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ablation, network
from .data import CorruptionSpec, load_dir, load_image, make_dataset, save_image
from .errors import ConfigError, FormatError, RedNetError
from .infer import restore, restore_ensemble
from .metrics import evaluate
from .network import REDNetConfig
from .optim import TrainConfig, train_loop, write_trace

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3

SECTIONS = {
    "model": None,
    "train": None,
    "data": {"train_dir", "patch_size", "patch_count", "corruption"},
    "eval": {"test_dir", "corruption", "ensemble", "seed"},
    "output": {"checkpoint", "loss_csv", "report_csv", "ablation_dir"},
}


def _check_keys(section: str, d, allowed):
    if not isinstance(d, dict):
        raise ConfigError(f"section {section!r} must be a JSON object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")


@dataclass
class RunConfig:
    model: REDNetConfig | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    data: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    base: Path = Path(".")

    @classmethod
    def from_dict(cls, d: dict, base=Path(".")) -> "RunConfig":
        _check_keys("config", d, SECTIONS)
        for name in ("data", "eval", "output"):
            _check_keys(name, d.get(name, {}), SECTIONS[name])
        data, ev = dict(d.get("data", {})), dict(d.get("eval", {}))
        for sec_name, sec in (("data", data), ("eval", ev)):
            if "corruption" in sec:
                if not isinstance(sec["corruption"], dict):
                    raise ConfigError(f"{sec_name}.corruption must be an object")
                sec["corruption"] = CorruptionSpec.from_dict(sec["corruption"])
        for key in ("patch_size", "patch_count"):
            if key in data and not (isinstance(data[key], int) and data[key] >= 1):
                raise ConfigError(f"data.{key} must be a positive integer, got {data[key]!r}")
        if "ensemble" in ev and not isinstance(ev["ensemble"], bool):
            raise ConfigError("eval.ensemble must be true or false")
        if "seed" in ev and not isinstance(ev["seed"], int):
            raise ConfigError("eval.seed must be an integer")
        model = REDNetConfig.from_dict(d["model"]) if "model" in d else None
        train = TrainConfig.from_dict(d.get("train", {}))
        return cls(model, train, data, ev, dict(d.get("output", {})), Path(base))

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        return cls.from_dict(raw, base=path.parent)

    def path(self, section: str, key: str) -> Path:
        sec = getattr(self, section)
        if key not in sec:
            raise ConfigError(f"{section}.{key} is required for this command")
        return self.base / sec[key]

    def need(self, section: str, key: str):
        sec = getattr(self, section)
        if key not in sec:
            raise ConfigError(f"{section}.{key} is required for this command")
        return sec[key]

    def need_model(self) -> REDNetConfig:
        if self.model is None:
            raise ConfigError("model section is required for this command")
        return self.model


def _outputs(*paths: Path):
    for p in paths:
        p.parent.mkdir(parents=True, exist_ok=True)


def _training_set(rc: RunConfig, patch_size=None):
    train_dir = rc.path("data", "train_dir")
    p = patch_size or rc.need("data", "patch_size")
    count = rc.need("data", "patch_count")
    spec = rc.need("data", "corruption")
    names, images = load_dir(train_dir)
    rng = np.random.default_rng(rc.train.seed)
    return make_dataset(images, spec, p, count, rng, names=names)


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


# commands ------------------------------------------------------------------


def cmd_train(args) -> int:
    rc = RunConfig.load(args.config)
    if args.seed is not None:
        rc.train = TrainConfig(**{**rc.train.__dict__, "seed": args.seed})
    model = rc.need_model()
    ckpt, loss_csv = rc.path("output", "checkpoint"), rc.path("output", "loss_csv")
    rc.path("data", "train_dir")
    _outputs(ckpt, loss_csv)
    ds = _training_set(rc)
    net = network.build(model, seed=rc.train.seed, init=rc.train.init)
    every = max(1, rc.train.iterations // 20)

    def progress(it, loss):
        if it % every == 0 or it == rc.train.iterations:
            _log(f"iter {it}/{rc.train.iterations} loss {loss:.6g}")

    net, trace = train_loop(net, ds, rc.train, progress=None if args.quiet else progress)
    network.save(net, ckpt)
    write_trace(trace, loss_csv)
    final = trace[-1][1] if trace else float("nan")
    print(f"final loss {final:.6g}; checkpoint {ckpt}; trace {loss_csv}")
    return EXIT_OK


def cmd_restore(args) -> int:
    net = network.load(args.ckpt)
    img = load_image(args.input)
    out = restore_ensemble(net, img) if args.ensemble else restore(net, img)
    _outputs(Path(args.output))
    save_image(out, args.output)
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_eval(args) -> int:
    rc = RunConfig.load(args.config) if args.config else RunConfig()
    if args.sigma:
        spec = CorruptionSpec("gaussian", args.sigma)
    elif args.scale:
        spec = CorruptionSpec("sr", args.scale)
    else:
        spec = rc.need("eval", "corruption")
    test_dir = Path(args.input) if args.input else rc.path("eval", "test_dir")
    report_csv = Path(args.output) if args.output else rc.path("output", "report_csv")
    seed = args.seed if args.seed is not None else rc.eval.get("seed", 0)
    ensemble = args.ensemble or rc.eval.get("ensemble", False)
    net = network.load(args.ckpt)
    names, images = load_dir(test_dir)
    _outputs(report_csv)
    report = evaluate(net, images, spec, seed=seed, ensemble=ensemble, names=names)
    text = report.to_csv()
    with open(report_csv, "w", newline="") as f:
        f.write(text)
    label = "sigma" if spec.kind == "gaussian" else "scale"
    for lv, (p, s) in report.summary().items():
        print(f"{label} {lv:g}: PSNR {p:.2f} dB  SSIM {s:.4f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    rc = RunConfig.load(args.config)
    if args.seed is not None:
        rc.train = TrainConfig(**{**rc.train.__dict__, "seed": args.seed})
    runs = ablation.variant_runs(args.variant, rc.need_model())
    out_dir = rc.path("output", "ablation_dir")
    rc.path("data", "train_dir")
    patch = None
    if args.variant == "bottleneck-stride3":
        patch = ablation.BOTTLENECK_SIZE
        cfg = runs[0][1]
        size = patch
        for spec in network.layer_specs(cfg)[: cfg.conv_layers]:
            size = spec.conv_out_size(size)
        print(f"bottleneck: {patch}x{patch} input reaches {size}x{size} after {cfg.conv_layers} stride-3 convs")
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = _training_set(rc, patch_size=patch)

    def progress(name, it, loss):
        if it % max(1, rc.train.iterations // 10) == 0:
            _log(f"{name}: iter {it}/{rc.train.iterations} loss {loss:.6g}")

    traces = ablation.run_all(runs, ds, rc.train, progress=None if args.quiet else progress)
    for name, trace in traces.items():
        path = out_dir / f"{name}.csv"
        write_trace(trace, path)
        print(f"{name}: final loss {ablation.final_loss(trace):.6g} -> {path}")
    return EXIT_OK


# entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rednet", description="RED-Net image restoration toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--quiet", action="store_true", help="no per-iteration progress on stderr")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("restore", help="restore one image with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--ensemble", action="store_true", help="average the 8 rotations/flips")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("eval", help="PSNR/SSIM report over a directory of clean images")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config", help="run config supplying eval.* and output.report_csv")
    p.add_argument("--input", help="clean image directory (overrides eval.test_dir)")
    p.add_argument("--output", help="report CSV path (overrides output.report_csv)")
    lv = p.add_mutually_exclusive_group()
    lv.add_argument("--sigma", type=float, nargs="+", help="Gaussian noise levels on the 0-255 scale")
    lv.add_argument("--scale", type=int, nargs="+", help="super-resolution factors")
    p.add_argument("--seed", type=int)
    p.add_argument("--ensemble", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "ablate",
        help="matched training runs for the skip-connection studies",
        description="variants: " + ", ".join(ablation.variant_names()) + " (B = block size, e.g. block-2)",
    )
    p.add_argument("--variant", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_ablate)
    return ap


def _limit_threads():
    n = os.environ.get("REDNET_THREADS")
    if not n:
        return None
    try:
        n = int(n)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"REDNET_THREADS must be a positive integer, got {os.environ['REDNET_THREADS']!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _limit_threads()
        return args.func(args)
    except (ConfigError, FormatError) as e:
        print(f"rednet: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (RedNetError, ValueError, OSError, FloatingPointError) as e:
        print(f"rednet: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
