"""Command-line entry point: synth, train, eval, flops, bench, stream.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
Settings come from an optional JSON ``--config`` file, overridden by flags;
commands that write outputs also write the merged ``effective_config.json``.

Config file schema (every section and key optional, unknown keys rejected)::

    {
      "model": {"T": 16, "K": 2, "L": 4, "D": 64, "fusion_layers": [1, 3],
                "temporal_map": "full", "band_width": 4, "fusion_axis": "time"},
      "train": {"scale": "desk", "steps": 2000, "batch": 16, "lr": 3e-4,
                "lr_final": 1e-5, "lr_drop_step": 1500, "seed": 0,
                "loss": "uncertainty", "lambdas": [1, 1], "explicit_reg": true,
                "weight_decay": 0, "grad_clip": null, "checkpoint_every": 0,
                "dtype": "float32", "zero_output": false},
      "eval": {"protocol": "online", "fps": 60},
      "paths": {"manifest": null, "checkpoint": null, "out": null, "skeleton": null}
    }
"""

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .cost import count_cost, format_cost_table
from .datagen import KINDS, MotionSpec, load_manifest, save_clip, synth_dataset, synth_motion
from .errors import ConfigError, TWMLPError
from .featurize import TrackedFrame
from .kinematics import default_skeleton, load_skeleton
from .model import ModelConfig
from .runtime import StreamingSession, bench_latency
from .trainer import TrainConfig, ablation_table, evaluate, train

log = logging.getLogger("twmlp")

MODEL_KEYS = {f.name for f in fields(ModelConfig)} - {"d_in", "d_out"}
TRAIN_KEYS = ({f.name for f in fields(TrainConfig)} - {"model"}) | {"scale"}
EVAL_KEYS = {"protocol", "fps"}
PATH_KEYS = {"manifest", "checkpoint", "out", "skeleton"}
SECTIONS = {"model": MODEL_KEYS, "train": TRAIN_KEYS, "eval": EVAL_KEYS, "paths": PATH_KEYS}

DESK_MODEL = {"T": 16, "K": 2, "L": 4, "D": 64}
FULL_MODEL = {"T": 41, "K": 2, "L": 10, "D": 512}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    eval: dict = field(default_factory=lambda: {"protocol": "online", "fps": 60})
    paths: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        for section, value in d.items():
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section {section!r}")
            unknown = set(value) - SECTIONS[section]
            if unknown:
                raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
        rc = cls()
        rc.model.update(d.get("model", {}))
        rc.train.update(d.get("train", {}))
        rc.eval.update(d.get("eval", {}))
        rc.paths.update(d.get("paths", {}))
        return rc

    def to_dict(self):
        return {"model": dict(self.model), "train": dict(self.train), "eval": dict(self.eval), "paths": dict(self.paths)}

    def model_config(self):
        scale = self.train.get("scale", "desk")
        base = dict(DESK_MODEL if scale == "desk" else FULL_MODEL)
        base.update(self.model)
        if "fusion_layers" in base and base["fusion_layers"] is not None:
            base["fusion_layers"] = tuple(base["fusion_layers"])
        return ModelConfig(**base)

    def train_config(self):
        opts = dict(self.train)
        scale = opts.pop("scale", "desk")
        if scale not in ("desk", "full"):
            raise ConfigError(f"train.scale must be 'desk' or 'full', got {scale!r}")
        for key in ("lambdas", "betas"):
            if key in opts:
                opts[key] = tuple(opts[key])
        model = self.model_config()
        if scale == "desk":
            return TrainConfig.desk(model=model, **opts)
        if "steps" in opts and "lr_drop_step" not in opts:
            opts["lr_drop_step"] = min(TrainConfig.lr_drop_step, int(opts["steps"] * 0.75))
        return TrainConfig(model=model, **opts)

    def validate(self):
        self.train_config()
        if self.eval.get("protocol", "online") not in ("online", "sequence"):
            raise ConfigError("eval.protocol must be 'online' or 'sequence'")
        return self

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def load_run_config(path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig.from_dict(data)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n\n{self.format_help()}")


def _model_flags(p):
    p.add_argument("--T", type=int, help="window length in frames")
    p.add_argument("--K", type=int, help="number of past windows")
    p.add_argument("--L", type=int, help="number of MLP blocks")
    p.add_argument("--D", type=int, help="latent width")


def _common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output file or directory")


def build_parser():
    parser = _Parser(prog="twmlp", description="Temporal-window MLP for full-body motion from sparse trackers")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="write synthetic MOTN clips")
    _common(p)
    p.add_argument("--kind", choices=KINDS, default="walk")
    p.add_argument("--duration", type=float, default=10.0, help="seconds")
    p.add_argument("--fps", type=int, default=60)
    p.add_argument("--dataset", type=int, metavar="N", help="write N mixed clips plus manifest.json into --out")

    p = sub.add_parser("train", help="train a model")
    _common(p)
    _model_flags(p)
    p.add_argument("--manifest")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--loss", choices=("uncertainty", "fixed"))
    p.add_argument("--scale", choices=("desk", "full"))

    p = sub.add_parser("eval", help="evaluate checkpoints on the test split")
    _common(p)
    p.add_argument("--checkpoint", nargs="+", help="one checkpoint, or several for an ablation grid")
    p.add_argument("--manifest")
    p.add_argument("--protocol", choices=("online", "sequence"))
    p.add_argument("--fps", type=int)
    p.add_argument("--split", default="test", choices=("train", "test"))

    p = sub.add_parser("flops", help="analytic FLOPs / parameters table")
    _common(p)
    _model_flags(p)
    p.add_argument("--breakdown", action="store_true", help="per-layer rows")

    p = sub.add_parser("bench", help="streaming latency benchmark")
    _common(p)
    _model_flags(p)
    p.add_argument("--duration", type=float, default=1.0, help="seconds of input to time")
    p.add_argument("--input-fps", type=float, default=60.0)
    p.add_argument("--cache", action="store_true", help="use the window-latent cache")
    p.add_argument("--compare", action="store_true", help="also run the T=196, K=0, L=12 base model")

    p = sub.add_parser("stream", help="stdin tracker CSV to stdout pose CSV")
    _common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--cache", action="store_true")
    p.add_argument("--pad", action="store_true", help="emit padded poses during warm-up")
    return parser


def _run_config(args):
    rc = load_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    for key in ("T", "K", "L", "D"):
        if getattr(args, key, None) is not None:
            rc.model[key] = getattr(args, key)
    for key in ("steps", "batch", "seed", "loss", "scale"):
        if getattr(args, key, None) is not None:
            rc.train[key] = getattr(args, key)
    for key in ("protocol", "fps"):
        if getattr(args, key, None) is not None:
            rc.eval[key] = getattr(args, key)
    for key in ("manifest", "out"):
        if getattr(args, key, None) is not None:
            rc.paths[key] = getattr(args, key)
    if getattr(args, "checkpoint", None):
        ck = args.checkpoint
        rc.paths["checkpoint"] = ck if isinstance(ck, str) else ck[0] if len(ck) == 1 else list(ck)
    return rc.validate()


def _require(rc, key):
    value = rc.paths.get(key)
    if not value:
        raise UsageError(f"missing --{key} (or paths.{key} in the config file)")
    return value


def _tree(rc):
    skel = rc.paths.get("skeleton")
    return load_skeleton(skel) if skel else default_skeleton()


def cmd_synth(args, rc):
    out = _require(rc, "out")
    seed = rc.train.get("seed", 0)
    if args.dataset:
        manifest = synth_dataset(out, args.dataset, seed=seed, duration_s=args.duration, fps=args.fps)
        rc.write(Path(out) / "effective_config.json")
        print(f"wrote {len(manifest.clips)} clips and manifest.json to {out}")
    else:
        clip = synth_motion(MotionSpec(kind=args.kind, duration_s=args.duration, fps=args.fps), seed=seed)
        save_clip(clip, out)
        print(f"wrote {len(clip)} frames to {out}")
    return 0


def cmd_train(args, rc):
    manifest = load_manifest(_require(rc, "manifest"))
    out = Path(_require(rc, "out"))
    out.mkdir(parents=True, exist_ok=True)
    rc.write(out / "effective_config.json")
    config = rc.train_config()
    result = train(config, manifest, out_dir=out, tree=_tree(rc))
    last = result.log[-1]
    print(f"steps\t{len(result.log)}\nl_theta\t{last['l_theta']:.6f}\ntotal\t{last['total']:.6f}")
    print(f"checkpoint\t{result.checkpoint}")
    return 0


def cmd_eval(args, rc):
    manifest = load_manifest(_require(rc, "manifest"))
    ckpts = _require(rc, "checkpoint")
    ckpts = [ckpts] if isinstance(ckpts, str) else list(ckpts)
    protocol = rc.eval.get("protocol", "online")
    fps = int(rc.eval.get("fps", 60))
    tree = _tree(rc)
    out = rc.paths.get("out")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        rc.write(Path(out) / "effective_config.json")
    rows = []
    for ck in ckpts:
        params = load_checkpoint(ck)
        report = evaluate(params, manifest, protocol=protocol, tree=tree, fps=fps, split=args.split)
        rows.append((params.config, report))
    if len(rows) == 1:
        report = rows[0][1]
        sys.stdout.write(report.to_text())
        if out:
            report.write(Path(out) / "report")
    else:
        table = ablation_table(rows)
        sys.stdout.write(table)
        if out:
            (Path(out) / "grid.tsv").write_text(table)
    return 0


REFERENCE_CONFIGS = (
    ("MLP (T:196)", ModelConfig(T=196, K=0, L=12, D=512)),
    ("TW-MLP (T:41-K:2)", ModelConfig(T=41, K=2, L=10, D=512)),
    ("TW-MLP (T:61-K:2)", ModelConfig(T=61, K=2, L=10, D=512)),
)


def cmd_flops(args, rc):
    if rc.model:
        base = dict(FULL_MODEL)
        base.update(rc.model)
        configs = [("custom", ModelConfig(**base))]
    else:
        configs = list(REFERENCE_CONFIGS)
    rows = [(label, cfg, count_cost(cfg)) for label, cfg in configs]
    print(format_cost_table(rows))
    if args.breakdown:
        for label, cfg, report in rows:
            print(f"\n# {label}\nlayer\tMFLOPs\tparams")
            for layer in report.layers:
                print(f"{layer.name}\t{layer.flops / 1e6:.3f}\t{layer.params}")
    return 0


def cmd_bench(args, rc):
    base = dict(FULL_MODEL)
    base.update(rc.model)
    configs = [("TW-MLP" if base["K"] else "MLP", ModelConfig(**base))]
    if args.compare:
        configs.append(("MLP (T:196)", ModelConfig(T=196, K=0, L=12, D=512)))
    seed = rc.train.get("seed", 0)
    for label, cfg in configs:
        report = bench_latency(cfg, args.duration, args.input_fps, seed=seed, cache_latents=args.cache)
        print(f"# {label} T={cfg.T} K={cfg.K} L={cfg.L} D={cfg.D}")
        sys.stdout.write(report.to_text())
    return 0


STREAM_COLUMNS = 1 + 3 * (3 + 9)


def parse_stream_row(row):
    if len(row) != STREAM_COLUMNS:
        raise ValueError(f"expected {STREAM_COLUMNS} values, got {len(row)}")
    values = np.array([float(v) for v in row[1:]]).reshape(3, 12)
    return TrackedFrame(t=int(float(row[0])), positions=values[:, :3], rotations=values[:, 3:].reshape(3, 3, 3))


def format_pose_row(pose):
    values = [str(pose.t)] + [repr(float(v)) for v in pose.rot6d] + [repr(float(v)) for v in pose.root]
    return ",".join(values)


def cmd_stream(args, rc):
    params = load_checkpoint(_require(rc, "checkpoint"))
    session = StreamingSession(params, tree=_tree(rc), pad=args.pad, cache_latents=args.cache)
    reader = csv.reader(sys.stdin)
    for row in reader:
        if not row or row[0].startswith("#"):
            continue
        try:
            frame = parse_stream_row(row)
        except ValueError as exc:
            raise TWMLPError(f"line {reader.line_num}: {exc}") from exc
        pose = session.push_frame(frame)
        if pose is not None:
            sys.stdout.write(format_pose_row(pose) + "\n")
    sys.stdout.flush()
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "flops": cmd_flops,
    "bench": cmd_bench,
    "stream": cmd_stream,
}


def _thread_limit():
    n = os.environ.get("TWMLP_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def dispatch(argv):
    parser = build_parser()
    try:
        if not argv:
            raise UsageError(parser.format_help())
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        rc = _run_config(args)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        with _thread_limit():
            return COMMANDS[args.command](args, rc)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    except (TWMLPError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


def main():
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
