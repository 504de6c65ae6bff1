"""AdamW training loop over windowed samples and the evaluation driver."""

import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import tensorcore as tc
from .checkpoint import load_checkpoint, save_checkpoint
from .cost import count_cost
from .datagen import DatasetManifest, MotionClip, derive_sparse_stream, load_clip
from .errors import ConfigError, ContractError, TrainingDiverged
from .featurize import build_window_set, earliest_frame, featurize_stream
from .kinematics import default_skeleton, recover_root_translation
from .metrics import DEFAULT_FPS, MetricsAccumulator
from .model import ModelConfig, ModelParams, PoseSequence, forward_graph, init_params, predict, stack_windows
from .objective import objective

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "lr", "l_theta", "l_rv", "l_reg", "total", "s_theta", "s_rv")


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 300_000
    batch: int = 128
    lr: float = 3e-4
    lr_final: float = 1e-5
    lr_drop_step: int = 225_000
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: str = "uncertainty"
    lambdas: tuple = (1.0, 1.0)
    explicit_reg: bool = True
    weight_decay: float = 0.0
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    grad_clip: float = None
    checkpoint_every: int = 0
    dtype: str = "float32"
    zero_output: bool = False

    def __post_init__(self):
        if self.steps <= 0 or self.batch <= 0:
            raise ConfigError("steps and batch must be positive")
        if self.lr_drop_step > self.steps:
            raise ConfigError(f"learning-rate drop at {self.lr_drop_step} is past the last step {self.steps}")
        if self.loss not in ("uncertainty", "fixed"):
            raise ConfigError(f"loss mode must be 'uncertainty' or 'fixed', got {self.loss!r}")
        if self.explicit_reg and self.weight_decay > 0:
            raise ConfigError("use either the explicit L2 term or decoupled weight decay, not both")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    @classmethod
    def desk(cls, **overrides):
        """Small defaults that train in minutes on one CPU core."""
        model = overrides.pop("model", ModelConfig(T=16, K=2, L=4, D=64))
        steps = overrides.pop("steps", 2000)
        base = dict(steps=steps, batch=16, lr_drop_step=int(steps * 0.75), model=model)
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        d = asdict(self)
        d["model"] = self.model.to_dict()
        d["lambdas"] = list(self.lambdas)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["model"] = ModelConfig.from_dict(d["model"])
        for key in ("lambdas", "betas"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def lr_at(step, config=None):
    """Step schedule: initial rate until the drop step, final rate after."""
    config = config or TrainConfig()
    return config.lr if step < config.lr_drop_step else config.lr_final


class AdamW:
    def __init__(self, params, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads, lr):
        """Update ``params`` (name -> array) in place."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged(self.t, f"non-finite gradient for {name}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        updated = {}
        for name, p in params.items():
            g = grads[name]
            m = self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            new = p - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                new = new - lr * self.weight_decay * p
            updated[name] = new.astype(p.dtype, copy=False)
        for name, new in updated.items():
            if not np.all(np.isfinite(new)):
                raise TrainingDiverged(self.t, f"non-finite update for {name}")
        for name, new in updated.items():
            params[name][...] = new


def adamw_step(params, grads, state, lr):
    state.step(params, grads, lr)
    return params, state


# ---------------------------------------------------------------------------
# data


@dataclass
class PreparedClip:
    """Features, targets and tracker stream of one clip, frame-aligned."""

    clip_id: str
    features: np.ndarray  # (F, 54)
    targets: np.ndarray  # (F, 132)
    head: np.ndarray  # (F, 3) observed head positions
    frames: list


def prepare_clip(clip, tree):
    frames = derive_sparse_stream(clip, tree)
    return PreparedClip(
        clip_id=clip.clip_id,
        features=featurize_stream(frames),
        targets=clip.rot6d(),
        head=np.stack([f.positions[0] for f in frames]),
        frames=frames,
    )


def _clips(data, split):
    if isinstance(data, DatasetManifest):
        return [load_clip(p) for p in data.paths(split)]
    if isinstance(data, MotionClip):
        return [data]
    return list(data)


def _usable(prepared, T, K, purpose):
    need = earliest_frame(T, K) + 1
    keep = []
    for p in prepared:
        if len(p.features) < need:
            log.warning("skipping clip %s: %d frames, %s needs %d", p.clip_id, len(p.features), purpose, need)
        else:
            keep.append(p)
    if not keep:
        raise ConfigError(f"no clip has the {need} frames needed for T={T}, K={K}")
    return keep


def sample_batch(prepared, rng, batch, T, K):
    """Uniform clip, then uniform valid end frame; returns windows, targets, ends."""
    lo = earliest_frame(T, K)
    windows, targets, ends = [], [], []
    for _ in range(batch):
        c = prepared[int(rng.integers(len(prepared)))]
        t = int(rng.integers(lo, len(c.features)))
        windows.append(build_window_set(c.features, t, T, K))
        targets.append(c.targets[t - T + 1 : t + 1])
        ends.append(t)
    return stack_windows(windows), np.stack(targets), ends


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    params: ModelParams
    log: list  # one dict per step
    checkpoint: Path = None


def format_log_line(entry):
    return "\t".join(str(entry["step"]) if k == "step" else repr(float(entry[k])) for k in LOG_FIELDS)


def loss_graph(tensors, windows, targets, config):
    """Forward plus objective on a (batched) window set."""
    dt = tensors["proj.weight"].dtype
    current = tc.Tensor(np.asarray(windows.current, dtype=dt))
    past = [tc.Tensor(np.asarray(X, dtype=dt)) for X in windows.past]
    pred = forward_graph(tensors, current, past, config=config.model)
    return objective(
        tensors,
        pred,
        tc.Tensor(np.asarray(targets, dtype=dt)),
        mode=config.loss,
        lambdas=config.lambdas,
        explicit_reg=config.explicit_reg,
    )


def train(config, data, out_dir=None, tree=None, params=None):
    """Run ``config.steps`` AdamW steps on the training clips of ``data``.

    ``data`` is a DatasetManifest (train split used) or MotionClip(s).
    With ``out_dir`` the log is appended line by line to ``train.log`` and
    the final parameters are written to ``model.twmlp``.
    """
    tree = tree or default_skeleton()
    mc = config.model
    dtype = np.dtype(config.dtype)
    prepared = _usable([prepare_clip(c, tree) for c in _clips(data, "train")], mc.T, mc.K, "training")
    if params is None:
        params = init_params(mc, seed=config.seed, dtype=dtype, zero_output=config.zero_output)
    values = {k: v.copy() for k, v in params.tensors.items()}
    opt = AdamW(values, betas=config.betas, eps=config.eps, weight_decay=config.weight_decay)
    rng = np.random.default_rng([config.seed, 1])

    out = Path(out_dir) if out_dir is not None else None
    log_file = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_file = open(out / "train.log", "a")
        log_file.write("#" + "\t".join(LOG_FIELDS) + "\n")

    history = []
    try:
        for step in range(config.steps):
            windows, targets, _ = sample_batch(prepared, rng, config.batch, mc.T, mc.K)
            leaves = {k: tc.Tensor(v, requires_grad=True) for k, v in values.items()}
            try:
                total, parts = loss_graph(leaves, windows, targets, config)
            except FloatingPointError as exc:
                raise TrainingDiverged(step, str(exc)) from exc
            names = list(leaves)
            grads = dict(zip(names, tc.backward(total, [leaves[n] for n in names])))
            if config.grad_clip:
                norm = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
                if norm > config.grad_clip:
                    grads = {k: g * (config.grad_clip / norm) for k, g in grads.items()}
            lr = lr_at(step, config)
            try:
                opt.step(values, grads, lr)
            except TrainingDiverged as exc:
                raise TrainingDiverged(step, str(exc)) from exc
            entry = {
                "step": step,
                "lr": lr,
                "l_theta": parts.l_theta,
                "l_rv": parts.l_rv,
                "l_reg": parts.l_reg,
                "total": parts.total,
                "s_theta": float(values["s_theta"]),
                "s_rv": float(values["s_rv"]),
            }
            history.append(entry)
            if log_file is not None:
                log_file.write(format_log_line(entry) + "\n")
                log_file.flush()
            if out is not None and config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
                save_checkpoint(ModelParams(mc, values), out / f"step{step + 1:07d}.twmlp")
    finally:
        if log_file is not None:
            log_file.close()

    result = TrainResult(params=ModelParams(mc, values), log=history)
    if out is not None:
        result.checkpoint = out / "model.twmlp"
        save_checkpoint(result.params, result.checkpoint)
    return result


# ---------------------------------------------------------------------------
# evaluation


def model_predictor(params):
    def run(windows, targets):
        return predict(params, windows)

    return run


def _eval_ends(n_frames, T, K, protocol):
    lo = earliest_frame(T, K)
    if protocol == "online":
        return list(range(lo, n_frames))
    if protocol == "sequence":
        return list(range(lo, n_frames, T))
    raise ContractError(f"unknown protocol {protocol!r}; use 'online' or 'sequence'")


def predict_clip(prepared, predict_fn, T, K, tree, protocol="online", chunk=256):
    """Predicted and ground-truth sequences for one clip under ``protocol``.

    Online scores the last frame of a window slid one frame at a time;
    sequence scores every frame of back-to-back current windows.
    """
    ends = _eval_ends(len(prepared.features), T, K, protocol)
    preds, gts, frame_idx = [], [], []
    for i in range(0, len(ends), chunk):
        part = ends[i : i + chunk]
        windows = stack_windows(build_window_set(prepared.features, t, T, K) for t in part)
        targets = np.stack([prepared.targets[t - T + 1 : t + 1] for t in part])
        out = np.asarray(predict_fn(windows, targets), dtype=np.float64)
        for t, y, g in zip(part, out, targets):
            if protocol == "online":
                preds.append(y[-1:])
                gts.append(g[-1:])
                frame_idx.append([t])
            else:
                preds.append(y)
                gts.append(g)
                frame_idx.append(list(range(t - T + 1, t + 1)))
    pred = np.concatenate(preds)
    gt = np.concatenate(gts).astype(np.float64)
    idx = np.concatenate(frame_idx)
    head = prepared.head[idx]
    return (
        PoseSequence(pred, recover_root_translation(pred, head, tree)),
        PoseSequence(gt, recover_root_translation(gt, head, tree)),
    )


def evaluate(checkpoint, data, protocol="online", tree=None, fps=DEFAULT_FPS, predict_fn=None, split="test"):
    """Metrics over the test clips of ``data`` for a checkpoint path or params.

    ``predict_fn(windows, targets)`` overrides the network when given.
    """
    tree = tree or default_skeleton()
    params = load_checkpoint(checkpoint) if isinstance(checkpoint, (str, Path)) else checkpoint
    mc = params.config
    clips = _clips(data, split)
    for c in clips:
        if c.fps != fps and isinstance(data, DatasetManifest):
            raise ContractError(f"clip {c.clip_id} is {c.fps} fps but evaluation uses {fps}")
    prepared = _usable([prepare_clip(c, tree) for c in clips], mc.T, mc.K, "evaluation")
    fn = predict_fn or model_predictor(params)
    acc = MetricsAccumulator(tree, fps)
    for p in prepared:
        pred, gt = predict_clip(p, fn, mc.T, mc.K, tree, protocol)
        acc.add(pred, gt)
    return acc.report()


GRID_COLUMNS = ("T", "K", "L", "MPJRE", "MPJPE", "MPJVE", "HandPE", "UpperPE", "LowerPE", "RootPE", "Jitter", "GFLOPs")


def ablation_table(rows):
    """Tab-separated table of (ModelConfig, MetricsReport), sorted by T then K."""
    lines = ["\t".join(GRID_COLUMNS)]
    for mc, r in sorted(rows, key=lambda x: (x[0].T, x[0].K, x[0].L)):
        vals = (r.mpjre, r.mpjpe, r.mpjve, r.hand_pe, r.upper_pe, r.lower_pe, r.root_pe, r.jitter)
        lines.append(
            "\t".join([str(mc.T), str(mc.K), str(mc.L)] + [f"{v:.3f}" for v in vals] + [f"{count_cost(mc).gflops:.4f}"])
        )
    return "\n".join(lines) + "\n"


def run_ablation(base, grid, data, protocol="online", fps=DEFAULT_FPS, tree=None):
    """Train and evaluate one model per (T, K) pair in ``grid``."""
    rows = []
    for T, K in grid:
        cfg = replace(base, model=replace(base.model, T=T, K=K))
        result = train(cfg, data, tree=tree)
        rows.append((cfg.model, evaluate(result.params, data, protocol, tree=tree, fps=fps)))
    return rows

