"""TW-MLP network: input projection, residual MLP blocks, past-window
blocks fused into the trunk at selected layers, and the output projection.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensorcore as tc
from .errors import ConfigError, ShapeError
from .featurize import FEATURE_DIM, FeatureWindowSet
from .kinematics import NUM_JOINTS

OUTPUT_DIM = NUM_JOINTS * 6
TEMPORAL_MAPS = ("full", "banded", "causal")
FUSION_AXES = ("time", "feature")


def _odd_blocks(L):
    return tuple(range(1, L + 1, 2))


@dataclass(frozen=True)
class ModelConfig:
    T: int = 41
    K: int = 2
    L: int = 10
    D: int = 512
    fusion_layers: tuple = None
    temporal_map: str = "full"
    band_width: int = 4
    fusion_axis: str = "time"
    d_in: int = FEATURE_DIM
    d_out: int = OUTPUT_DIM

    def __post_init__(self):
        if self.fusion_layers is None:
            object.__setattr__(self, "fusion_layers", _odd_blocks(self.L))
        object.__setattr__(self, "fusion_layers", tuple(sorted(int(x) for x in self.fusion_layers)))
        if self.T < 2:
            raise ConfigError(f"window length T must be >= 2, got {self.T}")
        if self.K < 0 or self.L < 1 or self.D < 2:
            raise ConfigError(f"invalid sizes K={self.K}, L={self.L}, D={self.D}")
        if any(not 1 <= l <= self.L for l in self.fusion_layers):
            raise ConfigError(f"fusion layers {self.fusion_layers} not within 1..{self.L}")
        if self.temporal_map not in TEMPORAL_MAPS:
            raise ConfigError(f"temporal_map must be one of {TEMPORAL_MAPS}")
        if self.fusion_axis not in FUSION_AXES:
            raise ConfigError(f"fusion_axis must be one of {FUSION_AXES}")
        if self.d_in != FEATURE_DIM or self.d_out != OUTPUT_DIM:
            raise ConfigError("d_in and d_out are fixed at 54 and 132")

    @property
    def active_fusion_layers(self):
        """Fusion only exists when there are past windows to fuse."""
        return self.fusion_layers if self.K > 0 else ()

    @property
    def history(self):
        """Frames needed before the first full window set: (K + 1) * T."""
        return (self.K + 1) * self.T

    def to_dict(self):
        d = asdict(self)
        d["fusion_layers"] = list(self.fusion_layers)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def param_shapes(config):
    """Ordered mapping of parameter name to shape, in declaration order."""
    T, K, D = config.T, config.K, config.D
    shapes = {"proj.weight": (D, config.d_in)}
    for l in range(1, config.L + 1):
        b = f"blocks.{l}"
        shapes[f"{b}.ln1.gain"] = (D,)
        shapes[f"{b}.ln1.bias"] = (D,)
        shapes[f"{b}.time_mix"] = (T, T)
        shapes[f"{b}.ln2.gain"] = (D,)
        shapes[f"{b}.ln2.bias"] = (D,)
        shapes[f"{b}.fc.weight"] = (D, D)
        shapes[f"{b}.fc.bias"] = (D,)
    for k in range(1, K + 1):
        w = f"windows.{k}"
        shapes[f"{w}.weight"] = (D, config.d_in)
        shapes[f"{w}.bias"] = (D,)
        shapes[f"{w}.ln.gain"] = (D,)
        shapes[f"{w}.ln.bias"] = (D,)
    for l in config.active_fusion_layers:
        if config.fusion_axis == "time":
            shapes[f"fusion.{l}"] = (T, T + K)
        else:
            shapes[f"fusion.{l}"] = (D, D * (K + 1))
    shapes["out.weight"] = (config.d_out, D)
    shapes["s_theta"] = ()
    shapes["s_rv"] = ()
    return shapes


# names that hold weight matrices; these are what the L2 term penalizes
def is_weight_matrix(name):
    return name.endswith(".weight") or name.endswith(".time_mix") or name.startswith("fusion.")


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    @property
    def dtype(self):
        return self.tensors["proj.weight"].dtype

    def count(self):
        return int(sum(np.prod(v.shape, dtype=np.int64) for v in self.tensors.values()))

    def copy(self):
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype):
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})


def init_params(config, seed=0, dtype=tc.DEFAULT_DTYPE, zero_output=False):
    """Deterministic initialization: weights uniform in +-1/sqrt(fan_in),
    layer-norm gains one, biases and uncertainty log-variances zero."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".gain"):
            arr = np.ones(shape)
        elif name.endswith(".bias") or name.startswith("s_"):
            arr = np.zeros(shape)
        elif name == "out.weight" and zero_output:
            arr = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[1])
            arr = rng.uniform(-bound, bound, size=shape)
        tensors[name] = np.asarray(arr, dtype=dtype)
    return ModelParams(config, tensors)


@dataclass
class PoseSequence:
    """Per-frame 22-joint local 6D rotations (T, 132), optionally with the
    recovered root translation (T, 3)."""

    rot6d: np.ndarray
    root: np.ndarray = None

    def __post_init__(self):
        self.rot6d = np.asarray(self.rot6d)
        if self.rot6d.ndim != 2 or self.rot6d.shape[1] != OUTPUT_DIM:
            raise ShapeError(f"pose sequence must be (T, {OUTPUT_DIM}), got {self.rot6d.shape}")
        if self.root is not None:
            self.root = np.asarray(self.root, dtype=np.float64)
            if self.root.shape != (len(self.rot6d), 3):
                raise ShapeError(f"root translation must be ({len(self.rot6d)}, 3)")

    def __len__(self):
        return len(self.rot6d)


# ---------------------------------------------------------------------------
# building blocks on autodiff tensors


def _time_mask(config):
    T = config.T
    if config.temporal_map == "full":
        return None
    i, j = np.indices((T, T))
    if config.temporal_map == "causal":
        return (j <= i).astype(np.float64)
    return (np.abs(i - j) <= config.band_width).astype(np.float64)


def mlp_block(p, l, H, config):
    """H1 = H + time_mix(LN(H)); H2 = H1 + silu(FC(LN(H1)))."""
    b = f"blocks.{l}"
    if H.shape[-2] != config.T or H.shape[-1] != config.D:
        raise ShapeError(f"block {l} expects (..., {config.T}, {config.D}), got {H.shape}")
    W = p[f"{b}.time_mix"]
    mask = _time_mask(config)
    if mask is not None:
        W = tc.mul(W, tc.Tensor(mask, dtype=W.dtype))
    H = tc.add(H, tc.time_mix(tc.layer_norm(H, p[f"{b}.ln1.gain"], p[f"{b}.ln1.bias"]), W))
    inner = tc.linear(tc.layer_norm(H, p[f"{b}.ln2.gain"], p[f"{b}.ln2.bias"]), p[f"{b}.fc.weight"], p[f"{b}.fc.bias"])
    return tc.add(H, tc.silu(inner))


def window_activations(p, k, X):
    """Per-frame linear -> LN -> SiLU of past-window block ``k`` (1-based).

    Each output row depends only on its own input row, bit for bit.
    """
    w = f"windows.{k}"
    if X.shape[-1] != FEATURE_DIM:
        raise ShapeError(f"window input must end in {FEATURE_DIM}, got {X.shape}")
    h = tc.linear(X, p[f"{w}.weight"], p[f"{w}.bias"], exact=True)
    return tc.silu(tc.layer_norm(h, p[f"{w}.ln.gain"], p[f"{w}.ln.bias"]))


def window_block(p, k, X):
    """Compress one past window (..., T, 54) to a single latent token (..., 1, D)."""
    return tc.mean_time(window_activations(p, k, X))


def fuse_latents(H, tokens, W, config):
    """Fuse window tokens into the trunk latent and project back to T rows."""
    if len(tokens) != config.K:
        raise ShapeError(f"expected {config.K} window tokens, got {len(tokens)}")
    if config.fusion_axis == "time":
        return tc.time_mix(tc.concat_time([H] + list(tokens)), W)
    T = H.shape[-2]
    wide = tc.concat_features([H] + [tc.broadcast_time(z, T) for z in tokens])
    return tc.linear(wide, W)


def forward_graph(p, current, past=None, tokens=None, config=None):
    """Record the full forward on tensors ``p`` (name -> Tensor).

    Either the raw past windows or precomputed window tokens may be given.
    """
    if current.shape[-2] != config.T or current.shape[-1] != FEATURE_DIM:
        raise ShapeError(f"current window must be (..., {config.T}, {FEATURE_DIM}), got {current.shape}")
    if tokens is None:
        past = list(past or ())
        if len(past) != config.K:
            raise ShapeError(f"expected {config.K} past windows, got {len(past)}")
        for X in past:
            if X.shape != current.shape:
                raise ShapeError(f"past window {X.shape} does not match current {current.shape}")
        tokens = [window_block(p, k, X) for k, X in enumerate(past, start=1)]
    H = tc.linear(current, p["proj.weight"])
    fusion = set(config.active_fusion_layers)
    for l in range(1, config.L + 1):
        H = mlp_block(p, l, H, config)
        if l in fusion:
            H = fuse_latents(H, tokens, p[f"fusion.{l}"], config)
    return tc.linear(H, p["out.weight"])


def base_forward_graph(p, current, config):
    """The plain MLP model with no window machinery at all."""
    H = tc.linear(current, p["proj.weight"])
    for l in range(1, config.L + 1):
        H = mlp_block(p, l, H, config)
    return tc.linear(H, p["out.weight"])


def as_tensors(params, requires_grad=False):
    return {k: tc.Tensor(v, requires_grad=requires_grad) for k, v in params.tensors.items()}


def _inputs(params, windows):
    dt = params.dtype
    current = tc.Tensor(np.asarray(windows.current, dtype=dt))
    past = [tc.Tensor(np.asarray(X, dtype=dt)) for X in windows.past]
    return current, past


def predict(params, windows):
    """Raw network output (..., T, 132) as a numpy array."""
    current, past = _inputs(params, windows)
    with tc.no_grad():
        return forward_graph(as_tensors(params), current, past, config=params.config).data


def forward(params, windows):
    """Run the network on one window set and return the pose sequence."""
    if windows.current.ndim != 2:
        raise ShapeError("forward takes a single window set; use predict for batches")
    return PoseSequence(predict(params, windows))


def base_forward(params, current):
    dt = params.dtype
    with tc.no_grad():
        return base_forward_graph(as_tensors(params), tc.Tensor(np.asarray(current, dtype=dt)), params.config).data


def stack_windows(window_sets):
    """Batch several window sets along a new leading axis."""
    window_sets = list(window_sets)
    current = np.stack([w.current for w in window_sets])
    K = window_sets[0].K
    past = tuple(np.stack([w.past[k] for w in window_sets]) for k in range(K))
    return FeatureWindowSet(current=current, past=past)
