"""Streaming inference: one full-body pose per incoming tracker frame."""

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import tensorcore as tc
from .datagen import MotionSpec, derive_sparse_stream, synth_motion
from .errors import SequencingError
from .featurize import FEATURE_DIM, build_window_set, frame_features
from .kinematics import default_skeleton, recover_root_translation
from .model import as_tensors, forward_graph, init_params, predict, window_activations


@dataclass
class FullBodyPose:
    t: int
    rot6d: np.ndarray  # (132,)
    root: np.ndarray  # (3,)


class FeatureRing:
    """Fixed-capacity ring of feature rows, read back oldest first."""

    def __init__(self, capacity, width=FEATURE_DIM):
        self.data = np.zeros((capacity, width))
        self.capacity = capacity
        self.ptr = 0
        self.size = 0

    def append(self, row):
        self.data[self.ptr] = row
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def view(self):
        if self.size < self.capacity:
            return self.data[: self.size].copy()
        return np.concatenate((self.data[self.ptr :], self.data[: self.ptr]))

    def __len__(self):
        return self.size


class StreamingSession:
    """Holds the last (K+1)*T feature rows and runs the model per frame.

    With ``cache_latents`` the per-frame activations of each past-window
    block are computed once when a frame arrives and pooled from the cache,
    instead of re-running the window blocks over whole windows. Both paths
    give bit-identical poses.
    """

    def __init__(self, params, tree=None, pad=False, cache_latents=False):
        self.params = params
        self.config = params.config
        self.tree = tree or default_skeleton()
        self.pad = pad
        self.cache_latents = cache_latents and self.config.K > 0
        self.ring = FeatureRing(self.config.history)
        self.frames_consumed = 0
        self._prev = None
        self._tensors = as_tensors(params)
        self._acts = deque(maxlen=self.config.history)

    @property
    def warm(self):
        return self.frames_consumed >= self.config.history

    def push_frame(self, frame):
        """Consume one frame; return the newest pose once warm, else None."""
        if self._prev is not None and frame.t <= self._prev.t:
            raise SequencingError(f"timestamp went from {self._prev.t} to {frame.t}")
        feats = frame_features(self._prev, frame)
        self._prev = frame
        self.ring.append(feats)
        self.frames_consumed += 1
        if self.cache_latents:
            self._cache_activations(feats)
        if not (self.warm or self.pad):
            return None
        stream = self.ring.view()
        windows = build_window_set(stream, len(stream) - 1, self.config.T, self.config.K, pad=self.pad)
        if self.cache_latents:
            out = self._predict_cached(windows, len(stream) - 1)
        else:
            out = predict(self.params, windows)
        pose = out[-1]
        root = recover_root_translation(pose, frame.positions[0], self.tree)
        return FullBodyPose(t=frame.t, rot6d=pose, root=root)

    def _cache_activations(self, feats):
        x = tc.Tensor(feats[None, :].astype(self.params.dtype))
        with tc.no_grad():
            acts = [window_activations(self._tensors, k, x).data for k in range(1, self.config.K + 1)]
        self._acts.append(acts)

    def _predict_cached(self, windows, t):
        T, K = self.config.T, self.config.K
        cache = list(self._acts)
        tokens = []
        for k in range(1, K + 1):
            idx = np.clip(np.arange(t - (k + 1) * T + 1, t - k * T + 1), 0, None)
            rows = np.concatenate([cache[i][k - 1] for i in idx])
            tokens.append(tc.mean_time(tc.Tensor(rows)))
        current = tc.Tensor(np.asarray(windows.current, dtype=self.params.dtype))
        with tc.no_grad():
            return forward_graph(self._tensors, current, tokens=tokens, config=self.config).data


@dataclass
class LatencyReport:
    samples_ms: list
    mean_ms: float
    p50_ms: float
    p99_ms: float
    achieved_fps: float
    input_fps: float

    def to_text(self):
        return (
            f"samples\t{len(self.samples_ms)}\n"
            f"mean_ms\t{self.mean_ms:.3f}\n"
            f"p50_ms\t{self.p50_ms:.3f}\n"
            f"p99_ms\t{self.p99_ms:.3f}\n"
            f"achieved_fps\t{self.achieved_fps:.1f}\n"
            f"compute_fps\t{1000.0 / self.mean_ms:.1f}\n"
            f"input_fps\t{self.input_fps:g}\n"
        )


def bench_latency(config, duration_s=1.0, input_fps=60, seed=0, cache_latents=False, params=None):
    """Time ``push_frame`` on synthetic tracker input after warm-up.

    Frames are pushed back to back; ``achieved_fps`` is the compute rate
    capped at ``input_fps``.
    """
    params = params or init_params(config, seed=seed)
    n = max(1, int(round(duration_s * input_fps)))
    warmup = config.history - 1
    fps = int(round(input_fps))
    clip = synth_motion(MotionSpec("walk", duration_s=(warmup + n) / fps, fps=fps), seed=seed)
    frames = derive_sparse_stream(clip, default_skeleton())[: warmup + n]
    session = StreamingSession(params, cache_latents=cache_latents)
    for f in frames[:warmup]:
        session.push_frame(f)
    samples = []
    for f in frames[warmup:]:
        t0 = time.perf_counter()
        session.push_frame(f)
        samples.append((time.perf_counter() - t0) * 1000.0)
    arr = np.array(samples)
    mean = float(arr.mean())
    return LatencyReport(
        samples_ms=samples,
        mean_ms=mean,
        p50_ms=float(np.percentile(arr, 50)),
        p99_ms=float(np.percentile(arr, 99)),
        achieved_fps=min(float(input_fps), 1000.0 / mean),
        input_fps=float(input_fps),
    )
