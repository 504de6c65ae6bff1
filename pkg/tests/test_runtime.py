import numpy as np
import pytest

from twmlp.datagen import MotionSpec, derive_sparse_stream, synth_motion
from twmlp.errors import SequencingError
from twmlp.featurize import build_window_set, featurize_stream
from twmlp.kinematics import HEAD, default_skeleton, forward_kinematics
from twmlp.model import ModelConfig, init_params, predict
from twmlp.runtime import FeatureRing, StreamingSession, bench_latency

tree = default_skeleton()
CFG = ModelConfig(T=6, K=2, L=2, D=16)


@pytest.fixture(scope="module")
def frames():
    return derive_sparse_stream(synth_motion(MotionSpec("run", duration_s=1.5), seed=2), tree)


def test_ring_keeps_newest_in_order():
    ring = FeatureRing(3, width=1)
    for i in range(5):
        ring.append([i])
    np.testing.assert_array_equal(ring.view()[:, 0], [2, 3, 4])
    assert len(ring) == 3


def test_warm_up(frames):
    session = StreamingSession(init_params(CFG))
    outs = [session.push_frame(f) for f in frames[:20]]
    assert all(o is None for o in outs[: CFG.history - 1])
    assert outs[CFG.history - 1] is not None and outs[CFG.history - 1].t == CFG.history - 1


@pytest.mark.parametrize("cache", [False, True])
def test_matches_offline(frames, cache):
    params = init_params(CFG, seed=1)
    X = featurize_stream(frames)
    session = StreamingSession(params, cache_latents=cache)
    for t, f in enumerate(frames):
        out = session.push_frame(f)
        if out is None:
            continue
        offline = predict(params, build_window_set(X, t, CFG.T, CFG.K))[-1]
        assert np.array_equal(out.rot6d, offline)


def test_root_puts_head_on_tracker(frames):
    session = StreamingSession(init_params(CFG))
    for f in frames[: CFG.history]:
        out = session.push_frame(f)
    pos, _ = forward_kinematics(out.rot6d, out.root, tree)
    np.testing.assert_allclose(pos[HEAD], frames[CFG.history - 1].positions[0], atol=1e-9)


def test_padding_emits_immediately(frames):
    session = StreamingSession(init_params(CFG), pad=True)
    assert session.push_frame(frames[0]) is not None


def test_timestamp_regression(frames):
    session = StreamingSession(init_params(CFG))
    session.push_frame(frames[3])
    with pytest.raises(SequencingError):
        session.push_frame(frames[3])
    with pytest.raises(SequencingError):
        session.push_frame(frames[5])


def test_bench_sample_count():
    report = bench_latency(ModelConfig(T=4, K=1, L=1, D=8), duration_s=0.5, input_fps=30)
    assert abs(len(report.samples_ms) - 15) <= 1
    assert report.p50_ms <= report.p99_ms
    assert report.achieved_fps <= 30
    assert "mean_ms\t" in report.to_text()


def test_bench_repeatable():
    cfg = ModelConfig(T=8, K=1, L=2, D=32)
    bench_latency(cfg, duration_s=0.5)  # warm caches
    a = bench_latency(cfg, duration_s=1.0).mean_ms
    b = bench_latency(cfg, duration_s=1.0).mean_ms
    assert abs(a - b) / max(a, b) < 0.5
