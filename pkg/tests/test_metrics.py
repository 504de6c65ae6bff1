import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_rotation
from twmlp.errors import ContractError, ShapeError
from twmlp.kinematics import NUM_JOINTS, default_skeleton, forward_kinematics
from twmlp.metrics import (
    PARTS,
    MetricsAccumulator,
    evaluate_sequences,
    jerk_magnitude,
    jitter,
    mpjpe,
    mpjre,
    mpjve,
    part_pe,
    position_error,
    velocity_error,
)
from twmlp.model import PoseSequence
from twmlp.rotmath import axis_angle_to_matrix, geodesic_angle_deg, matrix_to_rot6d, rot6d_to_matrix

tree = default_skeleton()


def random_seq(rng, n=12):
    R = np.stack([[random_rotation(rng) for _ in range(NUM_JOINTS)] for _ in range(n)])
    return PoseSequence(matrix_to_rot6d(R).reshape(n, -1), rng.normal(size=(n, 3)))


def identity_seq(root):
    n = len(root)
    return PoseSequence(np.tile(matrix_to_rot6d(np.eye(3)), (n, NUM_JOINTS)), root)


def test_identical_sequences_score_zero():
    s = random_seq(np.random.default_rng(0))
    r = evaluate_sequences(s, s, tree)
    for name in ("mpjre", "mpjpe", "mpjve", "root_pe", "hand_pe", "upper_pe", "lower_pe"):
        assert getattr(r, name) == pytest.approx(0.0, abs=1e-6), name


def test_twist_of_ninety_degrees():
    n = 4
    pred = identity_seq(np.zeros((n, 3)))
    twist = matrix_to_rot6d(axis_angle_to_matrix([0, np.pi / 2, 0]))
    gt = PoseSequence(np.tile(twist, (n, NUM_JOINTS)), np.zeros((n, 3)))
    assert mpjre(pred, gt) == pytest.approx(90.0)


def test_mpjre_matches_joint_loop():
    rng = np.random.default_rng(1)
    a, b = random_seq(rng, 5), random_seq(rng, 5)
    vals = []
    for t in range(5):
        for j in range(NUM_JOINTS):
            Ra = rot6d_to_matrix(a.rot6d[t, 6 * j : 6 * j + 6])
            Rb = rot6d_to_matrix(b.rot6d[t, 6 * j : 6 * j + 6])
            vals.append(geodesic_angle_deg(Ra, Rb))
    assert mpjre(a, b) == pytest.approx(np.mean(vals), rel=1e-12)


def test_rigid_shift_of_one_cm():
    rng = np.random.default_rng(2)
    s = random_seq(rng)
    moved = PoseSequence(s.rot6d, s.root + [0.01, 0, 0])
    assert mpjpe(moved, s, tree) == pytest.approx(1.0)
    assert part_pe(moved, s, tree, "root") == pytest.approx(1.0)
    assert mpjve(moved, s, tree) == pytest.approx(0.0, abs=1e-9)


def test_position_and_velocity_match_loops():
    rng = np.random.default_rng(3)
    pp, gp = rng.normal(size=(6, NUM_JOINTS, 3)), rng.normal(size=(6, NUM_JOINTS, 3))
    pe = np.mean([np.linalg.norm(pp[t, j] - gp[t, j]) for t in range(6) for j in range(NUM_JOINTS)]) * 100
    assert position_error(pp, gp) == pytest.approx(pe, rel=1e-12)
    ve = []
    for t in range(5):
        for j in range(NUM_JOINTS):
            vp = (pp[t + 1, j] - pp[t, j]) * 60
            vg = (gp[t + 1, j] - gp[t, j]) * 60
            ve.append(np.linalg.norm(vp - vg) * 100)
    assert velocity_error(pp, gp, 60) == pytest.approx(np.mean(ve), rel=1e-12)


def test_root_offset_two_cm():
    rng = np.random.default_rng(4)
    s = random_seq(rng)
    moved = PoseSequence(s.rot6d, s.root + [0, 0.02, 0])
    assert part_pe(moved, s, tree, "root") == pytest.approx(2.0)


def test_jitter_of_polynomials():
    t = np.arange(40, dtype=np.float64)
    lin = np.stack([0.01 * t, 0.5 + 0.002 * t, -0.003 * t], axis=-1)
    assert jitter(identity_seq(lin), tree) < 1e-9
    quad = lin + (1e-4 * t**2)[:, None]
    assert jitter(identity_seq(quad), tree) < 1e-6
    c = 2e-6
    pos = np.zeros((40, NUM_JOINTS, 3))
    pos[..., 0] = (c * t**3)[:, None]
    assert jerk_magnitude(pos, 60) == pytest.approx(6 * c * 60**3 / 100, abs=1e-6)


def test_part_recombination():
    rng = np.random.default_rng(5)
    a, b = random_seq(rng), random_seq(rng)
    parts = {p: part_pe(a, b, tree, p) for p in ("root", "upper", "lower")}
    n = {p: len(PARTS[p]) for p in parts}
    assert sum(n.values()) == NUM_JOINTS
    recombined = sum(parts[p] * n[p] for p in parts) / NUM_JOINTS
    assert recombined == pytest.approx(mpjpe(a, b, tree), abs=1e-9)


def test_contract_errors():
    rng = np.random.default_rng(6)
    a = random_seq(rng, 3)
    with pytest.raises(ContractError):
        jitter(a, tree)
    with pytest.raises(ContractError):
        position_error(np.zeros((2, 22, 3)), np.zeros((2, 22, 3)), ())
    with pytest.raises(ShapeError):
        mpjpe(a, random_seq(rng, 4), tree)
    with pytest.raises(ContractError):
        mpjpe(PoseSequence(a.rot6d), a, tree)


@settings(max_examples=15, deadline=None)
@given(st.integers(4, 20), st.integers(1, 19), st.integers(0, 1000))
def test_accumulator_merge_matches_single_pass(n, cut, seed):
    cut = min(cut, n - 1)
    rng = np.random.default_rng(seed)
    a, b = random_seq(rng, n), random_seq(rng, n)
    whole = MetricsAccumulator(tree)
    whole.add(a, b)
    one = evaluate_sequences(a, b, tree)
    r = whole.report()
    assert r.mpjpe == pytest.approx(one.mpjpe, rel=1e-12)
    assert r.jitter == pytest.approx(one.jitter, rel=1e-12)
    left, right = MetricsAccumulator(tree), MetricsAccumulator(tree)
    left.add(PoseSequence(a.rot6d[:cut], a.root[:cut]), PoseSequence(b.rot6d[:cut], b.root[:cut]))
    right.add(PoseSequence(a.rot6d[cut:], a.root[cut:]), PoseSequence(b.rot6d[cut:], b.root[cut:]))
    merged = left.merge(right).report()
    assert merged.frames == n
    assert merged.mpjpe == pytest.approx(r.mpjpe, rel=1e-12)
    assert merged.mpjre == pytest.approx(r.mpjre, rel=1e-12)


def test_report_files(tmp_path):
    rng = np.random.default_rng(7)
    r = evaluate_sequences(random_seq(rng), random_seq(rng), tree)
    r.write(tmp_path / "report")
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["fps"] == 60 and data["frames"] == 12
    lines = (tmp_path / "report.txt").read_text().splitlines()
    assert lines[0].startswith("mpjre\t") and lines[0].endswith("\tdeg")
    assert float(lines[1].split("\t")[1]) == r.mpjpe


def test_fk_positions_used():
    rng = np.random.default_rng(8)
    s = random_seq(rng, 3)
    pos, _ = forward_kinematics(s.rot6d, s.root, tree)
    zero = PoseSequence(s.rot6d, s.root * 0)
    shift = np.linalg.norm(s.root, axis=-1).mean() * 100
    assert mpjpe(zero, s, tree) == pytest.approx(shift)
    assert pos.shape == (3, NUM_JOINTS, 3)
