import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from hsigraph.kinematics import (NUM_JOINT_ANGLES, SKELETON, HumanState, InvalidDeltaError, InvalidStateError,
                                 MotionClip, StateDelta, apply_delta, body_points, concat_clips, fk_batch,
                                 forward_kinematics)

angles = st.lists(st.floats(-math.pi, math.pi), min_size=NUM_JOINT_ANGLES, max_size=NUM_JOINT_ANGLES)
coords = st.floats(-50, 50)


def cumulative_offsets(skeleton=SKELETON):
    out = np.zeros((skeleton.num_joints, 3))
    for j in range(1, skeleton.num_joints):
        out[j] = out[skeleton.parents[j]] + skeleton.offsets[j]
    return out


def oracle_points(state, skeleton=SKELETON):
    """Per-point oracle: each bone's samples hang off the parent joint's frame."""
    J = skeleton.num_joints
    scale = 1.0 + 0.05 * state.shape[0]
    R = [None] * J
    p = np.zeros((J, 3))
    R[0] = Rotation.from_euler("z", state.root_yaw).as_matrix()
    p[0] = state.root_translation
    pts = []
    for j in range(1, J):
        par = skeleton.parents[j]
        p[j] = p[par] + scale * R[par] @ skeleton.offsets[j]
        R[j] = R[par] @ Rotation.from_euler("XYZ", state.joint_angles[3 * (j - 1):3 * j]).as_matrix()
        for s in skeleton.sample_offsets[j]:
            pts.append(p[par] + scale * R[par] @ s)
    return np.array(pts)


def test_zero_pose_is_cumulative_offsets():
    pos = forward_kinematics(HumanState(np.zeros(3)))
    assert np.allclose(pos, cumulative_offsets(), atol=1e-15)


def test_yaw_pi_negates_horizontal():
    a = forward_kinematics(HumanState(np.zeros(3), 0.0))
    b = forward_kinematics(HumanState(np.zeros(3), math.pi))
    assert np.allclose(b[:, :2], -a[:, :2], atol=1e-12)
    assert np.allclose(b[:, 2], a[:, 2], atol=1e-12)


def test_zero_pose_body_points():
    pts = body_points(HumanState(np.zeros(3)))
    cum = cumulative_offsets()
    want = np.concatenate([cum[SKELETON.parents[j]] + SKELETON.sample_offsets[j] for j in range(1, 22)])
    assert pts.shape == (SKELETON.num_points, 3) == (168, 3)
    assert np.allclose(pts, want, atol=1e-15)


def test_body_points_match_oracle():
    r = np.random.default_rng(0)
    for _ in range(20):
        s = HumanState(r.normal(0, 1, 3), r.uniform(-3, 3), r.normal(0, 1, NUM_JOINT_ANGLES),
                       np.r_[r.uniform(-2, 2), np.zeros(9)])
        assert np.allclose(body_points(s), oracle_points(s), atol=1e-12)


def test_translation_moves_points_rigidly():
    r = np.random.default_rng(1)
    q = r.normal(0, 1, NUM_JOINT_ANGLES)
    a = body_points(HumanState(np.zeros(3), 0.4, q))
    b = body_points(HumanState([1.0, -2.0, 0.5], 0.4, q))
    assert np.allclose(b - a, [1.0, -2.0, 0.5], atol=1e-12)


def test_apply_delta_examples():
    s = HumanState(np.zeros(3), 3.0)
    assert apply_delta(s, StateDelta(np.zeros(3))) == s
    out = apply_delta(s, StateDelta(np.zeros(3), 0.3))
    assert out.root_yaw == pytest.approx(3.3 - 2 * math.pi, abs=1e-12)
    assert out.root_yaw == pytest.approx(-2.983185, abs=1e-6)


def test_errors():
    with pytest.raises(InvalidStateError):
        HumanState(np.zeros(3), 0.0, np.zeros(10))
    with pytest.raises(InvalidStateError):
        HumanState([np.nan, 0, 0])
    with pytest.raises(InvalidDeltaError):
        apply_delta(HumanState(np.zeros(3)), StateDelta([np.inf, 0, 0]))
    with pytest.raises(InvalidStateError):
        small = type(SKELETON)(SKELETON.parents[:5], SKELETON.offsets[:5], SKELETON.sample_offsets[:5])
        forward_kinematics(HumanState(np.zeros(3)), small)


@settings(max_examples=60, deadline=None)
@given(angles, st.floats(-math.pi, math.pi), coords, coords, st.floats(-2, 2))
def test_bone_lengths_preserved(q, yaw, x, y, beta):
    s = HumanState([x, y, 1.0], yaw, q, np.r_[beta, np.zeros(9)])
    pos = forward_kinematics(s)
    par = np.array(SKELETON.parents[1:])
    got = np.linalg.norm(pos[1:] - pos[par], axis=1)
    want = (1 + 0.05 * beta) * np.linalg.norm(SKELETON.offsets[1:], axis=1)
    assert np.allclose(got, want, atol=1e-9)
    assert body_points(s).shape == (168, 3)


@settings(max_examples=40, deadline=None)
@given(angles, st.floats(-math.pi, math.pi))
def test_fk_deterministic_and_batch_consistent(q, yaw):
    s = HumanState([0.1, 0.2, 0.9], yaw, q)
    a = forward_kinematics(s)
    b = forward_kinematics(s)
    assert np.array_equal(a, b)
    pos, _ = fk_batch(np.tile(s.root_translation, (3, 1)), np.full(3, s.root_yaw), np.tile(s.joint_angles, (3, 1)))
    assert np.array_equal(pos[1], a)


@settings(max_examples=60, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), angles, angles)
def test_apply_delta_additive_and_normalized(y1, y2, d1q, d2q):
    s = HumanState([0.0, 0.0, 0.9], 1.0)
    d1 = StateDelta([0.1, 0.2, 0.3], y1, d1q)
    d2 = StateDelta([-0.5, 0.0, 0.1], y2, d2q)
    two = apply_delta(apply_delta(s, d1), d2)
    one = apply_delta(s, d1 + d2)
    assert np.allclose(two.root_translation, one.root_translation, atol=1e-12)
    assert np.allclose(two.joint_angles, one.joint_angles, atol=1e-12)
    assert -math.pi < two.root_yaw <= math.pi
    assert abs(math.remainder(two.root_yaw - one.root_yaw, 2 * math.pi)) < 1e-9


def test_motion_clip_frames_and_concat():
    a = MotionClip.from_states([HumanState.standing(0, 0), HumanState.standing(1, 0)])
    b = MotionClip.from_states([HumanState.standing(1, 0), HumanState.standing(1, 1), HumanState.standing(2, 1)])
    assert a.duration == 1 and len(b) == 3
    c = concat_clips([a, b])
    assert c.duration == 3
    assert c.last == b.last
    h = b.head(1)
    assert h.duration == 1 and h.last == b.state(1)
