import math

import numpy as np
import pytest

from mvkit.rotations import Rotation, axis_angle_to_quat, quat_mul, quat_to_matrix, random_quat
from mvkit.sequence import PoseFrame
from mvkit.skeleton import (
    SMPL_PARENTS,
    Skeleton,
    SkeletonError,
    WeakPerspectiveCamera,
    bone_offsets,
    bundled_skeleton_path,
    default_skeleton,
    format_skeleton,
    fk_batch,
    forward_kinematics,
    load_skeleton,
    parse_skeleton,
    project_weak_perspective,
    save_skeleton,
)

IDENT = np.array([1.0, 0.0, 0.0, 0.0])


def identity_pose(J, T=1):
    return np.tile(IDENT, (T, J, 1))


def cumulative_offsets(skel, offs):
    out = np.zeros_like(offs)
    for j in range(1, skel.joint_count):
        out[j] = out[skel.parents[j]] + offs[j]
    return out


def chain():
    return Skeleton((-1, 0, 1), np.array([[0.0, 0, 0], [0, 1, 0], [0, 1, 0]]), (0, 1, 2))


def test_identity_pose_gives_cumulative_offsets(skel):
    pos = fk_batch(skel, identity_pose(24))[0]
    np.testing.assert_allclose(pos, cumulative_offsets(skel, skel.offsets), atol=1e-15)


def test_three_joint_chain_hand_computed():
    q = identity_pose(3)
    q[0, 1] = axis_angle_to_quat([0, 0, math.pi / 2])
    pos = fk_batch(chain(), q)[0]
    # joint 1 at (0,1,0); its 90 deg z turn sends the next (0,1,0) bone to (-1,0,0)
    np.testing.assert_allclose(pos, [[0, 0, 0], [0, 1, 0], [-1, 1, 0]], atol=1e-15)


def test_three_joint_chain_root_and_middle():
    q = identity_pose(3)
    q[0, 0] = axis_angle_to_quat([0, 0, math.pi / 2])
    q[0, 1] = axis_angle_to_quat([math.pi / 2, 0, 0])
    pos = fk_batch(chain(), q, root_translation=[[1.0, 2.0, 3.0]])[0]
    # root turn maps y to -x; the middle x turn then maps y to z, z stays under the root turn
    np.testing.assert_allclose(pos, [[1, 2, 3], [0, 2, 3], [0, 2, 4]], atol=1e-15)


def test_root_rotation_is_rigid(skel, rng):
    q = random_quat(rng, (5, 24))
    betas = rng.normal(size=(5, 10))
    R = random_quat(rng)
    t = rng.normal(size=3)
    base = fk_batch(skel, q, betas)
    q2 = q.copy()
    q2[:, 0] = quat_mul(R, q[:, 0])
    moved = fk_batch(skel, q2, betas, np.tile(t, (5, 1)))
    np.testing.assert_allclose(moved, base @ quat_to_matrix(R).T + t, atol=1e-13)


def test_identity_pose_bone_lengths_include_shape(skel, rng):
    betas = rng.normal(size=10)
    pos = fk_batch(skel, identity_pose(24), betas[None])[0]
    offs = bone_offsets(skel, betas)
    for j in range(1, 24):
        d = np.linalg.norm(pos[j] - pos[SMPL_PARENTS[j]])
        assert abs(d - np.linalg.norm(offs[j])) < 1e-14


def test_shape_delta_is_linear(skel, rng):
    b1, b2 = rng.normal(size=(2, 10))
    d = lambda b: bone_offsets(skel, b) - skel.offsets
    np.testing.assert_allclose(d(b1 + 2 * b2), d(b1) + 2 * d(b2), atol=1e-15)


def test_shape_basis_semantics(skel):
    b = np.zeros(10)
    b[0] = 1.0
    np.testing.assert_allclose(bone_offsets(skel, b), 1.1 * skel.offsets, atol=1e-15)


def test_forward_kinematics_single_frame(skel, rng):
    q = random_quat(rng, 24)
    frame = PoseFrame(tuple(Rotation("quaternion", x) for x in q), betas=np.zeros(10), root_translation=[0, 1, 0])
    np.testing.assert_allclose(forward_kinematics(skel, frame), fk_batch(skel, q[None], np.zeros((1, 10)), [[0, 1, 0]])[0])


def test_fk_joint_count_mismatch(skel):
    with pytest.raises(SkeletonError):
        fk_batch(skel, identity_pose(23))


def test_projection_examples():
    p = np.array([[3.0, 4.0, 9.0], [-1.0, 0.5, -2.0]])
    np.testing.assert_array_equal(project_weak_perspective(p, WeakPerspectiveCamera(1.0)), p[:, :2])
    np.testing.assert_array_equal(project_weak_perspective([3.0, 4.0, 123.0], WeakPerspectiveCamera(2.0, 1.0, -1.0)), [7.0, 7.0])


def test_projection_in_plane_equivariance(rng):
    p = rng.normal(size=(50, 3))
    th = 0.7
    Rz = quat_to_matrix(axis_angle_to_quat([0, 0, th]))
    R2 = Rz[:2, :2]
    cam = WeakPerspectiveCamera(1.7)
    np.testing.assert_allclose(project_weak_perspective(p @ Rz.T, cam), project_weak_perspective(p, cam) @ R2.T, atol=1e-14)


def test_camera_requires_positive_scale():
    with pytest.raises(ValueError):
        WeakPerspectiveCamera(0.0)


def test_default_skeleton_invariants(skel):
    assert skel.joint_count == 24
    assert skel.parents == SMPL_PARENTS
    m = skel.mirror
    assert all(m[m[j]] == j for j in range(24))
    for j in (0, 3, 6, 9, 12, 15):
        assert m[j] == j
    assert m[16] == 17 and m[22] == 23


def test_default_skeleton_is_symmetric(skel):
    pos = fk_batch(skel, identity_pose(24))[0]
    mirrored = pos[list(skel.mirror)] * [-1, 1, 1]
    np.testing.assert_allclose(mirrored, pos, atol=1e-15)


def test_bundled_file_matches_default(skel):
    assert load_skeleton(bundled_skeleton_path()).equals(skel)


def test_save_load_round_trip(skel, tmp_path, rng):
    odd = Skeleton(skel.parents, skel.offsets + rng.normal(0, 1e-3, (24, 3)), skel.mirror, skel.shape_basis, skel.names)
    path = tmp_path / "s.skel"
    save_skeleton(odd, path)
    assert load_skeleton(path).equals(odd)


def test_cycle_error_names_joint():
    with pytest.raises(SkeletonError, match="joint 1") as info:
        Skeleton((-1, 2, 1), np.zeros((3, 3)), (0, 1, 2))
    assert info.value.field == "parents"


def test_cycle_in_file(skel):
    text = format_skeleton(skel).replace("parents = -1, 0, 0, 0, 1", "parents = -1, 4, 0, 0, 1")
    with pytest.raises(SkeletonError, match="cycle through joint 1"):
        parse_skeleton(text)


@pytest.mark.parametrize(
    "parents, mirror, msg",
    [
        ((-1, -1, 0), (0, 1, 2), "exactly one root"),
        ((-1, 2, 0), (0, 1, 2), "topologically"),
        ((-1, 0, 0), (1, 2, 0), "involution"),
        ((-1, 0, 0), (0, 0, 2), "permutation"),
    ],
)
def test_invalid_skeletons(parents, mirror, msg):
    with pytest.raises(SkeletonError, match=msg):
        Skeleton(parents, np.zeros((3, 3)), mirror)


def test_parse_rejects_unknown_key(skel):
    with pytest.raises(SkeletonError) as info:
        parse_skeleton(format_skeleton(skel).replace("joint_count", "bogus", 1))
    assert "bogus" in str(info.value)
