# tests/test_registration.py
import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from errors import (AllPairsRejected, DegenerateConfiguration, EmptyAfterCrop, EmptyCloud,
                    EmptyPartition, InvalidParameter, LengthMismatch)
from geometry import ObjectModel, sample_object_surface
from helpers import palm_frame_hand, perturbation
from kinematics import JointState, sample_surface
from registration import (IcpParams, align_cloud_to_arm, alternate_object_alignment, icp,
                          partition_cloud, procrustes)
from rgbd import PointCloud
from transforms import RigidTransform

EXACT = IcpParams(max_iterations=100, convergence_tol=1e-7, trim_fraction=0.2,
                  max_pair_distance=None)


def random_rigid(rng, with_scale=False):
    rotation = Rotation.random(random_state=int(rng.integers(1 << 31))).as_matrix()
    scale = float(rng.uniform(0.5, 2.0)) if with_scale else 1.0
    return RigidTransform(rotation, rng.uniform(-1, 1, 3), scale)


@pytest.mark.parametrize("with_scale", [False, True])
def test_procrustes_recovers_random_transforms(rng, with_scale):
    for _ in range(1000):
        source = rng.normal(size=(50, 3))
        truth = random_rigid(rng, with_scale)
        target = truth.apply(source)
        found = procrustes(source, target, with_scale)
        residual = np.sqrt(np.mean(np.sum((found.apply(source) - target) ** 2, axis=1)))
        assert residual < 1e-9
        if with_scale:
            assert found.scale == pytest.approx(truth.scale)


def test_procrustes_never_returns_a_reflection(rng):
    source = rng.normal(size=(20, 3))
    mirrored = source * np.array([1.0, 1.0, -1.0])
    found = procrustes(source, mirrored)
    assert np.linalg.det(found.rotation) == pytest.approx(1.0)


def test_procrustes_degenerate_inputs():
    line = np.column_stack([np.linspace(0, 1, 10), np.zeros(10), np.zeros(10)])
    with pytest.raises(DegenerateConfiguration):
        procrustes(line, line)
    with pytest.raises(DegenerateConfiguration):
        procrustes(np.eye(3)[:2], np.eye(3)[:2])
    with pytest.raises(LengthMismatch):
        procrustes(np.eye(3), np.eye(3)[:2])


def box_cloud(count=3000, seed=5):
    return sample_object_surface(ObjectModel.box([0.4, 0.25, 0.15]), count=count, seed=seed)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_icp_recovers_moderate_perturbations(seed):
    rng = np.random.default_rng(seed)
    source = box_cloud()
    truth = perturbation(rng, 8.0, 0.04)
    target = truth.apply(source)
    result = icp(source, target, RigidTransform.identity(), EXACT)
    assert result.rms_residual < 1e-3
    dt, dr = result.transform.distance_to(truth)
    assert np.degrees(dr) < 0.5
    assert dt < 1e-3


def test_icp_residuals_never_increase():
    rng = np.random.default_rng(11)
    source = box_cloud(2000)
    target = perturbation(rng, 10.0, 0.05).apply(source)
    result = icp(source, target, RigidTransform.identity(), EXACT)
    history = np.array(result.history)
    assert len(history) == result.iterations_used
    assert np.all(np.diff(history) <= 1e-12)


def test_icp_history_is_monotone_with_outliers_and_pair_gating():
    params = IcpParams(trim_fraction=0.0, max_pair_distance=0.1)
    for seed in range(30):
        rng = np.random.default_rng(500 + seed)
        surface = box_cloud(2000, seed=seed)
        outliers = rng.uniform(-0.4, 0.4, (600, 3))
        target = perturbation(rng, 10.0, 0.05).apply(surface)
        result = icp(np.vstack([surface, outliers]), target, RigidTransform.identity(), params)
        history = np.array(result.history)
        assert len(history) == result.iterations_used
        assert np.all(np.diff(history) <= 1e-12)


def test_icp_on_large_clouds_within_ten_degrees_and_five_cm():
    rng = np.random.default_rng(77)
    successes = 0
    for trial in range(100):
        source = box_cloud(10000, seed=trial)
        truth = perturbation(rng, rng.uniform(0.0, 10.0), rng.uniform(0.0, 0.05))
        result = icp(source, truth.apply(source), RigidTransform.identity(), EXACT)
        assert np.all(np.diff(result.history) <= 1e-12)
        _, dr = result.transform.distance_to(truth)
        if result.rms_residual < 1e-3 and np.degrees(dr) < 0.5:
            successes += 1
    assert successes >= 99


def test_icp_identity_converges_immediately():
    source = box_cloud(500)
    result = icp(source, source, RigidTransform.identity(), EXACT)
    assert result.converged
    assert result.rms_residual < 1e-12
    assert result.iterations_used == 1


def test_icp_failures():
    source = box_cloud(100)
    far = source + 10.0
    with pytest.raises(AllPairsRejected):
        icp(source, far, params=IcpParams(max_pair_distance=0.01))
    with pytest.raises(EmptyCloud):
        icp(np.zeros((0, 3)), source)
    with pytest.raises(InvalidParameter):
        IcpParams(trim_fraction=1.0)


def test_icp_params_from_config():
    params = IcpParams.from_config({'max_iterations': 7, 'max_pair_distance': None})
    assert params.max_iterations == 7
    assert params.max_pair_distance is None
    assert params.trim_fraction == 0.2


def test_align_cloud_to_arm_ignores_the_table(chain):
    q = JointState(arm=(0.3, 0.4, 0.0, 1.0, 0.0, 0.5, 0.0))
    arm = sample_surface(chain, q, 20000.0)
    camera_to_arm = RigidTransform.from_rpy([-1.9, 0.0, 0.4], [0.3, -0.2, 1.1])

    xs, ys = np.meshgrid(np.linspace(-1.0, 1.0, 40), np.linspace(-1.0, 1.0, 40))
    table = np.column_stack([xs.ravel(), ys.ravel(), np.full(xs.size, -0.2)])
    cloud = PointCloud(camera_to_arm.inverse().apply(np.vstack([arm, table])))

    init = perturbation(np.random.default_rng(4), 1.0, 0.005) @ camera_to_arm
    params = IcpParams(max_iterations=100, convergence_tol=1e-9, trim_fraction=0.0,
                       max_pair_distance=None)
    result = align_cloud_to_arm(cloud, arm, init, params, crop_margin=0.05)
    assert result.rms_residual < 1e-3
    dt, _ = result.transform.distance_to(camera_to_arm)
    assert dt < 5e-3


def test_cropping_never_hurts_the_arm_alignment(chain):
    q = JointState(arm=(0.3, 0.4, 0.0, 1.0, 0.0, 0.5, 0.0))
    arm = sample_surface(chain, q, 20000.0)
    camera_to_arm = RigidTransform.from_rpy([-1.9, 0.0, 0.4], [0.3, -0.2, 1.1])
    xs, ys = np.meshgrid(np.linspace(-1.0, 1.0, 40), np.linspace(-1.0, 1.0, 40))
    table = np.column_stack([xs.ravel(), ys.ravel(), np.full(xs.size, -0.2)])
    cloud = PointCloud(camera_to_arm.inverse().apply(np.vstack([arm, table])))

    init = perturbation(np.random.default_rng(8), 2.0, 0.01) @ camera_to_arm
    params = IcpParams(max_iterations=100, convergence_tol=1e-9, trim_fraction=0.0,
                       max_pair_distance=None)
    cropped = align_cloud_to_arm(cloud, arm, init, params, crop_margin=0.05)
    full = align_cloud_to_arm(cloud, arm, init, params, crop=False)
    assert cropped.rms_residual <= full.rms_residual


def test_align_cloud_to_arm_empty_crop(chain):
    arm = sample_surface(chain, JointState(), 5000.0)
    cloud = PointCloud(arm + 10.0)
    with pytest.raises(EmptyAfterCrop):
        align_cloud_to_arm(cloud, arm, RigidTransform.identity())


# --- alineamiento alternado mano/objeto -------------------------------------

OBJECT = ObjectModel.box([0.12, 0.05, 0.08])
OBJECT_POSE = RigidTransform.from_rpy([0.0, 0.0, 0.1], [0.0, 0.0, 0.15])


def hand_object_scene(chain):
    hand = palm_frame_hand(chain, JointState())
    object_points = sample_object_surface(OBJECT.with_pose(OBJECT_POSE), count=1500, seed=7)
    return hand, PointCloud(np.vstack([hand, object_points]))


def test_partition_separates_hand_and_object(chain):
    hand, cloud = hand_object_scene(chain)
    hand_mask, object_mask = partition_cloud(cloud.points, hand, OBJECT.with_pose(OBJECT_POSE),
                                             margin=0.005, max_distance=0.1)
    assert hand_mask[:len(hand)].all()
    assert object_mask[len(hand):].all()
    assert not (hand_mask & object_mask).any()


def test_alternating_alignment_recovers_object_pose(chain):
    hand, cloud = hand_object_scene(chain)
    init = perturbation(np.random.default_rng(21), 3.0, 0.008) @ OBJECT_POSE
    params = IcpParams(max_iterations=60, convergence_tol=1e-7, trim_fraction=0.2,
                       max_pair_distance=0.1)
    outcome = alternate_object_alignment(cloud, hand, OBJECT, init, rounds=3, params=params,
                                         partition_margin=0.005)
    dt, dr = outcome.object_pose.distance_to(OBJECT_POSE)
    assert dt < 5e-3
    assert np.degrees(dr) < 5.0
    assert outcome.hand_residual < 1e-6
    assert 1 <= outcome.rounds_used <= 3
    residuals = np.array(outcome.residual_history)
    assert np.all(np.diff(residuals, axis=0) <= 0.0)


def test_alternating_alignment_without_object(chain):
    hand = palm_frame_hand(chain, JointState())
    with pytest.raises(EmptyPartition):
        alternate_object_alignment(PointCloud(hand), hand, OBJECT, OBJECT_POSE,
                                   partition_margin=0.005)
    with pytest.raises(InvalidParameter):
        alternate_object_alignment(PointCloud(hand), hand, OBJECT, OBJECT_POSE, rounds=0)


def scene_with_object(chain, rng):
    """Mano con flexión aleatoria y una caja de tamaño y orientación aleatorios por encima"""
    q = JointState(flexion=tuple(rng.uniform(0.0, 0.6, 3)))
    hand = palm_frame_hand(chain, q)
    extents = [rng.uniform(0.10, 0.16), rng.uniform(0.05, 0.09), rng.uniform(0.07, 0.11)]
    pose = RigidTransform.from_rpy([0.0, 0.0, rng.uniform(-0.8, 0.8)],
                                   [rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02), 0.33])
    obj = ObjectModel.box(extents)
    points = sample_object_surface(obj.with_pose(pose), count=1500, seed=int(rng.integers(1 << 16)))
    return hand, obj, pose, PointCloud(np.vstack([hand, points]))


def test_alternating_alignment_over_random_scenes(chain):
    rng = np.random.default_rng(2718)
    params = IcpParams(max_iterations=60, convergence_tol=1e-7, trim_fraction=0.2,
                       max_pair_distance=0.1)
    successes = 0
    for _ in range(100):
        hand, obj, pose, cloud = scene_with_object(chain, rng)
        init = pose @ perturbation(rng, rng.uniform(0.0, 10.0), rng.uniform(0.0, 0.05))
        outcome = alternate_object_alignment(cloud, hand, obj, init, rounds=3, params=params,
                                             partition_margin=0.005)
        dt, dr = outcome.object_pose.distance_to(pose)
        if dt < 5e-3 and np.degrees(dr) < 5.0:
            successes += 1
    assert successes >= 95


def test_more_rounds_never_worsen_the_residuals(chain):
    rng = np.random.default_rng(99)
    params = IcpParams(max_iterations=60, convergence_tol=1e-7, trim_fraction=0.2,
                       max_pair_distance=0.1)
    for _ in range(5):
        hand, obj, pose, cloud = scene_with_object(chain, rng)
        init = pose @ perturbation(rng, 8.0, 0.04)
        one = alternate_object_alignment(cloud, hand, obj, init, rounds=1, params=params,
                                         partition_margin=0.005)
        three = alternate_object_alignment(cloud, hand, obj, init, rounds=3, params=params,
                                           partition_margin=0.005)
        assert three.object_residual <= one.object_residual
        assert three.hand_residual <= one.hand_residual
        assert three.residual_history[0] == one.residual_history[0]
