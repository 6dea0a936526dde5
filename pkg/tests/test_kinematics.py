# tests/test_kinematics.py
import numpy as np
import pytest

from errors import InvalidParameter, JointLimitViolation
from geometry import ObjectModel
from kinematics import (FINGERS, JointState, KinematicChain, detect_contacts, fibonacci_sphere,
                        forward_kinematics, hand_samples, nearest_state, palm_pose, sample_surface,
                        sphere_centers)
from transforms import RigidTransform

PALM_HEIGHT = 0.346 + 0.55 + 0.3 + 0.06 + 0.06


def rx(angle, length):
    return np.array([0.0, -length * np.sin(angle), length * np.cos(angle)])


def test_joint_state_vector_round_trip():
    q = JointState(tuple(range(7)), 0.5, (0.1, 0.2, 0.3), timestamp_s=4.0)
    vector = q.as_vector()
    assert vector.shape == (11,)
    assert JointState.from_vector(vector, 4.0) == q
    assert JointState.from_dict(q.to_dict()) == q
    assert q.value('arm3') == 3.0
    assert q.value('spread') == 0.5
    assert q.value('flexion2') == 0.3
    assert q.with_flexion(1, 1.0).flexion == (0.1, 1.0, 0.3)
    with pytest.raises(InvalidParameter):
        q.value('elbow')
    with pytest.raises(InvalidParameter):
        JointState((0.0,) * 6)


def test_zero_configuration_palm_pose(chain):
    pose = palm_pose(chain, JointState())
    np.testing.assert_allclose(pose.translation, [0.0, 0.0, PALM_HEIGHT], atol=1e-12)
    np.testing.assert_allclose(pose.rotation, np.eye(3), atol=1e-12)


def test_base_pose_is_applied(chain):
    base = RigidTransform.from_rpy([0, 0, np.pi / 2], [1.0, 2.0, 0.0])
    poses = forward_kinematics(chain, JointState(), base)
    np.testing.assert_allclose(poses[chain.palm_index].translation, [1.0, 2.0, PALM_HEIGHT],
                               atol=1e-12)


def test_coupled_distal_joint(chain):
    theta = 0.8
    poses = forward_kinematics(chain, JointState(flexion=(theta, 0.0, 0.0)))
    palm = poses[chain.palm_index]
    tip_link = chain.fingertip_indices()['1']
    tip = palm.inverse().apply(poses[tip_link].apply([0.0, 0.0, 0.05]))
    expected = (np.array([0.025, 0.05, 0.075]) + rx(theta, 0.07)
                + rx(theta + chain.coupling_ratio * theta, 0.05))
    np.testing.assert_allclose(tip, expected, atol=1e-12)
    assert chain.distal_angle(JointState(flexion=(theta, 0.0, 0.0)), 0) == pytest.approx(0.424 * theta)


def test_spread_rotates_fingers_opposite_ways(chain):
    poses = forward_kinematics(chain, JointState(spread=0.3))
    r1 = poses[chain.index('f1_base')].rotation
    r2 = poses[chain.index('f2_base')].rotation
    angle1 = np.arctan2(r1[1, 0], r1[0, 0])
    angle2 = np.arctan2(r2[1, 0], r2[0, 0])
    assert angle1 == pytest.approx(0.3)
    assert angle2 == pytest.approx(-0.3)


def test_limits_are_enforced(chain):
    arm = [0.0] * 7
    arm[3] = 3.5
    with pytest.raises(JointLimitViolation):
        forward_kinematics(chain, JointState(tuple(arm)))
    with pytest.raises(JointLimitViolation):
        chain.check_limits(JointState(flexion=(0.0, -0.1, 0.0)))
    assert chain.joint_ranges()[10] == pytest.approx(2.44)


def test_chain_structure(chain):
    assert len(chain.hand_indices()) == 9
    tips = chain.fingertip_indices()
    assert set(tips) == set(FINGERS)
    assert chain.links[tips['3']].name == 'f3_distal'
    assert chain.links[chain.palm_index].name == 'palm'


@pytest.mark.parametrize("links, message", [
    ([{'name': 'a', 'parent': 'b'}], "padre"),
    ([{'name': 'a'}, {'name': 'a'}], "duplicado"),
    ([{'name': 'a', 'spheres': [{'center': [0, 0, 0], 'radius': 0.0}]}], "Radio"),
    ([{'name': 'a', 'joint': {'type': 'prismatic'}}], "soportado"),
])
def test_invalid_chain_descriptions(links, message):
    with pytest.raises(InvalidParameter, match=message):
        KinematicChain.from_dict({'links': links})


def test_surface_samples_count_and_radius(chain):
    density = 20000.0
    q = JointState()
    samples = sample_surface(chain, q, density)
    expected = sum(int(round(density * 4 * np.pi * s.radius ** 2))
                   for link in chain.links for s in link.spheres)
    assert len(samples) == expected

    palm = chain.palm_index
    palm_only = sample_surface(chain, q, density, [palm])
    center = palm_pose(chain, q).apply(chain.links[palm].spheres[0].center)
    np.testing.assert_allclose(np.linalg.norm(palm_only - center, axis=1), 0.045, atol=1e-12)
    assert len(hand_samples(chain, q, density)) < len(samples)


def test_fibonacci_sphere():
    points = fibonacci_sphere(np.array([1.0, 0.0, 0.0]), 0.5, 100)
    np.testing.assert_allclose(np.linalg.norm(points - [1.0, 0.0, 0.0], axis=1), 0.5)
    np.testing.assert_allclose(points.mean(axis=0), [1.0, 0.0, 0.0], atol=0.02)
    assert fibonacci_sphere(np.zeros(3), 1.0, 0).shape == (0, 3)


def test_sphere_centers(chain):
    poses = forward_kinematics(chain, JointState())
    centers, radii, owner = sphere_centers(chain, poses, [chain.palm_index])
    np.testing.assert_allclose(centers, [[0.0, 0.0, PALM_HEIGHT + 0.04]], atol=1e-12)
    assert radii.tolist() == [0.045]
    assert owner.tolist() == [chain.palm_index]


def test_palm_contact_and_penetration(chain):
    q = JointState()
    palm = palm_pose(chain, q)
    near = ObjectModel.sphere(0.01, palm @ RigidTransform.from_translation([0.056, 0.0, 0.04]))
    contacts = detect_contacts(chain, q, near, threshold=0.002)
    assert len(contacts) == 1
    contact = contacts.contacts[0]
    assert (contact.finger, contact.link) == ('palm', 'palm')
    assert contact.signed_distance == pytest.approx(0.001)
    assert contacts.finger_ids == frozenset()
    assert contacts.max_penetration == 0.0

    inside = ObjectModel.sphere(0.01, palm @ RigidTransform.from_translation([0.05, 0.0, 0.04]))
    contacts = detect_contacts(chain, q, inside, threshold=0.002)
    assert len(contacts) == 0
    assert contacts.max_penetration == pytest.approx(0.005)


def test_far_object_has_no_contacts(chain):
    far = ObjectModel.box([0.1, 0.1, 0.1], RigidTransform.from_translation([2.0, 2.0, 0.0]))
    contacts = detect_contacts(chain, JointState(), far, threshold=0.002)
    assert len(contacts) == 0
    assert contacts.max_penetration == 0.0
    with pytest.raises(InvalidParameter):
        detect_contacts(chain, JointState(), far, threshold=0.0)


def test_nearest_state():
    states = [JointState(timestamp_s=t) for t in (0.0, 0.1, 0.2, 0.3)]
    assert nearest_state(states, 0.16).timestamp_s == 0.2
    assert nearest_state(states, -5.0).timestamp_s == 0.0
    with pytest.raises(InvalidParameter):
        nearest_state([], 1.0)


# --- propiedades ------------------------------------------------------------

def random_state(chain, rng) -> JointState:
    limits = chain.limits_vector()
    return JointState.from_vector(rng.uniform(limits[:, 0], limits[:, 1]))


def _axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    k = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * k @ k


def _homogeneous(rotation, translation):
    h = np.eye(4)
    h[:3, :3] = rotation
    h[:3, 3] = translation
    return h


def naive_link_matrices(description: dict, q: JointState):
    """Producto de matrices 4x4 enlace por enlace leído directamente del YAML"""
    values = dict(zip([f"arm{i}" for i in range(7)] + ['spread'] + [f"flexion{i}" for i in range(3)],
                      q.as_vector()))
    ratio = description['coupling_ratio']
    frames = {}
    for raw in description['links']:
        origin = raw.get('origin', {})
        roll, pitch, yaw = origin.get('rpy', [0.0, 0.0, 0.0])
        rotation = (_axis_angle([0, 0, 1], yaw) @ _axis_angle([0, 1, 0], pitch)
                    @ _axis_angle([1, 0, 0], roll))
        frame = _homogeneous(rotation, origin.get('xyz', [0.0, 0.0, 0.0]))
        if raw.get('parent') is not None:
            frame = frames[raw['parent']] @ frame
        joint = raw.get('joint', {})
        if joint.get('type') == 'revolute':
            angle = joint.get('scale', 1.0) * values[joint['source']]
            if joint.get('coupled'):
                angle *= ratio
            frame = frame @ _homogeneous(_axis_angle(joint['axis'], angle), np.zeros(3))
        frames[raw['name']] = frame
    return [frames[raw['name']] for raw in description['links']]


def test_forward_kinematics_matches_naive_matrix_chain(chain, chain_path, rng):
    import yaml

    with open(chain_path, 'r', encoding='utf-8') as f:
        description = yaml.safe_load(f)
    for _ in range(50):
        q = random_state(chain, rng)
        expected = naive_link_matrices(description, q)
        for pose, matrix in zip(forward_kinematics(chain, q), expected):
            np.testing.assert_allclose(pose.rotation, matrix[:3, :3], atol=1e-9)
            np.testing.assert_allclose(pose.translation, matrix[:3, 3], atol=1e-9)


def test_link_geometry_is_rigid_across_configurations(chain, rng):
    local = {i: rng.normal(scale=0.05, size=(4, 3)) for i in range(len(chain.links))}

    def pairwise(poses):
        out = []
        for i, points in local.items():
            world = poses[i].apply(points)
            out.append(np.linalg.norm(world[:, None, :] - world[None, :, :], axis=2))
        return out

    reference = pairwise(forward_kinematics(chain, JointState()))
    for _ in range(20):
        found = pairwise(forward_kinematics(chain, random_state(chain, rng)))
        for a, b in zip(reference, found):
            np.testing.assert_allclose(a, b, atol=1e-9)


MIRROR_X = np.diag([-1.0, 1.0, 1.0])


def mirrored(obj: ObjectModel) -> ObjectModel:
    """Refleja la pose de una primitiva simétrica respecto al plano x = 0"""
    pose = obj.pose
    return obj.with_pose(RigidTransform(MIRROR_X @ pose.rotation @ MIRROR_X,
                                        MIRROR_X @ pose.translation))


def test_contacts_survive_mirroring_hand_and_object(chain, rng):
    threshold = 0.002
    touching = 0
    for trial in range(100):
        flexion = rng.uniform(0.0, 1.5, 3)
        q = JointState(spread=float(rng.uniform(0.0, 1.0)), flexion=tuple(flexion))
        q_mirror = JointState(spread=q.spread, flexion=(flexion[1], flexion[0], flexion[2]))

        poses = forward_kinematics(chain, q)
        centers, radii, _ = sphere_centers(chain, poses, chain.hand_indices())
        k = int(rng.integers(len(centers)))
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        if trial % 2:
            radius = float(rng.uniform(0.003, 0.01))
            gap = radii[k] + radius + rng.uniform(-0.001, 0.001)
            obj = ObjectModel.sphere(radius, RigidTransform.from_translation(centers[k] + gap * direction))
        else:
            extents = rng.uniform(0.01, 0.05, 3)
            rotation = RigidTransform.from_rotvec(rng.normal(size=3)).rotation
            # una cara de la caja a ±1 mm de la esfera elegida
            normal = rotation[:, 0]
            offset = radii[k] + extents[0] / 2.0 + rng.uniform(-0.001, 0.001)
            obj = ObjectModel.box(extents, RigidTransform(rotation, centers[k] + offset * normal))

        contacts = detect_contacts(chain, q, obj, threshold)
        reflected = detect_contacts(chain, q_mirror, mirrored(obj), threshold)
        assert len(reflected) == len(contacts)
        assert reflected.max_penetration == pytest.approx(contacts.max_penetration, abs=1e-9)
        touching += len(contacts) > 0
    assert touching >= 25
