# tests/test_geometry.py
import numpy as np
import pytest

from errors import InvalidParameter, OpenMesh
from geometry import (ObjectModel, bounding_box_diagonal, closest_surface_point, load_object,
                      sample_object_surface, sdf_gradient, signed_distance, surface_area)
from transforms import RigidTransform

TETRA_VERTICES = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
TETRA_FACES = [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]


def test_box_signed_distance():
    box = ObjectModel.box([0.2, 0.4, 0.6])
    assert signed_distance(box, [0.0, 0.0, 0.0]) == pytest.approx(-0.1)
    assert signed_distance(box, [0.3, 0.0, 0.0]) == pytest.approx(0.2)
    assert signed_distance(box, [0.2, 0.3, 0.4]) == pytest.approx(np.sqrt(0.03))
    values = signed_distance(box, np.array([[0.1, 0.0, 0.0], [0.0, 0.0, 0.0]]))
    np.testing.assert_allclose(values, [0.0, -0.1], atol=1e-15)


def test_pose_moves_the_object():
    box = ObjectModel.box([0.2, 0.4, 0.6], RigidTransform.from_rpy([0, 0, np.pi / 2], [1.0, 0.0, 0.0]))
    assert signed_distance(box, [1.0, 0.0, 0.0]) == pytest.approx(-0.1)
    # tras girar 90° en z la extensión de 0.4 queda a lo largo de x
    assert signed_distance(box, [1.25, 0.0, 0.0]) == pytest.approx(0.05)


def test_cylinder_and_sphere():
    cylinder = ObjectModel.cylinder(0.05, 0.2)
    assert signed_distance(cylinder, [0.1, 0.0, 0.0]) == pytest.approx(0.05)
    assert signed_distance(cylinder, [0.0, 0.0, 0.15]) == pytest.approx(0.05)
    assert signed_distance(cylinder, [0.0, 0.0, 0.0]) == pytest.approx(-0.05)
    sphere = ObjectModel.sphere(0.1)
    assert signed_distance(sphere, [0.0, 0.0, 0.3]) == pytest.approx(0.2)


def test_closed_mesh_sign_and_distance():
    tetra = ObjectModel.mesh(TETRA_VERTICES, TETRA_FACES)
    assert tetra.is_closed
    assert signed_distance(tetra, [0.1, 0.1, 0.1]) == pytest.approx(-0.1)
    assert signed_distance(tetra, [0.1, 0.1, -0.2]) == pytest.approx(0.2)
    np.testing.assert_allclose(closest_surface_point(tetra, [0.1, 0.1, -0.2]), [0.1, 0.1, 0.0],
                               atol=1e-12)


def test_open_mesh_has_no_signed_distance():
    open_mesh = ObjectModel.mesh(TETRA_VERTICES, TETRA_FACES[:3])
    assert not open_mesh.is_closed
    with pytest.raises(OpenMesh):
        signed_distance(open_mesh, [0.1, 0.1, 0.1])


def test_gradient_and_projection():
    box = ObjectModel.box([0.2, 0.4, 0.6])
    np.testing.assert_allclose(sdf_gradient(box, [0.3, 0.0, 0.0]), [1.0, 0.0, 0.0], atol=1e-6)
    sphere = ObjectModel.sphere(0.1)
    np.testing.assert_allclose(closest_surface_point(sphere, [0.0, 0.0, 0.3]), [0.0, 0.0, 0.1],
                               atol=1e-9)


@pytest.mark.parametrize("obj", [
    ObjectModel.box([0.12, 0.08, 0.05], RigidTransform.from_rotvec([0.2, 0.1, 0.0], [0.3, 0, 0])),
    ObjectModel.cylinder(0.04, 0.1),
    ObjectModel.sphere(0.07),
    ObjectModel.mesh(TETRA_VERTICES, TETRA_FACES),
])
def test_surface_samples_lie_on_the_surface(obj):
    samples = sample_object_surface(obj, count=200, seed=3)
    assert samples.shape == (200, 3)
    np.testing.assert_allclose(signed_distance(obj, samples), 0.0, atol=1e-9)


def test_density_sets_sample_count():
    sphere = ObjectModel.sphere(0.1)
    samples = sample_object_surface(sphere, density=1000.0)
    assert len(samples) == round(1000.0 * 4 * np.pi * 0.01)
    assert surface_area(sphere) == pytest.approx(4 * np.pi * 0.01)
    with pytest.raises(InvalidParameter):
        sample_object_surface(sphere)


def test_scaled_model():
    box = ObjectModel.box([0.1, 0.2, 0.3], RigidTransform.from_translation([0.1, 0.0, 0.0]))
    big = box.scaled(3.0)
    assert big.dimensions == pytest.approx((0.3, 0.6, 0.9))
    np.testing.assert_allclose(big.pose.translation, [0.3, 0.0, 0.0])
    assert bounding_box_diagonal(big) == pytest.approx(3 * bounding_box_diagonal(box))


def test_bounding_box_diagonal_ignores_pose():
    box = ObjectModel.box([0.2, 0.4, 0.6], RigidTransform.from_rotvec([0.3, 0.2, 0.1], [5, 5, 5]))
    assert bounding_box_diagonal(box) == pytest.approx(np.sqrt(0.56))


def test_invalid_models():
    with pytest.raises(InvalidParameter):
        ObjectModel('cone', (1.0,))
    with pytest.raises(InvalidParameter):
        ObjectModel('box', (1.0, 2.0))
    with pytest.raises(InvalidParameter):
        ObjectModel.sphere(-1.0)
    with pytest.raises(InvalidParameter):
        ObjectModel.mesh(TETRA_VERTICES, [[0, 1, 7]])


def test_dict_and_yaml(tmp_path):
    box = ObjectModel.box([0.1, 0.2, 0.3], RigidTransform.from_translation([0.0, 0.1, 0.0]), "Cereal")
    again = ObjectModel.from_dict(box.to_dict())
    assert again.dimensions == box.dimensions
    assert again.pose == box.pose
    assert again.name == "Cereal"

    path = tmp_path / "mug.yaml"
    path.write_text("shape: cylinder\nname: Mug\ndimensions: [0.04, 0.1]\n"
                    "pose: {xyz: [0.0, 0.0, 0.05], rpy_deg: [0, 0, 0]}\n")
    mug = load_object(str(path))
    assert mug.name == "Mug"
    assert signed_distance(mug, [0.0, 0.0, 0.2]) == pytest.approx(0.1)


@pytest.mark.parametrize("obj", [
    ObjectModel.box([0.12, 0.08, 0.05], RigidTransform.from_rotvec([0.2, 0.1, 0.0], [0.3, 0, 0])),
    ObjectModel.cylinder(0.04, 0.1),
    ObjectModel.sphere(0.07),
    ObjectModel.mesh(TETRA_VERTICES, TETRA_FACES),
])
def test_signed_distance_is_one_lipschitz(obj, rng):
    center = obj.pose.translation
    p = center + rng.uniform(-0.5, 0.5, (2000, 3))
    q = p + rng.normal(scale=0.05, size=(2000, 3))
    gap = np.abs(signed_distance(obj, p) - signed_distance(obj, q))
    assert np.all(gap <= np.linalg.norm(p - q, axis=1) + 1e-12)
