# src/transforms.py
"""Transformaciones rígidas (con escala opcional) entre cámara, brazo y objeto."""
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import yaml
from scipy.spatial.transform import Rotation

from errors import InvalidParameter

ORTHO_TOL = 1e-9


def nearest_rotation(matrix: np.ndarray) -> np.ndarray:
    """Proyecta una matriz 3x3 sobre SO(3) por SVD (sin tocar las que ya son rotaciones)"""
    matrix = np.asarray(matrix, dtype=float)
    if (np.allclose(matrix.T @ matrix, np.eye(3), rtol=0.0, atol=ORTHO_TOL)
            and abs(np.linalg.det(matrix) - 1.0) <= ORTHO_TOL):
        return matrix
    u, _, vt = np.linalg.svd(matrix)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """p' = scale * R p + t"""
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=float).reshape(3, 3)
        translation = np.array(self.translation, dtype=float).reshape(3)
        if not self.scale > 0:
            raise InvalidParameter(f"La escala debe ser positiva: {self.scale}")
        if not np.allclose(rotation.T @ rotation, np.eye(3), rtol=0.0, atol=ORTHO_TOL):
            raise InvalidParameter("La rotación no es ortonormal")
        if abs(np.linalg.det(rotation) - 1.0) > ORTHO_TOL:
            raise InvalidParameter("La rotación debe tener determinante +1")
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, 'rotation', rotation)
        object.__setattr__(self, 'translation', translation)
        object.__setattr__(self, 'scale', float(self.scale))

    def __eq__(self, other) -> bool:
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation)
                and self.scale == other.scale)

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes(), self.scale))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform()

    @staticmethod
    def from_translation(xyz: Sequence[float]) -> "RigidTransform":
        return RigidTransform(np.eye(3), np.asarray(xyz, dtype=float))

    @staticmethod
    def from_rotvec(rotvec: Sequence[float], translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        return RigidTransform(Rotation.from_rotvec(rotvec).as_matrix(), translation)

    @staticmethod
    def from_rpy(rpy: Sequence[float], translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        """Roll, pitch, yaw en radianes (ejes fijos x, y, z)"""
        return RigidTransform(Rotation.from_euler('xyz', rpy).as_matrix(), translation)

    @staticmethod
    def from_matrix(matrix: np.ndarray) -> "RigidTransform":
        """Desde matriz homogénea 4x4 (la escala se extrae del bloque 3x3)"""
        matrix = np.asarray(matrix, dtype=float)
        block = matrix[:3, :3]
        scale = float(np.cbrt(np.linalg.det(block)))
        return RigidTransform(nearest_rotation(block / scale), matrix[:3, 3], scale)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Aplica la transformación a un punto (3,) o a un arreglo (N, 3)"""
        points = np.asarray(points, dtype=float)
        return self.scale * points @ self.rotation.T + self.translation

    def apply_vector(self, vectors: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(vectors, dtype=float) @ self.rotation.T

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: primero other, después self"""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.scale * self.rotation @ other.translation + self.translation,
            self.scale * other.scale,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation) / self.scale, 1.0 / self.scale)

    def rotation_angle(self) -> float:
        """Ángulo de la rotación en radianes"""
        cos = (np.trace(self.rotation) - 1.0) / 2.0
        return float(np.arccos(np.clip(cos, -1.0, 1.0)))

    def distance_to(self, other: "RigidTransform"):
        """(error de traslación en m, error de rotación en rad)"""
        delta = self.inverse().compose(other)
        return float(np.linalg.norm(self.translation - other.translation)), delta.rotation_angle()

    def to_list(self) -> list:
        """13 números: rotación por filas, traslación, escala"""
        return [float(v) for v in self.rotation.reshape(-1)] + \
               [float(v) for v in self.translation] + [self.scale]

    @staticmethod
    def from_list(values: Sequence[float]) -> "RigidTransform":
        values = [float(v) for v in values]
        if len(values) not in (12, 13):
            raise InvalidParameter(f"Se esperaban 12 o 13 números, hay {len(values)}")
        rotation = np.asarray(values[:9]).reshape(3, 3)
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=1e-3):
            raise InvalidParameter("La rotación leída no es ortonormal")
        scale = values[12] if len(values) == 13 else 1.0
        return RigidTransform(nearest_rotation(rotation), values[9:12], scale)

    def to_dict(self) -> dict:
        return {'rotation': self.rotation.tolist(),
                'translation': self.translation.tolist(),
                'scale': self.scale}


def load_transform(path: str) -> RigidTransform:
    """
    Lee una transformación YAML

    Acepta `values` (13 números) o `rotation`/`translation`/`scale`, o bien
    `rpy_deg` + `translation` para las semillas manuales.
    """
    with open(path, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f) or {}
    if 'values' in data:
        return RigidTransform.from_list(data['values'])
    translation = data.get('translation', [0.0, 0.0, 0.0])
    if 'rpy_deg' in data:
        transform = RigidTransform.from_rpy(np.radians(data['rpy_deg']), translation)
    else:
        rotation = np.asarray(data.get('rotation', np.eye(3)), dtype=float)
        transform = RigidTransform(nearest_rotation(rotation), translation)
    scale = float(data.get('scale', 1.0))
    if scale != 1.0:
        transform = RigidTransform(transform.rotation, transform.translation, scale)
    return transform


def save_transform(transform: RigidTransform, path: str):
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump({'values': transform.to_list()}, f, default_flow_style=None)
