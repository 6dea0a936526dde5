# src/rgbd.py
"""Nubes de puntos coloreadas a partir de pares color/profundidad registrados.

Marco de cámara: +x derecha, +y abajo, +z adelante. Metros internamente,
milímetros en disco; una profundidad 0 significa "sin lectura".
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from errors import DimensionMismatch, InvalidParameter
from transforms import RigidTransform


@dataclass(frozen=True)
class Intrinsics:
    """Parámetros pinhole de la cámara"""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidParameter(f"Focales no positivas: fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidParameter(
                f"Punto principal ({self.cx}, {self.cy}) fuera de la imagen "
                f"{self.width}x{self.height}"
            )


@dataclass(frozen=True)
class RGBDFrame:
    """Imagen de color (H, W, 3) uint8 y profundidad (H, W) uint16 en mm"""
    color: np.ndarray
    depth: np.ndarray
    intrinsics: Intrinsics
    timestamp_s: float = 0.0


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Puntos (N, 3) en metros con colores (N, 3) uint8 en correspondencia"""
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    colors: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if self.colors is None:
            colors = np.full((len(points), 3), 255, dtype=np.uint8)
        else:
            colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if len(points) != len(colors):
            raise DimensionMismatch(
                f"Puntos ({len(points)}) y colores ({len(colors)}) no coinciden"
            )
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'colors', colors)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return np.array_equal(self.points, other.points) and np.array_equal(self.colors, other.colors)

    def subset(self, mask: np.ndarray) -> "PointCloud":
        return PointCloud(self.points[mask], self.colors[mask])

    def transformed(self, transform: RigidTransform) -> "PointCloud":
        return PointCloud(transform.apply(self.points), self.colors)

    def merged(self, other: "PointCloud") -> "PointCloud":
        return PointCloud(np.vstack([self.points, other.points]),
                          np.vstack([self.colors, other.colors]))


def to_point_cloud(frame: RGBDFrame, depth_scale: float = 1000.0) -> PointCloud:
    """
    Retroproyecta cada píxel con profundidad > 0 y le asigna su color

    Args:
        frame: Par color/profundidad registrado en la misma rejilla
        depth_scale: Unidades de profundidad por metro (mm -> 1000)

    Returns:
        PointCloud con un punto por píxel válido
    """
    intr = frame.intrinsics
    depth = np.asarray(frame.depth)
    color = np.asarray(frame.color)
    if depth.shape != (intr.height, intr.width):
        raise DimensionMismatch(
            f"Profundidad {depth.shape} no coincide con intrínsecos {(intr.height, intr.width)}"
        )
    if color.shape[:2] != depth.shape:
        raise DimensionMismatch(f"Color {color.shape[:2]} y profundidad {depth.shape} difieren")

    v, u = np.nonzero(depth > 0)
    z = depth[v, u].astype(float) / depth_scale
    x = (u - intr.cx) * z / intr.fx
    y = (v - intr.cy) * z / intr.fy
    points = np.column_stack([x, y, z])
    colors = color[v, u, :3] if color.ndim == 3 else np.repeat(color[v, u][:, None], 3, axis=1)
    return PointCloud(points, colors)


def project_points(points: np.ndarray, intrinsics: Intrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """Proyecta puntos del marco de cámara a coordenadas de píxel (u, v)"""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    z = points[:, 2]
    u = points[:, 0] * intrinsics.fx / z + intrinsics.cx
    v = points[:, 1] * intrinsics.fy / z + intrinsics.cy
    return u, v


def crop_cloud(cloud: PointCloud, box_min: Sequence[float], box_max: Sequence[float],
               frame: Optional[RigidTransform] = None) -> PointCloud:
    """
    Conserva los puntos dentro de la caja cerrada [box_min, box_max]

    Si se da `frame`, la caja está expresada en ese marco y los puntos se
    transforman con él antes de la comprobación (los puntos devueltos no cambian).
    """
    box_min = np.asarray(box_min, dtype=float)
    box_max = np.asarray(box_max, dtype=float)
    if np.any(box_min > box_max):
        raise InvalidParameter(f"Caja inválida: min {box_min} > max {box_max}")
    points = cloud.points if frame is None else frame.apply(cloud.points)
    mask = np.all((points >= box_min) & (points <= box_max), axis=1)
    return cloud.subset(mask)
