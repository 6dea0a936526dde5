# src/geometry.py
"""Modelos de objetos (primitivas y mallas cerradas) y consultas de distancia con signo.

Convención: la distancia es negativa dentro del objeto. Las cajas se definen
por sus extensiones completas, el cilindro tiene su eje en z y está centrado
en el origen de su marco local.
"""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import yaml

from errors import InvalidParameter, IoFailure, OpenMesh
from transforms import RigidTransform

SHAPES = ('box', 'cylinder', 'sphere', 'mesh')
GRADIENT_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class ObjectModel:
    """Objeto del estudio con su pose en el marco de trabajo"""
    shape: str
    dimensions: tuple = ()
    pose: RigidTransform = field(default_factory=RigidTransform.identity)
    vertices: Optional[np.ndarray] = None
    faces: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise InvalidParameter(f"Forma desconocida: {self.shape}")
        dims = tuple(float(d) for d in self.dimensions)
        expected = {'box': 3, 'cylinder': 2, 'sphere': 1, 'mesh': 0}[self.shape]
        if len(dims) != expected:
            raise InvalidParameter(
                f"'{self.shape}' requiere {expected} dimensiones, recibió {len(dims)}"
            )
        if any(not d > 0 for d in dims):
            raise InvalidParameter(f"Dimensiones no positivas: {dims}")
        object.__setattr__(self, 'dimensions', dims)

        if self.shape == 'mesh':
            if self.vertices is None or self.faces is None:
                raise InvalidParameter("Una malla necesita vértices y caras")
            vertices = np.array(self.vertices, dtype=float).reshape(-1, 3)
            faces = np.array(self.faces, dtype=int).reshape(-1, 3)
            if len(faces) == 0 or faces.min() < 0 or faces.max() >= len(vertices):
                raise InvalidParameter("Índices de cara fuera de rango")
            vertices.setflags(write=False)
            faces.setflags(write=False)
            object.__setattr__(self, 'vertices', vertices)
            object.__setattr__(self, 'faces', faces)

    # --- constructores ---------------------------------------------------
    @staticmethod
    def box(extents: Sequence[float], pose: RigidTransform = None, name: str = "") -> "ObjectModel":
        return ObjectModel('box', tuple(extents), pose or RigidTransform.identity(), name=name)

    @staticmethod
    def cylinder(radius: float, height: float, pose: RigidTransform = None, name: str = "") -> "ObjectModel":
        return ObjectModel('cylinder', (radius, height), pose or RigidTransform.identity(), name=name)

    @staticmethod
    def sphere(radius: float, pose: RigidTransform = None, name: str = "") -> "ObjectModel":
        return ObjectModel('sphere', (radius,), pose or RigidTransform.identity(), name=name)

    @staticmethod
    def mesh(vertices, faces, pose: RigidTransform = None, name: str = "") -> "ObjectModel":
        return ObjectModel('mesh', (), pose or RigidTransform.identity(), vertices, faces, name)

    def with_pose(self, pose: RigidTransform) -> "ObjectModel":
        return ObjectModel(self.shape, self.dimensions, pose, self.vertices, self.faces, self.name)

    def scaled(self, factor: float) -> "ObjectModel":
        """Escala uniforme de la forma y de la traslación de su pose"""
        pose = RigidTransform(self.pose.rotation, self.pose.translation * factor, self.pose.scale)
        vertices = None if self.vertices is None else self.vertices * factor
        return ObjectModel(self.shape, tuple(d * factor for d in self.dimensions), pose,
                           vertices, self.faces, self.name)

    @property
    def is_closed(self) -> bool:
        """Malla cerrada y orientada: cada arista dirigida aparece una vez y su opuesta también"""
        if self.shape != 'mesh':
            return True
        edges = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        directed = {tuple(e) for e in edges.tolist()}
        if len(directed) != len(edges):
            return False
        return all((b, a) in directed for a, b in directed)

    def to_dict(self) -> dict:
        data = {'shape': self.shape, 'pose': self.pose.to_list()}
        if self.name:
            data['name'] = self.name
        if self.shape == 'mesh':
            data['vertices'] = self.vertices.tolist()
            data['faces'] = self.faces.tolist()
        else:
            data['dimensions'] = list(self.dimensions)
        return data

    @staticmethod
    def from_dict(data: dict) -> "ObjectModel":
        pose = RigidTransform.from_list(data['pose']) if 'pose' in data else RigidTransform.identity()
        return ObjectModel(data['shape'], tuple(data.get('dimensions', ())), pose,
                           data.get('vertices'), data.get('faces'), data.get('name', ""))


# --- distancias locales ---------------------------------------------------

def _box_sdf(p: np.ndarray, extents) -> np.ndarray:
    q = np.abs(p) - np.asarray(extents) / 2.0
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(q.max(axis=1), 0.0)
    return outside + inside


def _cylinder_sdf(p: np.ndarray, radius: float, height: float) -> np.ndarray:
    d = np.column_stack([np.linalg.norm(p[:, :2], axis=1) - radius, np.abs(p[:, 2]) - height / 2.0])
    outside = np.linalg.norm(np.maximum(d, 0.0), axis=1)
    inside = np.minimum(d.max(axis=1), 0.0)
    return outside + inside


def _segment_closest(p, a, b):
    ab = b - a
    denom = np.einsum('ij,ij->i', ab, ab)
    t = np.einsum('ij,ij->i', p - a, ab) / np.where(denom > 0, denom, 1.0)
    return a + np.clip(t, 0.0, 1.0)[:, None] * ab


def _triangle_closest(p: np.ndarray, a, b, c) -> np.ndarray:
    """Punto más cercano de cada triángulo (a, b, c) al punto p (3,)"""
    p = np.broadcast_to(p, a.shape)
    n = np.cross(b - a, c - a)
    nn = np.einsum('ij,ij->i', n, n)
    nn_safe = np.where(nn > 0, nn, 1.0)
    proj = p - (np.einsum('ij,ij->i', p - a, n) / nn_safe)[:, None] * n

    # coordenadas baricéntricas de la proyección
    w_a = np.einsum('ij,ij->i', np.cross(c - b, proj - b), n) / nn_safe
    w_b = np.einsum('ij,ij->i', np.cross(a - c, proj - c), n) / nn_safe
    w_c = 1.0 - w_a - w_b
    inside = (w_a >= 0) & (w_b >= 0) & (w_c >= 0) & (nn > 0)

    candidates = np.stack([_segment_closest(p, a, b), _segment_closest(p, b, c),
                           _segment_closest(p, c, a)])
    dist = np.linalg.norm(candidates - p[None], axis=2)
    edge_best = candidates[np.argmin(dist, axis=0), np.arange(len(a))]
    return np.where(inside[:, None], proj, edge_best)


def _winding_number(p: np.ndarray, a, b, c) -> float:
    """Número de giro generalizado (suma de ángulos sólidos / 4π)"""
    ra, rb, rc = a - p, b - p, c - p
    la, lb, lc = (np.linalg.norm(r, axis=1) for r in (ra, rb, rc))
    numerator = np.einsum('ij,ij->i', ra, np.cross(rb, rc))
    denominator = (la * lb * lc + np.einsum('ij,ij->i', ra, rb) * lc
                   + np.einsum('ij,ij->i', rb, rc) * la + np.einsum('ij,ij->i', rc, ra) * lb)
    return float(np.sum(2.0 * np.arctan2(numerator, denominator)) / (4.0 * np.pi))


def _mesh_closest(obj: ObjectModel, points: np.ndarray):
    a, b, c = (obj.vertices[obj.faces[:, k]] for k in range(3))
    closest = np.empty_like(points)
    signs = np.empty(len(points))
    for i, p in enumerate(points):
        candidates = _triangle_closest(p, a, b, c)
        j = np.argmin(np.linalg.norm(candidates - p, axis=1))
        closest[i] = candidates[j]
        signs[i] = -1.0 if _winding_number(p, a, b, c) > 0.5 else 1.0
    return closest, signs


def _local_sdf(obj: ObjectModel, local: np.ndarray) -> np.ndarray:
    if obj.shape == 'box':
        return _box_sdf(local, obj.dimensions)
    if obj.shape == 'cylinder':
        return _cylinder_sdf(local, *obj.dimensions)
    if obj.shape == 'sphere':
        return np.linalg.norm(local, axis=1) - obj.dimensions[0]
    if not obj.is_closed:
        raise OpenMesh(f"La malla '{obj.name}' no es cerrada; no hay distancia con signo")
    closest, signs = _mesh_closest(obj, local)
    return signs * np.linalg.norm(local - closest, axis=1)


# --- consultas públicas ---------------------------------------------------

def signed_distance(obj: ObjectModel, points: np.ndarray) -> np.ndarray:
    """
    Distancia con signo de cada punto a la superficie del objeto

    Args:
        obj: Objeto con su pose en el marco de los puntos
        points: Punto (3,) o arreglo (N, 3)

    Returns:
        Escalar o arreglo (N,) en metros, negativo dentro
    """
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    local = obj.pose.inverse().apply(points.reshape(-1, 3))
    sdf = _local_sdf(obj, local) * obj.pose.scale
    return float(sdf[0]) if single else sdf


def sdf_gradient(obj: ObjectModel, points: np.ndarray, step: float = GRADIENT_STEP) -> np.ndarray:
    """Gradiente unitario de la distancia con signo por diferencias centrales"""
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    pts = points.reshape(-1, 3)
    grad = np.zeros_like(pts)
    for axis in range(3):
        offset = np.zeros(3)
        offset[axis] = step
        grad[:, axis] = (signed_distance(obj, pts + offset) - signed_distance(obj, pts - offset)) / (2 * step)
    norms = np.linalg.norm(grad, axis=1)
    grad = np.where(norms[:, None] > 0, grad / np.where(norms > 0, norms, 1.0)[:, None], 0.0)
    return grad[0] if single else grad


def closest_surface_point(obj: ObjectModel, points: np.ndarray) -> np.ndarray:
    """Proyección de cada punto sobre la superficie del objeto"""
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    pts = points.reshape(-1, 3)
    if obj.shape == 'mesh':
        local = obj.pose.inverse().apply(pts)
        closest, _ = _mesh_closest(obj, local)
        result = obj.pose.apply(closest)
    else:
        sdf = signed_distance(obj, pts)
        result = pts - sdf[:, None] * sdf_gradient(obj, pts)
    return result[0] if single else result


def local_bounds(obj: ObjectModel):
    """Caja envolvente (min, max) en el marco local del objeto"""
    if obj.shape == 'box':
        half = np.asarray(obj.dimensions) / 2.0
    elif obj.shape == 'cylinder':
        radius, height = obj.dimensions
        half = np.array([radius, radius, height / 2.0])
    elif obj.shape == 'sphere':
        half = np.full(3, obj.dimensions[0])
    else:
        return obj.vertices.min(axis=0), obj.vertices.max(axis=0)
    return -half, half


def bounding_box_diagonal(obj: ObjectModel) -> float:
    """Diagonal de la caja envolvente local (independiente de la pose)"""
    lo, hi = local_bounds(obj)
    return float(np.linalg.norm(hi - lo) * obj.pose.scale)


def surface_area(obj: ObjectModel) -> float:
    if obj.shape == 'box':
        x, y, z = obj.dimensions
        area = 2.0 * (x * y + y * z + x * z)
    elif obj.shape == 'cylinder':
        radius, height = obj.dimensions
        area = 2.0 * np.pi * radius * (radius + height)
    elif obj.shape == 'sphere':
        area = 4.0 * np.pi * obj.dimensions[0] ** 2
    else:
        a, b, c = (obj.vertices[obj.faces[:, k]] for k in range(3))
        area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1).sum()
    return float(area * obj.pose.scale ** 2)


def _sample_triangles(a, b, c, n, rng):
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    idx = rng.choice(len(a), size=n, p=areas / areas.sum())
    r1, r2 = rng.random(n), rng.random(n)
    s = np.sqrt(r1)
    return ((1 - s)[:, None] * a[idx] + (s * (1 - r2))[:, None] * b[idx]
            + (s * r2)[:, None] * c[idx])


def sample_object_surface(obj: ObjectModel, density: float = None, count: int = None,
                          seed: int = 0) -> np.ndarray:
    """
    Muestreo uniforme por área de la superficie del objeto

    Args:
        obj: Objeto a muestrear
        density: Puntos por m² (se usa si no se da count)
        count: Número exacto de puntos
        seed: Semilla del generador

    Returns:
        Arreglo (N, 3) en el marco de trabajo
    """
    if count is None:
        if density is None or not density > 0:
            raise InvalidParameter("Se requiere densidad positiva o un número de puntos")
        count = int(round(density * surface_area(obj)))
    rng = np.random.default_rng(seed)
    if count <= 0:
        return np.zeros((0, 3))

    if obj.shape == 'sphere':
        v = rng.normal(size=(count, 3))
        local = obj.dimensions[0] * v / np.linalg.norm(v, axis=1, keepdims=True)
    elif obj.shape == 'box':
        lo, hi = local_bounds(obj)
        dims = hi - lo
        face_areas = np.array([dims[1] * dims[2], dims[0] * dims[2], dims[0] * dims[1]]).repeat(2)
        face = rng.choice(6, size=count, p=face_areas / face_areas.sum())
        local = lo + rng.random((count, 3)) * dims
        axis = face // 2
        local[np.arange(count), axis] = np.where(face % 2 == 0, lo[axis], hi[axis])
    elif obj.shape == 'cylinder':
        radius, height = obj.dimensions
        side, cap = 2 * np.pi * radius * height, np.pi * radius ** 2
        part = rng.choice(3, size=count, p=np.array([side, cap, cap]) / (side + 2 * cap))
        theta = rng.random(count) * 2 * np.pi
        rho = np.where(part == 0, radius, radius * np.sqrt(rng.random(count)))
        z = np.where(part == 0, (rng.random(count) - 0.5) * height,
                     np.where(part == 1, height / 2.0, -height / 2.0))
        local = np.column_stack([rho * np.cos(theta), rho * np.sin(theta), z])
    else:
        a, b, c = (obj.vertices[obj.faces[:, k]] for k in range(3))
        local = _sample_triangles(a, b, c, count, rng)
    return obj.pose.apply(local)


def load_object(path: str) -> ObjectModel:
    """Lee un objeto desde YAML (shape, dimensions | vertices/faces, pose, name)"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}
    except OSError as e:
        raise IoFailure(f"No se pudo leer el objeto {path}: {e}") from e
    if 'pose' in data and isinstance(data['pose'], dict):
        pose = data['pose']
        rpy = np.radians(pose.get('rpy_deg', [0.0, 0.0, 0.0]))
        data = dict(data, pose=RigidTransform.from_rpy(rpy, pose.get('xyz', [0.0, 0.0, 0.0])).to_list())
    return ObjectModel.from_dict(data)
