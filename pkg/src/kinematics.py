# src/kinematics.py
"""Cinemática directa del brazo de 7 ejes con mano de tres dedos acoplados.

La geometría de cada enlace se aproxima con esferas (centro + radio), lo que
da profundidades de penetración y direcciones de salida cerradas.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from errors import InvalidParameter, IoFailure, JointLimitViolation
from geometry import ObjectModel, closest_surface_point, signed_distance
from transforms import RigidTransform

logger = logging.getLogger(__name__)

ARM_JOINTS = 7
FINGERS = ('1', '2', '3')
HAND_PARTS = ('palm',) + FINGERS
LIMIT_EPS = 1e-12
GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


@dataclass(frozen=True)
class JointState:
    """Ángulos del brazo (7), apertura y flexión proximal de los tres dedos"""
    arm: Tuple[float, ...] = (0.0,) * ARM_JOINTS
    spread: float = 0.0
    flexion: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    timestamp_s: float = 0.0

    def __post_init__(self):
        arm = tuple(float(a) for a in self.arm)
        flexion = tuple(float(f) for f in self.flexion)
        if len(arm) != ARM_JOINTS or len(flexion) != 3:
            raise InvalidParameter(
                f"Se esperaban {ARM_JOINTS} ángulos de brazo y 3 de flexión, "
                f"hay {len(arm)} y {len(flexion)}"
            )
        object.__setattr__(self, 'arm', arm)
        object.__setattr__(self, 'flexion', flexion)
        object.__setattr__(self, 'spread', float(self.spread))
        object.__setattr__(self, 'timestamp_s', float(self.timestamp_s))

    def as_vector(self) -> np.ndarray:
        """Vector de 11 ángulos: brazo, apertura, flexiones"""
        return np.array(self.arm + (self.spread,) + self.flexion)

    @staticmethod
    def from_vector(values: Sequence[float], timestamp_s: float = 0.0) -> "JointState":
        values = [float(v) for v in values]
        if len(values) != ARM_JOINTS + 4:
            raise InvalidParameter(f"Se esperaban 11 ángulos, hay {len(values)}")
        return JointState(tuple(values[:7]), values[7], tuple(values[8:11]), timestamp_s)

    def with_flexion(self, finger_index: int, value: float) -> "JointState":
        flexion = list(self.flexion)
        flexion[finger_index] = float(value)
        return replace(self, flexion=tuple(flexion))

    def value(self, source: str) -> float:
        """Valor de la fuente 'arm0'..'arm6', 'spread' o 'flexion0'..'flexion2'"""
        if source == 'spread':
            return self.spread
        if source.startswith('arm'):
            return self.arm[int(source[3:])]
        if source.startswith('flexion'):
            return self.flexion[int(source[7:])]
        raise InvalidParameter(f"Fuente de articulación desconocida: {source}")

    def to_dict(self) -> dict:
        return {'timestamp_s': self.timestamp_s, 'arm': list(self.arm),
                'spread': self.spread, 'flexion': list(self.flexion)}

    @staticmethod
    def from_dict(data: dict) -> "JointState":
        return JointState(tuple(data['arm']), data['spread'], tuple(data['flexion']),
                          data.get('timestamp_s', 0.0))


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float


@dataclass(frozen=True, eq=False)
class Link:
    """Enlace de la cadena: transformación fija al padre seguida de su articulación"""
    name: str
    parent: Optional[int]
    origin: RigidTransform
    joint_type: str = 'fixed'
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    source: Optional[str] = None
    scale: float = 1.0
    coupled: bool = False
    finger: Optional[str] = None
    spheres: Tuple[Sphere, ...] = ()


@dataclass(frozen=True, eq=False)
class KinematicChain:
    """Árbol de enlaces ordenado (cada padre aparece antes que sus hijos)"""
    links: Tuple[Link, ...]
    coupling_ratio: float
    arm_limits: Tuple[Tuple[float, float], ...]
    spread_limits: Tuple[float, float]
    flexion_limits: Tuple[float, float]
    name: str = ""

    def index(self, name: str) -> int:
        for i, link in enumerate(self.links):
            if link.name == name:
                return i
        raise KeyError(name)

    @property
    def palm_index(self) -> int:
        for i, link in enumerate(self.links):
            if link.finger == 'palm':
                return i
        raise InvalidParameter("La cadena no define un enlace de palma")

    def hand_indices(self) -> List[int]:
        return [i for i, link in enumerate(self.links) if link.finger in HAND_PARTS]

    def finger_indices(self, finger: str) -> List[int]:
        return [i for i, link in enumerate(self.links) if link.finger == finger]

    def fingertip_indices(self) -> Dict[str, int]:
        """Último enlace con geometría de cada dedo"""
        tips = {}
        for i, link in enumerate(self.links):
            if link.finger in FINGERS and link.spheres:
                tips[link.finger] = i
        return tips

    def limits_vector(self) -> np.ndarray:
        """Límites (11, 2) en el orden de JointState.as_vector"""
        return np.array(list(self.arm_limits) + [self.spread_limits] + [self.flexion_limits] * 3)

    def joint_ranges(self) -> np.ndarray:
        limits = self.limits_vector()
        return limits[:, 1] - limits[:, 0]

    def check_limits(self, q: JointState):
        limits = self.limits_vector()
        values = q.as_vector()
        bad = np.nonzero((values < limits[:, 0] - LIMIT_EPS) | (values > limits[:, 1] + LIMIT_EPS))[0]
        if len(bad):
            i = int(bad[0])
            raise JointLimitViolation(
                f"Articulación {i} = {values[i]:.6f} fuera de [{limits[i, 0]}, {limits[i, 1]}]"
            )

    def distal_angle(self, q: JointState, finger_index: int) -> float:
        return self.coupling_ratio * q.flexion[finger_index]

    @staticmethod
    def from_dict(data: dict) -> "KinematicChain":
        limits = data.get('limits', {})
        arm_limits = tuple(tuple(float(v) for v in pair)
                           for pair in limits.get('arm', [[-np.pi, np.pi]] * ARM_JOINTS))
        if len(arm_limits) != ARM_JOINTS:
            raise InvalidParameter(f"Se esperaban {ARM_JOINTS} límites de brazo")

        names: Dict[str, int] = {}
        links = []
        for raw in data.get('links', []):
            name = raw['name']
            parent_name = raw.get('parent')
            if parent_name is not None and parent_name not in names:
                raise InvalidParameter(
                    f"El enlace '{name}' referencia al padre '{parent_name}' antes de definirlo"
                )
            if name in names:
                raise InvalidParameter(f"Enlace duplicado: {name}")

            origin = raw.get('origin', {})
            joint = raw.get('joint', {}) or {}
            joint_type = joint.get('type', 'fixed')
            if joint_type not in ('fixed', 'revolute'):
                raise InvalidParameter(f"Tipo de articulación no soportado: {joint_type}")
            axis = np.asarray(joint.get('axis', [0.0, 0.0, 1.0]), dtype=float)
            axis = axis / np.linalg.norm(axis)
            if joint_type == 'revolute' and not joint.get('source'):
                raise InvalidParameter(f"La articulación de '{name}' no tiene fuente")

            spheres = []
            for s in raw.get('spheres', []) or []:
                if not float(s['radius']) > 0:
                    raise InvalidParameter(f"Radio no positivo en '{name}'")
                spheres.append(Sphere(np.asarray(s['center'], dtype=float), float(s['radius'])))

            finger = raw.get('finger')
            links.append(Link(
                name=name,
                parent=None if parent_name is None else names[parent_name],
                origin=RigidTransform.from_rpy(origin.get('rpy', [0.0, 0.0, 0.0]),
                                               origin.get('xyz', [0.0, 0.0, 0.0])),
                joint_type=joint_type,
                axis=axis,
                source=joint.get('source'),
                scale=float(joint.get('scale', 1.0)),
                coupled=bool(joint.get('coupled', False)),
                finger=None if finger is None else str(finger),
                spheres=tuple(spheres),
            ))
            names[name] = len(links) - 1

        return KinematicChain(
            links=tuple(links),
            coupling_ratio=float(data.get('coupling_ratio', 0.424)),
            arm_limits=arm_limits,
            spread_limits=tuple(float(v) for v in limits.get('spread', [0.0, np.pi])),
            flexion_limits=tuple(float(v) for v in limits.get('flexion', [0.0, 2.44])),
            name=data.get('name', ""),
        )


def load_chain(path: str) -> KinematicChain:
    """Carga la descripción de la cadena desde YAML"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}
    except OSError as e:
        raise IoFailure(f"No se pudo leer la cadena {path}: {e}") from e
    chain = KinematicChain.from_dict(data)
    logger.debug("Cadena '%s' cargada: %d enlaces", chain.name, len(chain.links))
    return chain


def _joint_transform(link: Link, angle: float) -> RigidTransform:
    return RigidTransform.from_rotvec(link.axis * angle)


def joint_angle(chain: KinematicChain, link: Link, q: JointState) -> float:
    """Ángulo efectivo de la articulación de un enlace (con acople si aplica)"""
    if link.joint_type == 'fixed':
        return 0.0
    angle = link.scale * q.value(link.source)
    if link.coupled:
        angle *= chain.coupling_ratio
    return angle


def forward_kinematics(chain: KinematicChain, q: JointState,
                       base: RigidTransform = None) -> List[RigidTransform]:
    """
    Pose de cada enlace en el marco del mundo

    Args:
        chain: Cadena cinemática
        q: Estado articular dentro de límites
        base: Pose de la base (identidad por defecto)

    Returns:
        Lista de poses en el orden de chain.links
    """
    chain.check_limits(q)
    base = base or RigidTransform.identity()
    poses: List[RigidTransform] = []
    for link in chain.links:
        parent = base if link.parent is None else poses[link.parent]
        pose = parent @ link.origin
        if link.joint_type == 'revolute':
            pose = pose @ _joint_transform(link, joint_angle(chain, link, q))
        poses.append(pose)
    return poses


def palm_pose(chain: KinematicChain, q: JointState) -> RigidTransform:
    return forward_kinematics(chain, q)[chain.palm_index]


def fibonacci_sphere(center: np.ndarray, radius: float, count: int) -> np.ndarray:
    """count puntos casi uniformes sobre una esfera"""
    if count <= 0:
        return np.zeros((0, 3))
    i = np.arange(count)
    z = 1.0 - 2.0 * (i + 0.5) / count
    r = np.sqrt(1.0 - z * z)
    phi = i * GOLDEN_ANGLE
    unit = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return np.asarray(center) + radius * unit


def sample_surface(chain: KinematicChain, q: JointState, density: float,
                   link_indices: Optional[Sequence[int]] = None,
                   poses: Optional[List[RigidTransform]] = None) -> np.ndarray:
    """
    Nube de muestras sobre las esferas de los enlaces

    Cada esfera aporta round(density * 4πr²) puntos.

    Args:
        chain: Cadena cinemática
        q: Estado articular
        density: Puntos por m²
        link_indices: Enlaces a incluir (todos por defecto)
        poses: Poses precalculadas (opcional)

    Returns:
        Arreglo (N, 3) en el marco del mundo
    """
    if not density > 0:
        raise InvalidParameter(f"La densidad debe ser positiva: {density}")
    poses = poses or forward_kinematics(chain, q)
    indices = range(len(chain.links)) if link_indices is None else link_indices
    chunks = [np.zeros((0, 3))]
    for i in indices:
        for sphere in chain.links[i].spheres:
            count = int(round(density * 4.0 * np.pi * sphere.radius ** 2))
            chunks.append(poses[i].apply(fibonacci_sphere(sphere.center, sphere.radius, count)))
    return np.vstack(chunks)


def hand_samples(chain: KinematicChain, q: JointState, density: float) -> np.ndarray:
    return sample_surface(chain, q, density, chain.hand_indices())


def sphere_centers(chain: KinematicChain, poses: List[RigidTransform],
                   indices: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(centros (N, 3), radios (N,), índice de enlace (N,)) de las esferas dadas"""
    centers, radii, owner = [], [], []
    for i in indices:
        for sphere in chain.links[i].spheres:
            centers.append(poses[i].apply(sphere.center))
            radii.append(sphere.radius)
            owner.append(i)
    if not centers:
        return np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=int)
    return np.array(centers), np.array(radii), np.array(owner)


@dataclass(frozen=True)
class Contact:
    finger: str
    link: str
    point: Tuple[float, float, float]
    signed_distance: float

    def to_dict(self) -> dict:
        return {'finger': self.finger, 'link': self.link,
                'point': list(self.point), 'signed_distance': self.signed_distance}

    @staticmethod
    def from_dict(data: dict) -> "Contact":
        return Contact(str(data['finger']), data['link'],
                       tuple(float(v) for v in data['point']), float(data['signed_distance']))


@dataclass(frozen=True)
class ContactSet:
    """Contactos por enlace de la mano y penetración máxima de toda la mano"""
    contacts: Tuple[Contact, ...] = ()
    max_penetration: float = 0.0

    @property
    def finger_ids(self) -> frozenset:
        """Dedos en contacto (sin contar la palma)"""
        return frozenset(c.finger for c in self.contacts if c.finger in FINGERS)

    def __len__(self) -> int:
        return len(self.contacts)


def detect_contacts(chain: KinematicChain, q: JointState, obj: ObjectModel,
                    threshold: float, poses: Optional[List[RigidTransform]] = None) -> ContactSet:
    """
    Contactos entre la mano y el objeto

    Para cada enlace de la mano se toma su esfera más cercana al objeto; es
    contacto si la distancia con signo desde la superficie de la esfera está
    dentro de ±threshold.

    Args:
        chain: Cadena cinemática
        q: Estado articular
        obj: Objeto con pose en el marco del mundo
        threshold: Umbral de contacto en metros

    Returns:
        ContactSet con un contacto como máximo por enlace
    """
    if not threshold > 0:
        raise InvalidParameter(f"El umbral de contacto debe ser positivo: {threshold}")
    poses = poses or forward_kinematics(chain, q)
    centers, radii, owner = sphere_centers(chain, poses, chain.hand_indices())
    if len(centers) == 0:
        return ContactSet()

    sd = signed_distance(obj, centers) - radii
    contacts = []
    for i in sorted(set(owner.tolist())):
        mask = np.nonzero(owner == i)[0]
        best = mask[np.argmin(sd[mask])]
        if abs(sd[best]) <= threshold:
            point = closest_surface_point(obj, centers[best])
            link = chain.links[i]
            contacts.append(Contact(link.finger, link.name,
                                    tuple(float(v) for v in point), float(sd[best])))
    max_penetration = float(max(0.0, -sd.min()))
    return ContactSet(tuple(contacts), max_penetration)


def nearest_state(states: Sequence[JointState], t: float) -> JointState:
    """Registro articular más cercano al instante t"""
    if not states:
        raise InvalidParameter("No hay estados articulares")
    times = np.array([s.timestamp_s for s in states])
    return states[int(np.argmin(np.abs(times - t)))]
