# src/grasps.py
"""Agarres y rangos de agarre: interpolación, resolución de penetraciones,
distancias entre agarres, similitud y agrupamiento."""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist
from scipy.spatial.transform import Rotation, Slerp

from errors import GraspTie, GroupTooSmall, InvalidParameter, MixedContext, Unresolvable
from geometry import ObjectModel, bounding_box_diagonal, sdf_gradient, signed_distance
from kinematics import (FINGERS, ContactSet, JointState, KinematicChain, detect_contacts,
                        forward_kinematics, sphere_centers)
from transforms import RigidTransform

logger = logging.getLogger(__name__)

PENETRATION_TOLERANCE = 1e-3
TIE_TOLERANCE = 1e-9


class GraspLabel(str, Enum):
    GOOD = "good"
    BAD = "bad"


class GraspTask(str, Enum):
    PICK_UP = "pick-up"
    NATURAL = "natural"


@dataclass(frozen=True)
class Grasp:
    """
    Agarre resuelto

    object_pose_in_palm sitúa el objeto en el marco de la palma. Los agarres
    de mano humana no llevan estado articular.
    """
    id: str
    object_name: str
    label: GraspLabel
    task: GraspTask
    joints: Optional[JointState] = None
    object_pose_in_palm: RigidTransform = field(default_factory=RigidTransform.identity)
    contacts: ContactSet = field(default_factory=ContactSet)
    hand: str = "robot"
    participant_id: str = ""
    warnings: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'label', GraspLabel(self.label))
        object.__setattr__(self, 'task', GraspTask(self.task))
        object.__setattr__(self, 'warnings', tuple(self.warnings))
        if self.hand not in ('robot', 'human'):
            raise InvalidParameter(f"Mano desconocida: {self.hand}")
        if self.hand == 'robot' and self.joints is None:
            raise InvalidParameter(f"El agarre robótico '{self.id}' no tiene articulaciones")
        if self.contacts.max_penetration > PENETRATION_TOLERANCE + 1e-12:
            raise Unresolvable(
                f"El agarre '{self.id}' penetra {self.contacts.max_penetration * 1000:.3f} mm"
            )

    @property
    def context(self) -> Tuple[str, GraspTask]:
        return self.object_name, self.task

    def palm_in_object(self) -> np.ndarray:
        """Posición de la palma en el marco del objeto"""
        return self.object_pose_in_palm.inverse().translation


@dataclass(frozen=True)
class GraspRange:
    """Agarre original más 0 a 2 extremos"""
    id: str
    original: Grasp
    extremes: Tuple[Grasp, ...] = ()
    symmetry: Optional[dict] = None
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, 'extremes', tuple(self.extremes))
        if len(self.extremes) > 2:
            raise InvalidParameter(f"El rango '{self.id}' tiene {len(self.extremes)} extremos")
        for extreme in self.extremes:
            if (extreme.label, extreme.task, extreme.object_name) != \
                    (self.original.label, self.original.task, self.original.object_name):
                raise MixedContext(
                    f"El extremo '{extreme.id}' no comparte objeto, tarea o etiqueta con "
                    f"el original '{self.original.id}'"
                )

    @property
    def is_point(self) -> bool:
        return not self.extremes


@dataclass(frozen=True)
class ResolveParams:
    palm_step: float = 0.001
    flexion_step: float = 0.01
    max_steps: int = 10000
    penetration_tolerance: float = PENETRATION_TOLERANCE
    contact_threshold: float = 0.002

    def __post_init__(self):
        if not (self.palm_step > 0 and self.flexion_step > 0 and self.max_steps >= 1):
            raise InvalidParameter("Pasos y presupuesto de resolución deben ser positivos")
        if not self.contact_threshold > 0:
            raise InvalidParameter(f"Umbral de contacto no positivo: {self.contact_threshold}")

    @staticmethod
    def from_config(params: dict) -> "ResolveParams":
        return ResolveParams(
            palm_step=float(params.get('palm_step', 0.001)),
            flexion_step=float(params.get('flexion_step', 0.01)),
            max_steps=int(params.get('max_steps', 10000)),
            penetration_tolerance=float(params.get('penetration_tolerance', PENETRATION_TOLERANCE)),
            contact_threshold=float(params.get('contact_threshold', 0.002)),
        )


@dataclass(frozen=True)
class DistanceWeights:
    joint: float = 0.5
    palm: float = 0.5

    @staticmethod
    def from_config(params: dict) -> "DistanceWeights":
        return DistanceWeights(float(params.get('joint_weight', 0.5)),
                               float(params.get('palm_weight', 0.5)))


def _check_context(grasps: Iterable[Grasp]):
    contexts = {g.context for g in grasps}
    if len(contexts) > 1:
        raise MixedContext(f"Agarres de objetos o tareas distintas: {sorted(map(str, contexts))}")


def interpolate_raw(a: Grasp, b: Grasp, t: float) -> JointState:
    """
    Interpolación lineal componente a componente de los ángulos

    Los ángulos se tratan como reales (sin vuelta de 2π).
    """
    _check_context([a, b])
    if not 0.0 <= t <= 1.0:
        raise InvalidParameter(f"t fuera de [0, 1]: {t}")
    va, vb = a.joints.as_vector(), b.joints.as_vector()
    values = np.clip((1.0 - t) * va + t * vb, np.minimum(va, vb), np.maximum(va, vb))
    stamp = (1.0 - t) * a.joints.timestamp_s + t * b.joints.timestamp_s
    return JointState.from_vector(values, stamp)


def _interpolate_pose(a: RigidTransform, b: RigidTransform, t: float) -> RigidTransform:
    if t == 0.0:
        return a
    if t == 1.0:
        return b
    slerp = Slerp([0.0, 1.0], Rotation.from_matrix([a.rotation, b.rotation]))
    rotation = slerp([t]).as_matrix()[0]
    return RigidTransform(rotation, (1.0 - t) * a.translation + t * b.translation)


class GraspResolver:
    """
    Resuelve intersecciones mano/objeto y cierra los dedos hasta el contacto

    Fases: (1) desplazar la mano fuera de la superficie siguiendo el gradiente
    de la distancia en la esfera más profunda de la palma; (2) abrir los
    dedos que penetran; (3) cerrar secuencialmente los dedos que deben tocar.
    El desplazamiento de la fase 1 se guarda en la pose del objeto respecto a
    la palma; las articulaciones del brazo no cambian.
    """

    def __init__(self, chain: KinematicChain, params: ResolveParams = None):
        self.chain = chain
        self.params = params or ResolveParams()
        self.palm_history: List[float] = []
        self.warnings: List[str] = []

    def _clearance(self, q: JointState, obj: ObjectModel, indices: Sequence[int]) -> float:
        poses = forward_kinematics(self.chain, q)
        centers, radii, _ = sphere_centers(self.chain, poses, indices)
        if len(centers) == 0:
            return np.inf
        return float(np.min(signed_distance(obj, centers) - radii))

    def _move_palm_out(self, q: JointState, obj: ObjectModel) -> ObjectModel:
        palm = [i for i, link in enumerate(self.chain.links) if link.finger == 'palm']
        poses = forward_kinematics(self.chain, q)
        centers, radii, _ = sphere_centers(self.chain, poses, palm)
        if len(centers) == 0:
            return obj

        sd = signed_distance(obj, centers) - radii
        self.palm_history.append(max(0.0, -float(sd.min())))
        if sd.min() >= -self.params.penetration_tolerance:
            return obj

        for _ in range(self.params.max_steps):
            deepest = int(np.argmin(sd))
            direction = sdf_gradient(obj, centers[deepest])
            if not np.any(direction):
                direction = centers[deepest] - obj.pose.translation
                norm = np.linalg.norm(direction)
                direction = direction / norm if norm > 0 else np.array([0.0, 0.0, 1.0])
            # mover el objeto en sentido contrario equivale a sacar la mano
            shift = RigidTransform.from_translation(-self.params.palm_step * direction)
            obj = obj.with_pose(shift @ obj.pose)
            sd = signed_distance(obj, centers) - radii
            self.palm_history.append(max(0.0, -float(sd.min())))
            if sd.min() >= 0.0:
                return obj
        raise Unresolvable(f"La palma sigue penetrando tras {self.params.max_steps} pasos")

    def _open_finger(self, q: JointState, obj: ObjectModel, k: int) -> JointState:
        indices = self.chain.finger_indices(FINGERS[k])
        clearance = self._clearance(q, obj, indices)
        if clearance >= -self.params.penetration_tolerance:
            return q
        low = self.chain.flexion_limits[0]
        for _ in range(self.params.max_steps):
            if q.flexion[k] <= low:
                break
            q = q.with_flexion(k, max(low, q.flexion[k] - self.params.flexion_step))
            clearance = self._clearance(q, obj, indices)
            if clearance >= 0.0:
                return q
        raise Unresolvable(
            f"El dedo {FINGERS[k]} sigue penetrando {-clearance * 1000:.2f} mm con la flexión mínima"
        )

    def _close_finger(self, q: JointState, obj: ObjectModel, k: int) -> JointState:
        indices = self.chain.finger_indices(FINGERS[k])
        tol = self.params.penetration_tolerance
        threshold = self.params.contact_threshold
        clearance = self._clearance(q, obj, indices)
        high = self.chain.flexion_limits[1]
        for _ in range(self.params.max_steps):
            if -tol <= clearance <= threshold:
                return q
            if q.flexion[k] >= high:
                break
            candidate = q.with_flexion(k, min(high, q.flexion[k] + self.params.flexion_step))
            new_clearance = self._clearance(candidate, obj, indices)
            if new_clearance < -tol:
                self.warnings.append(f"NoContactReachable: el dedo {FINGERS[k]} atraviesa el objeto")
                return q
            q, clearance = candidate, new_clearance
        if -tol <= clearance <= threshold:
            return q
        self.warnings.append(f"NoContactReachable: el dedo {FINGERS[k]} llegó a su límite sin contacto")
        return q

    def resolve(self, raw: JointState, obj: ObjectModel, contact_fingers: Iterable[str] = (),
                grasp_id: str = "", object_name: str = "", label: GraspLabel = GraspLabel.GOOD,
                task: GraspTask = GraspTask.NATURAL, participant_id: str = "") -> Grasp:
        """
        Args:
            raw: Estado articular crudo dentro de límites
            obj: Objeto con su pose en el marco del mundo
            contact_fingers: Dedos ('1', '2', '3') que deben terminar en contacto

        Returns:
            Grasp sin penetraciones mayores que la tolerancia
        """
        self.chain.check_limits(raw)
        self.palm_history = []
        self.warnings = []

        obj = self._move_palm_out(raw, obj)
        q = raw
        for k in range(len(FINGERS)):
            q = self._open_finger(q, obj, k)
        for finger in sorted(set(contact_fingers) & set(FINGERS)):
            q = self._close_finger(q, obj, FINGERS.index(finger))

        poses = forward_kinematics(self.chain, q)
        contacts = detect_contacts(self.chain, q, obj, self.params.contact_threshold, poses)
        if contacts.max_penetration > self.params.penetration_tolerance:
            raise Unresolvable(
                f"Penetración residual de {contacts.max_penetration * 1000:.3f} mm tras resolver"
            )
        for warning in self.warnings:
            logger.warning("%s (%s)", warning, grasp_id or "sin id")

        object_pose_in_palm = poses[self.chain.palm_index].inverse() @ obj.pose
        return Grasp(grasp_id, object_name or obj.name, label, task, q, object_pose_in_palm,
                     contacts, participant_id=participant_id, warnings=tuple(self.warnings))


def resolve_grasp(raw: JointState, obj: ObjectModel, chain: KinematicChain,
                  params: ResolveParams = None, contact_fingers: Iterable[str] = (),
                  **grasp_fields) -> Grasp:
    return GraspResolver(chain, params).resolve(raw, obj, contact_fingers, **grasp_fields)


def object_in_world(grasp: Grasp, obj: ObjectModel, chain: KinematicChain) -> ObjectModel:
    """Coloca la forma del objeto en el mundo según la palma del agarre"""
    palm = forward_kinematics(chain, grasp.joints)[chain.palm_index]
    return obj.with_pose(palm @ grasp.object_pose_in_palm)


def interpolate_range(grasp_range: GraspRange, t: float, obj: ObjectModel, chain: KinematicChain,
                      params: ResolveParams = None, extreme_index: int = 0,
                      grasp_id: str = None) -> Grasp:
    """
    Agarre intermedio entre el original (t=0) y un extremo (t=1)

    La pose del objeto se interpola entre las de ambos agarres y los dedos que
    deben cerrarse son los que tocan en los agarres con peso no nulo.
    """
    if grasp_range.is_point:
        raise InvalidParameter(f"El rango '{grasp_range.id}' no tiene extremos")
    if not 0 <= extreme_index < len(grasp_range.extremes):
        raise InvalidParameter(f"Índice de extremo inválido: {extreme_index}")
    a, b = grasp_range.original, grasp_range.extremes[extreme_index]
    raw = interpolate_raw(a, b, t)

    pose = _interpolate_pose(object_in_world(a, obj, chain).pose,
                             object_in_world(b, obj, chain).pose, t)
    fingers = set()
    if t < 1.0:
        fingers |= a.contacts.finger_ids
    if t > 0.0:
        fingers |= b.contacts.finger_ids

    return resolve_grasp(raw, obj.with_pose(pose), chain, params, fingers,
                         grasp_id=grasp_id or f"{grasp_range.id}@{t:.4f}",
                         object_name=a.object_name, label=a.label, task=a.task,
                         participant_id=a.participant_id)


def grasp_distance(a: Grasp, b: Grasp, obj: ObjectModel, chain: KinematicChain,
                   weights: DistanceWeights = None) -> float:
    """
    Distancia entre agarres: media de |Δq| normalizada por el rango de cada
    articulación más la distancia entre palmas normalizada por la diagonal
    de la caja envolvente del objeto, ponderadas.
    """
    weights = weights or DistanceWeights()
    joint_term = float(np.mean(np.abs(a.joints.as_vector() - b.joints.as_vector()) / chain.joint_ranges()))
    palm_term = float(np.linalg.norm(a.palm_in_object() - b.palm_in_object()) / bounding_box_diagonal(obj))
    return weights.joint * joint_term + weights.palm * palm_term


@dataclass(frozen=True)
class NearestExtreme:
    label: str
    margin: float
    d_original: float
    d_extreme: float


def nearest_extreme(candidate: Grasp, original: Grasp, extreme: Grasp, obj: ObjectModel,
                    chain: KinematicChain, weights: DistanceWeights = None) -> NearestExtreme:
    """Decide si el candidato se parece más al original o al extremo"""
    _check_context([candidate, original, extreme])
    d_original = grasp_distance(candidate, original, obj, chain, weights)
    d_extreme = grasp_distance(candidate, extreme, obj, chain, weights)
    if abs(d_original - d_extreme) <= TIE_TOLERANCE:
        raise GraspTie(d_original, d_extreme)
    label = 'original' if d_original < d_extreme else 'extreme'
    return NearestExtreme(label, abs(d_original - d_extreme), d_original, d_extreme)


@dataclass(frozen=True)
class SimilarityReport:
    joint_variation: Tuple[float, ...]
    mean_joint_variation: float
    contact_count_range: Tuple[int, int]
    palm_spread: float
    fingertip_spread: float

    def to_dict(self) -> dict:
        return {'joint_variation': list(self.joint_variation),
                'mean_joint_variation': self.mean_joint_variation,
                'contact_count_range': list(self.contact_count_range),
                'palm_spread': self.palm_spread, 'fingertip_spread': self.fingertip_spread}


def fingertips_in_object(grasp: Grasp, chain: KinematicChain) -> Dict[str, np.ndarray]:
    """Puntas de los dedos en el marco del objeto"""
    poses = forward_kinematics(chain, grasp.joints)
    palm_inv = poses[chain.palm_index].inverse()
    to_object = grasp.object_pose_in_palm.inverse() @ palm_inv
    tips = {}
    for finger, i in chain.fingertip_indices().items():
        tip_local = chain.links[i].spheres[-1].center
        tips[finger] = to_object.apply(poses[i].apply(tip_local))
    return tips


def _max_pairwise(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    return float(pdist(points).max())


def similarity(group: Sequence[Grasp], obj: ObjectModel, chain: KinematicChain) -> SimilarityReport:
    """
    Métricas de similitud de un grupo de agarres

    Args:
        group: Al menos dos agarres del mismo objeto y tarea
        obj: Forma del objeto (normaliza por su diagonal)
        chain: Cadena cinemática (rangos articulares y puntas)

    Returns:
        SimilarityReport con desviaciones poblacionales normalizadas
    """
    if len(group) < 2:
        raise GroupTooSmall(f"Se necesitan al menos 2 agarres, hay {len(group)}")
    _check_context(group)

    q = np.array([g.joints.as_vector() for g in group])
    variation = q.std(axis=0) / chain.joint_ranges()
    counts = [len(g.contacts.finger_ids) for g in group]
    diagonal = bounding_box_diagonal(obj)

    palms = np.array([g.palm_in_object() for g in group])
    tips = [fingertips_in_object(g, chain) for g in group]
    fingertip = max((_max_pairwise(np.array([t[f] for t in tips])) for f in tips[0]), default=0.0)

    return SimilarityReport(
        joint_variation=tuple(float(v) for v in variation),
        mean_joint_variation=float(variation.mean()),
        contact_count_range=(min(counts), max(counts)),
        palm_spread=_max_pairwise(palms) / diagonal,
        fingertip_spread=fingertip / diagonal,
    )


def group_grasps(grasps: Sequence[Grasp], obj: ObjectModel, chain: KinematicChain,
                 threshold: float, weights: DistanceWeights = None) -> List[List[Grasp]]:
    """
    Agrupamiento por enlace simple bajo la distancia entre agarres

    El resultado no depende del orden de entrada: los agarres se ordenan por
    id y los grupos por su primer id.
    """
    if not grasps:
        return []
    _check_context(grasps)
    ordered = sorted(grasps, key=lambda g: g.id)
    n = len(ordered)
    adjacency = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            if grasp_distance(ordered[i], ordered[j], obj, chain, weights) <= threshold:
                adjacency[i, j] = adjacency[j, i] = True
    _, labels = connected_components(adjacency, directed=False)

    groups: Dict[int, List[Grasp]] = {}
    for grasp, label in zip(ordered, labels):
        groups.setdefault(int(label), []).append(grasp)
    return sorted(groups.values(), key=lambda g: g[0].id)


def shared_groups(groups: Sequence[Sequence[Grasp]],
                  participant_of: Callable[[Grasp], str] = None) -> List[List[Grasp]]:
    """Grupos con agarres de al menos dos participantes distintos"""
    participant_of = participant_of or (lambda g: g.participant_id)
    return [list(g) for g in groups if len({participant_of(x) for x in g}) >= 2]
