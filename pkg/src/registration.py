# src/registration.py
"""Registro rígido: Procrustes en forma cerrada, ICP recortado y calibración brazo/objeto."""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from errors import (AllPairsRejected, DegenerateConfiguration, EmptyAfterCrop, EmptyCloud,
                    EmptyPartition, InvalidParameter, LengthMismatch)
from geometry import (ObjectModel, closest_surface_point, sample_object_surface,
                      signed_distance)
from rgbd import PointCloud, crop_cloud
from transforms import RigidTransform

logger = logging.getLogger(__name__)

RANK_TOL = 1e-12


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    convergence_tol: float = 1e-5
    trim_fraction: float = 0.2
    max_pair_distance: Optional[float] = 0.1
    with_scale: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidParameter(f"max_iterations debe ser >= 1: {self.max_iterations}")
        if not self.convergence_tol > 0:
            raise InvalidParameter(f"convergence_tol debe ser > 0: {self.convergence_tol}")
        if not 0.0 <= self.trim_fraction < 1.0:
            raise InvalidParameter(f"trim_fraction fuera de [0, 1): {self.trim_fraction}")
        if self.max_pair_distance is not None and not self.max_pair_distance > 0:
            raise InvalidParameter(f"max_pair_distance debe ser > 0: {self.max_pair_distance}")

    @staticmethod
    def from_config(params: dict) -> "IcpParams":
        return IcpParams(
            max_iterations=int(params.get('max_iterations', 50)),
            convergence_tol=float(params.get('convergence_tol', 1e-5)),
            trim_fraction=float(params.get('trim_fraction', 0.2)),
            max_pair_distance=params.get('max_pair_distance', 0.1),
            with_scale=bool(params.get('with_scale', False)),
        )


@dataclass(frozen=True)
class RegistrationResult:
    transform: RigidTransform
    rms_residual: float
    iterations_used: int
    converged: bool
    history: Tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {'transform': self.transform.to_list(), 'rms_residual': self.rms_residual,
                'iterations_used': self.iterations_used, 'converged': self.converged}


def _as_points(data) -> np.ndarray:
    if isinstance(data, PointCloud):
        return data.points
    return np.asarray(data, dtype=float).reshape(-1, 3)


def _rms(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def procrustes(source, target, with_scale: bool = False) -> RigidTransform:
    """
    Transformación rígida (opcionalmente con escala) de mínimos cuadrados

    Minimiza Σ‖T(s_i) − t_i‖² con la SVD de la covarianza cruzada; la
    reflexión se excluye corrigiendo el signo del último valor singular.

    Args:
        source: Puntos (N, 3)
        target: Puntos (N, 3) en correspondencia
        with_scale: Estimar escala uniforme

    Returns:
        RigidTransform que lleva source sobre target
    """
    src = _as_points(source)
    dst = _as_points(target)
    if len(src) != len(dst):
        raise LengthMismatch(f"source tiene {len(src)} puntos y target {len(dst)}")
    if len(src) < 3:
        raise DegenerateConfiguration(f"Se necesitan al menos 3 pares, hay {len(src)}")

    mu_s, mu_t = src.mean(axis=0), dst.mean(axis=0)
    xs, xt = src - mu_s, dst - mu_t
    cov = xt.T @ xs / len(src)
    u, s, vt = np.linalg.svd(cov)
    if s[1] <= RANK_TOL * max(s[0], RANK_TOL):
        raise DegenerateConfiguration("Puntos colineales o coincidentes: covarianza de rango < 2")

    d = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[2] = -1.0
    rotation = u @ np.diag(d) @ vt

    scale = 1.0
    if with_scale:
        var_s = np.mean(np.sum(xs ** 2, axis=1))
        scale = float(np.sum(s * d) / var_s)
    translation = mu_t - scale * rotation @ mu_s
    return RigidTransform(rotation, translation, scale)


def icp(source, target, init: RigidTransform = None, params: IcpParams = None) -> RegistrationResult:
    """
    ICP punto a punto con recorte de los peores pares

    Cada iteración empareja por vecino más cercano (k-d tree sobre target) y
    actualiza con Procrustes sobre los K mejores pares. K se fija en la primera
    iteración: min(ceil((1 − trim) · n), pares a menos de max_pair_distance).
    Con K constante el RMS de los pares seleccionados nunca aumenta; un paso que
    lo empeoraría (ruido numérico) se descarta y se da por convergido.

    Args:
        source: Nube a mover
        target: Nube de referencia
        init: Transformación inicial
        params: Parámetros de ICP

    Returns:
        RegistrationResult con la transformación total (incluye init)
    """
    params = params or IcpParams()
    init = init or RigidTransform.identity()
    src = _as_points(source)
    dst = _as_points(target)
    if len(src) == 0 or len(dst) == 0:
        raise EmptyCloud(f"Nube vacía: source={len(src)}, target={len(dst)}")

    tree = cKDTree(dst)
    keep = max(1, math.ceil((1.0 - params.trim_fraction) * len(src)))
    pair_count = None
    current = init
    history = []
    previous = None
    converged = False

    for iteration in range(1, params.max_iterations + 1):
        moved = current.apply(src)
        dist, idx = tree.query(moved)
        if pair_count is None:
            within = len(src)
            if params.max_pair_distance is not None:
                within = int(np.count_nonzero(dist <= params.max_pair_distance))
            if within == 0:
                raise AllPairsRejected(
                    f"Ningún par a menos de {params.max_pair_distance} m en la iteración {iteration}"
                )
            pair_count = min(keep, within)
        selected = np.argsort(dist, kind='stable')[:pair_count]
        before = float(np.sqrt(np.mean(dist[selected] ** 2)))
        if previous is None:
            previous = before

        delta = procrustes(moved[selected], dst[idx[selected]], params.with_scale)
        rms = _rms(delta.apply(moved[selected]), dst[idx[selected]])
        if rms > before:
            history.append(before)
            converged = True
            break
        current = delta @ current
        history.append(rms)

        if abs(previous - rms) < params.convergence_tol:
            converged = True
            break
        previous = rms

    logger.debug("ICP: %d iteraciones, RMS %.6g m, convergió=%s", len(history), history[-1], converged)
    return RegistrationResult(current, history[-1], len(history), converged, tuple(history))


def align_cloud_to_arm(cloud: PointCloud, arm_samples: np.ndarray, init: RigidTransform,
                       params: IcpParams = None, crop_margin: float = 0.05,
                       crop: bool = True) -> RegistrationResult:
    """
    Alinea la nube de la cámara al modelo muestreado del brazo

    La nube se lleva al marco del brazo con la semilla manual, se recorta a la
    caja envolvente de las muestras dilatada en crop_margin y se refina con ICP.

    Returns:
        RegistrationResult con la transformación nube -> marco del brazo
    """
    arm = _as_points(arm_samples)
    if len(arm) == 0:
        raise EmptyCloud("El modelo del brazo no tiene muestras")
    moved = cloud.transformed(init)
    if crop:
        moved = crop_cloud(moved, arm.min(axis=0) - crop_margin, arm.max(axis=0) + crop_margin)
        if len(moved) == 0:
            raise EmptyAfterCrop("Ningún punto de la nube cae en la zona del brazo")
        logger.info("Nube recortada a la zona del brazo: %d de %d puntos", len(moved), len(cloud))

    result = icp(moved, arm, RigidTransform.identity(), params)
    return RegistrationResult(result.transform @ init, result.rms_residual,
                              result.iterations_used, result.converged, result.history)


@dataclass(frozen=True)
class ObjectAlignment:
    """Resultado del alineamiento alternado mano/objeto"""
    object_pose: RigidTransform
    hand_residual: float
    object_residual: float
    cloud_transform: RigidTransform
    rounds_used: int
    residual_history: Tuple[Tuple[float, float], ...] = ()

    def to_dict(self) -> dict:
        return {'object_pose': self.object_pose.to_list(), 'hand_residual': self.hand_residual,
                'object_residual': self.object_residual,
                'cloud_transform': self.cloud_transform.to_list(), 'rounds_used': self.rounds_used}


def partition_cloud(points: np.ndarray, hand_samples: np.ndarray, obj: ObjectModel,
                    margin: float, max_distance: Optional[float],
                    arm_samples: Optional[np.ndarray] = None):
    """
    Divide la nube en (mano, objeto) por proximidad

    Un punto es de la mano si está a menos de margin de una muestra de la mano,
    del brazo si las muestras del brazo están a menos de margin y más cerca, y
    del objeto si |sdf| ≤ max_distance y el objeto queda más cerca que la mano.

    Returns:
        (máscara mano, máscara objeto)
    """
    d_hand, _ = cKDTree(hand_samples).query(points)
    hand = d_hand <= margin
    arm = np.zeros(len(points), dtype=bool)
    if arm_samples is not None and len(arm_samples):
        d_arm, _ = cKDTree(arm_samples).query(points)
        arm = (d_arm <= margin) & (d_arm < d_hand)
        hand &= ~arm
    sdf = np.abs(signed_distance(obj, points))
    limit = np.inf if max_distance is None else max_distance
    obj_mask = ~hand & ~arm & (sdf <= limit) & (sdf < d_hand)
    return hand, obj_mask


def _refine_object_pose(points: np.ndarray, obj: ObjectModel, iterations: int,
                        tol: float) -> ObjectModel:
    """Procrustes iterado contra los puntos más cercanos de la superficie analítica"""
    for _ in range(iterations):
        projected = closest_surface_point(obj, points)
        delta = procrustes(points, projected)
        obj = obj.with_pose(delta.inverse() @ obj.pose)
        if np.linalg.norm(delta.translation) < tol and delta.rotation_angle() < tol:
            break
    return obj


def alternate_object_alignment(cloud: PointCloud, hand_samples: np.ndarray, obj: ObjectModel,
                               init_object: RigidTransform, rounds: int = 3,
                               params: IcpParams = None, arm_samples: np.ndarray = None,
                               partition_margin: float = 0.015, object_density: float = 20000.0,
                               refine_iterations: int = 10) -> ObjectAlignment:
    """
    Alterna la alineación de la nube a la mano y del objeto a la nube

    Todo se expresa en el marco de las muestras de la mano (la palma). Una
    ronda que empeora cualquiera de los residuos se descarta y termina el
    proceso.

    Args:
        cloud: Nube ya llevada aproximadamente al marco de la mano
        hand_samples: Muestras del modelo de la mano
        obj: Forma del objeto (su pose se ignora)
        init_object: Pose inicial del objeto indicada manualmente
        rounds: Número máximo de rondas (>= 1)
        params: Parámetros de ICP
        arm_samples: Muestras del brazo para excluir sus puntos (opcional)

    Returns:
        ObjectAlignment con la pose del objeto en el marco de la mano
    """
    if rounds < 1:
        raise InvalidParameter(f"rounds debe ser >= 1: {rounds}")
    params = params or IcpParams()
    hand = _as_points(hand_samples)
    if len(hand) == 0:
        raise EmptyCloud("La mano no tiene muestras")

    model_local = sample_object_surface(obj.with_pose(RigidTransform.identity()), density=object_density)
    cloud_transform = RigidTransform.identity()
    current = obj.with_pose(init_object)
    best = None
    history = []

    for round_index in range(1, rounds + 1):
        points = cloud_transform.apply(cloud.points)
        hand_mask, object_mask = partition_cloud(points, hand, current, partition_margin,
                                                 params.max_pair_distance, arm_samples)
        if not hand_mask.any():
            raise EmptyPartition("Ningún punto de la nube corresponde a la mano")
        if not object_mask.any():
            raise EmptyPartition("Ningún punto de la nube corresponde al objeto")

        hand_result = icp(points[hand_mask], hand, RigidTransform.identity(), params)
        new_cloud_transform = hand_result.transform @ cloud_transform

        object_points = hand_result.transform.apply(points[object_mask])
        object_result = icp(object_points, current.pose.apply(model_local),
                            RigidTransform.identity(), params)
        candidate = current.with_pose(object_result.transform.inverse() @ current.pose)
        candidate = _refine_object_pose(object_points, candidate, refine_iterations,
                                        params.convergence_tol)
        object_residual = float(np.sqrt(np.mean(signed_distance(candidate, object_points) ** 2)))
        hand_residual = hand_result.rms_residual

        logger.info("Ronda %d: residuo mano %.6f m, objeto %.6f m (%d/%d puntos)",
                    round_index, hand_residual, object_residual,
                    int(hand_mask.sum()), int(object_mask.sum()))

        if best is not None and (hand_residual > best.hand_residual
                                 or object_residual > best.object_residual):
            logger.info("La ronda %d empeora los residuos; se conserva la anterior", round_index)
            break

        cloud_transform = new_cloud_transform
        current = candidate
        history.append((hand_residual, object_residual))
        best = ObjectAlignment(current.pose, hand_residual, object_residual,
                               cloud_transform, round_index, tuple(history))

    return best
