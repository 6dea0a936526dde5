# src/capture_analysis.py
import logging
import os
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

from annotations import AlignedAnnotation, align_annotations
from beep_detector import BeepDetector
from config_manager import ConfigManager
from data_loader import DataLoader
from errors import DanglingReference, InvalidParameter
from geometry import ObjectModel
from grasps import (DistanceWeights, Grasp, GraspTask, ResolveParams, SimilarityReport,
                    group_grasps, interpolate_range, similarity)
from kinematics import (JointState, KinematicChain, forward_kinematics, hand_samples,
                        nearest_state, sample_surface)
from ply_io import read_ply, write_ply
from registration import (IcpParams, ObjectAlignment, RegistrationResult,
                          align_cloud_to_arm, alternate_object_alignment)
from results_manager import (CountsReport, ResultsManager, aggregate_counts, range_census,
                             shake_summary, survey_summary)
from rgbd import PointCloud, to_point_cloud
from session_store import SessionRecord, StreamEntry, load_session, save_session
from timebase import BeepDetection, StreamOffset
from transforms import RigidTransform

logger = logging.getLogger(__name__)


def _banner(title: str):
    logger.info("=" * 50)
    logger.info(title)
    logger.info("=" * 50)


class CaptureAnalysis:
    """Clase principal del pipeline de captura y análisis de agarres"""

    def __init__(self, config_path: Optional[str] = "config.yaml",
                 config: Optional[ConfigManager] = None):
        self.config = config or ConfigManager(config_path)
        self.data_loader = DataLoader(self.config)
        self.beep_detector = BeepDetector(self.config)
        self.results_manager = ResultsManager(self.config)
        self._chain: Optional[KinematicChain] = None

    def chain(self, path: Optional[str] = None) -> KinematicChain:
        if path is not None:
            return self.data_loader.load_chain(path)
        if self._chain is None:
            self._chain = self.data_loader.load_chain()
        return self._chain

    def icp_params(self) -> IcpParams:
        return IcpParams.from_config(self.config.get_registration_params())

    def sample_density(self) -> float:
        """Puntos por m² con que se muestrea el modelo del brazo y la mano"""
        return float(self.config.get_kinematics_params()['sample_density'])

    # --- sincronización ---------------------------------------------------
    def synchronize(self, audio_a: str, audio_b: str, clock_a: str, clock_b: str,
                    refine_levels: Optional[int] = None,
                    session_path: Optional[str] = None) -> Tuple[BeepDetection, BeepDetection, StreamOffset]:
        """Detecta el beep en dos pistas y calcula el offset entre sus relojes"""
        _banner("SINCRONIZACIÓN POR BEEP")
        track_a = self.data_loader.load_audio(audio_a, clock_a)
        track_b = self.data_loader.load_audio(audio_b, clock_b)
        det_a, det_b, offset = self.beep_detector.synchronize(track_a, track_b, refine_levels)

        if self.config.get_plotting_params().get('save_plots', False):
            for detection in (det_a, det_b):
                self.beep_detector.plot_detection(self.beep_detector.series[detection.clock], detection)

        if session_path:
            self.register_offset(session_path, offset, [(audio_a, clock_a), (audio_b, clock_b)])
        return det_a, det_b, offset

    def register_offset(self, session_path: str, offset: StreamOffset,
                        streams: Sequence[Tuple[str, str]]):
        """Añade los flujos de audio y el offset al almacén de la sesión"""
        if os.path.exists(session_path):
            record = load_session(session_path)
        else:
            session_id = os.path.splitext(os.path.basename(session_path))[0]
            record = SessionRecord(session_id=session_id)

        catalog = list(record.streams)
        for path, clock in streams:
            name = f"audio_{clock}"
            if not any(s.name == name for s in catalog):
                catalog.append(StreamEntry(name, path, clock, 'wav'))
        offsets = [o for o in record.offsets
                   if {o.from_clock, o.to_clock} != {offset.from_clock, offset.to_clock}]
        offsets.append(offset)
        save_session(replace(record, streams=tuple(catalog), offsets=tuple(offsets)), session_path)

    # --- anotaciones --------------------------------------------------------
    def align_annotation_file(self, path: str, offset: StreamOffset) -> List[AlignedAnnotation]:
        _banner("ALINEAMIENTO DE ANOTACIONES")
        events = self.data_loader.load_annotations(path)
        aligned = align_annotations(events, offset)
        logger.info("   %d anotaciones en el reloj '%s'", len(aligned), offset.to_clock)
        return aligned

    def offset_from_session(self, session_path: str, from_clock: Optional[str] = None,
                            to_clock: Optional[str] = None) -> StreamOffset:
        params = self.config.get_annotation_params()
        record = load_session(session_path)
        return record.find_offset(from_clock or params['from_clock'], to_clock or params['to_clock'])

    # --- nubes de puntos ----------------------------------------------------
    def build_cloud(self, color: str, depth: str, intrinsics: str, output: str) -> PointCloud:
        _banner("NUBE DE PUNTOS RGB-D")
        frame = self.data_loader.load_frame(color, depth, intrinsics)
        cloud = to_point_cloud(frame, self.config.get_rgbd_params()['depth_scale'])
        write_ply(cloud, output)
        logger.info("   %d puntos escritos en %s", len(cloud), output)
        return cloud

    def _joint_state(self, joints_path: str, time_s: Optional[float]) -> JointState:
        states = self.data_loader.load_joint_stream(joints_path)
        if not states:
            raise InvalidParameter(f"El flujo articular {joints_path} está vacío")
        return states[0] if time_s is None else nearest_state(states, time_s)

    def align_arm(self, cloud_path: str, joints_path: str, init: RigidTransform,
                  chain_path: Optional[str] = None, time_s: Optional[float] = None,
                  crop: bool = True) -> RegistrationResult:
        """Alinea la nube de la cámara con el modelo del brazo en la configuración registrada"""
        _banner("ALINEAMIENTO NUBE -> BRAZO")
        chain = self.chain(chain_path)
        q = self._joint_state(joints_path, time_s)
        params = self.config.get_registration_params()
        arm = sample_surface(chain, q, self.sample_density())
        cloud = read_ply(cloud_path)
        result = align_cloud_to_arm(cloud, arm, init, self.icp_params(),
                                    params['crop_margin'], crop)
        logger.info("   RMS %.6f m en %d iteraciones (convergió: %s)",
                    result.rms_residual, result.iterations_used, result.converged)
        return result

    def align_object(self, cloud_path: str, joints_path: str, obj: ObjectModel,
                     init_object: RigidTransform, rounds: Optional[int] = None,
                     cloud_to_arm: Optional[RigidTransform] = None,
                     chain_path: Optional[str] = None,
                     time_s: Optional[float] = None) -> ObjectAlignment:
        """
        Alineamiento alternado mano/objeto en el marco de la palma

        Args:
            cloud_path: Nube PLY de la cámara
            joints_path: Flujo articular
            obj: Forma del objeto
            init_object: Pose inicial del objeto en el marco de la palma
            rounds: Rondas de alternancia
            cloud_to_arm: Transformación nube -> base del brazo (de align_arm)
        """
        _banner("ALINEAMIENTO MANO / OBJETO")
        chain = self.chain(chain_path)
        q = self._joint_state(joints_path, time_s)
        params = self.config.get_registration_params()

        poses = forward_kinematics(chain, q)
        to_palm = poses[chain.palm_index].inverse()
        density = self.sample_density()
        hand = to_palm.apply(hand_samples(chain, q, density))
        arm_indices = [i for i, link in enumerate(chain.links) if link.finger is None]
        arm = to_palm.apply(sample_surface(chain, q, density, arm_indices, poses))

        cloud = read_ply(cloud_path)
        cloud = cloud.transformed(to_palm @ (cloud_to_arm or RigidTransform.identity()))
        outcome = alternate_object_alignment(
            cloud, hand, obj, init_object,
            rounds=params['rounds'] if rounds is None else rounds,
            params=self.icp_params(),
            arm_samples=arm,
            partition_margin=params['partition_margin'],
            object_density=params['object_density'],
            refine_iterations=params['refine_iterations'],
        )
        logger.info("   Residuos: mano %.6f m, objeto %.6f m tras %d rondas",
                    outcome.hand_residual, outcome.object_residual, outcome.rounds_used)
        return outcome

    # --- agarres ------------------------------------------------------------
    def object_shape(self, record: SessionRecord, name: str) -> ObjectModel:
        entry = record.object_by_name().get(name)
        if entry is None:
            raise DanglingReference(f"El objeto '{name}' no está en el catálogo de la sesión")
        if entry.shape is None:
            raise InvalidParameter(f"El objeto '{name}' no tiene forma registrada")
        return ObjectModel.from_dict(dict(entry.shape, name=name))

    def interpolate(self, session_path: str, range_id: str, t: float, extreme_index: int = 0,
                    chain_path: Optional[str] = None) -> Grasp:
        _banner("INTERPOLACIÓN DE RANGO")
        record = load_session(session_path)
        ranges = record.range_by_id()
        if range_id not in ranges:
            raise DanglingReference(f"Rango inexistente: {range_id}")
        grasp_range = ranges[range_id]
        obj = self.object_shape(record, grasp_range.original.object_name)
        grasp = interpolate_range(grasp_range, t, obj, self.chain(chain_path),
                                  ResolveParams.from_config(self.config.get_grasp_params()),
                                  extreme_index)
        logger.info("   Agarre %s: %d contactos, penetración %.3f mm",
                    grasp.id, len(grasp.contacts), grasp.contacts.max_penetration * 1000)
        return grasp

    def similarity_groups(self, session_paths: Sequence[str], object_name: str,
                          chain_path: Optional[str] = None,
                          threshold: Optional[float] = None) -> List[Dict]:
        """Agrupa los agarres robóticos de un objeto por tarea y mide cada grupo"""
        _banner("SIMILITUD DE AGARRES")
        records = [load_session(p) for p in session_paths]
        chain = self.chain(chain_path)
        grasp_params = self.config.get_grasp_params()
        weights = DistanceWeights.from_config(grasp_params)
        threshold = grasp_params['group_threshold'] if threshold is None else threshold

        obj = None
        candidates: Dict[GraspTask, List[Grasp]] = {}
        for record in records:
            if object_name in record.object_by_name() and obj is None:
                obj = self.object_shape(record, object_name)
            for grasp in record.grasps:
                if grasp.object_name == object_name and grasp.joints is not None:
                    candidates.setdefault(grasp.task, []).append(grasp)
        if obj is None:
            raise DanglingReference(f"El objeto '{object_name}' no está en ningún catálogo")

        summary = []
        for task in sorted(candidates, key=lambda t: t.value):
            groups = group_grasps(candidates[task], obj, chain, threshold, weights)
            for index, group in enumerate(groups):
                report: Optional[SimilarityReport] = None
                if len(group) >= 2:
                    report = similarity(group, obj, chain)
                summary.append({'task': task.value, 'group': index + 1,
                                'grasps': [g.id for g in group],
                                'participants': sorted({g.participant_id for g in group}),
                                'report': report})
            if self.config.get_plotting_params().get('save_plots', False):
                self.results_manager.plot_palm_groups(groups)
        logger.info("   %d grupos para '%s'", len(summary), object_name)
        return summary

    # --- estadísticas -------------------------------------------------------
    def report(self, session_paths: Sequence[str], csv_path: Optional[str] = None) -> Dict:
        _banner("ESTADÍSTICAS DE LA CAPTURA")
        records = [load_session(p) for p in session_paths]
        counts: CountsReport = aggregate_counts(records)
        census = range_census(records)
        if csv_path:
            self.results_manager.save_counts(counts, csv_path)
        return {
            'counts': counts,
            'census': census,
            'shake': shake_summary(records),
            'survey': survey_summary(records),
        }
