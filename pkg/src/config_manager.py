# src/config_manager.py
import copy
import os
from typing import Optional

import yaml

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

DEFAULT_CONFIG = {
    'sync': {
        'window_ms': 100.0,
        'target_hz': 5000.0,
        'bandwidth_hz': 100.0,
        'slope_threshold': 0.5,
        'rise_lag': 1,
        'offset_estimate': 'onset_s',
        'hann_window': False,
        'overlap': 1,
        'refine_levels': 1,
        'shrink_factor': 10,
        'default_clocks': ['ros', 'eyetracker'],
    },
    'annotations': {
        'from_clock': 'ros',
        'to_clock': 'eyetracker',
    },
    'rgbd': {
        'depth_scale': 1000.0,
    },
    'registration': {
        'max_iterations': 50,
        'convergence_tol': 1.0e-5,
        'trim_fraction': 0.2,
        'max_pair_distance': 0.1,
        'crop_margin': 0.05,
        'object_density': 20000.0,
        'partition_margin': 0.015,
        'refine_iterations': 10,
        'rounds': 3,
    },
    'kinematics': {
        'chain_file': 'data/chains/three_finger_arm.yaml',
        'sample_density': 20000.0,
    },
    'grasps': {
        'palm_step': 0.001,
        'flexion_step': 0.01,
        'max_steps': 10000,
        'penetration_tolerance': 0.001,
        'contact_threshold': 0.002,
        'joint_weight': 0.5,
        'palm_weight': 0.5,
        'group_threshold': 0.05,
    },
    'plotting': {
        'save_plots': False,
        'plots_dir': 'results/plots',
    },
    'output': {
        'counts_csv': 'results/grasp_counts.csv',
    },
    'logging': {
        'level': 'INFO',
        'json': False,
    },
}


def merge_dicts(d1: dict, d2: dict) -> dict:
    """Fusiona dos diccionarios recursivamente (d2 tiene prioridad)"""
    result = copy.deepcopy(d1)

    for key, value in d2.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = merge_dicts(result[key], value)
        else:
            result[key] = value

    return result


class ConfigManager:
    """Manejador de configuración desde archivo YAML"""

    def __init__(self, config_path: Optional[str] = "config.yaml"):
        self.config_path = config_path
        self.base_dir = os.path.dirname(os.path.abspath(config_path)) if config_path else os.getcwd()
        self.config = self.load_config()

    @classmethod
    def from_dict(cls, overrides: dict) -> "ConfigManager":
        """Construye la configuración sin archivo (usado por tests y por la librería)"""
        manager = cls(None)
        manager.config = merge_dicts(manager.config, overrides)
        return manager

    def load_config(self) -> dict:
        """Carga configuración desde archivo YAML sobre los valores por defecto"""
        if self.config_path is None:
            return copy.deepcopy(DEFAULT_CONFIG)

        if not os.path.exists(self.config_path):
            raise FileNotFoundError(f"Archivo de configuración no encontrado: {self.config_path}")

        with open(self.config_path, 'r', encoding='utf-8') as f:
            config = yaml.safe_load(f) or {}
        return merge_dicts(DEFAULT_CONFIG, config)

    def resolve_path(self, path: str) -> str:
        """Resuelve rutas relativas respecto al directorio del archivo de configuración"""
        if os.path.isabs(path):
            return path
        return os.path.join(self.base_dir, path)

    def get_sync_params(self) -> dict:
        """Obtiene parámetros de sincronización por beep"""
        return self.config['sync']

    def get_annotation_params(self) -> dict:
        """Obtiene relojes por defecto de las anotaciones"""
        return self.config['annotations']

    def get_rgbd_params(self) -> dict:
        """Obtiene parámetros de nubes de puntos"""
        return self.config['rgbd']

    def get_registration_params(self) -> dict:
        """Obtiene parámetros de ICP y alineamiento"""
        return self.config['registration']

    def get_kinematics_params(self) -> dict:
        """Obtiene parámetros de la cadena cinemática"""
        return self.config['kinematics']

    def get_chain_path(self) -> str:
        """Obtiene la ruta del archivo de descripción de la cadena"""
        chain_file = self.config['kinematics']['chain_file']
        path = self.resolve_path(chain_file)
        shipped = os.path.join(PROJECT_ROOT, chain_file)
        # la cadena incluida en el repositorio sirve de respaldo para rutas relativas
        if not os.path.exists(path) and os.path.exists(shipped):
            return shipped
        return path

    def get_grasp_params(self) -> dict:
        """Obtiene parámetros de resolución y comparación de agarres"""
        return self.config['grasps']

    def get_plotting_params(self) -> dict:
        """Obtiene parámetros para gráficas"""
        return self.config.get('plotting', {})

    def get_output_params(self) -> dict:
        """Obtiene parámetros de salida"""
        return self.config['output']

    def get_logging_params(self) -> dict:
        """Obtiene parámetros de logging"""
        return self.config['logging']
