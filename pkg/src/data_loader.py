# src/data_loader.py
import logging
import os
import re
from typing import List, Optional

import numpy as np
import pandas as pd
import yaml
from PIL import Image
from scipy.io import wavfile

from annotations import AnnotationEvent, parse_annotations
from config_manager import ConfigManager
from errors import DimensionMismatch, InvalidParameter, IoFailure, MalformedLine
from geometry import ObjectModel, load_object
from kinematics import KinematicChain, JointState, load_chain
from rgbd import Intrinsics, RGBDFrame
from timebase import AudioTrack

logger = logging.getLogger(__name__)

JOINT_COLUMNS = (['timestamp_s'] + [f"a{i}" for i in range(7)]
                 + ['spread', 'f0', 'f1', 'f2'])
_NETPBM_TOKEN = re.compile(rb"(#[^\n]*\n)|(\S+)")


def _require(path: str, what: str):
    if not os.path.exists(path):
        raise IoFailure(f"Archivo {what} no encontrado: {path}")


def read_netpbm_header(data: bytes):
    """(magic, ancho, alto, maxval, offset de datos) de un archivo PGM/PPM binario"""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        match = _NETPBM_TOKEN.search(data, pos)
        if match is None:
            raise IoFailure("Cabecera Netpbm incompleta")
        pos = match.end()
        if match.group(2):
            tokens.append(match.group(2))
    # un único carácter de espacio separa la cabecera de los datos
    return tokens[0].decode('ascii'), int(tokens[1]), int(tokens[2]), int(tokens[3]), pos + 1


def read_depth_pgm(path: str) -> np.ndarray:
    """Profundidad PGM P5 de 16 bits (big-endian) en milímetros"""
    _require(path, "de profundidad")
    with open(path, 'rb') as f:
        data = f.read()
    magic, width, height, maxval, offset = read_netpbm_header(data)
    if magic != 'P5':
        raise IoFailure(f"{path}: se esperaba PGM binario (P5), es {magic}")
    dtype = '>u2' if maxval > 255 else 'u1'
    count = width * height
    pixels = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    return pixels.reshape(height, width).astype(np.uint16)


def write_depth_pgm(depth: np.ndarray, path: str):
    depth = np.asarray(depth, dtype=np.uint16)
    height, width = depth.shape
    with open(path, 'wb') as f:
        f.write(f"P5\n{width} {height}\n65535\n".encode('ascii'))
        f.write(depth.astype('>u2').tobytes())


def read_color(path: str) -> np.ndarray:
    """Imagen de color PPM (P6) o PNG como arreglo (H, W, 3) uint8"""
    _require(path, "de color")
    try:
        with Image.open(path) as image:
            return np.asarray(image.convert('RGB'), dtype=np.uint8)
    except OSError as e:
        raise IoFailure(f"No se pudo leer la imagen {path}: {e}") from e


def read_intrinsics(path: str) -> Intrinsics:
    """Intrínsecos YAML con fx, fy, cx, cy, width, height"""
    _require(path, "de intrínsecos")
    with open(path, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f) or {}
    missing = [k for k in ('fx', 'fy', 'cx', 'cy', 'width', 'height') if k not in data]
    if missing:
        raise InvalidParameter(f"{path}: faltan campos de intrínsecos {missing}")
    return Intrinsics(float(data['fx']), float(data['fy']), float(data['cx']), float(data['cy']),
                      int(data['width']), int(data['height']))


def read_wav(path: str, clock: str) -> AudioTrack:
    """WAV PCM de 16 bits normalizado a [-1, 1]; en estéreo se usa el primer canal"""
    _require(path, "de audio")
    try:
        rate, samples = wavfile.read(path)
    except ValueError as e:
        raise IoFailure(f"WAV no válido {path}: {e}") from e
    if samples.dtype != np.int16:
        raise IoFailure(f"{path}: solo se admite PCM de 16 bits (es {samples.dtype})")
    if samples.ndim > 1:
        samples = samples[:, 0]
    return AudioTrack(samples.astype(float) / 32768.0, int(rate), clock)


def read_joint_stream(path: str) -> List[JointState]:
    """Registros `timestamp_s a0..a6 spread f0 f1 f2` separados por espacios"""
    _require(path, "de articulaciones")
    try:
        df = pd.read_csv(path, sep=r"\s+", comment='#', header=None, names=JOINT_COLUMNS,
                         dtype=float)
    except ValueError as e:
        raise MalformedLine(0, f"flujo articular no numérico: {e}") from e
    if df.isna().any().any():
        row = int(np.nonzero(df.isna().any(axis=1).to_numpy())[0][0])
        raise MalformedLine(row + 1, "registro articular incompleto")
    states = [JointState(tuple(r[1:8]), r[8], tuple(r[9:12]), r[0])
              for r in df.itertuples(index=False, name=None)]
    return states


def write_joint_stream(states: List[JointState], path: str):
    rows = [[s.timestamp_s, *s.arm, s.spread, *s.flexion] for s in states]
    df = pd.DataFrame(rows, columns=JOINT_COLUMNS)
    with open(path, 'w', encoding='utf-8') as f:
        f.write("# " + " ".join(JOINT_COLUMNS) + "\n")
        df.to_csv(f, sep=' ', header=False, index=False, float_format='%.9g')


class DataLoader:
    """Cargador de los flujos de la captura"""

    def __init__(self, config_manager: ConfigManager):
        self.config = config_manager

    def load_audio(self, path: str, clock: str) -> AudioTrack:
        logger.info("Cargando audio (%s): %s", clock, path)
        return read_wav(path, clock)

    def load_frame(self, color_path: str, depth_path: str, intrinsics_path: str,
                   timestamp_s: float = 0.0) -> RGBDFrame:
        """Carga un par color/profundidad registrado con sus intrínsecos"""
        logger.info("Cargando imagen RGB-D: %s, %s", color_path, depth_path)
        color = read_color(color_path)
        depth = read_depth_pgm(depth_path)
        intrinsics = read_intrinsics(intrinsics_path)
        if color.shape[:2] != depth.shape:
            raise DimensionMismatch(f"Color {color.shape[:2]} y profundidad {depth.shape} difieren")
        return RGBDFrame(color, depth, intrinsics, timestamp_s)

    def load_joint_stream(self, path: str) -> List[JointState]:
        states = read_joint_stream(path)
        logger.info("Flujo articular %s: %d registros", path, len(states))
        return states

    def load_chain(self, path: Optional[str] = None) -> KinematicChain:
        path = path or self.config.get_chain_path()
        _require(path, "de cadena")
        logger.info("Cargando cadena cinemática: %s", path)
        return load_chain(path)

    def load_object(self, path: str) -> ObjectModel:
        _require(path, "de objeto")
        return load_object(path)

    def load_annotations(self, path: str) -> List[AnnotationEvent]:
        _require(path, "de anotaciones")
        with open(path, 'r', encoding='utf-8') as f:
            events = parse_annotations(f.read())
        logger.info("Anotaciones %s: %d eventos", path, len(events))
        return events
