# src/ply_io.py
"""Lectura/escritura PLY para nubes coloreadas.

Perfil: un único elemento `vertex` con x, y, z float32 y red, green, blue
uchar. Se lee ASCII o binary_little_endian; se escribe binary_little_endian.
"""
import os

import numpy as np

from errors import IoFailure, UnsupportedPlyProfile
from rgbd import PointCloud

PLY_TYPES = {
    'float': '<f4', 'float32': '<f4',
    'double': '<f8', 'float64': '<f8',
    'uchar': 'u1', 'uint8': 'u1',
}
REQUIRED = ('x', 'y', 'z', 'red', 'green', 'blue')


def write_ply(cloud: PointCloud, path: str):
    """Escribe la nube en PLY binario little-endian"""
    n = len(cloud)
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {n}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    vertex = np.empty(n, dtype=[('x', '<f4'), ('y', '<f4'), ('z', '<f4'),
                                ('red', 'u1'), ('green', 'u1'), ('blue', 'u1')])
    vertex['x'], vertex['y'], vertex['z'] = cloud.points.astype(np.float32).T
    vertex['red'], vertex['green'], vertex['blue'] = cloud.colors.T

    directory = os.path.dirname(path)
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'wb') as f:
            f.write(header.encode('ascii'))
            f.write(vertex.tobytes())
    except OSError as e:
        raise IoFailure(f"No se pudo escribir {path}: {e}") from e


def _parse_header(f):
    lines = []
    while True:
        line = f.readline()
        if not line:
            raise UnsupportedPlyProfile("Cabecera PLY sin end_header")
        text = line.decode('ascii', errors='replace').strip()
        lines.append(text)
        if text == 'end_header':
            break

    if not lines or lines[0] != 'ply':
        raise UnsupportedPlyProfile("Falta la firma 'ply'")

    fmt, count, props = None, None, []
    current = None
    for text in lines[1:-1]:
        parts = text.split()
        if not parts or parts[0] in ('comment', 'obj_info'):
            continue
        if parts[0] == 'format':
            fmt = parts[1]
        elif parts[0] == 'element':
            current = parts[1]
            if current != 'vertex':
                raise UnsupportedPlyProfile(f"Elemento no soportado: {current}")
            count = int(parts[2])
        elif parts[0] == 'property':
            if current != 'vertex' or parts[1] == 'list':
                raise UnsupportedPlyProfile(f"Propiedad no soportada: {text}")
            if parts[1] not in PLY_TYPES:
                raise UnsupportedPlyProfile(f"Tipo no soportado: {parts[1]}")
            props.append((parts[2], PLY_TYPES[parts[1]]))

    if fmt not in ('ascii', 'binary_little_endian'):
        raise UnsupportedPlyProfile(f"Formato no soportado: {fmt}")
    if count is None:
        raise UnsupportedPlyProfile("Falta el elemento vertex")
    names = [p[0] for p in props]
    missing = [r for r in REQUIRED if r not in names]
    if missing:
        raise UnsupportedPlyProfile(f"Faltan propiedades: {missing}")
    return fmt, count, props


def read_ply(path: str) -> PointCloud:
    """Lee una nube PLY (ASCII o binaria little-endian)"""
    if not os.path.exists(path):
        raise IoFailure(f"Archivo PLY no encontrado: {path}")

    try:
        with open(path, 'rb') as f:
            fmt, count, props = _parse_header(f)
            dtype = np.dtype(props)
            if count == 0:
                data = np.empty(0, dtype=dtype)
            elif fmt == 'binary_little_endian':
                data = np.frombuffer(f.read(dtype.itemsize * count), dtype=dtype, count=count)
            else:
                rows = [f.readline().split() for _ in range(count)]
                if any(len(r) < len(props) for r in rows):
                    raise UnsupportedPlyProfile("Fila ASCII incompleta")
                data = np.empty(count, dtype=dtype)
                for j, (name, _) in enumerate(props):
                    data[name] = [float(r[j]) for r in rows]
    except ValueError as e:
        if isinstance(e, UnsupportedPlyProfile):
            raise
        raise UnsupportedPlyProfile(f"Contenido PLY inválido en {path}: {e}") from e
    except OSError as e:
        raise IoFailure(f"No se pudo leer {path}: {e}") from e

    points = np.column_stack([data['x'], data['y'], data['z']]).astype(float)
    colors = np.column_stack([data['red'], data['green'], data['blue']]).astype(np.uint8)
    return PointCloud(points, colors)
