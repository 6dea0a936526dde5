# src/cli.py
"""Línea de comandos del toolkit de captura de agarres.

Subcomandos:
    sync          Detecta el beep en dos WAV y calcula el offset entre relojes
    annotate      Expresa un archivo de anotaciones en el reloj del video
    cloud         Convierte un par color/profundidad en una nube PLY
    align-arm     Alinea una nube con el modelo del brazo (ICP)
    align-object  Alineamiento alternado mano/objeto en el marco de la palma
    interpolate   Interpola un rango de agarres y resuelve el resultado
    similarity    Agrupa agarres similares de un objeto y mide cada grupo
    report        Conteos, censo de rangos y resúmenes de verificación

Códigos de salida: 0 éxito, 1 inesperado, 2 detección/parseo, 3 E/S,
4 almacén de sesiones, 5 geometría/registro, 6 agarres, 64 uso.
"""
import argparse
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np
import yaml
from pythonjsonlogger.json import JsonFormatter

from annotations import render_aligned
from capture_analysis import CaptureAnalysis
from config_manager import ConfigManager, merge_dicts
from errors import CaptureError
from session_store import grasp_to_dict
from timebase import StreamOffset
from transforms import RigidTransform, load_transform, save_transform

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_IO = 3
EXIT_USAGE = 64

_HANDLER_TAG = '_grasp_capture_cli'


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse que no termina el proceso ante un error de uso"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def configure_logging(level: str = "INFO", as_json: bool = False):
    """Configura el logger raíz hacia stderr, en texto o en líneas JSON"""
    handler = logging.StreamHandler(sys.stderr)
    if as_json:
        handler.setFormatter(JsonFormatter("%(asctime)s %(levelname)s %(name)s %(message)s"))
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    setattr(handler, _HANDLER_TAG, True)

    root = logging.getLogger()
    for old in [h for h in root.handlers if getattr(h, _HANDLER_TAG, False)]:
        root.removeHandler(old)
    root.addHandler(handler)
    root.setLevel(level.upper())


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"No serializable: {type(value).__name__}")


def _emit(payload, as_json: bool, text: str):
    if as_json:
        print(json.dumps(payload, sort_keys=True, default=_jsonable))
    else:
        print(text)


def _records(df) -> list:
    return [{k: _jsonable(v) if isinstance(v, np.generic) else v for k, v in row.items()}
            for row in df.to_dict(orient='records')]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='grasp-capture', description=__doc__.splitlines()[0])
    parser.add_argument('--config', default=None,
                        help="Archivo YAML de configuración (por defecto config.yaml si existe)")
    parser.add_argument('--json', action='store_true', help="Salida en JSON por stdout")
    parser.add_argument('--log-level', default=None, type=str.upper,
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'],
                        help="Nivel de logging (DEBUG, INFO, ...)")
    parser.add_argument('--log-json', action='store_true', help="Logs como líneas JSON en stderr")
    sub = parser.add_subparsers(dest='command', parser_class=_Parser)
    sub.required = True

    p = sub.add_parser('sync', help="Offset entre relojes a partir del beep")
    p.add_argument('--audio-a', required=True, help="WAV PCM 16 bits del reloj A")
    p.add_argument('--audio-b', required=True, help="WAV PCM 16 bits del reloj B")
    p.add_argument('--clock-a', default=None)
    p.add_argument('--clock-b', default=None)
    p.add_argument('--window-ms', type=float, default=None)
    p.add_argument('--freq-hz', type=float, default=None)
    p.add_argument('--band-hz', type=float, default=None)
    p.add_argument('--threshold', type=float, default=None)
    p.add_argument('--rise-lag', type=int, default=None,
                   help="Ventanas sobre las que se mide la subida (por defecto 1)")
    p.add_argument('--offset-estimate', choices=['onset_s', 'time_s'], default=None,
                   help="Estimación usada para el offset")
    p.add_argument('--refine-levels', type=int, default=None)
    p.add_argument('--session', default=None, help="Almacén JSONL donde registrar el offset")

    p = sub.add_parser('annotate', help="Anotaciones en el reloj del video (MM:SS.mmm KIND texto)")
    p.add_argument('--file', required=True, help="Líneas `<t_s> <KIND> [texto]`")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument('--session', help="Almacén con el offset entre relojes")
    group.add_argument('--offset-s', type=float, help="Offset explícito en segundos")
    p.add_argument('--from-clock', default=None)
    p.add_argument('--to-clock', default=None)

    p = sub.add_parser('cloud', help="Nube de puntos PLY desde color + profundidad")
    p.add_argument('--color', required=True, help="PPM/PNG de color")
    p.add_argument('--depth', required=True, help="PGM P5 de 16 bits en milímetros")
    p.add_argument('--intrinsics', required=True, help="YAML con fx, fy, cx, cy, width, height")
    p.add_argument('-o', '--output', required=True, help="PLY binario de salida")

    p = sub.add_parser('align-arm', help="ICP de la nube contra el modelo del brazo")
    p.add_argument('--cloud', required=True)
    p.add_argument('--joints', required=True, help="Flujo articular `timestamp_s a0..a6 spread f0 f1 f2`")
    p.add_argument('--chain', default=None)
    p.add_argument('--init', default=None, help="YAML con la transformación inicial nube -> brazo")
    p.add_argument('--time-s', type=float, default=None)
    p.add_argument('--no-crop', action='store_true')
    p.add_argument('-o', '--output', default=None, help="YAML de salida con la transformación")

    p = sub.add_parser('align-object', help="Alineamiento alternado mano/objeto")
    p.add_argument('--cloud', required=True)
    p.add_argument('--joints', required=True)
    p.add_argument('--object', required=True, help="YAML con la forma del objeto")
    p.add_argument('--init', required=True, help="Pose inicial del objeto en el marco de la palma")
    p.add_argument('--cloud-to-arm', default=None, help="Transformación nube -> brazo (de align-arm)")
    p.add_argument('--chain', default=None)
    p.add_argument('--rounds', type=int, default=None)
    p.add_argument('--time-s', type=float, default=None)
    p.add_argument('-o', '--output', default=None)

    p = sub.add_parser('interpolate', help="Agarre interpolado de un rango")
    p.add_argument('--session', required=True)
    p.add_argument('--range-id', required=True)
    p.add_argument('--t', type=float, required=True)
    p.add_argument('--extreme-index', type=int, default=0)
    p.add_argument('--chain', default=None)

    p = sub.add_parser('similarity', help="Grupos de agarres similares de un objeto")
    p.add_argument('--session', required=True, action='append')
    p.add_argument('--object', required=True)
    p.add_argument('--chain', default=None)
    p.add_argument('--threshold', type=float, default=None)

    p = sub.add_parser('report', help="Estadísticas de la captura")
    p.add_argument('--session', required=True, action='append')
    p.add_argument('--csv', default=None, help="Exporta la tabla de conteos")

    return parser


def _load_config(path: Optional[str]) -> ConfigManager:
    if path is None and os.path.exists('config.yaml'):
        path = 'config.yaml'
    return ConfigManager(path)


def cmd_sync(analysis: CaptureAnalysis, args) -> int:
    overrides = {k: v for k, v in {
        'window_ms': args.window_ms, 'target_hz': args.freq_hz, 'bandwidth_hz': args.band_hz,
        'slope_threshold': args.threshold, 'rise_lag': args.rise_lag,
        'offset_estimate': args.offset_estimate,
    }.items() if v is not None}
    analysis.config.config = merge_dicts(analysis.config.config, {'sync': overrides})
    params = analysis.config.get_sync_params()
    clock_a, clock_b = params['default_clocks']
    det_a, det_b, offset = analysis.synchronize(
        args.audio_a, args.audio_b, args.clock_a or clock_a, args.clock_b or clock_b,
        args.refine_levels, args.session,
    )
    window_offset_s = det_b.time_s - det_a.time_s
    text = "\n".join([
        det_a.report_line(),
        det_b.report_line(),
        f"offset from_clock={offset.from_clock} to_clock={offset.to_clock} "
        f"offset_s={offset.offset_s:.6f} uncertainty_ms={offset.uncertainty_ms:g} "
        f"estimate={params['offset_estimate']} window_offset_s={window_offset_s:.6f}",
    ])
    _emit({'detections': [det_a.to_dict(), det_b.to_dict()],
           'offset': dict(offset.to_dict(), estimate=params['offset_estimate'],
                          window_offset_s=round(window_offset_s, 6))},
          args.json, text)
    return EXIT_OK


def cmd_annotate(analysis: CaptureAnalysis, args) -> int:
    params = analysis.config.get_annotation_params()
    if args.session:
        offset = analysis.offset_from_session(args.session, args.from_clock, args.to_clock)
    else:
        offset = StreamOffset(args.from_clock or params['from_clock'],
                              args.to_clock or params['to_clock'], args.offset_s)
    aligned = analysis.align_annotation_file(args.file, offset)
    payload = [{'time': a.stamp, 'kind': a.event.kind.value,
                'text': a.event.text} for a in aligned]
    _emit(payload, args.json, render_aligned(aligned))
    return EXIT_OK


def cmd_cloud(analysis: CaptureAnalysis, args) -> int:
    cloud = analysis.build_cloud(args.color, args.depth, args.intrinsics, args.output)
    _emit({'points': len(cloud), 'output': args.output}, args.json,
          f"points={len(cloud)} output={args.output}")
    return EXIT_OK


def _transform_text(transform: RigidTransform) -> str:
    return yaml.safe_dump({'values': transform.to_list()}, default_flow_style=None).rstrip()


def cmd_align_arm(analysis: CaptureAnalysis, args) -> int:
    init = load_transform(args.init) if args.init else RigidTransform.identity()
    result = analysis.align_arm(args.cloud, args.joints, init, args.chain, args.time_s,
                                crop=not args.no_crop)
    if args.output:
        save_transform(result.transform, args.output)
    text = (f"rms_residual={result.rms_residual:.6g} iterations={result.iterations_used} "
            f"converged={str(result.converged).lower()}\n{_transform_text(result.transform)}")
    _emit(result.to_dict(), args.json, text)
    return EXIT_OK


def cmd_align_object(analysis: CaptureAnalysis, args) -> int:
    obj = analysis.data_loader.load_object(args.object)
    init = load_transform(args.init)
    cloud_to_arm = load_transform(args.cloud_to_arm) if args.cloud_to_arm else None
    outcome = analysis.align_object(args.cloud, args.joints, obj, init, args.rounds,
                                    cloud_to_arm, args.chain, args.time_s)
    if args.output:
        save_transform(outcome.object_pose, args.output)
    text = (f"hand_residual={outcome.hand_residual:.6g} "
            f"object_residual={outcome.object_residual:.6g} rounds={outcome.rounds_used}\n"
            f"{_transform_text(outcome.object_pose)}")
    _emit(outcome.to_dict(), args.json, text)
    return EXIT_OK


def cmd_interpolate(analysis: CaptureAnalysis, args) -> int:
    grasp = analysis.interpolate(args.session, args.range_id, args.t, args.extreme_index, args.chain)
    payload = grasp_to_dict(grasp)
    _emit(payload, args.json, json.dumps(payload, sort_keys=True))
    return EXIT_OK


def cmd_similarity(analysis: CaptureAnalysis, args) -> int:
    summary = analysis.similarity_groups(args.session, args.object, args.chain, args.threshold)
    payload = [dict(entry, report=None if entry['report'] is None else entry['report'].to_dict())
               for entry in summary]
    lines = []
    for entry in summary:
        line = (f"task={entry['task']} group={entry['group']} grasps={','.join(entry['grasps'])} "
                f"participants={len(entry['participants'])}")
        report = entry['report']
        if report is not None:
            line += (f" mean_joint_variation={report.mean_joint_variation:.6g}"
                     f" contacts={report.contact_count_range[0]}-{report.contact_count_range[1]}"
                     f" palm_spread={report.palm_spread:.6g}"
                     f" fingertip_spread={report.fingertip_spread:.6g}")
        lines.append(line)
    _emit(payload, args.json, "\n".join(lines))
    return EXIT_OK


def cmd_report(analysis: CaptureAnalysis, args) -> int:
    result = analysis.report(args.session, args.csv)
    counts = result['counts']
    with_extremes, without = result['census']
    payload = {
        'counts': counts.to_dict(),
        'census': {'with_extremes': with_extremes, 'without_extremes': without},
        'shake': _records(result['shake']),
        'survey': _records(result['survey']),
    }
    text = [counts.render(), "",
            f"Ranges: {with_extremes} with extremes, {without} without"]
    if len(result['shake']):
        text += ["", result['shake'].to_string(index=False)]
    if len(result['survey']):
        text += ["", result['survey'].to_string(index=False)]
    _emit(payload, args.json, "\n".join(text))
    return EXIT_OK


COMMANDS = {
    'sync': cmd_sync,
    'annotate': cmd_annotate,
    'cloud': cmd_cloud,
    'align-arm': cmd_align_arm,
    'align-object': cmd_align_object,
    'interpolate': cmd_interpolate,
    'similarity': cmd_similarity,
    'report': cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Punto de entrada; devuelve el código de salida"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE

    try:
        config = _load_config(args.config)
        log_params = config.get_logging_params()
        configure_logging(args.log_level or log_params['level'],
                          args.log_json or log_params['json'])
        analysis = CaptureAnalysis(config=config)
        return COMMANDS[args.command](analysis, args)
    except CaptureError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    except (FileNotFoundError, OSError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_IO
    except Exception:
        logger.exception("Error inesperado")
        return EXIT_UNEXPECTED
