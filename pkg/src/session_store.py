# src/session_store.py
"""Almacén de sesiones de captura en registros JSON por línea.

La primera línea es siempre `header`; el resto son registros tipados por
`kind`. Todas las referencias cruzadas son ids de texto.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from jsonschema import Draft7Validator

from annotations import AnnotationEvent
from errors import DanglingReference, IoFailure, SchemaViolation, Unresolvable
from grasps import Grasp, GraspLabel, GraspRange, GraspTask
from kinematics import Contact, ContactSet, JointState
from timebase import StreamOffset
from transforms import RigidTransform

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_NUMBER = {'type': 'number'}
_STRING = {'type': 'string'}
_ID = {'type': 'string', 'minLength': 1}
_IDS = {'type': 'array', 'items': _ID}
_TRANSFORM = {'type': 'array', 'items': _NUMBER, 'minItems': 13, 'maxItems': 13}


def _record(kind: str, properties: dict, required: Sequence[str]) -> dict:
    return {
        'type': 'object',
        'properties': dict(properties, kind={'const': kind}),
        'required': ['kind'] + list(required),
        'additionalProperties': False,
    }


RECORD_SCHEMAS = {
    'header': _record('header', {
        'version': {'const': SCHEMA_VERSION},
        'session_id': _ID,
        'participant_id': _STRING,
    }, ['version', 'session_id', 'participant_id']),
    'stream': _record('stream', {
        'name': _ID, 'path': _STRING, 'clock': _ID, 'format': _STRING,
    }, ['name', 'path', 'clock', 'format']),
    'offset': _record('offset', {
        'from_clock': _ID, 'to_clock': _ID, 'offset_s': _NUMBER,
        'uncertainty_ms': {'type': 'number', 'minimum': 0},
    }, ['from_clock', 'to_clock', 'offset_s', 'uncertainty_ms']),
    'object': _record('object', {
        'name': _ID, 'natural_task': _STRING,
        'shape': {'type': ['object', 'null']},
    }, ['name']),
    'grasp': _record('grasp', {
        'id': _ID,
        'object': _ID,
        'label': {'enum': [e.value for e in GraspLabel]},
        'task': {'enum': [e.value for e in GraspTask]},
        'hand': {'enum': ['robot', 'human']},
        'participant_id': _STRING,
        'joints': {
            'oneOf': [
                {'type': 'null'},
                {
                    'type': 'object',
                    'properties': {
                        'timestamp_s': _NUMBER,
                        'arm': {'type': 'array', 'items': _NUMBER, 'minItems': 7, 'maxItems': 7},
                        'spread': _NUMBER,
                        'flexion': {'type': 'array', 'items': _NUMBER, 'minItems': 3, 'maxItems': 3},
                    },
                    'required': ['arm', 'spread', 'flexion'],
                    'additionalProperties': False,
                },
            ],
        },
        'object_pose_in_palm': _TRANSFORM,
        'contacts': {
            'type': 'array',
            'items': {
                'type': 'object',
                'properties': {
                    'finger': {'enum': ['palm', '1', '2', '3']},
                    'link': _ID,
                    'point': {'type': 'array', 'items': _NUMBER, 'minItems': 3, 'maxItems': 3},
                    'signed_distance': _NUMBER,
                },
                'required': ['finger', 'link', 'point', 'signed_distance'],
                'additionalProperties': False,
            },
        },
        'max_penetration': {'type': 'number', 'minimum': 0},
        'warnings': {'type': 'array', 'items': _STRING},
    }, ['id', 'object', 'label', 'task', 'hand', 'joints']),
    'range': _record('range', {
        'id': _ID, 'original': _ID,
        'extremes': {'type': 'array', 'items': _ID, 'maxItems': 2},
        'symmetry': {
            'type': ['object', 'null'],
            'properties': {
                'axis': {'type': 'array', 'items': _NUMBER, 'minItems': 3, 'maxItems': 3},
                'period': _NUMBER,
            },
        },
        'notes': _STRING,
    }, ['id', 'original', 'extremes']),
    'trial': _record('trial', {
        'id': _ID, 'participant_id': _STRING, 'object': _ID,
        'task': {'enum': [e.value for e in GraspTask]},
        'phase': {'enum': [e.value for e in GraspLabel]},
        'hand': {'enum': ['robot', 'human']},
        'grasps': _IDS, 'ranges': _IDS, 'annotations': _IDS,
    }, ['id', 'participant_id', 'object', 'task', 'phase', 'hand', 'grasps']),
    'annotation': _record('annotation', {
        'id': _ID, 'clock': _ID, 'timestamp_s': {'type': 'number', 'minimum': 0},
        'type': {'enum': ['GRASP_SET', 'TASK_CHANGE', 'RANGE_POINT', 'NOTE']},
        'text': _STRING,
    }, ['id', 'clock', 'timestamp_s', 'type']),
    'shake_test': _record('shake_test', {
        'range': _ID, 'extreme_index': {'type': 'integer', 'minimum': 0, 'maximum': 1},
        'trials': {'type': 'integer', 'minimum': 0},
        'successes': {'type': 'integer', 'minimum': 0},
    }, ['range', 'extreme_index', 'trials', 'successes']),
    'survey': _record('survey', {
        'range': _ID, 't': {'type': 'number', 'minimum': 0, 'maximum': 1},
        'correct': {'type': 'integer', 'minimum': 0},
        'total': {'type': 'integer', 'minimum': 0},
    }, ['range', 't', 'correct', 'total']),
}
VALIDATORS = {kind: Draft7Validator(schema) for kind, schema in RECORD_SCHEMAS.items()}


@dataclass(frozen=True)
class StreamEntry:
    name: str
    path: str
    clock: str
    format: str


@dataclass(frozen=True)
class ObjectEntry:
    name: str
    natural_task: str = ""
    shape: Optional[dict] = field(default=None, hash=False)


@dataclass(frozen=True)
class TrialRecord:
    id: str
    participant_id: str
    object_name: str
    task: GraspTask
    phase: GraspLabel
    hand: str
    grasp_ids: Tuple[str, ...] = ()
    range_ids: Tuple[str, ...] = ()
    annotation_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'task', GraspTask(self.task))
        object.__setattr__(self, 'phase', GraspLabel(self.phase))
        for name in ('grasp_ids', 'range_ids', 'annotation_ids'):
            object.__setattr__(self, name, tuple(getattr(self, name)))


@dataclass(frozen=True)
class AnnotationEntry:
    id: str
    clock: str
    event: AnnotationEvent


@dataclass(frozen=True)
class ShakeTest:
    range_id: str
    extreme_index: int
    trials: int
    successes: int


@dataclass(frozen=True)
class SurveyResult:
    range_id: str
    t: float
    correct: int
    total: int


@dataclass(frozen=True, eq=True)
class SessionRecord:
    """Sesión completa; los valores son inmutables una vez cargados"""
    session_id: str
    participant_id: str = ""
    streams: Tuple[StreamEntry, ...] = ()
    offsets: Tuple[StreamOffset, ...] = ()
    objects: Tuple[ObjectEntry, ...] = ()
    grasps: Tuple[Grasp, ...] = ()
    ranges: Tuple[GraspRange, ...] = ()
    trials: Tuple[TrialRecord, ...] = ()
    annotations: Tuple[AnnotationEntry, ...] = ()
    shake_tests: Tuple[ShakeTest, ...] = ()
    surveys: Tuple[SurveyResult, ...] = ()

    def __post_init__(self):
        for name in ('streams', 'offsets', 'objects', 'grasps', 'ranges', 'trials',
                     'annotations', 'shake_tests', 'surveys'):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def grasp_by_id(self) -> Dict[str, Grasp]:
        return {g.id: g for g in self.grasps}

    def range_by_id(self) -> Dict[str, GraspRange]:
        return {r.id: r for r in self.ranges}

    def object_by_name(self) -> Dict[str, ObjectEntry]:
        return {o.name: o for o in self.objects}

    def find_offset(self, from_clock: str, to_clock: str) -> StreamOffset:
        for offset in self.offsets:
            if (offset.from_clock, offset.to_clock) == (from_clock, to_clock):
                return offset
            if (offset.from_clock, offset.to_clock) == (to_clock, from_clock):
                return offset.inverse()
        raise DanglingReference(f"No hay offset entre '{from_clock}' y '{to_clock}'")


# --- serialización ---------------------------------------------------------

def grasp_to_dict(g: Grasp) -> dict:
    return {
        'kind': 'grasp', 'id': g.id, 'object': g.object_name, 'label': g.label.value,
        'task': g.task.value, 'hand': g.hand, 'participant_id': g.participant_id,
        'joints': None if g.joints is None else g.joints.to_dict(),
        'object_pose_in_palm': g.object_pose_in_palm.to_list(),
        'contacts': [c.to_dict() for c in g.contacts.contacts],
        'max_penetration': g.contacts.max_penetration,
        'warnings': list(g.warnings),
    }


def grasp_from_dict(d: dict) -> Grasp:
    contacts = ContactSet(tuple(Contact.from_dict(c) for c in d.get('contacts', [])),
                          float(d.get('max_penetration', 0.0)))
    pose = d.get('object_pose_in_palm')
    return Grasp(
        id=d['id'], object_name=d['object'], label=d['label'], task=d['task'],
        joints=None if d['joints'] is None else JointState.from_dict(d['joints']),
        object_pose_in_palm=RigidTransform.identity() if pose is None else RigidTransform.from_list(pose),
        contacts=contacts, hand=d['hand'], participant_id=d.get('participant_id', ""),
        warnings=tuple(d.get('warnings', [])),
    )


def session_to_records(record: SessionRecord) -> List[dict]:
    """Registros en orden canónico (cabecera, catálogo, agarres, rangos, ensayos...)"""
    out = [{'kind': 'header', 'version': SCHEMA_VERSION, 'session_id': record.session_id,
            'participant_id': record.participant_id}]
    out += [{'kind': 'stream', 'name': s.name, 'path': s.path, 'clock': s.clock, 'format': s.format}
            for s in record.streams]
    out += [dict(o.to_dict(), kind='offset') for o in record.offsets]
    out += [{'kind': 'object', 'name': o.name, 'natural_task': o.natural_task, 'shape': o.shape}
            for o in record.objects]
    out += [grasp_to_dict(g) for g in record.grasps]
    out += [{'kind': 'range', 'id': r.id, 'original': r.original.id,
             'extremes': [e.id for e in r.extremes], 'symmetry': r.symmetry, 'notes': r.notes}
            for r in record.ranges]
    out += [{'kind': 'trial', 'id': t.id, 'participant_id': t.participant_id,
             'object': t.object_name, 'task': t.task.value, 'phase': t.phase.value,
             'hand': t.hand, 'grasps': list(t.grasp_ids), 'ranges': list(t.range_ids),
             'annotations': list(t.annotation_ids)}
            for t in record.trials]
    out += [{'kind': 'annotation', 'id': a.id, 'clock': a.clock,
             'timestamp_s': a.event.timestamp_s, 'type': a.event.kind.value, 'text': a.event.text}
            for a in record.annotations]
    out += [{'kind': 'shake_test', 'range': s.range_id, 'extreme_index': s.extreme_index,
             'trials': s.trials, 'successes': s.successes} for s in record.shake_tests]
    out += [{'kind': 'survey', 'range': s.range_id, 't': s.t, 'correct': s.correct,
             'total': s.total} for s in record.surveys]
    return out


def dumps_session(record: SessionRecord) -> str:
    validate_session(record)
    lines = [json.dumps(r, ensure_ascii=False, sort_keys=True) for r in session_to_records(record)]
    return "\n".join(lines) + "\n"


def _validate_line(data, line_number: int):
    if not isinstance(data, dict) or 'kind' not in data:
        raise SchemaViolation("registro sin campo 'kind'", line_number, 'kind')
    validator = VALIDATORS.get(data['kind'])
    if validator is None:
        raise SchemaViolation(f"tipo de registro desconocido '{data['kind']}'", line_number, 'kind')
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.path))
    if errors:
        error = errors[0]
        field_path = ".".join(str(p) for p in error.path) or None
        raise SchemaViolation(error.message, line_number, field_path)


def loads_session(text: str) -> SessionRecord:
    """
    Parsea el texto de un almacén de sesión

    Raises:
        SchemaViolation: registro mal formado (con número de línea y campo)
        DanglingReference: referencia a un id inexistente
    """
    parsed = []
    for line_number, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as e:
            raise SchemaViolation(f"JSON inválido: {e.msg}", line_number) from e
        _validate_line(data, line_number)
        parsed.append((line_number, data))

    if not parsed or parsed[0][1]['kind'] != 'header':
        raise SchemaViolation("la primera línea debe ser el registro 'header'", 1, 'kind')
    if sum(1 for _, d in parsed if d['kind'] == 'header') > 1:
        raise SchemaViolation("cabecera duplicada")

    header = parsed[0][1]
    by_kind: Dict[str, List[dict]] = {}
    for _, data in parsed[1:]:
        by_kind.setdefault(data['kind'], []).append(data)

    try:
        grasps = [grasp_from_dict(d) for d in by_kind.get('grasp', [])]
    except (ValueError, KeyError, Unresolvable) as e:
        raise SchemaViolation(f"agarre inválido: {e}", field='grasp') from e
    grasp_index = {g.id: g for g in grasps}
    if len(grasp_index) != len(grasps):
        raise SchemaViolation("ids de agarre duplicados", field='id')

    def resolve(grasp_id: str, owner: str) -> Grasp:
        if grasp_id not in grasp_index:
            raise DanglingReference(f"{owner} referencia al agarre inexistente '{grasp_id}'")
        return grasp_index[grasp_id]

    ranges = [GraspRange(d['id'], resolve(d['original'], f"rango '{d['id']}'"),
                         tuple(resolve(e, f"rango '{d['id']}'") for e in d['extremes']),
                         d.get('symmetry'), d.get('notes', ""))
              for d in by_kind.get('range', [])]

    record = SessionRecord(
        session_id=header['session_id'],
        participant_id=header['participant_id'],
        streams=[StreamEntry(d['name'], d['path'], d['clock'], d['format'])
                 for d in by_kind.get('stream', [])],
        offsets=[StreamOffset(d['from_clock'], d['to_clock'], d['offset_s'], d['uncertainty_ms'])
                 for d in by_kind.get('offset', [])],
        objects=[ObjectEntry(d['name'], d.get('natural_task', ""), d.get('shape'))
                 for d in by_kind.get('object', [])],
        grasps=grasps,
        ranges=ranges,
        trials=[TrialRecord(d['id'], d['participant_id'], d['object'], d['task'], d['phase'],
                            d['hand'], d['grasps'], d.get('ranges', []), d.get('annotations', []))
                for d in by_kind.get('trial', [])],
        annotations=[AnnotationEntry(d['id'], d['clock'],
                                     AnnotationEvent(d['timestamp_s'], d['type'], d.get('text', "")))
                     for d in by_kind.get('annotation', [])],
        shake_tests=[ShakeTest(d['range'], d['extreme_index'], d['trials'], d['successes'])
                     for d in by_kind.get('shake_test', [])],
        surveys=[SurveyResult(d['range'], d['t'], d['correct'], d['total'])
                 for d in by_kind.get('survey', [])],
    )
    validate_session(record)
    return record


def validate_session(record: SessionRecord):
    """Invariantes entre registros: referencias, pertenencia y fases"""
    grasps = record.grasp_by_id()
    ranges = record.range_by_id()
    annotations = {a.id for a in record.annotations}
    clocks = {s.clock for s in record.streams}

    for offset in record.offsets:
        for clock in (offset.from_clock, offset.to_clock):
            if clock not in clocks:
                raise DanglingReference(f"El offset usa el reloj '{clock}' ausente del catálogo")

    owners: Dict[str, int] = {g: 0 for g in grasps}
    for r in record.ranges:
        for extreme in r.extremes:
            owners[extreme.id] += 1
    extreme_ids = {g for g, n in owners.items() if n}

    for trial in record.trials:
        for grasp_id in trial.grasp_ids:
            if grasp_id not in grasps:
                raise DanglingReference(f"El ensayo '{trial.id}' referencia al agarre '{grasp_id}'")
            owners[grasp_id] += 1
            grasp = grasps[grasp_id]
            if trial.phase == GraspLabel.BAD and grasp.label != GraspLabel.BAD:
                raise SchemaViolation(
                    f"El ensayo de fase 'bad' '{trial.id}' incluye el agarre '{grasp_id}' etiquetado "
                    f"'{grasp.label.value}'", field='grasps')
            if trial.hand == 'human' and grasp.joints is not None:
                raise SchemaViolation(
                    f"El ensayo de mano humana '{trial.id}' incluye datos articulares ({grasp_id})",
                    field='joints')
        for range_id in trial.range_ids:
            if range_id not in ranges:
                raise DanglingReference(f"El ensayo '{trial.id}' referencia al rango '{range_id}'")
            if ranges[range_id].original.id not in trial.grasp_ids:
                raise SchemaViolation(
                    f"El original del rango '{range_id}' no pertenece al ensayo '{trial.id}'",
                    field='ranges')
        for annotation_id in trial.annotation_ids:
            if annotation_id not in annotations:
                raise DanglingReference(
                    f"El ensayo '{trial.id}' referencia a la anotación '{annotation_id}'")

    for grasp_id, count in owners.items():
        if count != 1:
            role = "extremo" if grasp_id in extreme_ids else "agarre"
            raise SchemaViolation(
                f"El {role} '{grasp_id}' debe pertenecer a exactamente un ensayo o rango "
                f"(tiene {count})", field='grasps')

    for item in list(record.shake_tests) + list(record.surveys):
        if item.range_id not in ranges:
            raise DanglingReference(f"Resultado registrado para el rango inexistente '{item.range_id}'")


def load_session(path: str) -> SessionRecord:
    if not os.path.exists(path):
        raise IoFailure(f"Almacén de sesión no encontrado: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise IoFailure(f"No se pudo leer {path}: {e}") from e
    record = loads_session(text)
    logger.info("Sesión '%s' cargada: %d agarres, %d rangos, %d ensayos",
                record.session_id, len(record.grasps), len(record.ranges), len(record.trials))
    return record


def save_session(record: SessionRecord, path: str):
    text = dumps_session(record)
    directory = os.path.dirname(path)
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text)
    except OSError as e:
        raise IoFailure(f"No se pudo escribir {path}: {e}") from e
    logger.info("Sesión '%s' guardada en %s", record.session_id, path)


def append_record(path: str, data: dict):
    """Añade un registro validado al final del almacén (captura en curso)"""
    _validate_line(data, 0)
    try:
        with open(path, 'a', encoding='utf-8') as f:
            f.write(json.dumps(data, ensure_ascii=False, sort_keys=True) + "\n")
    except OSError as e:
        raise IoFailure(f"No se pudo escribir {path}: {e}") from e
