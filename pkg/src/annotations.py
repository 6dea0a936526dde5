# src/annotations.py
"""Parseo del archivo de anotaciones del estudio y alineamiento al video.

Gramática de cada línea (formato propio, el original no está publicado):

    <timestamp_segundos> <KIND> <mensaje...>

Las líneas vacías y las que empiezan por '#' se ignoran.
"""
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence

from errors import MalformedLine, NegativeMappedTime, NegativeTime
from timebase import StreamOffset, map_time


class AnnotationKind(str, Enum):
    GRASP_SET = "GRASP_SET"
    TASK_CHANGE = "TASK_CHANGE"
    RANGE_POINT = "RANGE_POINT"
    NOTE = "NOTE"


@dataclass(frozen=True)
class AnnotationEvent:
    """Anotación con timestamp en el reloj del PC de grabación"""
    timestamp_s: float
    kind: AnnotationKind
    text: str = ""

    def __post_init__(self):
        if not self.timestamp_s >= 0:
            raise NegativeTime(f"Timestamp negativo o inválido: {self.timestamp_s}")
        object.__setattr__(self, 'timestamp_s', float(self.timestamp_s))
        object.__setattr__(self, 'kind', AnnotationKind(self.kind))


@dataclass(frozen=True)
class AlignedAnnotation:
    """Anotación expresada en minutos, segundos y milisegundos del video"""
    event: AnnotationEvent
    minutes: int
    seconds: int
    milliseconds: int

    @property
    def total_s(self) -> float:
        return self.minutes * 60 + self.seconds + self.milliseconds / 1000.0

    @property
    def stamp(self) -> str:
        return f"{self.minutes:02d}:{self.seconds:02d}.{self.milliseconds:03d}"

    def render(self) -> str:
        return f"{self.stamp} {self.event.kind.value} {self.event.text}".rstrip()


def _split_relative(t: float):
    if not t >= 0:
        raise NegativeTime(f"Tiempo negativo: {t}")
    # redondeo a microsegundos antes de truncar a milisegundos
    total_ms = int(round(t * 1_000_000)) // 1000
    minutes, rest_ms = divmod(total_ms, 60_000)
    seconds, milliseconds = divmod(rest_ms, 1000)
    return minutes, seconds, milliseconds


def format_relative(t: float) -> str:
    """Formatea segundos como MM:SS.mmm (truncando al milisegundo)"""
    minutes, seconds, milliseconds = _split_relative(t)
    return f"{minutes:02d}:{seconds:02d}.{milliseconds:03d}"


def parse_relative(text: str) -> float:
    """Inverso de format_relative"""
    try:
        minutes, rest = text.strip().split(':')
        seconds, millis = rest.split('.')
        if len(seconds) != 2 or len(millis) != 3 or len(minutes) < 2:
            raise ValueError(text)
        return int(minutes) * 60 + int(seconds) + int(millis) / 1000.0
    except ValueError as e:
        raise ValueError(f"Tiempo relativo inválido: '{text}'") from e


def parse_annotations(document: str) -> List[AnnotationEvent]:
    """
    Parsea el documento completo; cualquier línea inválida aborta el parseo

    Args:
        document: Texto del archivo de anotaciones

    Returns:
        Eventos en el orden del archivo
    """
    events = []
    for line_number, raw in enumerate(document.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue

        parts = line.split(None, 2)
        if len(parts) < 2:
            raise MalformedLine(line_number, "falta el campo KIND")

        try:
            timestamp = float(parts[0])
        except ValueError:
            raise MalformedLine(line_number, f"timestamp no válido '{parts[0]}'")
        if not (timestamp >= 0 and timestamp != float('inf')):
            raise MalformedLine(line_number, f"timestamp fuera de rango '{parts[0]}'")

        try:
            kind = AnnotationKind(parts[1])
        except ValueError:
            raise MalformedLine(line_number, f"tipo desconocido '{parts[1]}'")

        text = parts[2].strip() if len(parts) > 2 else ""
        events.append(AnnotationEvent(timestamp, kind, text))

    return events


def format_event_line(event: AnnotationEvent) -> str:
    """Línea del archivo de anotaciones para un evento (timestamp con repr exacto)"""
    return f"{event.timestamp_s!r} {event.kind.value} {event.text}".rstrip()


def align_annotations(events: Sequence[AnnotationEvent],
                      offset: StreamOffset) -> List[AlignedAnnotation]:
    """Expresa cada anotación en el reloj destino del offset"""
    aligned = []
    for event in events:
        t = map_time(offset, event.timestamp_s)
        if t < 0:
            raise NegativeMappedTime(
                f"La anotación en {event.timestamp_s:.3f} s queda antes del inicio "
                f"del video ({t:.3f} s)"
            )
        minutes, seconds, milliseconds = _split_relative(t)
        aligned.append(AlignedAnnotation(event, minutes, seconds, milliseconds))
    return aligned


def render_aligned(aligned: Sequence[AlignedAnnotation]) -> str:
    """Listado MM:SS.mmm KIND mensaje, una línea por anotación"""
    return "\n".join(a.render() for a in aligned)
