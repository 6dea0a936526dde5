# src/errors.py
"""Jerarquía de excepciones del toolkit de captura de agarres.

Cada excepción lleva el código de salida que usa la CLI.
"""


class CaptureError(Exception):
    """Error base de todo el toolkit"""

    exit_code = 1


# --- detección y parseo (código 2) ---

class TooShort(CaptureError, ValueError):
    exit_code = 2


class NyquistViolation(CaptureError, ValueError):
    exit_code = 2


class NoBeepFound(CaptureError, RuntimeError):
    exit_code = 2


class SameClock(CaptureError, ValueError):
    exit_code = 2


class MalformedLine(CaptureError, ValueError):
    exit_code = 2

    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"Línea {line_number} mal formada: {reason}")


class NegativeMappedTime(CaptureError, ValueError):
    exit_code = 2


class NegativeTime(CaptureError, ValueError):
    exit_code = 2


# --- entrada/salida (código 3) ---

class IoFailure(CaptureError, OSError):
    exit_code = 3


class UnsupportedPlyProfile(CaptureError, ValueError):
    exit_code = 3


# --- almacén de sesiones (código 4) ---

class SchemaViolation(CaptureError, ValueError):
    exit_code = 4

    def __init__(self, message: str, line_number: int = None, field: str = None):
        self.line_number = line_number
        self.field = field
        where = []
        if line_number is not None:
            where.append(f"línea {line_number}")
        if field:
            where.append(f"campo '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class DanglingReference(CaptureError, ValueError):
    exit_code = 4


class ClockMismatch(CaptureError, ValueError):
    exit_code = 4


# --- geometría y registro (código 5) ---

class DimensionMismatch(CaptureError, ValueError):
    exit_code = 5


class DegenerateConfiguration(CaptureError, ValueError):
    exit_code = 5


class LengthMismatch(CaptureError, ValueError):
    exit_code = 5


class EmptyCloud(CaptureError, ValueError):
    exit_code = 5


class AllPairsRejected(CaptureError, RuntimeError):
    exit_code = 5


class EmptyAfterCrop(CaptureError, RuntimeError):
    exit_code = 5


class EmptyPartition(CaptureError, RuntimeError):
    exit_code = 5


class JointLimitViolation(CaptureError, ValueError):
    exit_code = 5


class OpenMesh(CaptureError, ValueError):
    exit_code = 5


# --- agarres (código 6) ---

class MixedContext(CaptureError, ValueError):
    exit_code = 6


class Unresolvable(CaptureError, RuntimeError):
    exit_code = 6


class GraspTie(CaptureError, RuntimeError):
    exit_code = 6

    def __init__(self, d_original: float, d_extreme: float):
        self.d_original = d_original
        self.d_extreme = d_extreme
        super().__init__(
            f"Empate entre original ({d_original:.3e}) y extremo ({d_extreme:.3e})"
        )


class GroupTooSmall(CaptureError, ValueError):
    exit_code = 6


# --- uso (código 64) ---

class InvalidParameter(CaptureError, ValueError):
    exit_code = 64
