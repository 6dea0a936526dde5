# src/timebase.py
"""Sincronización temporal entre flujos con relojes independientes.

Un beep de 5 kHz emitido al inicio de la grabación marca un punto común en
el audio de cada dispositivo. Se calcula la potencia relativa en banda por
ventanas, se detecta la primera subida que supera el umbral y se refina la
detección sobre ventanas más cortas.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import fft

from errors import (ClockMismatch, InvalidParameter, NoBeepFound,
                    NyquistViolation, SameClock, TooShort)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AudioTrack:
    """Pista de audio normalizada a [-1, 1] en un dominio de reloj"""
    samples: np.ndarray
    sample_rate_hz: int
    origin_clock: str

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise InvalidParameter(f"sample_rate_hz debe ser positivo: {self.sample_rate_hz}")
        object.__setattr__(self, 'samples', np.asarray(self.samples, dtype=float))

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def scaled(self, factor: float) -> "AudioTrack":
        return replace(self, samples=self.samples * factor)


@dataclass(frozen=True)
class BandPowerSeries:
    """Potencia relativa en banda, una por ventana"""
    window_ms: float
    values: np.ndarray
    start_time_s: float = 0.0
    hop_ms: Optional[float] = None
    clock: str = ""
    band_energy: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    @property
    def step_ms(self) -> float:
        return self.hop_ms if self.hop_ms is not None else self.window_ms

    def window_start(self, index: int) -> float:
        return self.start_time_s + index * self.step_ms / 1000.0


@dataclass(frozen=True)
class BeepDetection:
    """Detección del beep en el reloj de la pista"""
    window_index: int
    time_s: float
    slope: float
    resolution_ms: float
    window_ms: float
    clock: str = ""
    onset_s: Optional[float] = None
    degraded: bool = False

    def __post_init__(self):
        if self.onset_s is None:
            object.__setattr__(self, 'onset_s', self.time_s)

    def report_line(self) -> str:
        """Registro de una línea con la detección"""
        line = (f"clock={self.clock} window_index={self.window_index} "
                f"time_s={self.time_s:.6f} onset_s={self.onset_s:.6f} "
                f"resolution_ms={self.resolution_ms:g}")
        if self.degraded:
            line += " degraded=true"
        return line

    def to_dict(self) -> dict:
        return {
            'clock': self.clock,
            'window_index': self.window_index,
            'time_s': round(self.time_s, 6),
            'onset_s': round(self.onset_s, 6),
            'resolution_ms': self.resolution_ms,
            'degraded': self.degraded,
        }


@dataclass(frozen=True)
class StreamOffset:
    """Desplazamiento t_to = t_from + offset_s"""
    from_clock: str
    to_clock: str
    offset_s: float
    uncertainty_ms: float = field(default=0.0, compare=False)

    def inverse(self) -> "StreamOffset":
        return StreamOffset(self.to_clock, self.from_clock, -self.offset_s, self.uncertainty_ms)

    def compose(self, other: "StreamOffset") -> "StreamOffset":
        """Aplica primero self y después other (A->B seguido de B->C)"""
        if self.to_clock != other.from_clock:
            raise ClockMismatch(
                f"No se puede componer {self.from_clock}->{self.to_clock} con "
                f"{other.from_clock}->{other.to_clock}"
            )
        return StreamOffset(self.from_clock, other.to_clock,
                            self.offset_s + other.offset_s,
                            self.uncertainty_ms + other.uncertainty_ms)

    @staticmethod
    def identity(clock: str) -> "StreamOffset":
        return StreamOffset(clock, clock, 0.0)

    def to_dict(self) -> dict:
        return {
            'from_clock': self.from_clock,
            'to_clock': self.to_clock,
            'offset_s': self.offset_s,
            'uncertainty_ms': self.uncertainty_ms,
        }


def band_power_series(track: AudioTrack, window_ms: float = 100.0,
                      target_hz: float = 5000.0, bandwidth_hz: float = 100.0,
                      hann: bool = False, overlap: int = 1,
                      start_time_s: float = 0.0) -> BandPowerSeries:
    """
    Potencia relativa en [target - bandwidth, target + bandwidth] por ventana

    Args:
        track: Pista de audio
        window_ms: Duración de cada ventana
        target_hz: Frecuencia central del beep
        bandwidth_hz: Semiancho de la banda
        hann: Aplicar ventana de Hann en vez de rectangular
        overlap: Factor de solapamiento (1 = ventanas consecutivas)
        start_time_s: Tiempo del primer sample en el reloj de la pista

    Returns:
        Serie con un valor en [0, 1] por ventana
    """
    if window_ms <= 0:
        raise InvalidParameter(f"window_ms debe ser positivo: {window_ms}")
    if overlap < 1:
        raise InvalidParameter(f"overlap debe ser >= 1: {overlap}")
    if track.sample_rate_hz < 2 * (target_hz + bandwidth_hz):
        raise NyquistViolation(
            f"Frecuencia de muestreo {track.sample_rate_hz} Hz insuficiente para "
            f"{target_hz} ± {bandwidth_hz} Hz"
        )

    n = int(np.floor(window_ms * track.sample_rate_hz / 1000.0))
    hop = max(1, n // overlap)
    samples = track.samples
    if n < 1 or len(samples) < n:
        raise TooShort(f"La pista ({len(samples)} samples) no cubre 2 ventanas de {window_ms} ms")
    n_windows = (len(samples) - n) // hop + 1
    if n_windows < 2:
        raise TooShort(f"La pista ({len(samples)} samples) no cubre 2 ventanas de {window_ms} ms")

    if hop == n:
        frames = samples[:n_windows * n].reshape(n_windows, n)
    else:
        frames = np.lib.stride_tricks.sliding_window_view(samples, n)[::hop][:n_windows]
    if hann:
        frames = frames * np.hanning(n)

    power = np.abs(fft.rfft(frames, axis=1)) ** 2
    freqs = fft.rfftfreq(n, d=1.0 / track.sample_rate_hz)
    band = np.abs(freqs - target_hz) <= bandwidth_hz

    total = power.sum(axis=1)
    in_band = power[:, band].sum(axis=1)
    values = np.zeros(n_windows)
    nonzero = total > 0
    values[nonzero] = in_band[nonzero] / total[nonzero]
    values = np.clip(values, 0.0, 1.0)

    hop_ms = hop * 1000.0 / track.sample_rate_hz
    # la ventana efectiva se redondea a samples enteros
    effective_ms = n * 1000.0 / track.sample_rate_hz
    return BandPowerSeries(window_ms=effective_ms, values=values,
                           start_time_s=start_time_s,
                           hop_ms=None if hop == n else hop_ms,
                           clock=track.origin_clock,
                           band_energy=in_band)


def _occupied_fraction(series: BandPowerSeries, first: int, trigger: int) -> np.ndarray:
    """
    Fracción de cada ventana de subida ocupada por el tono

    Con energías en banda la ocupación es lineal: (e - e0) / (e1 - e0). Sin
    ellas se invierte la potencia relativa:
    f = (p - p0)(1 - p1) / ((1 - p)(p1 - p0)).
    """
    values = np.asarray(series.values, dtype=float)
    source = values if series.band_energy is None else np.asarray(series.band_energy, dtype=float)
    rising = source[first:trigger + 1]
    if first > 0:
        base = float(np.median(source[:first]))
    else:
        base = float(rising.min())
    plateau = float(source[trigger:trigger + 3].max())
    if plateau - base <= 1e-12 * max(abs(plateau), 1.0):
        return np.zeros_like(rising)

    if series.band_energy is not None or plateau >= 1.0 - 1e-9:
        frac = (rising - base) / (plateau - base)
    else:
        denom = np.maximum((1.0 - rising) * (plateau - base), 1e-12)
        frac = (rising - base) * (1.0 - plateau) / denom
    return np.clip(frac, 0.0, 1.0)


def detect_beep(series: BandPowerSeries, slope_threshold: float = 0.5,
                rise_lag: int = 1) -> BeepDetection:
    """
    Detecta la primera ventana cuya potencia en banda sube más que el umbral

    Args:
        series: Serie de potencia relativa
        slope_threshold: Subida mínima en unidades de potencia relativa
        rise_lag: Ventanas sobre las que se mide la subida (1 = diferencia simple)

    Returns:
        BeepDetection con el inicio de la ventana y la estimación del onset
    """
    if slope_threshold <= 0:
        raise InvalidParameter(f"slope_threshold debe ser positivo: {slope_threshold}")
    if rise_lag < 1:
        raise InvalidParameter(f"rise_lag debe ser >= 1: {rise_lag}")
    values = np.asarray(series.values, dtype=float)
    if len(values) < 2:
        raise TooShort("Se necesitan al menos 2 ventanas")

    trigger = None
    slope = 0.0
    for i in range(1, len(values)):
        lo = max(0, i - rise_lag)
        rise = values[i] - values[lo:i].min()
        if rise > slope_threshold:
            trigger = i
            slope = float(rise)
            break

    if trigger is None:
        raise NoBeepFound(
            f"Ninguna ventana supera el umbral {slope_threshold} (reloj '{series.clock}'); "
            "revisar umbral, frecuencia o presencia del beep"
        )

    step_s = series.step_ms / 1000.0
    window_s = series.window_ms / 1000.0
    first = max(0, trigger - rise_lag)
    frac = _occupied_fraction(series, first, trigger)
    # ocupación acumulada en las ventanas de subida, contada desde el final de la de disparo
    occupied_s = frac.sum() * step_s
    trigger_end = series.window_start(trigger) + window_s
    onset = min(max(trigger_end - occupied_s, series.window_start(first)), trigger_end)

    detection = BeepDetection(
        window_index=trigger,
        time_s=series.window_start(trigger),
        slope=slope,
        resolution_ms=series.window_ms / 2.0,
        window_ms=series.window_ms,
        clock=series.clock,
        onset_s=float(onset),
    )
    logger.debug("Beep detectado: %s", detection.report_line())
    return detection


def refine_beep(track: AudioTrack, coarse: BeepDetection, levels: int = 1,
                shrink_factor: int = 10, target_hz: float = 5000.0,
                bandwidth_hz: float = 100.0, slope_threshold: float = 0.5,
                rise_lag: int = 1, hann: bool = False) -> BeepDetection:
    """
    Repite la detección sobre la ventana resultante con ventanas más cortas

    Cada nivel busca en [ventana - 1, ventana + 1] (más una ventana previa
    como línea base) con window_ms / shrink_factor.
    """
    if levels < 1:
        raise InvalidParameter(f"levels debe ser >= 1: {levels}")
    if shrink_factor < 2:
        raise InvalidParameter(f"shrink_factor debe ser >= 2: {shrink_factor}")

    current = coarse
    rate = track.sample_rate_hz
    for level in range(levels):
        window_s = current.window_ms / 1000.0
        bracket_lo = current.time_s - window_s
        bracket_hi = current.time_s + 2 * window_s
        seg_start = max(0.0, bracket_lo - window_s)
        i0 = int(np.floor(seg_start * rate))
        i1 = min(len(track.samples), int(np.ceil(bracket_hi * rate)))
        segment = AudioTrack(track.samples[i0:i1], rate, track.origin_clock)
        fine_ms = current.window_ms / shrink_factor
        try:
            series = band_power_series(segment, fine_ms, target_hz, bandwidth_hz,
                                       hann=hann, start_time_s=i0 / rate)
            fine = detect_beep(series, slope_threshold, rise_lag)
        except (NoBeepFound, TooShort, NyquistViolation) as e:
            logger.warning("Refinamiento nivel %d fallido: %s", level + 1, e)
            return replace(current, degraded=True)

        if not (bracket_lo - 1e-9 <= fine.onset_s <= bracket_hi + 1e-9):
            logger.warning("Refinamiento nivel %d fuera del intervalo grueso", level + 1)
            return replace(current, degraded=True)

        current = replace(fine, resolution_ms=current.resolution_ms / shrink_factor)

    return current


OFFSET_ESTIMATES = ('onset_s', 'time_s')


def compute_offset(det_a: BeepDetection, det_b: BeepDetection,
                   clock_a: Optional[str] = None, clock_b: Optional[str] = None,
                   estimate: str = 'onset_s') -> StreamOffset:
    """
    Desplazamiento del reloj A al reloj B a partir del mismo beep en ambos

    Args:
        det_a: Detección en el reloj A
        det_b: Detección en el reloj B
        clock_a: Reloj A (por defecto el de la detección)
        clock_b: Reloj B (por defecto el de la detección)
        estimate: 'onset_s' (onset subventana) o 'time_s' (inicio de la ventana de disparo)

    Returns:
        StreamOffset con offset_s = det_b.<estimate> - det_a.<estimate>
    """
    if estimate not in OFFSET_ESTIMATES:
        raise InvalidParameter(f"estimate debe ser uno de {OFFSET_ESTIMATES}: {estimate}")
    clock_a = clock_a or det_a.clock
    clock_b = clock_b or det_b.clock
    if clock_a == clock_b:
        raise SameClock(f"Ambas detecciones pertenecen al reloj '{clock_a}'")
    return StreamOffset(
        from_clock=clock_a,
        to_clock=clock_b,
        offset_s=getattr(det_b, estimate) - getattr(det_a, estimate),
        uncertainty_ms=det_a.resolution_ms + det_b.resolution_ms,
    )


def map_time(offset: StreamOffset, t: float) -> float:
    """Expresa t (reloj origen) en el reloj destino"""
    return t + offset.offset_s
