# src/beep_detector.py
import logging
import os
from typing import Dict, Optional, Tuple

from config_manager import ConfigManager
from timebase import (AudioTrack, BandPowerSeries, BeepDetection, StreamOffset,
                      band_power_series, compute_offset, detect_beep, refine_beep)

logger = logging.getLogger(__name__)


class BeepDetector:
    """Detector automático del beep de sincronización"""

    def __init__(self, config_manager: ConfigManager):
        self.config = config_manager
        self.series: Dict[str, BandPowerSeries] = {}

    def detect(self, track: AudioTrack, refine_levels: Optional[int] = None) -> BeepDetection:
        """
        Detecta el beep en una pista y lo refina

        Args:
            track: Pista de audio
            refine_levels: Niveles de refinamiento (por defecto los de la configuración; 0 = sin refinar)

        Returns:
            BeepDetection en el reloj de la pista
        """
        params = self.config.get_sync_params()
        levels = params['refine_levels'] if refine_levels is None else refine_levels
        logger.info("Detectando beep en '%s' (%.1f s)...", track.origin_clock, track.duration_s)

        series = band_power_series(
            track,
            window_ms=params['window_ms'],
            target_hz=params['target_hz'],
            bandwidth_hz=params['bandwidth_hz'],
            hann=params['hann_window'],
            overlap=params['overlap'],
        )
        self.series[track.origin_clock] = series
        detection = detect_beep(series, params['slope_threshold'], params['rise_lag'])
        logger.info("   Ventana %d, inicio %.3f s, onset %.4f s",
                    detection.window_index, detection.time_s, detection.onset_s)

        if levels > 0:
            detection = refine_beep(
                track, detection, levels=levels,
                shrink_factor=params['shrink_factor'],
                target_hz=params['target_hz'],
                bandwidth_hz=params['bandwidth_hz'],
                slope_threshold=params['slope_threshold'],
                rise_lag=params['rise_lag'],
                hann=params['hann_window'],
            )
            logger.info("   Refinado: onset %.4f s (resolución %g ms)%s",
                        detection.onset_s, detection.resolution_ms,
                        " [degradado]" if detection.degraded else "")
        return detection

    def synchronize(self, track_a: AudioTrack, track_b: AudioTrack,
                    refine_levels: Optional[int] = None) -> Tuple[BeepDetection, BeepDetection, StreamOffset]:
        """Offset del reloj de la pista A al de la pista B"""
        det_a = self.detect(track_a, refine_levels)
        det_b = self.detect(track_b, refine_levels)
        offset = compute_offset(det_a, det_b, track_a.origin_clock, track_b.origin_clock,
                                estimate=self.config.get_sync_params()['offset_estimate'])
        logger.info("   Offset %s -> %s: %.4f s (± %.1f ms, estimación %s)",
                    offset.from_clock, offset.to_clock, offset.offset_s, offset.uncertainty_ms,
                    self.config.get_sync_params()['offset_estimate'])
        return det_a, det_b, offset

    def plot_detection(self, series: BandPowerSeries, detection: BeepDetection,
                       output_file: Optional[str] = None):
        """
        Genera plot de la potencia en banda con la detección marcada (opcional)

        Args:
            series: Serie de potencia relativa
            detection: Detección a marcar
            output_file: Archivo de salida; por defecto en el directorio de gráficas
        """
        try:
            import matplotlib
            matplotlib.use('Agg')
            import matplotlib.pyplot as plt
        except ImportError:
            logger.warning("Matplotlib no disponible para plotting")
            return None

        times = [series.window_start(i) for i in range(len(series.values))]
        fig, ax = plt.subplots(figsize=(10, 5))
        ax.step(times, series.values, 'k-', where='post', linewidth=0.8)
        ax.axvline(detection.time_s, color='red', alpha=0.5, label='Ventana de disparo')
        ax.axvline(detection.onset_s, color='tab:blue', linestyle='--', label='Onset estimado')
        ax.set_xlabel('Tiempo (s)')
        ax.set_ylabel('Potencia relativa en banda')
        ax.set_title(f"Detección del beep ({series.clock})")
        ax.legend()
        ax.grid(True, alpha=0.3)
        fig.tight_layout()

        if output_file is None:
            plots_dir = self.config.resolve_path(self.config.get_plotting_params()['plots_dir'])
            output_file = os.path.join(plots_dir, f"beep_{series.clock or 'track'}.png")
        directory = os.path.dirname(output_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        fig.savefig(output_file, dpi=150, bbox_inches='tight')
        plt.close(fig)
        logger.info("Guardado: %s", output_file)
        return output_file
