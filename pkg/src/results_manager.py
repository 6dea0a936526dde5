# src/results_manager.py
import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config_manager import ConfigManager
from grasps import Grasp, GraspLabel
from session_store import SessionRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CountsReport:
    """Conteos de agarres por objeto y medias por objeto y por participante"""
    rows: Tuple[Tuple[str, int, int], ...]
    total_good: int
    total_bad: int
    mean_good: float
    mean_bad: float
    participant_mean_good: float
    participant_mean_bad: float
    participants: Tuple[Tuple[str, int, int, int, int], ...] = ()

    def row(self, name: str) -> Tuple[int, int]:
        for obj, good, bad in self.rows:
            if obj == name:
                return good, bad
        raise KeyError(name)

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame(list(self.rows), columns=['Object', 'Good', 'Bad'])
        extra = pd.DataFrame([['Total', self.total_good, self.total_bad],
                              ['Mean', self.mean_good, self.mean_bad]],
                             columns=['Object', 'Good', 'Bad'])
        return pd.concat([df, extra], ignore_index=True)

    def participants_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(list(self.participants),
                            columns=['Participant', 'Objects good', 'Good', 'Objects bad', 'Bad'])

    def render(self) -> str:
        """Tabla alineada Object | Good | Bad con filas Total y Mean"""
        body = [(name, str(good), str(bad)) for name, good, bad in self.rows]
        body.append(('Total', str(self.total_good), str(self.total_bad)))
        body.append(('Mean', f"{self.mean_good:.2f}", f"{self.mean_bad:.2f}"))
        header = ('Object', 'Good', 'Bad')
        w0 = max(len(r[0]) for r in body + [header])
        w1 = max(len(r[1]) for r in body + [header])
        w2 = max(len(r[2]) for r in body + [header])
        lines = [f"{header[0]:<{w0}} | {header[1]:>{w1}} | {header[2]:>{w2}}",
                 f"{'-' * w0}-+-{'-' * w1}-+-{'-' * w2}"]
        lines += [f"{a:<{w0}} | {b:>{w1}} | {c:>{w2}}" for a, b, c in body]
        lines.append(f"Per participant per object: good {self.participant_mean_good:.2f}, "
                     f"bad {self.participant_mean_bad:.2f}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            'rows': [{'object': o, 'good': g, 'bad': b} for o, g, b in self.rows],
            'total_good': self.total_good, 'total_bad': self.total_bad,
            'mean_good': self.mean_good, 'mean_bad': self.mean_bad,
            'participant_mean_good': self.participant_mean_good,
            'participant_mean_bad': self.participant_mean_bad,
        }


def _robot_trial_grasps(records: Sequence[SessionRecord]):
    """(ensayo, agarre) de todos los ensayos con mano robótica"""
    for record in records:
        grasps = record.grasp_by_id()
        for trial in record.trials:
            if trial.hand != 'robot':
                continue
            for grasp_id in trial.grasp_ids:
                yield trial, grasps[grasp_id]


def aggregate_counts(records: Sequence[SessionRecord]) -> CountsReport:
    """
    Conteos buenos/malos por objeto (incluye la tarea de levantar)

    La media por objeto divide entre todos los objetos del catálogo, tengan
    o no agarres. La media por participante divide entre los pares
    participante-objeto de la fase correspondiente.
    """
    catalog: List[str] = []
    for record in records:
        for entry in record.objects:
            if entry.name not in catalog:
                catalog.append(entry.name)

    counts: Dict[str, List[int]] = {}
    pairs = {GraspLabel.GOOD: set(), GraspLabel.BAD: set()}
    per_participant: Dict[str, List] = {}
    for trial, grasp in _robot_trial_grasps(records):
        name = grasp.object_name
        if name not in catalog:
            catalog.append(name)
        entry = counts.setdefault(name, [0, 0])
        column = 0 if grasp.label == GraspLabel.GOOD else 1
        entry[column] += 1
        pairs[trial.phase].add((trial.participant_id, trial.object_name))

        stats = per_participant.setdefault(trial.participant_id, [set(), 0, set(), 0])
        if trial.phase == GraspLabel.GOOD:
            stats[0].add(trial.object_name)
            stats[1] += 1
        else:
            stats[2].add(trial.object_name)
            stats[3] += 1

    # objetos en ensayos sin agarres también cuentan para los pares
    for record in records:
        for trial in record.trials:
            if trial.hand == 'robot':
                pairs[trial.phase].add((trial.participant_id, trial.object_name))
                stats = per_participant.setdefault(trial.participant_id, [set(), 0, set(), 0])
                stats[0 if trial.phase == GraspLabel.GOOD else 2].add(trial.object_name)

    rows = tuple((name, *counts.get(name, [0, 0])) for name in catalog)
    total_good = sum(r[1] for r in rows)
    total_bad = sum(r[2] for r in rows)
    n_objects = len(catalog)

    def mean(total, n):
        return round(total / n, 2) if n else 0.0

    participants = tuple(
        (pid, len(s[0]), s[1], len(s[2]), s[3]) for pid, s in sorted(per_participant.items())
    )
    return CountsReport(
        rows=rows,
        total_good=total_good,
        total_bad=total_bad,
        mean_good=mean(total_good, n_objects),
        mean_bad=mean(total_bad, n_objects),
        participant_mean_good=mean(sum(p[2] for p in participants), len(pairs[GraspLabel.GOOD])),
        participant_mean_bad=mean(sum(p[4] for p in participants), len(pairs[GraspLabel.BAD])),
        participants=participants,
    )


def range_census(records: Sequence[SessionRecord]) -> Tuple[int, int]:
    """(agarres con al menos un extremo, agarres puntuales) sobre los agarres de los ensayos"""
    with_extremes = without = 0
    for record in records:
        ranged = {r.original.id for r in record.ranges if r.extremes}
        for trial in record.trials:
            for grasp_id in trial.grasp_ids:
                if grasp_id in ranged:
                    with_extremes += 1
                else:
                    without += 1
    return with_extremes, without


def shake_summary(records: Sequence[SessionRecord]) -> pd.DataFrame:
    """Pruebas de agitado registradas, por objeto y en total"""
    rows = []
    for record in records:
        ranges = record.range_by_id()
        for test in record.shake_tests:
            rows.append({'object': ranges[test.range_id].original.object_name,
                         'trials': test.trials, 'successes': test.successes})
    if not rows:
        return pd.DataFrame(columns=['object', 'trials', 'successes', 'success_rate'])
    df = pd.DataFrame(rows).groupby('object', sort=True)[['trials', 'successes']].sum().reset_index()
    total = pd.DataFrame([{'object': 'Total', 'trials': df['trials'].sum(),
                           'successes': df['successes'].sum()}])
    df = pd.concat([df, total], ignore_index=True)
    df['success_rate'] = (df['successes'] / df['trials'].replace(0, np.nan)).fillna(0.0)
    return df


def survey_summary(records: Sequence[SessionRecord]) -> pd.DataFrame:
    """Respuestas de la encuesta de agarre más cercano, por posición t y en total"""
    rows = [{'t': round(s.t, 4), 'correct': s.correct, 'total': s.total}
            for record in records for s in record.surveys]
    if not rows:
        return pd.DataFrame(columns=['t', 'correct', 'total', 'percent_correct'])
    df = pd.DataFrame(rows).groupby('t', sort=True)[['correct', 'total']].sum().reset_index()
    total = pd.DataFrame([{'t': 'all', 'correct': df['correct'].sum(), 'total': df['total'].sum()}])
    df = pd.concat([df, total], ignore_index=True)
    df['percent_correct'] = [100.0 * c / n if n else 0.0 for c, n in zip(df['correct'], df['total'])]
    return df


class ResultsManager:
    """Manejador de resultados del análisis"""

    def __init__(self, config_manager: ConfigManager):
        self.config = config_manager

    def save_counts(self, report: CountsReport, output_file: Optional[str] = None) -> pd.DataFrame:
        """
        Guarda la tabla de conteos en CSV

        Args:
            report: Conteos agregados
            output_file: Archivo de salida (opcional, por defecto el de la configuración)

        Returns:
            DataFrame guardado
        """
        df = report.to_dataframe()
        if output_file is None:
            output_file = self.config.resolve_path(self.config.get_output_params()['counts_csv'])

        directory = os.path.dirname(output_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        df.to_csv(output_file, index=False)
        logger.info("Conteos guardados en: %s (%d objetos)", output_file, len(report.rows))
        return df

    def load_counts(self, input_file: str) -> pd.DataFrame:
        if not os.path.exists(input_file):
            raise FileNotFoundError(f"Archivo no encontrado: {input_file}")
        return pd.read_csv(input_file)

    def plot_palm_groups(self, groups: Sequence[Sequence[Grasp]], output_file: Optional[str] = None):
        """
        Dispersión de las posiciones de la palma en el marco del objeto, por grupo (opcional)

        Args:
            groups: Grupos de agarres similares
            output_file: Figura de salida; si falta se usa el directorio de gráficas
        """
        try:
            import matplotlib
            matplotlib.use('Agg')
            import matplotlib.pyplot as plt
        except ImportError:
            logger.warning("Matplotlib no disponible para plotting")
            return None

        fig = plt.figure(figsize=(7, 6))
        ax = fig.add_subplot(projection='3d')
        for index, group in enumerate(groups):
            palms = np.array([g.palm_in_object() for g in group])
            ax.scatter(palms[:, 0], palms[:, 1], palms[:, 2], s=20, label=f"Grupo {index + 1}")
        ax.set_xlabel('x (m)')
        ax.set_ylabel('y (m)')
        ax.set_zlabel('z (m)')
        ax.set_title('Posición de la palma por grupo')
        if groups:
            ax.legend()
        fig.tight_layout()

        if output_file is None:
            plots_dir = self.config.resolve_path(self.config.get_plotting_params()['plots_dir'])
            output_file = os.path.join(plots_dir, 'palm_groups.png')
        directory = os.path.dirname(output_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        fig.savefig(output_file, dpi=150, bbox_inches='tight')
        plt.close(fig)
        logger.info("Guardado: %s", output_file)
        return output_file
