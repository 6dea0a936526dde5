# tests/helpers.py
"""Generadores sintéticos compartidos por los tests"""
import numpy as np
from scipy.io import wavfile

from timebase import AudioTrack

RATE = 44100


def beep_samples(onset_s: float, duration_s: float, rate: int = RATE, seed: int = 0,
                 amplitude: float = 0.5, noise: float = 0.01, tone_s: float = 1.0,
                 freq_hz: float = 5000.0) -> np.ndarray:
    """Ruido gaussiano con un tono de freq_hz entre onset_s y onset_s + tone_s"""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * rate))
    t = np.arange(n) / rate
    samples = rng.normal(0.0, noise, n)
    on = (t >= onset_s) & (t < onset_s + tone_s)
    samples[on] += amplitude * np.sin(2 * np.pi * freq_hz * (t[on] - onset_s))
    return samples


def beep_track(onset_s: float, duration_s: float = 10.0, clock: str = "ros",
               seed: int = 0, **kwargs) -> AudioTrack:
    return AudioTrack(beep_samples(onset_s, duration_s, seed=seed, **kwargs), RATE, clock)


def write_wav(path, samples: np.ndarray, rate: int = RATE):
    pcm = np.clip(np.round(samples * 32767), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), rate, pcm)


def perturbation(rng, max_angle_deg: float, max_translation: float):
    """Transformación aleatoria con ángulo y traslación exactos dados"""
    from transforms import RigidTransform

    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    return RigidTransform.from_rotvec(axis * np.radians(max_angle_deg), direction * max_translation)


def palm_frame_hand(chain, q, density: float = 20000.0):
    """Muestras de la mano expresadas en el marco de la palma"""
    from kinematics import hand_samples, palm_pose

    return palm_pose(chain, q).inverse().apply(hand_samples(chain, q, density))


# --- almacenes de sesión sintéticos ---------------------------------------

# Objeto, tarea natural, agarres buenos, agarres malos
STUDY_OBJECTS = [
    ("Water Pitcher", "Pour water out of pitcher", 11, 1),
    ("Spray Bottle", "Pull trigger to spray", 14, 22),
    ("Margarita Glass", "Drink out of glass", 14, 14),
    ("Cereal Box", "Pour cereal out of box", 12, 18),
    ("Cracker Box", "Pour crackers out of box", 15, 7),
    ("Television Remote", "Press power button on remote", 11, 14),
    ("Toy Plane", "Pretend to fly plane around", 13, 19),
    ("Food Clip", "Open clip (to close bag)", 10, 3),
    ("Soap Dispenser", "Press down on nozzle to dispense soap", 10, 5),
    ("Foam Cylinder", "Throw object overhand", 16, 15),
    ("Bison Plush Toy", "Hand toy to someone", 5, 0),
    ("Plush Ball", "Throw ball underhand", 19, 10),
    ("Thunder Stick", "Hit something with it", 10, 0),
    ("Sock Doll", "Hand doll to someone", 16, 15),
    ("Decorative Cord", "Hang cord by its metal ring", 5, 6),
    ("Tape Roll", "Support tape roll for ripping tape off", 11, 4),
]
# catalogado pero sin agarres robóticos
EXTRA_OBJECT = ("Snowman", "Pick up snowman", 0, 0)


def robot_grasp(grasp_id: str, object_name: str, label: str = "good",
                task: str = "natural", participant: str = ""):
    from grasps import Grasp
    from kinematics import JointState

    return Grasp(grasp_id, object_name, label, task, JointState(), participant_id=participant)


def _trial(trial_id, participant, object_name, phase, grasp_ids, range_ids=()):
    from session_store import TrialRecord

    return TrialRecord(trial_id, participant, object_name, "natural", phase, "robot",
                       tuple(grasp_ids), tuple(range_ids))


def study_table_record(participant: str = "p01"):
    """Sesión con los conteos por objeto de la tabla de objetos del estudio"""
    from session_store import ObjectEntry, SessionRecord

    objects, grasps, trials = [], [], []
    for index, (name, task, good, bad) in enumerate(STUDY_OBJECTS + [EXTRA_OBJECT]):
        objects.append(ObjectEntry(name, task))
        for phase, count in (("good", good), ("bad", bad)):
            if not count:
                continue
            ids = [f"o{index:02d}-{phase}-{i:02d}" for i in range(count)]
            grasps += [robot_grasp(g, name, phase, participant=participant) for g in ids]
            trials.append(_trial(f"t{index:02d}-{phase}", participant, name, phase, ids))
    return SessionRecord("study-table", participant, objects=objects, grasps=grasps, trials=trials)


def participant_records():
    """Dos participantes: 9 buenos y 6 malos repartidos en dos pares por fase"""
    from session_store import ObjectEntry, SessionRecord

    records = []
    for participant, name, good, bad in (("p1", "Mug", 5, 3), ("p2", "Cup", 4, 3)):
        grasps, trials = [], []
        for phase, count in (("good", good), ("bad", bad)):
            ids = [f"{participant}-{phase}-{i}" for i in range(count)]
            grasps += [robot_grasp(g, name, phase, participant=participant) for g in ids]
            trials.append(_trial(f"{participant}-{phase}", participant, name, phase, ids))
        records.append(SessionRecord(f"s-{participant}", participant,
                                     objects=[ObjectEntry(name, "")], grasps=grasps, trials=trials))
    return records


def census_record(total: int = 294, with_extremes: int = 179):
    """Sesión con `total` agarres de ensayo de los que `with_extremes` tienen un extremo"""
    from grasps import GraspRange
    from session_store import ObjectEntry, SessionRecord

    originals = [robot_grasp(f"g{i:03d}", "Mug") for i in range(total)]
    extremes = [robot_grasp(f"g{i:03d}-x", "Mug") for i in range(with_extremes)]
    ranges = [GraspRange(f"r{i:03d}", originals[i], (extremes[i],)) for i in range(with_extremes)]
    trial = _trial("t0", "p1", "Mug", "good", [g.id for g in originals], [r.id for r in ranges])
    return SessionRecord("census", "p1", objects=[ObjectEntry("Mug", "Drink")],
                         grasps=originals + extremes, ranges=ranges, trials=[trial])
