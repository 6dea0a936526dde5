# tests/test_data_loader.py
import os

import numpy as np
import pytest
import yaml
from PIL import Image
from scipy.io import wavfile

from config_manager import ConfigManager
from data_loader import (DataLoader, read_color, read_depth_pgm, read_intrinsics,
                         read_joint_stream, read_wav, write_depth_pgm, write_joint_stream)
from errors import DimensionMismatch, InvalidParameter, IoFailure, MalformedLine
from helpers import RATE, beep_samples, write_wav
from kinematics import JointState

CHAIN_FILE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                          "data", "chains", "three_finger_arm.yaml")


@pytest.fixture
def loader():
    return DataLoader(ConfigManager.from_dict({'kinematics': {'chain_file': CHAIN_FILE}}))


def write_intrinsics(path, width=4, height=3, **overrides):
    data = dict(fx=500.0, fy=500.0, cx=width / 2.0, cy=height / 2.0, width=width, height=height)
    data.update(overrides)
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(data, f)


def test_depth_pgm_keeps_16_bit_values(tmp_path):
    depth = np.array([[0, 1, 65535], [1200, 800, 3]], dtype=np.uint16)
    path = tmp_path / "depth.pgm"
    write_depth_pgm(depth, str(path))
    loaded = read_depth_pgm(str(path))
    assert loaded.dtype == np.uint16
    np.testing.assert_array_equal(loaded, depth)


def test_depth_pgm_header_with_comment(tmp_path):
    path = tmp_path / "depth.pgm"
    pixels = np.array([[1000, 2000]], dtype='>u2').tobytes()
    path.write_bytes(b"P5\n# kinect v2\n2 1\n65535\n" + pixels)
    np.testing.assert_array_equal(read_depth_pgm(str(path)), [[1000, 2000]])


def test_depth_pgm_rejects_ascii_and_missing(tmp_path):
    path = tmp_path / "ascii.pgm"
    path.write_bytes(b"P2\n2 1\n65535\n1 2\n")
    with pytest.raises(IoFailure):
        read_depth_pgm(str(path))
    with pytest.raises(IoFailure):
        read_depth_pgm(str(tmp_path / "missing.pgm"))


def test_read_color_png(tmp_path):
    color = np.zeros((3, 4, 3), dtype=np.uint8)
    color[1, 2] = (10, 20, 30)
    path = tmp_path / "color.png"
    Image.fromarray(color).save(path)
    loaded = read_color(str(path))
    assert loaded.shape == (3, 4, 3)
    assert tuple(loaded[1, 2]) == (10, 20, 30)


def test_read_color_rejects_garbage(tmp_path):
    path = tmp_path / "color.ppm"
    path.write_bytes(b"no es una imagen")
    with pytest.raises(IoFailure):
        read_color(str(path))


def test_intrinsics_need_every_field(tmp_path):
    path = tmp_path / "intr.yaml"
    write_intrinsics(path)
    intr = read_intrinsics(str(path))
    assert (intr.width, intr.height, intr.fx) == (4, 3, 500.0)

    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump({'fx': 1.0, 'fy': 1.0}, f)
    with pytest.raises(InvalidParameter):
        read_intrinsics(str(path))


def test_read_wav_normalizes_pcm(tmp_path):
    samples = beep_samples(0.5, 1.0)
    path = tmp_path / "a.wav"
    write_wav(path, samples)
    track = read_wav(str(path), "ros")
    assert track.sample_rate_hz == RATE
    assert track.origin_clock == "ros"
    assert len(track.samples) == len(samples)
    assert np.max(np.abs(track.samples - samples)) < 1e-4


def test_read_wav_uses_first_channel(tmp_path):
    left = np.full(RATE, 1000, dtype=np.int16)
    right = np.full(RATE, -2000, dtype=np.int16)
    path = tmp_path / "stereo.wav"
    wavfile.write(str(path), RATE, np.stack([left, right], axis=1))
    track = read_wav(str(path), "eyetracker")
    assert np.allclose(track.samples, 1000 / 32768.0)


def test_read_wav_rejects_float_pcm(tmp_path):
    path = tmp_path / "float.wav"
    wavfile.write(str(path), RATE, np.zeros(RATE, dtype=np.float32))
    with pytest.raises(IoFailure):
        read_wav(str(path), "ros")


def test_joint_stream_file(tmp_path):
    states = [JointState((0.1 * i,) * 7, 0.5, (0.2, 0.3, 0.4), 1.5 * i) for i in range(3)]
    path = tmp_path / "joints.txt"
    write_joint_stream(states, str(path))
    loaded = read_joint_stream(str(path))
    assert len(loaded) == 3
    assert loaded[2].timestamp_s == pytest.approx(3.0)
    assert loaded[1].arm == pytest.approx((0.1,) * 7)
    assert loaded[0].flexion == pytest.approx((0.2, 0.3, 0.4))


def test_joint_stream_incomplete_row(tmp_path):
    path = tmp_path / "joints.txt"
    path.write_text("0.0 0 0 0 0 0 0 0 0 0 0 0\n1.0 0 0 0\n", encoding='utf-8')
    with pytest.raises(MalformedLine) as info:
        read_joint_stream(str(path))
    assert info.value.line_number == 2


def test_load_frame_checks_grid(loader, tmp_path):
    color_path, depth_path, intr_path = tmp_path / "c.png", tmp_path / "d.pgm", tmp_path / "i.yaml"
    Image.fromarray(np.zeros((3, 4, 3), dtype=np.uint8)).save(color_path)
    write_depth_pgm(np.full((3, 4), 1000, dtype=np.uint16), str(depth_path))
    write_intrinsics(intr_path)
    frame = loader.load_frame(str(color_path), str(depth_path), str(intr_path), 2.0)
    assert frame.depth.shape == (3, 4)
    assert frame.timestamp_s == 2.0

    write_depth_pgm(np.full((2, 4), 1000, dtype=np.uint16), str(depth_path))
    with pytest.raises(DimensionMismatch):
        loader.load_frame(str(color_path), str(depth_path), str(intr_path))


def test_load_chain_defaults_to_configured_file(loader):
    chain = loader.load_chain()
    assert chain.name == "three_finger_arm"
    with pytest.raises(IoFailure):
        loader.load_chain("/nonexistent/chain.yaml")


def test_load_annotations(loader, tmp_path):
    path = tmp_path / "notes.txt"
    path.write_text("1.5 GRASP_SET uno\n2.0 NOTE\n", encoding='utf-8')
    events = loader.load_annotations(str(path))
    assert [e.timestamp_s for e in events] == [1.5, 2.0]
    with pytest.raises(IoFailure):
        loader.load_annotations(str(tmp_path / "missing.txt"))


def test_load_object_reads_yaml(loader, tmp_path):
    path = tmp_path / "cereal.yaml"
    path.write_text("shape: box\nname: Cereal\ndimensions: [0.2, 0.07, 0.3]\n", encoding='utf-8')
    obj = loader.load_object(str(path))
    assert obj.name == "Cereal"
    assert obj.shape == 'box'
    with pytest.raises(IoFailure):
        loader.load_object(str(tmp_path / "missing.yaml"))
