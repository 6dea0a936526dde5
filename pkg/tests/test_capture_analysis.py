# tests/test_capture_analysis.py
import capture_analysis
from capture_analysis import CaptureAnalysis
from config_manager import DEFAULT_CONFIG, ConfigManager
from data_loader import write_joint_stream
from kinematics import JointState, sample_surface
from ply_io import write_ply
from rgbd import PointCloud
from transforms import RigidTransform

Q = JointState((0.0, 0.3, 0.0, 0.8, 0.0, 0.4, 0.0), 0.3, (0.5, 0.5, 0.5), 0.0)


def analysis_with(chain_path, **kinematics):
    return CaptureAnalysis(config=ConfigManager.from_dict(
        {'kinematics': dict(chain_file=chain_path, **kinematics)}))


def test_default_density_comes_from_kinematics_section(chain_path):
    assert analysis_with(chain_path).sample_density() == DEFAULT_CONFIG['kinematics']['sample_density']
    assert analysis_with(chain_path, sample_density=5000).sample_density() == 5000.0


def test_align_arm_samples_the_model_at_the_configured_density(tmp_path, chain, chain_path,
                                                               monkeypatch):
    seen = []

    def recording(chain_, q, density, *rest):
        seen.append(density)
        return sample_surface(chain_, q, density, *rest)

    monkeypatch.setattr(capture_analysis, 'sample_surface', recording)
    joints = tmp_path / "joints.txt"
    write_joint_stream([Q], str(joints))
    cloud = tmp_path / "cloud.ply"
    write_ply(PointCloud(sample_surface(chain, Q, 5000.0)), str(cloud))

    analysis_with(chain_path, sample_density=5000.0).align_arm(
        str(cloud), str(joints), RigidTransform.identity())
    assert seen == [5000.0]
