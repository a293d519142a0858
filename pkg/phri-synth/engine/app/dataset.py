"""
Episode files and dataset manifests.

An episode directory holds ``meta.json`` plus four little-endian binary
arrays without headers: ``obs.bin`` float32 [T, 1505, 6], ``subgoals.bin``
float32 [T, 4, 3], ``actions.bin`` float32 [T, 7] and ``flags.bin`` with one
packed (uint8 contact, uint16 phase) record per frame. The format version
and the SHA-256 digest of every binary file live in ``meta.json``.
"""

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ValidationError
from scipy.spatial.transform import Rotation

from .errors import CorruptFile, IOFailure, VersionMismatch
from .logger import get_logger
from .schemas import DatasetManifest, Vec3
from .sim import CLOUD_SIZE, gripper_points

logger = get_logger(__name__)

FORMAT_VERSION = 1
OBS_DTYPE = np.dtype("<f4")
FLAGS_DTYPE = np.dtype([("contact", "u1"), ("phase", "<u2")])
FRAME_SHAPES = {
    "obs.bin": (CLOUD_SIZE + 5, 6),
    "subgoals.bin": (4, 3),
    "actions.bin": (7,),
}
BINARY_FILES = ("obs.bin", "subgoals.bin", "actions.bin", "flags.bin")
RECOMPOSITION_TOLERANCE = 1e-5


class EpisodeMeta(BaseModel):
    format_version: int = FORMAT_VERSION
    episode: str
    task: str
    status: str = "accepted"
    attempt: int = 0
    seed_chain: Dict[str, str] = {}
    scene_id: str = ""
    human_id: str = ""
    program_hash: str = ""
    robot_config_hash: str = ""
    frames: int
    frame_rate: float
    target_point: Vec3
    initial_tool_pose: List[float]  # position then quaternion xyzw
    coverage_points: Optional[List[Vec3]] = None
    digests: Dict[str, str] = {}


@dataclass(eq=False)
class EpisodeRecord:
    meta: EpisodeMeta
    obs: np.ndarray
    subgoals: np.ndarray
    actions: np.ndarray
    flags: np.ndarray

    @property
    def contact(self) -> np.ndarray:
        return self.flags["contact"].astype(bool)

    @property
    def phase(self) -> np.ndarray:
        return self.flags["phase"].astype(int)

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "obs.bin": np.ascontiguousarray(self.obs, dtype=OBS_DTYPE),
            "subgoals.bin": np.ascontiguousarray(self.subgoals, dtype=OBS_DTYPE),
            "actions.bin": np.ascontiguousarray(self.actions, dtype=OBS_DTYPE),
            "flags.bin": np.ascontiguousarray(self.flags, dtype=FLAGS_DTYPE),
        }


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def atomic_write(path: Path, data: bytes) -> None:
    """Write through a temporary file in the same directory and rename it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "wb") as f:
            f.write(data)
        os.replace(temp, path)
    except OSError as e:
        Path(temp).unlink(missing_ok=True)
        raise IOFailure(f"cannot write {path.name}: {e}", path=str(path)) from e


def write_episode(record: EpisodeRecord, directory: str | Path) -> EpisodeMeta:
    directory = Path(directory)
    digests = {}
    for name, array in record.arrays().items():
        data = array.tobytes()
        atomic_write(directory / name, data)
        digests[name] = digest(data)
    meta = record.meta.model_copy(update={"digests": digests, "frames": len(record.flags)})
    atomic_write(directory / "meta.json", (meta.model_dump_json(indent=2) + "\n").encode("utf-8"))
    record.meta = meta
    return meta


def read_meta(directory: str | Path) -> EpisodeMeta:
    path = Path(directory) / "meta.json"
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise IOFailure(f"cannot read episode metadata: {e}", path=str(path)) from e
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as e:
        raise CorruptFile(f"meta.json is not valid JSON: {e.msg}", path=str(path), offset=e.pos) from e
    version = payload.get("format_version") if isinstance(payload, dict) else None
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"unsupported episode format version {version}", expected=FORMAT_VERSION, found=version)
    try:
        return EpisodeMeta.model_validate(payload)
    except ValidationError as e:
        raise CorruptFile(f"invalid episode metadata: {e.errors()[0]['msg']}", path=str(path)) from e


def read_episode(directory: str | Path) -> EpisodeRecord:
    """Load an episode, verifying every binary file against its recorded size and digest."""
    directory = Path(directory)
    meta = read_meta(directory)
    arrays = {}
    for name in BINARY_FILES:
        path = directory / name
        try:
            data = path.read_bytes()
        except OSError as e:
            raise IOFailure(f"cannot read {name}: {e}", path=str(path)) from e
        if digest(data) != meta.digests.get(name):
            raise CorruptFile(f"{name} does not match its recorded digest", path=str(path), size=len(data))
        if name == "flags.bin":
            dtype, shape = FLAGS_DTYPE, (meta.frames,)
        else:
            dtype, shape = OBS_DTYPE, (meta.frames, *FRAME_SHAPES[name])
        if len(data) != dtype.itemsize * int(np.prod(shape)):
            raise CorruptFile(f"{name} has {len(data)} bytes, expected {dtype.itemsize * int(np.prod(shape))}", path=str(path))
        arrays[name] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
    return EpisodeRecord(meta, arrays["obs.bin"], arrays["subgoals.bin"], arrays["actions.bin"], arrays["flags.bin"])


# Tool-frame delta actions

def delta_action(pose_from: np.ndarray, pose_to: np.ndarray) -> np.ndarray:
    """(dx, dy, dz, qx, qy, qz, qw): motion from ``pose_from`` to ``pose_to`` in the frame of ``pose_from``."""
    rotation = pose_from[:3, :3]
    translation = rotation.T @ (pose_to[:3, 3] - pose_from[:3, 3])
    quat = Rotation.from_matrix(rotation.T @ pose_to[:3, :3]).as_quat()
    if quat[3] < 0:
        quat = -quat
    return np.concatenate([translation, quat])


def apply_action(pose: np.ndarray, action) -> np.ndarray:
    action = np.asarray(action, dtype=float)
    step = np.eye(4)
    step[:3, :3] = Rotation.from_quat(action[3:] / np.linalg.norm(action[3:])).as_matrix()
    step[:3, 3] = action[:3]
    return pose @ step


def pose_from_vector(vector) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    pose = np.eye(4)
    pose[:3, :3] = Rotation.from_quat(vector[3:]).as_matrix()
    pose[:3, 3] = vector[:3]
    return pose


def pose_vector(pose: np.ndarray) -> list[float]:
    quat = Rotation.from_matrix(pose[:3, :3]).as_quat()
    if quat[3] < 0:
        quat = -quat
    return [float(v) for v in (*pose[:3, 3], *quat)]


def recompose_tool_poses(record: EpisodeRecord) -> np.ndarray:
    """Tool pose of every frame, rebuilt by chaining the stored actions from frame 0."""
    poses = [pose_from_vector(record.meta.initial_tool_pose)]
    for action in record.actions[:-1]:
        poses.append(apply_action(poses[-1], action))
    return np.array(poses)


def check_episode(record: EpisodeRecord, tool_poses: Optional[np.ndarray] = None) -> list[str]:
    """Names of the record invariants that do not hold; empty when the episode is sound."""
    problems = []
    if np.any(np.diff(record.phase) < 0):
        problems.append("phase_not_monotonic")
    if tool_poses is None:
        recomposed = recompose_tool_poses(record)
        grippers = np.array([gripper_points(pose) for pose in recomposed])
        if np.abs(grippers - record.obs[:, CLOUD_SIZE : CLOUD_SIZE + 4, :3]).max() > RECOMPOSITION_TOLERANCE:
            problems.append("action_recomposition")
    else:
        recomposed = recompose_tool_poses(record)
        if np.abs(recomposed[:, :3, 3] - tool_poses[:, :3, 3]).max() > 1e-6:
            problems.append("action_recomposition")
    return problems


# Manifests

def write_manifest(manifest: DatasetManifest, out_dir: str | Path) -> Path:
    path = Path(out_dir) / "manifest.json"
    atomic_write(path, (manifest.model_dump_json(indent=2) + "\n").encode("utf-8"))
    return path


def read_manifest(out_dir: str | Path) -> DatasetManifest:
    path = Path(out_dir) / "manifest.json"
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IOFailure(f"cannot read manifest: {e}", path=str(path)) from e
    try:
        return DatasetManifest.model_validate_json(raw)
    except ValidationError as e:
        raise CorruptFile(f"invalid manifest: {e.errors()[0]['msg']}", path=str(path)) from e


def dataset_stats(out_dir: str | Path) -> dict:
    """Counts, rejection rates and a digest check of every episode listed in the manifest."""
    out_dir = Path(out_dir)
    manifest = read_manifest(out_dir)
    bad = []
    for episode in manifest.episodes:
        for name, expected in episode.digests.items():
            try:
                actual = digest((out_dir / episode.path / name).read_bytes())
            except OSError:
                actual = None
            if actual != expected:
                bad.append(f"{episode.path}/{name}")
    rejection_files = sorted(p.stem for p in (out_dir / "rejections").glob("*.json"))
    counts = manifest.counts
    return {
        "task": manifest.task,
        "attempted": counts.attempted,
        "accepted": counts.accepted,
        "rejected": dict(sorted(counts.rejected.items())),
        "rejection_rate": (counts.attempted - counts.accepted) / counts.attempted if counts.attempted else 0.0,
        "reconciled": counts.accepted + sum(counts.rejected.values()) == counts.attempted
        and len(manifest.episodes) == counts.accepted,
        "rejection_records": len(rejection_files),
        "digests_ok": not bad,
        "bad_files": bad,
    }
