"""Seeded synthetic registration cases standing in for rendered radiographs."""

from dataclasses import dataclass
from importlib import resources

import numpy as np

from ._validation import as_points, check_positive
from .errors import CaseRejectedError, InvalidArgumentError
from .geometry import (DEFAULT_NETWORK_SIZE, DEFAULT_VTD, MIN_DEPTH, CameraIntrinsics, Pose,
                       VolumeFrame, camera_depths, project_landmarks,
                       registration_to_detector, voxel_to_world)
from .heatmap import Heatmap, gaussian_heatmap
from .io import read_landmarks

GENERATOR_VERSION = "lmreg-synth/1 (numpy Philox-4x64)"
MAX_ATTEMPTS = 1000

DEFAULT_VOLUME = VolumeFrame(center=(256.0, 256.0, 128.0), spacing=(0.8, 0.8, 1.0), vtd=DEFAULT_VTD)
LANDMARK_NAMES = ("L-ASIS", "L-IOF", "L-MOF", "SPS", "IPS", "R-MOF", "R-IOF", "R-ASIS")


@dataclass(frozen=True)
class SamplingRanges:
    """Symmetric half-widths: rotations in degrees, translations in mm."""

    rot_range: float = 45.0
    trans_range: float = 50.0

    def __post_init__(self):
        for name in ("rot_range", "trans_range"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0:
                raise InvalidArgumentError(f"{name} must be >= 0, got {value}")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class SyntheticCase:
    case_id: str
    true_pose: Pose
    landmarks_3d: np.ndarray
    landmarks_2d_gt: np.ndarray
    landmarks_2d_noisy: np.ndarray
    noise_sigma: float
    seed: int
    intrinsics: CameraIntrinsics

    def to_dict(self):
        return {
            "case_id": self.case_id,
            "generator": GENERATOR_VERSION,
            "seed": int(self.seed),
            "pose": {
                "rotation_deg": self.true_pose.r_degrees.tolist(),
                "translation_mm": self.true_pose.t.tolist(),
            },
            "landmarks_3d": np.asarray(self.landmarks_3d).tolist(),
            "landmarks_2d_gt": np.asarray(self.landmarks_2d_gt).tolist(),
            "landmarks_2d_noisy": np.asarray(self.landmarks_2d_noisy).tolist(),
            "noise_sigma": float(self.noise_sigma),
            "intrinsics": self.intrinsics.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            pose = Pose.from_degrees(doc["pose"]["rotation_deg"], doc["pose"]["translation_mm"])
            l3 = as_points(doc["landmarks_3d"], 3, "landmarks_3d")
            gt = as_points(doc["landmarks_2d_gt"], 2, "landmarks_2d_gt")
            noisy = as_points(doc["landmarks_2d_noisy"], 2, "landmarks_2d_noisy")
            return cls(case_id=str(doc["case_id"]), true_pose=pose, landmarks_3d=l3,
                       landmarks_2d_gt=gt, landmarks_2d_noisy=noisy,
                       noise_sigma=float(doc["noise_sigma"]), seed=int(doc["seed"]),
                       intrinsics=CameraIntrinsics.from_dict(doc["intrinsics"]))
        except KeyError as exc:
            raise InvalidArgumentError(f"case document is missing field {exc.args[0]!r}") from None


def make_rng(seed):
    """Philox generator for an integer seed; generators pass through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(int(seed)))


def derive_seed(base_seed, index, attempt=0):
    """Independent 63-bit seed for case ``index`` (and resampling ``attempt``)."""
    ss = np.random.SeedSequence([int(base_seed), int(index), int(attempt)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def sample_pose(seed, ranges=SamplingRanges()):
    """Uniform pose inside the symmetric sampling box."""
    rng = make_rng(seed)
    r_deg = rng.uniform(-ranges.rot_range, ranges.rot_range, size=3)
    t = rng.uniform(-ranges.trans_range, ranges.trans_range, size=3)
    return Pose(np.deg2rad(r_deg), t)


def check_non_degenerate(points, rel_tol=1e-3):
    """Raise unless ``points`` span 3-D (smallest/largest singular value > rel_tol)."""
    pts = as_points(points, 3, "landmarks", min_count=4)
    sv = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    if sv[-1] <= rel_tol * sv[0]:
        raise InvalidArgumentError(
            f"landmarks are (nearly) coplanar: singular values {sv.tolist()}")
    return pts


def load_pelvis_voxels():
    """The packaged 8-landmark pelvic fixture in voxel coordinates."""
    ref = resources.files("lmreg") / "data" / "pelvis_voxels.csv"
    with resources.as_file(ref) as path:
        return read_landmarks(path, dim=3)


def pelvis_landmarks(frame=DEFAULT_VOLUME):
    """World-frame (mm) pelvic fixture, checked for non-coplanarity."""
    return check_non_degenerate(voxel_to_world(load_pelvis_voxels(), frame))


def generate_case(seed, landmarks_3d, intr=None, ranges=SamplingRanges(), noise_sigma=0.0,
                  case_id=None, max_extent=2.0):
    """Sample a pose, project the landmarks, and add isotropic pixel noise.

    ``max_extent`` bounds the ground-truth projections to ``max_extent`` times
    the detector half-width (half-height) around its centre.

    Raises
    ------
    CaseRejectedError
        If a landmark lands behind the source or outside that box; callers
        resample with a new seed.
    """
    intr = intr or CameraIntrinsics()
    l3 = as_points(landmarks_3d, 3, "landmarks_3d")
    noise_sigma = float(noise_sigma)
    if not np.isfinite(noise_sigma) or noise_sigma < 0:
        raise InvalidArgumentError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = make_rng(seed)
    pose = sample_pose(rng, ranges)
    if np.any(camera_depths(pose, l3) <= MIN_DEPTH):
        raise CaseRejectedError(f"seed {seed}: a landmark lies behind the source")
    gt = project_landmarks(pose, intr, l3)
    w, h = intr.image_size
    if np.any(np.abs(gt[:, 0]) > max_extent * w / 2) or np.any(np.abs(gt[:, 1]) > max_extent * h / 2):
        raise CaseRejectedError(
            f"seed {seed}: a landmark projects outside {max_extent:g}x the detector")
    noisy = gt + rng.normal(0.0, noise_sigma, size=gt.shape) if noise_sigma > 0 else gt.copy()
    return SyntheticCase(
        case_id=case_id or f"seed_{seed}", true_pose=pose, landmarks_3d=l3,
        landmarks_2d_gt=gt, landmarks_2d_noisy=noisy, noise_sigma=noise_sigma,
        seed=int(seed), intrinsics=intr,
    )


def generate_indexed_case(base_seed, index, landmarks_3d, intr=None, ranges=SamplingRanges(),
                          noise_sigma=0.0, max_extent=2.0):
    """Case ``index`` of a seeded batch, resampling rejected poses deterministically."""
    case_id = f"case_{index:04d}"
    for attempt in range(MAX_ATTEMPTS):
        seed = derive_seed(base_seed, index, attempt)
        try:
            return generate_case(seed, landmarks_3d, intr, ranges, noise_sigma, case_id=case_id,
                                 max_extent=max_extent)
        except CaseRejectedError:
            continue
    raise CaseRejectedError(f"{case_id}: no acceptable pose after {MAX_ATTEMPTS} attempts")


def case_to_heatmaps(case, sigma=2.0, net_size=DEFAULT_NETWORK_SIZE):
    """Gaussian heatmap fixtures at each landmark's network-frame position.

    The ground-truth registration-frame landmarks are mapped back through the
    inverse of :func:`~lmreg.geometry.detector_to_registration`.
    """
    check_positive(sigma, "sigma")
    det_size = case.intrinsics.image_size[0]
    centers = registration_to_detector(case.landmarks_2d_gt, net_size, det_size)
    size = (int(net_size), int(net_size))
    return [Heatmap(gaussian_heatmap(c, sigma, size), landmark_id=i + 1)
            for i, c in enumerate(centers)]
