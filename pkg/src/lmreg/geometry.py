"""Rigid transforms, Rodrigues rotations, and the projection model.

Frames used throughout the package:

* **world** -- millimetres, origin at the CT volume centre (see
  :func:`voxel_to_world`); the volume sits ``vtd`` mm along world +y.
* **camera** -- world axes remapped by :data:`WORLD_TO_CAMERA` so that world
  +y becomes the optical axis (camera +z).
* **detector** -- pixels, origin at the top-left of the full-resolution
  detector image, v pointing down.
* **network** -- detector pixels rescaled to the heatmap resolution.
* **registration** -- detector pixels centred on the image centre with v
  pointing up. Registration problems are posed in this frame.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_points, as_vector, check_positive, frozen
from .errors import InvalidArgumentError

SMALL_ANGLE = 1e-8
MIN_DEPTH = 1e-3

# world y -> camera z, world x -> camera x, world z -> camera -y
WORLD_TO_CAMERA = frozen([[1.0, 0.0, 0.0],
                          [0.0, 0.0, -1.0],
                          [0.0, 1.0, 0.0]])

DEFAULT_SDD = 1020.0
DEFAULT_PIXEL_SPACING = 0.5
DEFAULT_DETECTOR_SIZE = 768
DEFAULT_NETWORK_SIZE = 512
# pelvis centre ~220 mm in front of the detector, magnification ~1.3
DEFAULT_VTD = 800.0


@dataclass(frozen=True)
class Pose:
    """6-DoF rigid transform ``p -> R(r) p + t``.

    Parameters
    ----------
    r : array-like of shape (3,)
        Rotation vector in radians (axis times angle).
    t : array-like of shape (3,)
        Translation in mm.
    """

    r: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "r", frozen(as_vector(self.r, 3, "rotation vector")))
        object.__setattr__(self, "t", frozen(as_vector(self.t, 3, "translation")))

    @classmethod
    def identity(cls):
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, theta):
        theta = as_vector(theta, 6, "pose vector")
        return cls(theta[:3], theta[3:])

    @classmethod
    def from_degrees(cls, r_deg, t):
        return cls(np.deg2rad(as_vector(r_deg, 3, "rotation")), t)

    def as_vector(self):
        """Return ``(r_x, r_y, r_z, t_x, t_y, t_z)`` as a fresh array."""
        return np.concatenate([self.r, self.t])

    @property
    def r_degrees(self):
        return np.rad2deg(self.r)

    def matrix(self):
        return rodrigues(self.r)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.r, other.r) and np.array_equal(self.t, other.t)

    def __hash__(self):
        return hash((self.r.tobytes(), self.t.tobytes()))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model of an X-ray source and flat detector.

    ``principal_point`` defaults to the image centre ``(W/2, H/2)``.
    """

    sdd: float = DEFAULT_SDD
    pixel_spacing: float = DEFAULT_PIXEL_SPACING
    image_size: tuple = (DEFAULT_DETECTOR_SIZE, DEFAULT_DETECTOR_SIZE)
    principal_point: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "sdd", check_positive(self.sdd, "sdd"))
        object.__setattr__(self, "pixel_spacing",
                           check_positive(self.pixel_spacing, "pixel_spacing"))
        size = tuple(int(s) for s in self.image_size)
        if len(size) != 2 or min(size) < 1:
            raise InvalidArgumentError(f"image_size must be two integers >= 1, got {self.image_size}")
        object.__setattr__(self, "image_size", size)
        if self.principal_point is None:
            pp = (size[0] / 2.0, size[1] / 2.0)
        else:
            pp = tuple(float(c) for c in as_vector(self.principal_point, 2, "principal_point"))
        object.__setattr__(self, "principal_point", pp)

    @property
    def focal_length(self):
        """Focal length in pixels, ``sdd / pixel_spacing``."""
        return self.sdd / self.pixel_spacing

    @property
    def matrix(self):
        f = self.focal_length
        cu, cv = self.principal_point
        return np.array([[f, 0.0, cu], [0.0, f, cv], [0.0, 0.0, 1.0]])

    def to_dict(self):
        return {
            "sdd": self.sdd,
            "pixel_spacing": self.pixel_spacing,
            "image_size": list(self.image_size),
            "principal_point": list(self.principal_point),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(sdd=d.get("sdd", DEFAULT_SDD),
                   pixel_spacing=d.get("pixel_spacing", DEFAULT_PIXEL_SPACING),
                   image_size=tuple(d.get("image_size", (DEFAULT_DETECTOR_SIZE,) * 2)),
                   principal_point=d.get("principal_point"))


@dataclass(frozen=True)
class VolumeFrame:
    """CT volume placement: centre ``center`` (voxels), ``spacing`` (mm/voxel)
    and the volume-to-detector displacement ``vtd`` (mm, along world y)."""

    center: np.ndarray
    spacing: np.ndarray
    vtd: float = DEFAULT_VTD

    def __post_init__(self):
        object.__setattr__(self, "center", frozen(as_vector(self.center, 3, "center")))
        spacing = as_vector(self.spacing, 3, "spacing")
        if np.any(spacing <= 0):
            raise InvalidArgumentError(f"voxel spacing must be positive, got {spacing}")
        object.__setattr__(self, "spacing", frozen(spacing))
        vtd = float(self.vtd)
        if not np.isfinite(vtd):
            raise InvalidArgumentError("vtd must be finite")
        object.__setattr__(self, "vtd", vtd)

    def to_dict(self):
        return {"center": self.center.tolist(), "spacing": self.spacing.tolist(), "vtd": self.vtd}

    @classmethod
    def from_dict(cls, d):
        return cls(d["center"], d["spacing"], d.get("vtd", DEFAULT_VTD))


def skew(v):
    """Cross-product matrix: ``skew(v) @ w == np.cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues(r, jacobian=False):
    """Rotation matrix for the rotation vector ``r``.

    Parameters
    ----------
    r : array-like of shape (3,)
        Axis-angle vector in radians.
    jacobian : bool, default=False
        Also return ``dR`` of shape (3, 3, 3) with ``dR[k] = dR/dr_k``.

    Notes
    -----
    Below an angle of ``SMALL_ANGLE`` the first-order series ``I + skew(r)``
    is used, with derivative ``skew(e_k)``.
    """
    r = as_vector(r, 3, "rotation vector")
    theta = np.linalg.norm(r)
    eye = np.eye(3)
    if theta < SMALL_ANGLE:
        R = eye + skew(r)
        if not jacobian:
            return R
        return R, np.stack([skew(e) for e in eye])

    K = skew(r / theta)
    R = eye + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)
    if not jacobian:
        return R
    # Gallego & Yezzi closed form: dR/dr_k = (r_k [r]x + [r x (I - R) e_k]x) R / |r|^2
    Kr = skew(r)
    I_minus_R = eye - R
    dR = np.empty((3, 3, 3))
    for k in range(3):
        dR[k] = (r[k] * Kr + skew(np.cross(r, I_minus_R[:, k]))) @ R / theta**2
    return R, dR


def transform_point(pose, p):
    """Apply ``R p + t``; accepts a single point or an (N, 3) array."""
    single = np.ndim(p) == 1
    pts = as_points(p, 3, "point")
    out = pts @ rodrigues(pose.r).T + pose.t
    return out[0] if single else out


def project_point(intr, p_cam):
    """Perspective projection of camera-frame point(s) to detector pixels.

    Depth is clamped to ``MIN_DEPTH`` before the division, so the output is
    always finite.
    """
    single = np.ndim(p_cam) == 1
    pts = as_points(p_cam, 3, "camera point")
    f = intr.focal_length
    cu, cv = intr.principal_point
    z = np.maximum(pts[:, 2], MIN_DEPTH)
    uv = np.column_stack([(f * pts[:, 0] + cu * z) / z, (f * pts[:, 1] + cv * z) / z])
    return uv[0] if single else uv


def detector_to_centered(uv, image_size):
    """Detector pixels -> registration frame (centred, v up), no rescaling."""
    uv = as_points(uv, 2, "detector points")
    w, h = image_size
    return np.column_stack([uv[:, 0] - w / 2.0, -(uv[:, 1] - h / 2.0)])


def centered_to_detector(uv, image_size):
    uv = as_points(uv, 2, "registration points")
    w, h = image_size
    return np.column_stack([uv[:, 0] + w / 2.0, h / 2.0 - uv[:, 1]])


def world_to_camera(points, axis_map=WORLD_TO_CAMERA):
    return as_points(points, 3) @ np.asarray(axis_map).T


def project_landmarks(pose, intr, landmarks, axis_map=WORLD_TO_CAMERA):
    """Project world landmarks under ``pose`` into the registration frame.

    Each point goes through ``R p + t``, the fixed world-to-camera axis map,
    the pinhole projection of :func:`project_point`, and finally the
    detector-to-registration re-centring (v flipped to point up).

    Returns
    -------
    ndarray of shape (N, 2)
    """
    pts = as_points(landmarks, 3, "landmarks")
    cam = world_to_camera(transform_point(pose, pts), axis_map)
    return detector_to_centered(project_point(intr, cam), intr.image_size)


def camera_depths(pose, landmarks, axis_map=WORLD_TO_CAMERA):
    """Unclamped camera-frame depth of each landmark under ``pose``."""
    cam = world_to_camera(transform_point(pose, as_points(landmarks, 3)), axis_map)
    return cam[:, 2]


def voxel_to_world(voxels, frame):
    """``(v - C) * spacing`` per point, then ``+ vtd`` on the y component."""
    pts = as_points(voxels, 3, "voxel coordinates")
    world = (pts - frame.center) * frame.spacing
    world[:, 1] += frame.vtd
    return world


def detector_to_registration(points, net_size=DEFAULT_NETWORK_SIZE, det_size=DEFAULT_DETECTOR_SIZE):
    """Map network-resolution pixel coordinates into the registration frame.

    Scales by ``det_size / net_size``, centres u on the detector middle and
    flips v about it.
    """
    net_size = check_positive(net_size, "net_size")
    det_size = check_positive(det_size, "det_size")
    pts = as_points(points, 2, "landmarks")
    scaled = pts * (det_size / net_size)
    half = det_size / 2.0
    return np.column_stack([scaled[:, 0] - half, -(scaled[:, 1] - half)])


def registration_to_detector(points, net_size=DEFAULT_NETWORK_SIZE, det_size=DEFAULT_DETECTOR_SIZE):
    """Inverse of :func:`detector_to_registration`."""
    net_size = check_positive(net_size, "net_size")
    det_size = check_positive(det_size, "det_size")
    pts = as_points(points, 2, "landmarks")
    half = det_size / 2.0
    scaled = np.column_stack([pts[:, 0] + half, half - pts[:, 1]])
    return scaled * (net_size / det_size)
