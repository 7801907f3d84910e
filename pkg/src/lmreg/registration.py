"""Landmark-based 2D/3D registration: reprojection loss, its gradient, and pose search."""

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_points, check_positive
from .errors import InvalidArgumentError
from .geometry import (MIN_DEPTH, WORLD_TO_CAMERA, CameraIntrinsics, Pose,
                       rodrigues)
from .optim import LBFGS, Adam

ROTATION_BOUND = 2 * np.pi
TRANSLATION_BOUND = 500.0

PRESETS = {
    "paper": {"method": "adam", "learning_rate": 1e-3, "max_iters": 100, "tolerance": 1e-10},
    # Adam cannot follow the rotation/lateral-translation valley of this
    # geometry within 2000 steps; the quasi-Newton solver does.
    "converge": {"method": "lbfgs", "learning_rate": 1.0, "max_iters": 2000, "tolerance": 1e-10},
}


@dataclass(frozen=True)
class RegistrationProblem:
    """Paired 3D world landmarks and 2D registration-frame observations."""

    landmarks_3d: np.ndarray
    landmarks_2d: np.ndarray
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    rotation_bound: float = ROTATION_BOUND
    translation_bound: float = TRANSLATION_BOUND
    axis_map: np.ndarray = WORLD_TO_CAMERA

    def __post_init__(self):
        l3 = as_points(self.landmarks_3d, 3, "3D landmarks")
        l2 = as_points(self.landmarks_2d, 2, "2D landmarks")
        if l3.shape[0] != l2.shape[0]:
            raise InvalidArgumentError(
                f"landmark counts differ: {l3.shape[0]} 3D vs {l2.shape[0]} 2D")
        for arr in (l3, l2):
            arr.setflags(write=False)
        object.__setattr__(self, "landmarks_3d", l3)
        object.__setattr__(self, "landmarks_2d", l2)
        object.__setattr__(self, "rotation_bound", check_positive(self.rotation_bound, "rotation_bound"))
        object.__setattr__(self, "translation_bound",
                           check_positive(self.translation_bound, "translation_bound"))

    @property
    def n_landmarks(self):
        return self.landmarks_3d.shape[0]

    @property
    def lower(self):
        return -self.upper

    @property
    def upper(self):
        return np.array([self.rotation_bound] * 3 + [self.translation_bound] * 3)


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "adam"
    learning_rate: float = 1e-3
    max_iters: int = 100
    tolerance: float = 1e-10
    betas: tuple = (0.9, 0.999)
    epsilon: float = 1e-8
    history_size: int = 10
    fix_rotation: bool = False

    def __post_init__(self):
        if self.method not in ("adam", "lbfgs"):
            raise InvalidArgumentError(f"method must be 'adam' or 'lbfgs', got {self.method!r}")
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise InvalidArgumentError(f"learning_rate must be > 0, got {self.learning_rate}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InvalidArgumentError(f"max_iters must be an integer >= 1, got {self.max_iters}")
        if not self.tolerance >= 0:
            raise InvalidArgumentError(f"tolerance must be >= 0, got {self.tolerance}")
        if self.history_size < 1:
            raise InvalidArgumentError("history_size must be >= 1")

    @classmethod
    def preset(cls, name, **overrides):
        try:
            params = dict(PRESETS[name])
        except KeyError:
            raise InvalidArgumentError(f"unknown preset {name!r}") from None
        params.update(overrides)
        return cls(**params)

    def to_dict(self):
        return {
            "method": self.method, "learning_rate": self.learning_rate,
            "max_iters": int(self.max_iters), "tolerance": self.tolerance,
            "betas": list(self.betas), "epsilon": self.epsilon,
            "history_size": self.history_size, "fix_rotation": self.fix_rotation,
        }


@dataclass(frozen=True)
class RegistrationResult:
    pose: Pose
    final_loss: float
    iterations_run: int
    converged: bool
    trace: tuple

    def reprojection_rmse(self, n_landmarks):
        """Root-mean-square landmark distance (px) implied by ``final_loss``."""
        return float(np.sqrt(self.final_loss / n_landmarks))


def _residuals(theta, prob, with_grad):
    r, t = theta[:3], theta[3:]
    if with_grad:
        R, dR = rodrigues(r, jacobian=True)
    else:
        R = rodrigues(r)
    intr = prob.intrinsics
    M = np.asarray(prob.axis_map)
    f = intr.focal_length
    cu, cv = intr.principal_point
    w, h = intr.image_size

    world = prob.landmarks_3d @ R.T + t
    cam = world @ M.T
    z = cam[:, 2]
    clamped = z < MIN_DEPTH
    zc = np.where(clamped, MIN_DEPTH, z)
    u = f * cam[:, 0] / zc + cu - w / 2.0
    v = -(f * cam[:, 1] / zc + cv - h / 2.0)
    res = np.column_stack([u, v]) - prob.landmarks_2d
    if not with_grad:
        return res, None

    a = 2.0 * res[:, 0]           # dL/du_detector
    b = -2.0 * res[:, 1]          # dL/dv_detector (v is flipped)
    g_cam = np.column_stack([
        f * a / zc,
        f * b / zc,
        np.where(clamped, 0.0, -f * (cam[:, 0] * a + cam[:, 1] * b) / zc**2),
    ])
    g_world = g_cam @ M
    grad = np.empty(6)
    grad[3:] = g_world.sum(axis=0)
    for k in range(3):
        grad[k] = np.sum(g_world * (prob.landmarks_3d @ dR[k].T))
    return res, grad


def _theta(pose):
    return pose.as_vector() if isinstance(pose, Pose) else np.asarray(pose, dtype=np.float64)


def reprojection_loss(pose, prob):
    """Sum over landmarks of the squared 2D distance between projection and observation."""
    res, _ = _residuals(_theta(pose), prob, with_grad=False)
    return float(np.sum(res**2))


def loss_gradient(pose, prob):
    """Closed-form gradient of :func:`reprojection_loss` w.r.t. ``(r, t)``.

    Where a landmark's depth is clamped the derivative through depth is zero.
    """
    _, grad = _residuals(_theta(pose), prob, with_grad=True)
    return grad


def loss_and_gradient(pose, prob):
    # overflow surfaces as a non-finite loss, which the minimizers report as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        res, grad = _residuals(_theta(pose), prob, with_grad=True)
        return float(np.sum(res**2)), grad


def _make_minimizer(cfg):
    if cfg.method == "adam":
        return Adam(lr=cfg.learning_rate, max_iter=int(cfg.max_iters), tol=cfg.tolerance,
                    betas=tuple(cfg.betas), eps=cfg.epsilon)
    return LBFGS(lr=cfg.learning_rate, max_iter=int(cfg.max_iters), tol=cfg.tolerance,
                 history_size=cfg.history_size)


def estimate_pose(prob, cfg=None, init=None):
    """Minimise the reprojection loss over the pose, inside the box bounds.

    Parameters
    ----------
    prob : RegistrationProblem
    cfg : OptimizerConfig, optional
        Defaults to the "paper" preset: Adam, lr 1e-3, 100 iterations.
    init : Pose, optional
        Starting pose, identity by default. Must lie within the bounds.

    Returns
    -------
    RegistrationResult

    Raises
    ------
    RegistrationDivergedError
        If the loss becomes non-finite.
    """
    cfg = cfg or OptimizerConfig()
    init = init or Pose.identity()
    x0 = init.as_vector()
    lower, upper = prob.lower, prob.upper
    if np.any(x0 < lower) or np.any(x0 > upper):
        raise InvalidArgumentError("initial pose lies outside the registration bounds")

    if cfg.fix_rotation:
        r_fixed = x0[:3]

        def fun_and_grad(x):
            loss, grad = loss_and_gradient(np.concatenate([r_fixed, x]), prob)
            return loss, grad[3:]

        out = _make_minimizer(cfg).minimize(fun_and_grad, x0[3:], lower[3:], upper[3:])
        theta = np.concatenate([r_fixed, out.x])
    else:
        out = _make_minimizer(cfg).minimize(lambda x: loss_and_gradient(x, prob), x0, lower, upper)
        theta = out.x
    return RegistrationResult(
        pose=Pose.from_vector(theta),
        final_loss=out.fun,
        iterations_run=out.nit,
        converged=out.converged,
        trace=tuple(out.trace),
    )


def pose_rmse(pose, pose_star):
    """Root-mean-square of the raw 6-vector difference (radians and mm mixed)."""
    d = _theta(pose) - _theta(pose_star)
    return float(np.sqrt(np.mean(d**2)))


def composite_loss(seg, pose, weight):
    """``seg + weight * pose``; ``weight`` must be non-negative."""
    if weight < 0:
        raise InvalidArgumentError(f"pose loss weight must be >= 0, got {weight}")
    return seg + weight * pose
