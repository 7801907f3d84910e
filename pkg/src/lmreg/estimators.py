"""scikit-learn style wrappers so registration composes with pipelines and grid search.

``LandmarkPoseRegressor`` fits a pose from 3D landmarks ``X`` and their 2D
observations ``y``; ``predict`` projects new 3D points under that pose.
``HeatmapDecoder`` and ``RegistrationFrameTransformer`` are stateless
transformers that chain heatmaps into registration-frame landmarks.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .geometry import (DEFAULT_DETECTOR_SIZE, DEFAULT_NETWORK_SIZE, DEFAULT_PIXEL_SPACING,
                       DEFAULT_SDD, CameraIntrinsics, Pose, detector_to_registration,
                       project_landmarks, registration_to_detector)
from .heatmap import DEFAULT_TEMPERATURE, decode
from .registration import (ROTATION_BOUND, TRANSLATION_BOUND, OptimizerConfig,
                           RegistrationProblem, estimate_pose)


class LandmarkPoseRegressor(BaseEstimator):
    """Recover the 6-DoF pose aligning 3D landmarks with 2D observations.

    Parameters
    ----------
    sdd : float, default=1020.0
        Source-to-detector distance in mm.
    pixel_spacing : float, default=0.5
        Detector pixel size in mm.
    image_size : tuple of int, default=(768, 768)
    principal_point : tuple of float or None
        Defaults to the image centre.
    method : {'adam', 'lbfgs'}, default='adam'
    learning_rate : float, default=1e-3
    max_iter : int, default=100
    tol : float, default=1e-10
        Stop once the loss changes by less than this between iterations.
    rotation_bound, translation_bound : float
        Box bounds on each rotation (rad) and translation (mm) component.
    init_pose : array-like of shape (6,) or None
        Starting ``(r, t)``; identity when None.

    Attributes
    ----------
    pose_ : Pose
    rotation_vector_, translation_ : ndarray of shape (3,)
    loss_ : float
        Final reprojection loss (px^2).
    n_iter_ : int
    converged_ : bool
    loss_curve_ : list of float
    """

    def __init__(self, sdd=DEFAULT_SDD, pixel_spacing=DEFAULT_PIXEL_SPACING,
                 image_size=(DEFAULT_DETECTOR_SIZE, DEFAULT_DETECTOR_SIZE), principal_point=None,
                 method="adam", learning_rate=1e-3, max_iter=100, tol=1e-10,
                 rotation_bound=ROTATION_BOUND, translation_bound=TRANSLATION_BOUND,
                 init_pose=None):
        self.sdd = sdd
        self.pixel_spacing = pixel_spacing
        self.image_size = image_size
        self.principal_point = principal_point
        self.method = method
        self.learning_rate = learning_rate
        self.max_iter = max_iter
        self.tol = tol
        self.rotation_bound = rotation_bound
        self.translation_bound = translation_bound
        self.init_pose = init_pose

    def _intrinsics(self):
        return CameraIntrinsics(self.sdd, self.pixel_spacing, tuple(self.image_size),
                                self.principal_point)

    def fit(self, X, y):
        X = check_array(X, ensure_min_samples=3)
        y = check_array(y, ensure_min_samples=3)
        problem = RegistrationProblem(X, y, self._intrinsics(), self.rotation_bound,
                                      self.translation_bound)
        cfg = OptimizerConfig(method=self.method, learning_rate=self.learning_rate,
                              max_iters=self.max_iter, tolerance=self.tol)
        init = None if self.init_pose is None else Pose.from_vector(self.init_pose)
        result = estimate_pose(problem, cfg, init)
        self.pose_ = result.pose
        self.rotation_vector_ = np.array(result.pose.r)
        self.translation_ = np.array(result.pose.t)
        self.loss_ = result.final_loss
        self.n_iter_ = result.iterations_run
        self.converged_ = result.converged
        self.loss_curve_ = list(result.trace)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Project 3D landmarks into the registration frame under ``pose_``."""
        check_is_fitted(self, "pose_")
        X = check_array(X)
        return project_landmarks(self.pose_, self._intrinsics(), X)

    def score(self, X, y):
        """Negative reprojection RMSE in pixels (higher is better)."""
        y = check_array(y)
        err = self.predict(X) - y
        return -float(np.sqrt(np.mean(np.sum(err**2, axis=1))))


class HeatmapDecoder(TransformerMixin, BaseEstimator):
    """Decode (N, H, W) heatmap stacks to (N, 2) pixel coordinates ``(x, y)``."""

    def __init__(self, method="soft", temperature=DEFAULT_TEMPERATURE):
        self.method = method
        self.temperature = temperature

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return decode(X, method=self.method, tau=self.temperature)


class RegistrationFrameTransformer(TransformerMixin, BaseEstimator):
    """Network-resolution pixels to the centred, v-up registration frame."""

    def __init__(self, net_size=DEFAULT_NETWORK_SIZE, det_size=DEFAULT_DETECTOR_SIZE):
        self.net_size = net_size
        self.det_size = det_size

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = check_array(X)
        return detector_to_registration(X, self.net_size, self.det_size)

    def inverse_transform(self, X):
        X = check_array(X)
        return registration_to_detector(X, self.net_size, self.det_size)
