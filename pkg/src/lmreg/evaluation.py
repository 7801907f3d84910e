"""Per-landmark RMSE reporting and pose error diagnostics."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .geometry import rodrigues
from .io import read_json, write_json
from .registration import pose_rmse

REPORT_VERSION = 1


@dataclass(frozen=True)
class RmseReport:
    per_landmark: tuple
    mean: float
    n_images: int
    unit: str = "px"
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "version": REPORT_VERSION,
            "per_landmark": [float(v) for v in self.per_landmark],
            "mean": float(self.mean),
            "n_images": int(self.n_images),
            "unit": self.unit,
            "config_hash": self.config_hash,
            **({"extra": self.extra} if self.extra else {}),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(per_landmark=tuple(float(v) for v in doc["per_landmark"]),
                   mean=float(doc["mean"]), n_images=int(doc["n_images"]),
                   unit=doc.get("unit", "px"), config_hash=doc.get("config_hash", ""),
                   extra=doc.get("extra", {}))

    def table(self):
        """Plain-text table: a Mean column followed by L1..LN."""
        n = len(self.per_landmark)
        head = ["Mean"] + [f"L{i}" for i in range(1, n + 1)]
        vals = [self.mean] + list(self.per_landmark)
        widths = [max(len(hd), 8) for hd in head]
        line1 = " | ".join(hd.rjust(w) for hd, w in zip(head, widths))
        line2 = " | ".join(f"{v:{w}.2f}" for v, w in zip(vals, widths))
        return (f"RMSE ({self.unit}) over {self.n_images} image(s)\n"
                f"{line1}\n{'-' * len(line1)}\n{line2}")


@dataclass(frozen=True)
class PoseErrorReport:
    rotation_error: float     # degrees, geodesic
    translation_error: float  # mm
    pose_rmse: float          # unitless


def _stack(sets, name):
    try:
        arr = np.asarray(sets, dtype=np.float64)
    except ValueError:
        raise InvalidArgumentError(f"{name}: landmark sets have inconsistent sizes") from None
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise InvalidArgumentError(f"{name} must have shape (images, N, 2), got {arr.shape}")
    return arr


def rmse_per_landmark(pred, gt, config_hash=""):
    """RMSE per landmark over images, then the mean over landmarks.

    Parameters
    ----------
    pred, gt : sequence of (N, 2) arrays
        One landmark set per image, index-aligned.
    """
    p = _stack(pred, "pred")
    g = _stack(gt, "gt")
    if p.shape != g.shape:
        raise InvalidArgumentError(f"pred shape {p.shape} does not match gt shape {g.shape}")
    if p.shape[0] == 0 or p.shape[1] == 0:
        raise InvalidArgumentError("no landmarks to evaluate")
    sq = np.sum((p - g) ** 2, axis=2)              # (images, N)
    per = np.sqrt(np.mean(sq, axis=0))
    return RmseReport(per_landmark=tuple(per.tolist()), mean=float(np.mean(per)),
                      n_images=int(p.shape[0]), config_hash=config_hash)


def pose_error(pose_hat, pose_star):
    """Geodesic rotation angle (deg), translation distance (mm) and pose RMSE."""
    D = rodrigues(pose_hat.r).T @ rodrigues(pose_star.r)
    # same angle as arccos((tr D - 1) / 2), but atan2 keeps precision near 0 and 180 deg
    cos = (np.trace(D) - 1.0) / 2.0
    sin = np.linalg.norm([D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1]]) / 2.0
    return PoseErrorReport(
        rotation_error=float(np.degrees(np.arctan2(sin, cos))),
        translation_error=float(np.linalg.norm(pose_hat.t - pose_star.t)),
        pose_rmse=pose_rmse(pose_hat, pose_star),
    )


def evaluate_dataset(cases, decoded, report_path=None, config_hash=""):
    """RMSE of decoded landmark sets against each case's ground truth.

    Writes the report as JSON to ``report_path`` when given.
    """
    cases = list(cases)
    decoded = list(decoded)
    if len(cases) != len(decoded):
        raise InvalidArgumentError(f"{len(cases)} cases but {len(decoded)} decoded sets")
    if not cases:
        raise InvalidArgumentError("no cases to evaluate")
    report = rmse_per_landmark(decoded, [c.landmarks_2d_gt for c in cases], config_hash)
    if report_path is not None:
        write_report(report_path, report)
    return report


def write_report(path, report):
    write_json(path, report.to_dict())


def read_report(path):
    return RmseReport.from_dict(read_json(path))
