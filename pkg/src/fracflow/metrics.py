"""Assembly evaluation: rotation/translation RMSE, part accuracy, chamfer.

Predicted and ground-truth pose sets are gauge-fixed before comparison by
re-expressing both relative to the anchor fragment (largest fragment when the
run was anchor-free): generative assembly is only defined up to a shared
rigid motion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .errors import EmptySet, LengthMismatch
from .manifold import Pose, quat_to_matrix, relative_rotation_angle


@dataclass
class MetricConfig:
    pa_threshold: float = 0.01
    rotation_convention: str = "euler_rmse"  # or "geodesic"

    def __post_init__(self):
        if self.pa_threshold <= 0:
            raise ValueError("pa_threshold must be positive")
        if self.rotation_convention not in ("euler_rmse", "geodesic"):
            raise ValueError("rotation_convention must be euler_rmse or geodesic")


@dataclass
class ObjectReport:
    id: str
    category: str
    n_fragments: int
    rmse_r_deg: float
    rmse_r_euler_deg: float
    rmse_r_geodesic_deg: float
    rmse_t: float
    part_accuracy_pct: float
    chamfer: float


@dataclass
class EvalReport:
    rmse_r_deg: float
    rmse_t: float
    part_accuracy_pct: float
    chamfer: float
    rmse_r_euler_deg: float
    rmse_r_geodesic_deg: float
    per_object: list = field(default_factory=list)

    def to_json(self):
        return {
            "version": 1,
            "summary": {
                "rmse_r_deg": self.rmse_r_deg,
                "rmse_r_euler_deg": self.rmse_r_euler_deg,
                "rmse_r_geodesic_deg": self.rmse_r_geodesic_deg,
                "rmse_t": self.rmse_t,
                "part_accuracy_pct": self.part_accuracy_pct,
                "chamfer": self.chamfer,
                "n_objects": len(self.per_object),
            },
            "per_object": [vars(o) for o in self.per_object],
        }


# -- chamfer -------------------------------------------------------------------


def chamfer(points_a, points_b, accelerated: bool = True) -> float:
    """Squared bidirectional chamfer: mean over A of squared nearest-neighbor
    distance into B, plus the same from B into A."""
    a = np.asarray(points_a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(points_b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise EmptySet("chamfer requires two non-empty point sets")
    if accelerated:
        da = cKDTree(b).query(a)[0]
        db = cKDTree(a).query(b)[0]
        return float(np.mean(da**2) + np.mean(db**2))
    d2 = np.sum((a[:, None] - b[None, :]) ** 2, axis=-1)
    return float(d2.min(axis=1).mean() + d2.min(axis=0).mean())


# -- pose errors ----------------------------------------------------------------


def _check_lengths(pred, gt):
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(gt)} ground-truth poses")
    if not pred:
        raise EmptySet("no poses to evaluate")


def _euler_deg(pose: Pose):
    return Rotation.from_matrix(quat_to_matrix(pose.rot)).as_euler("xyz", degrees=True)


def rmse_rotation(pred, gt, convention: str = "euler_rmse") -> float:
    """Degrees. geodesic: RMS of relative angles. euler_rmse: RMS over
    fragments and the three per-axis euler errors (benchmark lineage)."""
    _check_lengths(pred, gt)
    if convention == "geodesic":
        angles = [relative_rotation_angle(p.rot, g.rot) for p, g in zip(pred, gt)]
        return float(np.sqrt(np.mean(np.square(angles))))
    errs = []
    for p, g in zip(pred, gt):
        d = _euler_deg(p) - _euler_deg(g)
        d = (d + 180.0) % 360.0 - 180.0
        errs.extend(d.tolist())
    return float(np.sqrt(np.mean(np.square(errs))))


def rmse_translation(pred, gt) -> float:
    _check_lengths(pred, gt)
    sq = [np.sum((p.trans - g.trans) ** 2) for p, g in zip(pred, gt)]
    return float(np.sqrt(np.mean(sq)))


def gauge_fix(poses, anchor_index: int):
    """Re-express a pose set relative to one pose (that pose becomes identity)."""
    inv = poses[anchor_index].inverse()
    return [inv.compose(p) for p in poses]


def _gauge_anchor(problem, anchors):
    if anchors:
        return int(anchors[0])
    return int(np.argmax([f.n_points for f in problem.fragments]))


def part_accuracy(problem, pred, cfg: MetricConfig, gt=None) -> float:
    """Percent of fragments whose placed point cloud sits within the chamfer
    threshold of its ground-truth placement."""
    gt = problem.gt_poses if gt is None else gt
    _check_lengths(pred, gt)
    correct = 0
    for frag, p, g in zip(problem.fragments, pred, gt):
        pts = frag.points.astype(np.float64)
        if chamfer(p.apply(pts), g.apply(pts)) < cfg.pa_threshold:
            correct += 1
    return 100.0 * correct / problem.n_fragments


def evaluate_object(problem, result, cfg: MetricConfig) -> ObjectReport:
    anchor = _gauge_anchor(problem, result.anchors)
    pred = gauge_fix(result.poses, anchor)
    gt = gauge_fix(problem.gt_poses, anchor)

    r_euler = rmse_rotation(pred, gt, "euler_rmse")
    r_geo = rmse_rotation(pred, gt, "geodesic")
    r_main = r_euler if cfg.rotation_convention == "euler_rmse" else r_geo
    t_err = rmse_translation(pred, gt)
    pa = part_accuracy(problem, pred, cfg, gt=gt)
    assembled_pred = np.concatenate(
        [p.apply(f.points.astype(np.float64)) for f, p in zip(problem.fragments, pred)]
    )
    assembled_gt = np.concatenate(
        [g.apply(f.points.astype(np.float64)) for f, g in zip(problem.fragments, gt)]
    )
    cd = chamfer(assembled_pred, assembled_gt)
    return ObjectReport(
        problem.id, problem.category, problem.n_fragments,
        r_main, r_euler, r_geo, t_err, pa, cd,
    )


def evaluate_corpus(results, problems, cfg: MetricConfig) -> EvalReport:
    """Per-object metrics averaged arithmetically. results/problems matched by id."""
    by_id = {p.id: p for p in problems}
    missing = [r.problem_id for r in results if r.problem_id not in by_id]
    if missing:
        raise LengthMismatch(f"results reference unknown problems: {missing[:3]}")
    if not results:
        raise EmptySet("no results to evaluate")
    objects = [evaluate_object(by_id[r.problem_id], r, cfg) for r in results]

    def mean(attr):
        return float(np.mean([getattr(o, attr) for o in objects]))

    return EvalReport(
        rmse_r_deg=mean("rmse_r_deg"),
        rmse_t=mean("rmse_t"),
        part_accuracy_pct=mean("part_accuracy_pct"),
        chamfer=mean("chamfer"),
        rmse_r_euler_deg=mean("rmse_r_euler_deg"),
        rmse_r_geodesic_deg=mean("rmse_r_geodesic_deg"),
        per_object=objects,
    )
