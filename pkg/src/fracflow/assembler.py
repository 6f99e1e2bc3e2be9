"""Two-session inference: a one-step full-length flow step for pose
initialization, then uniform multi-step refinement on the manifold.

Anchors are pinned to identity for the whole trajectory; time restarts at 0
for the refinement session (the pre-session output is only a better starting
point, not a time offset).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint
from .denoiser import (
    DenoiserConfig,
    build_tokens,
    compute_features,
    forward,
    make_flow_instance,
)
from .encoder import EncoderConfig, params_from_arrays
from .errors import CheckpointMismatch, TooFewFragments
from .manifold import (
    Pose,
    Tangent,
    derive_rng,
    euler_step,
    quat_conj,
    quat_rotate,
    sample_noise_pose,
)

POLICIES = ("largest", "random", "none")


@dataclass
class InferenceConfig:
    pre_steps: int = 1       # 0 or 1
    refine_steps: int = 20
    anchor_policy: str = "largest"
    seed: int = 0
    tokens_per_object: int | None = None  # None: the denoiser config's budget

    def __post_init__(self):
        if self.pre_steps not in (0, 1):
            raise ValueError("pre_steps must be 0 or 1")
        if self.refine_steps < 1:
            raise ValueError("refine_steps must be >= 1")
        if self.anchor_policy not in POLICIES:
            raise ValueError(f"anchor_policy must be one of {POLICIES}")


@dataclass
class AssemblyResult:
    problem_id: str
    poses: list                  # stored-gauge Pose per fragment
    anchors: list
    wall_ms: float
    trajectory: list = field(default_factory=list)  # optional per-step stored-gauge poses

    def to_json(self):
        return {
            "version": 1,
            "id": self.problem_id,
            "anchors": [int(a) for a in self.anchors],
            "poses": [[float(x) for x in p.as_array()] for p in self.poses],
        }


def select_anchor(problem, policy: str, rng) -> list:
    """largest: most points (the surface-area-weighted budget proxy), lowest
    index on ties; random: one uniform fragment; none: empty set."""
    n = problem.n_fragments
    if n < 2:
        raise TooFewFragments(f"problem '{problem.id}' has {n} fragment(s)")
    if policy == "largest":
        counts = [f.n_points for f in problem.fragments]
        return [int(np.argmax(counts))]
    if policy == "random":
        return [int(rng.integers(n))]
    if policy == "none":
        return []
    raise ValueError(f"unknown anchor policy '{policy}'")


def step_schedule(cfg: InferenceConfig) -> list:
    """(t, h) pairs: the optional full-length pre-step, then a uniform grid."""
    n = cfg.refine_steps
    schedule = [(0.0, 1.0)] if cfg.pre_steps else []
    schedule += [(k / n, 1.0 / n) for k in range(n)]
    return schedule


def load_checkpoints(encoder_path, denoiser_path):
    """Load an encoder/denoiser pair, enforcing the recorded linkage hash."""
    enc_arrays, enc_kind, _, enc_hash = load_checkpoint(encoder_path)
    den_arrays, den_kind, linked, den_hash = load_checkpoint(denoiser_path)
    if enc_kind != "encoder" or den_kind != "denoiser":
        raise CheckpointMismatch(
            f"checkpoint kinds {enc_kind}/{den_kind} are not encoder/denoiser"
        )
    if linked and linked != enc_hash:
        raise CheckpointMismatch(
            f"denoiser was trained against encoder {linked[:12]}, got {enc_hash[:12]}"
        )
    return enc_arrays, den_arrays, enc_hash, den_hash


def _field(instance, poses, t, den_params, cfg):
    """Evaluate the learned field; the rotation head is world-frame, so rotate
    it into each fragment's body frame for the right-translated Euler step."""
    batch = build_tokens([instance], [poses], t, den_params, cfg)
    v_rot, v_trans = forward(batch, den_params, cfg)
    v_world = v_rot.data.astype(np.float64)
    v_body = np.stack(
        [quat_rotate(quat_conj(poses[i].rot), v_world[i]) for i in range(len(poses))]
    )
    return v_body, v_trans.data.astype(np.float64)


def assemble(problem, enc_arrays, enc_cfg: EncoderConfig, den_arrays,
             den_cfg: DenoiserConfig, infer_cfg: InferenceConfig,
             rng=None, record_trajectory=False) -> AssemblyResult:
    """Run two-session flow matching on one problem; poses are reported in the
    stored-fragment gauge (directly comparable with problem.gt_poses)."""
    if problem.n_fragments < 2:
        raise TooFewFragments(f"problem '{problem.id}' has {problem.n_fragments} fragment(s)")
    rng = derive_rng(infer_cfg.seed, "assemble", problem.id) if rng is None else rng
    t_start = time.perf_counter()

    anchors = select_anchor(problem, infer_cfg.anchor_policy, rng)
    tokens = infer_cfg.tokens_per_object or den_cfg.tokens_per_object
    instance = make_flow_instance(problem, anchors, rng, enc_cfg, tokens)
    enc_params = params_from_arrays(enc_arrays)
    den_params = params_from_arrays(den_arrays)
    compute_features(instance, enc_params, enc_cfg)  # pose-invariant, cached

    n = instance.n_fragments
    is_anchor = instance.anchor_mask
    poses = [Pose.identity() if is_anchor[i] else sample_noise_pose(rng) for i in range(n)]

    trajectory = []

    def snapshot():
        if record_trajectory:
            trajectory.append([poses[i].compose(instance.frame_poses[i]) for i in range(n)])

    snapshot()
    for t, h in step_schedule(infer_cfg):
        v_rot, v_trans = _field(instance, poses, t, den_params, den_cfg)
        for i in range(n):
            if is_anchor[i]:
                continue  # anchors stay bit-identical to identity
            poses[i] = euler_step(poses[i], Tangent(v_rot[i], v_trans[i]), h)
        snapshot()

    stored = [poses[i].compose(instance.frame_poses[i]) for i in range(n)]
    wall_ms = (time.perf_counter() - t_start) * 1e3
    return AssemblyResult(problem.id, stored, anchors, wall_ms, trajectory)


def save_result(result: AssemblyResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result.to_json(), indent=1, sort_keys=True))
    return path


def load_result(path) -> AssemblyResult:
    doc = json.loads(Path(path).read_text())
    poses = [Pose.from_array(a) for a in doc["poses"]]
    return AssemblyResult(doc["id"], poses, doc["anchors"], 0.0)
