"""Flow-matching vector field over fragment poses.

Tokens are per-point embeddings built from frozen encoder features plus
sinusoidally encoded geometry, current pose, and time. Transformer blocks
alternate fragment-local self-attention (each point attends only within its
fragment's span) with object-wide global attention; per-fragment mean-pooled
readouts regress the rotational and translational velocities.

Frame convention for a training/inference instance: anchor fragments are
presented in their assembled placement (ground-truth pose = identity, targets
zero), every other fragment is recentered to its centroid and given a random
orientation, so its ground-truth pose (the inverse of that re-framing) is
recoverable only from geometry. This keeps any anchor subset consistent with
the identity-pose convention that the multi-anchor strategy supervises.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

import fracflow.autodiff as ad
from .autodiff import OptimState, Tensor, adam_step, backward, multistep_lr, zero_grads
from .encoder import EncoderConfig, encode, knn_indices, ppf_features
from .errors import AlreadyAdapted, EmptyDataset, ShapeMismatch, TPastOne, TooFewFragments
from .manifold import (
    Pose,
    Tangent,
    derive_rng,
    geodesic_interp,
    quat_conj,
    quat_mul,
    quat_rotate,
    sample_noise_pose,
    sample_uniform_rotation,
    so3_log,
)

T_CLAMP = 1e-3  # keep 1/(1-t) targets bounded


@dataclass
class DenoiserConfig:
    embed_dim: int = 128     # paper-scale analog: 512
    layers: int = 3          # paper: 6
    heads: int = 4           # paper: 8
    ffn_dim: int = 256
    pe_bands: int = 8
    time_bands: int = 8
    tokens_per_object: int = 144
    lr: float = 2e-4
    epochs: int = 240
    batch_problems: int = 4

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")


@dataclass
class LoraConfig:
    rank: int = 8            # paper: 128
    alpha: float = 16.0      # paper: 256
    dropout: float = 0.1
    lr: float = 1e-3
    epochs: int = 120


# -- parameters -----------------------------------------------------------------


def _mlp_params(rng, name, din, dhid, dout):
    return {
        f"{name}.w1": ad.parameter(ad.glorot(rng, din, dhid)),
        f"{name}.b1": ad.parameter(np.zeros(dhid, dtype=np.float32)),
        f"{name}.w2": ad.parameter(ad.glorot(rng, dhid, dout)),
        f"{name}.b2": ad.parameter(np.zeros(dout, dtype=np.float32)),
    }


def _ln_params(name, d):
    return {
        f"{name}.g": ad.parameter(np.ones(d, dtype=np.float32)),
        f"{name}.b": ad.parameter(np.zeros(d, dtype=np.float32)),
    }


ATTN_PROJECTIONS = ("wq", "wk", "wv", "wo")


def _attn_params(rng, name, d):
    p = {}
    for proj in ATTN_PROJECTIONS:
        p[f"{name}.{proj}"] = ad.parameter(ad.glorot(rng, d, d))
        p[f"{name}.{proj[1]}b"] = ad.parameter(np.zeros(d, dtype=np.float32))
    return p


def init_denoiser_params(cfg: DenoiserConfig, enc_cfg: EncoderConfig, rng) -> dict:
    d = cfg.embed_dim
    pe = 2 * cfg.pe_bands
    shape_in = enc_cfg.feature_dim + pe * 7  # F | PE(xyz) | PE(n) | PE(s)
    pose_in = pe * 7                         # PE(quat wxyz + trans xyz)
    params = {}
    params.update(_mlp_params(rng, "den.shape", shape_in, d, d))
    params.update(_mlp_params(rng, "den.pose", pose_in, d, d))
    params.update(_mlp_params(rng, "den.world", pe * 6, d, d))  # PE(T_t x) | PE(T_t n)
    params["den.time.w"] = ad.parameter(ad.glorot(rng, 2 * cfg.time_bands, d))
    params["den.time.b"] = ad.parameter(np.zeros(d, dtype=np.float32))
    for l in range(cfg.layers):
        params.update(_ln_params(f"den.l{l}.self.ln", d))
        params.update(_attn_params(rng, f"den.l{l}.self", d))
        params.update(_ln_params(f"den.l{l}.glob.ln", d))
        params.update(_attn_params(rng, f"den.l{l}.glob", d))
        params.update(_ln_params(f"den.l{l}.ffn.ln", d))
        params.update(_mlp_params(rng, f"den.l{l}.ffn", d, cfg.ffn_dim, d))
    params.update(_ln_params("den.head.ln", d))
    params.update(_mlp_params(rng, "den.rot", d, d, 3))
    params.update(_mlp_params(rng, "den.trans", d, d, 3))
    return params


# -- flow instances ----------------------------------------------------------------


@dataclass
class FlowInstance:
    """One problem re-framed for the flow: per-fragment local clouds the poses
    act on, their ground-truth poses, and cached pose-independent inputs.
    ``frame_poses`` map stored fragment coordinates into each local frame, so a
    predicted pose composes back to the stored gauge as pred . frame."""

    problem: object
    local_points: list
    local_normals: list
    frag_scale: list
    gt_poses: list
    anchor_mask: np.ndarray
    knn_idx: list
    ppf: list
    frame_poses: list = None
    features: list = None          # frozen encoder outputs, (m_i, c) arrays
    token_geo: list = None         # cached pose-independent token inputs

    @property
    def n_fragments(self):
        return len(self.local_points)

    @property
    def seq_lens(self):
        return [len(p) for p in self.local_points]


def subsample_counts(sizes, total, floor):
    """Largest-remainder split of ``total`` proportional to sizes, floored."""
    sizes = np.asarray(sizes, dtype=np.float64)
    total = min(int(total), int(sizes.sum()))
    raw = sizes / sizes.sum() * total
    base = np.floor(raw).astype(np.int64)
    frac = raw - base
    for i in np.argsort(-frac)[: total - int(base.sum())]:
        base[i] += 1
    base = np.minimum(np.maximum(base, floor), sizes.astype(np.int64))
    # re-balance to keep the exact total after clamping
    diff = total - int(base.sum())
    order = np.argsort(-(sizes - base))
    i = 0
    while diff != 0 and i < 10 * len(sizes):
        j = order[i % len(sizes)]
        step = 1 if diff > 0 else -1
        cand = base[j] + step
        if floor <= cand <= sizes[j]:
            base[j] = cand
            diff -= step
        i += 1
    return [int(b) for b in base]


def make_flow_instance(problem, anchors, rng, enc_cfg: EncoderConfig,
                       tokens_per_object=None, rotate=True) -> FlowInstance:
    """Build the per-fragment local frames the flow will act on.

    anchors: iterable of fragment indices presented in assembled placement.
    Non-anchors are recentered and (optionally) randomly rotated; their
    ground-truth pose undoes that re-framing.
    """
    n = problem.n_fragments
    if n < 2:
        raise TooFewFragments(f"problem '{problem.id}' has {n} fragment(s)")
    anchor_mask = np.zeros(n, dtype=bool)
    anchor_mask[list(anchors)] = True

    floor = enc_cfg.knn + 1
    sizes = [f.n_points for f in problem.fragments]
    if tokens_per_object is not None:
        counts = subsample_counts(sizes, tokens_per_object, floor)
    else:
        counts = sizes

    local_points, local_normals, scales, gt, frames = [], [], [], [], []
    knns, ppfs = [], []
    for i, frag in enumerate(problem.fragments):
        m = frag.n_points
        if counts[i] < m:
            idx = np.sort(rng.choice(m, size=counts[i], replace=False))
        else:
            idx = np.arange(m)
        pts = frag.points[idx].astype(np.float64)
        nrm = frag.normals[idx].astype(np.float64)
        # assembled-frame placement comes from the stored pose
        pts = problem.gt_poses[i].apply(pts)
        nrm = problem.gt_poses[i].apply_normals(nrm)
        if anchor_mask[i]:
            gt.append(Pose.identity())
            frames.append(problem.gt_poses[i])
        else:
            c = pts.mean(axis=0)
            pts = pts - c
            if rotate:
                q = sample_uniform_rotation(rng)
                pts = quat_rotate(q, pts)
                nrm = quat_rotate(q, nrm)
            else:
                q = np.array([1.0, 0.0, 0.0, 0.0])
            gt.append(Pose(quat_conj(q), c))
            frames.append(Pose(q, -quat_rotate(q, c)).compose(problem.gt_poses[i]))
        local_points.append(pts)
        local_normals.append(nrm)
        scales.append(float(frag.scale[0]))
        kidx = knn_indices(pts, enc_cfg.knn)
        knns.append(kidx)
        ppfs.append(ppf_features(pts, nrm, kidx))
    return FlowInstance(problem, local_points, local_normals, scales, gt, anchor_mask, knns, ppfs, frames)


def compute_features(instance: FlowInstance, enc_params, enc_cfg: EncoderConfig) -> None:
    """Frozen encoder features per fragment (pose-invariant; cacheable across
    integration steps)."""
    feats = []
    for pts, nrm, s, kidx, ppf in zip(
        instance.local_points, instance.local_normals, instance.frag_scale,
        instance.knn_idx, instance.ppf,
    ):
        scale_col = np.full(len(pts), s, dtype=np.float32)
        f = encode(pts, nrm, scale_col, enc_params, enc_cfg, knn_idx=kidx, ppf=ppf)
        feats.append(f.data.copy())
    instance.features = feats


def _sin_encode_np(x, bands):
    x = np.asarray(x, dtype=np.float64)
    freq = np.pi * (2.0 ** np.arange(bands))
    ang = x[..., None] * freq
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1).reshape(*x.shape[:-1], -1).astype(np.float32)


def _token_geometry(instance: FlowInstance, cfg: DenoiserConfig) -> None:
    """Pose-independent part of every token: features and encoded geometry."""
    geo = []
    for f, pts, nrm, s in zip(
        instance.features, instance.local_points, instance.local_normals, instance.frag_scale
    ):
        pe_p = _sin_encode_np(pts, cfg.pe_bands)
        pe_n = _sin_encode_np(nrm, cfg.pe_bands)
        pe_s = _sin_encode_np(np.full((len(pts), 1), s), cfg.pe_bands)
        geo.append(np.concatenate([f, pe_p, pe_n, pe_s], axis=1).astype(np.float32))
    instance.token_geo = geo


@dataclass
class TokenBatch:
    """Concatenated per-point tokens for one or more objects."""

    tokens: Tensor
    frag_spans: list      # (start, length) per fragment, across the whole batch
    object_spans: list    # (start, length) per object
    frag_objects: list    # object index per fragment


def build_tokens(instances, poses_per_instance, t, params, cfg: DenoiserConfig) -> TokenBatch:
    """Assemble the token matrix for a batch of instances at time t.

    Each token sums a cached shape embedding, the fragment's pose embedding, a
    per-point embedding of the point's current placement under that pose (so
    attention can match mating surfaces spatially as poses converge), and a
    time embedding.
    """
    rows, world_rows = [], []
    frag_spans, object_spans, frag_objects = [], [], []
    offset = 0
    pose_inputs = []
    frag_token_index = []  # row -> fragment ordinal (for pose broadcast)
    frag_ord = 0
    for oi, (inst, poses) in enumerate(zip(instances, poses_per_instance)):
        if inst.token_geo is None:
            _token_geometry(inst, cfg)
        obj_start = offset
        for fi in range(inst.n_fragments):
            geo = inst.token_geo[fi]
            m = len(geo)
            rows.append(geo)
            placed = poses[fi].apply(inst.local_points[fi])
            placed_n = poses[fi].apply_normals(inst.local_normals[fi])
            world_rows.append(
                np.concatenate(
                    [_sin_encode_np(placed, cfg.pe_bands), _sin_encode_np(placed_n, cfg.pe_bands)],
                    axis=1,
                )
            )
            frag_spans.append((offset, m))
            frag_objects.append(oi)
            pose_inputs.append(_sin_encode_np(poses[fi].as_array(), cfg.pe_bands))
            frag_token_index.append(np.full(m, frag_ord, dtype=np.int64))
            offset += m
            frag_ord += 1
        object_spans.append((obj_start, offset - obj_start))

    geo_all = Tensor(np.concatenate(rows, axis=0))
    s_emb = _mlp(geo_all, params, "den.shape")

    w_all = Tensor(np.concatenate(world_rows, axis=0))
    w_emb = _mlp(w_all, params, "den.world")

    pose_pe = Tensor(np.stack(pose_inputs))
    p_emb = _mlp(pose_pe, params, "den.pose")
    p_rows = ad.gather(p_emb, np.concatenate(frag_token_index))

    t_pe = Tensor(_sin_encode_np(np.array([t]), cfg.time_bands).reshape(1, -1))
    t_emb = ad.linear(t_pe, params["den.time.w"], params["den.time.b"])
    t_rows = ad.gather(t_emb, np.zeros(offset, dtype=np.int64))

    tokens = ad.add(ad.add(ad.add(s_emb, w_emb), p_rows), t_rows)
    return TokenBatch(tokens, frag_spans, object_spans, frag_objects)


# -- attention ----------------------------------------------------------------


def _mlp(x, params, name):
    h = ad.gelu(ad.linear(x, params[f"{name}.w1"], params[f"{name}.b1"]))
    return ad.linear(h, params[f"{name}.w2"], params[f"{name}.b2"])


def segment_attention(q: Tensor, k: Tensor, v: Tensor, spans, heads: int) -> Tensor:
    """Multi-head attention restricted to contiguous spans: tokens attend only
    within their own span. Exact block masking by construction."""
    if q.data.shape != k.data.shape or q.data.shape != v.data.shape:
        raise ShapeMismatch(f"segment_attention: q/k/v shapes {q.data.shape}/{k.data.shape}/{v.data.shape}")
    d = q.data.shape[1]
    if d % heads:
        raise ShapeMismatch(f"segment_attention: width {d} not divisible by {heads} heads")
    dh = d // heads
    outs = []
    for start, length in spans:
        qs = ad.transpose(ad.reshape(ad.narrow(q, 0, start, length), (length, heads, dh)), (1, 0, 2))
        ks = ad.transpose(ad.reshape(ad.narrow(k, 0, start, length), (length, heads, dh)), (1, 0, 2))
        vs = ad.transpose(ad.reshape(ad.narrow(v, 0, start, length), (length, heads, dh)), (1, 0, 2))
        logits = ad.scale(ad.matmul(qs, ad.transpose(ks, (0, 2, 1))), 1.0 / np.sqrt(dh))
        attn = ad.softmax(logits)
        mixed = ad.matmul(attn, vs)  # (H, L, dh)
        outs.append(ad.reshape(ad.transpose(mixed, (1, 0, 2)), (length, d)))
    return ad.concat(outs, axis=0)


def _attention_block(x, params, name, spans, cfg, lora=None, train_mode=False, rng=None):
    xn = ad.layer_norm(x, params[f"{name}.ln.g"], params[f"{name}.ln.b"])
    projected = []
    for proj in ATTN_PROJECTIONS[:3]:
        projected.append(_lora_linear(xn, params, f"{name}.{proj}", f"{name}.{proj[1]}b", lora, train_mode, rng))
    q, k, v = projected
    mixed = segment_attention(q, k, v, spans, cfg.heads)
    out = _lora_linear(mixed, params, f"{name}.wo", f"{name}.ob", lora, train_mode, rng)
    return ad.add(x, out)


def _lora_linear(x, params, wname, bname, lora, train_mode, rng):
    out = ad.linear(x, params[wname], params[bname])
    aname, bname2 = f"{wname}.lora.a", f"{wname}.lora.b"
    if aname in params:
        xin = x
        if train_mode and lora is not None and lora.dropout > 0 and rng is not None:
            keep = (rng.random(x.data.shape) >= lora.dropout).astype(np.float32) / (1.0 - lora.dropout)
            xin = ad.mul(x, Tensor(keep))
        delta = ad.matmul(ad.matmul(xin, params[aname]), params[bname2])
        scale = (lora.alpha / lora.rank) if lora is not None else 1.0
        out = ad.add(out, ad.scale(delta, scale))
    return out


def forward(batch: TokenBatch, params, cfg: DenoiserConfig, lora=None, train_mode=False, rng=None):
    """Run the denoiser; returns (v_rot, v_trans) Tensors of shape (F, 3) over
    all fragments in the batch (anchor rows included)."""
    x = batch.tokens
    for l in range(cfg.layers):
        x = _attention_block(x, params, f"den.l{l}.self", batch.frag_spans, cfg, lora, train_mode, rng)
        x = _attention_block(x, params, f"den.l{l}.glob", batch.object_spans, cfg, lora, train_mode, rng)
        xn = ad.layer_norm(x, params[f"den.l{l}.ffn.ln.g"], params[f"den.l{l}.ffn.ln.b"])
        x = ad.add(x, _mlp(xn, params, f"den.l{l}.ffn"))
    xn = ad.layer_norm(x, params["den.head.ln.g"], params["den.head.ln.b"])
    pools = []
    for start, length in batch.frag_spans:
        w = np.full((1, length), 1.0 / length, dtype=np.float32)
        pools.append(ad.matmul(Tensor(w), ad.narrow(xn, 0, start, length)))
    pooled = ad.concat(pools, axis=0)  # (F, d)
    v_rot = _mlp(pooled, params, "den.rot")
    v_trans = _mlp(pooled, params, "den.trans")
    return v_rot, v_trans


# -- flow matching -----------------------------------------------------------------


def fm_target(pose0: Pose, pose1: Pose, t: float):
    """Noisy pose on the geodesic/linear path at time t and the conditional
    velocity target pointing at pose1."""
    if t > 1.0 - T_CLAMP:
        raise TPastOne(f"t={t} too close to 1 (clamp {T_CLAMP})")
    r_t = geodesic_interp(pose0.rot, pose1.rot, t)
    a_t = (1.0 - t) * pose0.trans + t * pose1.trans
    omega = so3_log(quat_mul(quat_conj(r_t), pose1.rot)) / (1.0 - t)
    vel = (pose1.trans - a_t) / (1.0 - t)
    return Pose(r_t, a_t), Tangent(omega, vel)


def sample_anchors(n: int, rng) -> np.ndarray:
    """Uniform k in {1..n-1}, then a uniform k-subset; boolean mask."""
    if n < 2:
        raise TooFewFragments("anchor sampling needs >= 2 fragments")
    k = int(rng.integers(1, n))
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=k, replace=False)] = True
    return mask


def sample_flow_state(instance: FlowInstance, rng):
    """Draw (t, noisy poses, targets): anchors pinned to identity with zero
    targets, everything else on its conditional path."""
    t = float(rng.uniform(0.0, 1.0 - T_CLAMP))
    poses, targets = [], []
    for i in range(instance.n_fragments):
        if instance.anchor_mask[i]:
            poses.append(Pose.identity())
            targets.append(Tangent.zero())
        else:
            noise = sample_noise_pose(rng)
            p_t, tgt = fm_target(noise, instance.gt_poses[i], t)
            poses.append(p_t)
            targets.append(tgt)
    return t, poses, targets


def flow_matching_loss(instances, states, params, cfg: DenoiserConfig,
                       lora=None, train_mode=False, rng=None):
    """Mean over fragments of squared tangent error, averaged over instances.

    The rotation head is parameterized in the world frame (same frame as the
    placement embeddings the evidence lives in); body-frame targets are rotated
    into it before the comparison. The squared norm is rotation-invariant, so
    the loss value equals the body-frame objective exactly.

    states: list of (t, poses, targets) drawn by sample_flow_state. Instances
    sharing a batch must share t (tokens carry a single time embedding); the
    trainer draws one t per batch.
    """
    t = states[0][0]
    batch = build_tokens(instances, [s[1] for s in states], t, params, cfg)
    v_rot, v_trans = forward(batch, params, cfg, lora=lora, train_mode=train_mode, rng=rng)
    tgt_r = np.concatenate(
        [[quat_rotate(pose.rot, tgt.omega) for pose, tgt in zip(s[1], s[2])] for s in states]
    ).astype(np.float32)
    tgt_a = np.concatenate([[tgt.vel for tgt in s[2]] for s in states]).astype(np.float32)
    dr = ad.sub(v_rot, Tensor(tgt_r))
    da = ad.sub(v_trans, Tensor(tgt_a))
    per_fragment = ad.add(ad.reduce_sum(ad.mul(dr, dr)), ad.reduce_sum(ad.mul(da, da)))
    return ad.scale(per_fragment, 1.0 / len(tgt_r))


def fm_loss(problem, den_params, enc_params, cfg: DenoiserConfig, enc_cfg: EncoderConfig, rng):
    """Single-problem flow-matching loss with freshly sampled anchors, frames,
    time, and noise."""
    anchors = np.flatnonzero(sample_anchors(problem.n_fragments, rng))
    inst = make_flow_instance(problem, anchors, rng, enc_cfg, cfg.tokens_per_object)
    compute_features(inst, enc_params, enc_cfg)
    state = sample_flow_state(inst, rng)
    return flow_matching_loss([inst], [state], den_params, cfg)


# -- training -----------------------------------------------------------------


def train(train_problems, val_problems, enc_arrays, enc_cfg: EncoderConfig,
          cfg: DenoiserConfig, rng, epochs=None, log_file=None, params=None,
          lora=None, trainable=None, augment_rotations=True):
    """Flow-matching training loop (also used for adapter fine-tuning when
    ``params``/``lora``/``trainable`` are supplied). ``augment_rotations=False``
    fixes every fragment's local frame (memorization checks).

    Returns (param_arrays, log_records).
    """
    epochs = cfg.epochs if epochs is None else epochs
    if not train_problems:
        raise EmptyDataset("no training problems")
    from .encoder import params_from_arrays

    enc_params = params_from_arrays(enc_arrays)
    if params is None:
        params = init_denoiser_params(cfg, enc_cfg, rng)
    trainable = {k: p for k, p in params.items() if p.requires_grad} if trainable is None else trainable
    state = OptimState(lr=cfg.lr)
    milestones = [int(epochs * 0.6), int(epochs * 0.8)]
    log = []
    logf = open(log_file, "a") if log_file else None
    try:
        for epoch in range(epochs):
            state.lr = multistep_lr(cfg.lr, epoch, milestones)
            order = list(rng.permutation(len(train_problems)))
            if len(order) < cfg.batch_problems:  # tiny sets: fill the batch with repeats
                order = (order * cfg.batch_problems)[: cfg.batch_problems]
            losses = []
            for bstart in range(0, len(order), cfg.batch_problems):
                idx = order[bstart : bstart + cfg.batch_problems]
                instances = []
                t_shared = float(rng.uniform(0.0, 1.0 - T_CLAMP))
                for i in idx:
                    problem = train_problems[i]
                    anchors = np.flatnonzero(sample_anchors(problem.n_fragments, rng))
                    inst = make_flow_instance(problem, anchors, rng, enc_cfg,
                                              cfg.tokens_per_object, rotate=augment_rotations)
                    compute_features(inst, enc_params, enc_cfg)
                    instances.append(inst)
                states = [_restate(inst, t_shared, rng) for inst in instances]
                loss = flow_matching_loss(instances, states, params, cfg,
                                          lora=lora, train_mode=True, rng=rng)
                ad.assert_finite(loss, "fm loss")
                zero_grads(params)
                backward(loss)
                adam_step(trainable, state)
                losses.append(loss.item())
            rec = {"epoch": epoch, "fm_loss": float(np.mean(losses)), "lr": state.lr}
            if val_problems:
                rec["val_fm_loss"] = validate(val_problems, params, enc_arrays, enc_cfg, cfg, epoch_seed=epoch)
            log.append(rec)
            if logf:
                logf.write(json.dumps(rec) + "\n")
    finally:
        if logf:
            logf.close()
    return {k: p.data.copy() for k, p in params.items()}, log


def _restate(instance, t, rng):
    poses, targets = [], []
    for i in range(instance.n_fragments):
        if instance.anchor_mask[i]:
            poses.append(Pose.identity())
            targets.append(Tangent.zero())
        else:
            noise = sample_noise_pose(rng)
            p_t, tgt = fm_target(noise, instance.gt_poses[i], t)
            poses.append(p_t)
            targets.append(tgt)
    return (t, poses, targets)


def validate(problems, params, enc_arrays, enc_cfg, cfg, epoch_seed=0):
    from .encoder import params_from_arrays

    enc_params = params_from_arrays(enc_arrays)
    losses = []
    for i, problem in enumerate(problems):
        rng = derive_rng(811, "val", epoch_seed, i)
        loss = fm_loss(problem, params, enc_params, cfg, enc_cfg, rng)
        losses.append(loss.item())
    return float(np.mean(losses))


# -- LoRA adapters --------------------------------------------------------------


def lora_target_names(cfg: DenoiserConfig):
    """Attention projections of the final transformer block."""
    last = cfg.layers - 1
    return [
        f"den.l{last}.{kind}.{proj}"
        for kind in ("self", "glob")
        for proj in ATTN_PROJECTIONS
    ]


def apply_lora(params: dict, cfg: DenoiserConfig, lora_cfg: LoraConfig, rng) -> dict:
    """Attach zero-initialized low-rank adapters to the final block's attention
    projections; freeze the base; unfreeze the pose heads. Returns the
    trainable subset."""
    targets = lora_target_names(cfg)
    for name in targets:
        if f"{name}.lora.a" in params:
            raise AlreadyAdapted(f"adapters already attached at {name}")
    for p in params.values():
        p.requires_grad = False
    trainable = {}
    for name in targets:
        d_in, d_out = params[name].data.shape
        a = ad.parameter((rng.standard_normal((d_in, lora_cfg.rank)) * 0.02).astype(np.float32))
        b = ad.parameter(np.zeros((lora_cfg.rank, d_out), dtype=np.float32))
        params[f"{name}.lora.a"] = a
        params[f"{name}.lora.b"] = b
        trainable[f"{name}.lora.a"] = a
        trainable[f"{name}.lora.b"] = b
    for head in ("den.rot", "den.trans"):
        for suffix in ("w1", "b1", "w2", "b2"):
            p = params[f"{head}.{suffix}"]
            p.requires_grad = True
            trainable[f"{head}.{suffix}"] = p
    return trainable


def merge_lora(arrays: dict, lora_cfg: LoraConfig) -> dict:
    """Fold adapter deltas into base weights; returns a plain parameter table."""
    merged = {}
    scale = lora_cfg.alpha / lora_cfg.rank
    for name, value in arrays.items():
        if name.endswith(".lora.a") or name.endswith(".lora.b"):
            continue
        if f"{name}.lora.a" in arrays:
            delta = arrays[f"{name}.lora.a"] @ arrays[f"{name}.lora.b"]
            merged[name] = (value + scale * delta).astype(np.float32)
        else:
            merged[name] = value
    return merged


def parameter_count(arrays: dict) -> int:
    return int(sum(np.asarray(v).size for v in arrays.values()))
