import numpy as np
import pytest

import fracflow.autodiff as ad
from fracflow.autodiff import Tensor, finite_difference_check
from fracflow.corpus import make_toy_fracture
from fracflow.encoder import (
    EncoderConfig,
    dice_loss,
    encode,
    encode_fragment,
    evaluate_segmentation,
    init_encoder_params,
    knn_indices,
    pretrain,
    segment,
)
from fracflow.errors import EmptyDataset, TooFewPoints
from fracflow.manifold import make_rng, quat_rotate, sample_uniform_rotation


CFG = EncoderConfig(feature_dim=16, knn=6, layers=2)


def small_fragment(seed=0, n=40):
    p = make_toy_fracture("cube", 1, make_rng(seed), points_per_object=2 * n, min_points=n)
    return p.fragments[0]


class TestDiceLoss:
    def test_exact_match_is_zero(self):
        label = np.array([1.0, 0, 1, 0, 1]).reshape(-1, 1)
        loss = dice_loss(Tensor(label.astype(np.float32)), label, epsilon=1.0)
        assert loss.item() == pytest.approx(0.0, abs=1e-7)

    def test_all_zero_prediction_formula(self):
        # pred = 0, m positives, eps=1 -> 1 - 1/(m+1)
        label = np.zeros((10, 1))
        label[:4] = 1.0
        loss = dice_loss(Tensor(np.zeros((10, 1), dtype=np.float32)), label, epsilon=1.0)
        assert loss.item() == pytest.approx(1.0 - 1.0 / 5.0, abs=1e-7)

    def test_all_positive_all_predicted(self):
        label = np.ones((7, 1))
        loss = dice_loss(Tensor(np.ones((7, 1), dtype=np.float32)), label, epsilon=1.0)
        assert loss.item() == pytest.approx(0.0, abs=1e-7)

    def test_range(self):
        rng = make_rng(3)
        for _ in range(50):
            pred = rng.random((12, 1)).astype(np.float32)
            label = (rng.random((12, 1)) > 0.5).astype(np.float64)
            v = dice_loss(Tensor(pred), label).item()
            assert 0.0 <= v < 1.0

    def test_gradient_matches_finite_differences(self):
        rng = make_rng(4)
        label = (rng.random((9, 1)) > 0.6).astype(np.float64)
        err = finite_difference_check(
            lambda xs: dice_loss(ad.sigmoid(xs[0]), label), [rng.standard_normal((9, 1))]
        )
        assert err < 1e-4


class TestEncode:
    def test_permutation_equivariance(self):
        frag = small_fragment()
        params = init_encoder_params(CFG, make_rng(1))
        feats = encode_fragment(frag, params, CFG).data
        perm = make_rng(2).permutation(frag.n_points)
        import dataclasses

        shuffled = dataclasses.replace(
            frag,
            points=frag.points[perm],
            normals=frag.normals[perm],
            scale=frag.scale[perm],
            fracture_label=frag.fracture_label[perm],
        )
        feats2 = encode_fragment(shuffled, params, CFG).data
        np.testing.assert_allclose(feats2, feats[perm], atol=1e-5)

    def test_deterministic(self):
        frag = small_fragment()
        params = init_encoder_params(CFG, make_rng(1))
        a = encode_fragment(frag, params, CFG).data
        b = encode_fragment(frag, params, CFG).data
        assert a.tobytes() == b.tobytes()

    def test_translation_and_scale_invariance(self):
        # the deterministic recentring/rescaling part of pose normalization
        frag = small_fragment()
        params = init_encoder_params(CFG, make_rng(1))
        base = encode(frag.points, frag.normals, frag.scale, params, CFG).data
        moved = encode(frag.points * 2.0 + np.float32([5.0, -3.0, 1.0]), frag.normals, frag.scale, params, CFG).data
        assert np.abs(moved - base).max() < 1e-5

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            knn_indices(np.zeros((4, 3)), 6)


class TestSegment:
    def test_threshold_extremes(self):
        frag = small_fragment()
        params = init_encoder_params(CFG, make_rng(1))
        all_true, probs = segment(frag, params, CFG, threshold=0.0)
        assert all_true.all() and (probs > 0).all() and (probs < 1).all()
        all_false, _ = segment(frag, params, CFG, threshold=1.0)
        assert not all_false.any()


class TestPretrain:
    def test_overfits_single_object(self):
        # memorization sanity: fixed inputs, 50 epochs over one object
        problem = make_toy_fracture("cube", 1, make_rng(10), points_per_object=160, min_points=40)
        cfg = EncoderConfig(feature_dim=16, knn=8, layers=2, lr=5e-3)
        best, log = pretrain([problem], [problem], cfg, make_rng(11), epochs=50, augment=False)
        assert log[-1]["train_dice"] < 0.05

    def test_seed_reproducibility(self):
        problem = make_toy_fracture("sphere", 1, make_rng(20), points_per_object=120, min_points=30)
        cfg = EncoderConfig(feature_dim=16, knn=8, layers=2, lr=2e-3)
        _, log1 = pretrain([problem], [], cfg, make_rng(7), epochs=5)
        _, log2 = pretrain([problem], [], cfg, make_rng(7), epochs=5)
        assert log1[-1]["train_dice"] == log2[-1]["train_dice"]

    def test_empty_dataset_raises(self):
        with pytest.raises(EmptyDataset):
            pretrain([], [], CFG, make_rng(0))
