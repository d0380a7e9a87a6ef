import numpy as np
import pytest
import torch

from distinctvad.clipio import FrameSequence
from distinctvad.errors import ContractError
from distinctvad.model import ModelConfig, build_model
from distinctvad.scoring import (
    ErrorMap,
    ScoreSeries,
    aggregate_scene_auc,
    align_scores,
    evaluate_scores,
    frame_score,
    median_filter,
    normalize_per_video,
    pixel_error_map,
    reconstruct_video,
    roc_auc,
    score_video,
)


# -- independent oracles -----------------------------------------------------

def brute_force_frame_score(values, patch):
    """Enumerate every grid patch and take the max mean."""
    h, w = values.shape
    means = []
    for i in range(0, h, patch):
        for j in range(0, w, patch):
            means.append(values[i : i + patch, j : j + patch].mean())
    return max(means)


def brute_force_median(series, window):
    half = (window - 1) // 2
    padded = np.concatenate([[series[0]] * half, series, [series[-1]] * half])
    return np.array([np.median(padded[i : i + window]) for i in range(len(series))])


def brute_force_auc(scores, labels):
    """Exhaustive positive/negative pair counting, ties worth 1/2."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


# -- pixel error maps ---------------------------------------------------------

class TestPixelErrorMap:
    def test_identical_frames_zero(self):
        x = torch.rand(1, 4, 4)
        assert np.all(pixel_error_map(x, x.clone()).values == 0.0)

    def test_single_channel_absolute_difference(self):
        x = torch.tensor([[[0.0, 0.0], [0.0, 1.0]]])
        out = pixel_error_map(x, torch.zeros_like(x))
        assert out.values.tolist() == [[0.0, 0.0], [0.0, 1.0]]

    def test_two_channel_euclidean(self):
        x = torch.zeros(2, 1, 1)
        y = torch.tensor([[[0.3]], [[0.4]]])
        assert pixel_error_map(x, y).values[0, 0] == pytest.approx(0.5, abs=1e-7)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ContractError):
            pixel_error_map(torch.zeros(1, 2, 2), torch.zeros(1, 2, 3))


# -- frame scores -------------------------------------------------------------

class TestFrameScore:
    def test_uniform_map(self):
        assert frame_score(np.full((32, 32), 0.7), patch=16) == pytest.approx(0.7)

    def test_aligned_block_of_ones(self):
        values = np.zeros((32, 32))
        values[16:32, 0:16] = 1.0
        assert frame_score(values, patch=16) == 1.0

    def test_small_map_partial_example(self):
        # brute force over the four 2x2 patches: max mean = 0.8 / 4
        values = np.zeros((4, 4))
        values[3, 3] = 0.8
        assert frame_score(values, patch=2) == pytest.approx(0.2)

    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            h, w = int(rng.integers(1, 41)), int(rng.integers(1, 41))
            patch = int(rng.choice([2, 3, 16]))
            values = rng.random((h, w))
            assert frame_score(values, patch) == pytest.approx(
                brute_force_frame_score(values, patch), abs=0
            )

    def test_accepts_error_map(self):
        em = ErrorMap(values=np.full((8, 8), 0.25), frame_index=0, video_id="v")
        assert frame_score(em, patch=16) == pytest.approx(0.25)


# -- median filtering ---------------------------------------------------------

class TestMedianFilter:
    def test_constant_series_unchanged(self):
        series = np.full(40, 3.5)
        assert np.array_equal(median_filter(series, 17), series)

    def test_spike_removed(self):
        got = median_filter(np.array([0.0, 10.0, 0.0, 0.0, 0.0]), 3)
        assert got.tolist() == [0.0, 0.0, 0.0, 0.0, 0.0]

    def test_window_one_is_identity(self):
        series = np.random.default_rng(1).random(20)
        assert np.array_equal(median_filter(series, 1), series)

    def test_even_window_rejected(self):
        with pytest.raises(ContractError):
            median_filter(np.zeros(5), 4)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(1, 60))
            window = int(rng.choice([1, 3, 17]))
            series = rng.random(n)
            assert np.array_equal(median_filter(series, window), brute_force_median(series, window))

    def test_score_series_stage_transition(self):
        raw = ScoreSeries(np.arange(5.0), "v", "raw")
        filtered = median_filter(raw, 3)
        assert filtered.stage == "filtered"


# -- normalization ------------------------------------------------------------

class TestNormalize:
    def test_linear_series(self):
        assert normalize_per_video(np.array([2.0, 4.0, 6.0])).tolist() == [0.0, 0.5, 1.0]

    def test_constant_series_maps_to_zero(self):
        assert normalize_per_video(np.array([5.0, 5.0])).tolist() == [0.0, 0.0]

    def test_bounds(self):
        rng = np.random.default_rng(3)
        out = normalize_per_video(rng.random(30) * 7 + 2)
        assert out.min() == 0.0 and out.max() == 1.0

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        once = normalize_per_video(rng.random(30))
        assert np.array_equal(normalize_per_video(once), once)

    def test_requires_filtered_stage(self):
        raw = ScoreSeries(np.arange(5.0), "v", "raw")
        with pytest.raises(ContractError):
            normalize_per_video(raw)

    def test_scale_invariance_of_pipeline(self):
        # positive rescaling of raw scores leaves the normalized series unchanged
        rng = np.random.default_rng(5)
        raw = rng.random(40)
        a = normalize_per_video(median_filter(raw, 5))
        b = normalize_per_video(median_filter(raw * 37.5, 5))
        assert np.allclose(a, b, atol=1e-12)


# -- alignment ----------------------------------------------------------------

class TestAlignScores:
    def test_replication_rule(self):
        got = align_scores(np.array([1.0, 2.0, 3.0]), num_frames=5, clip_len=3)
        assert got.tolist() == [1.0, 1.0, 2.0, 3.0, 3.0]

    def test_identity_for_single_frame_window(self):
        series = np.arange(4.0)
        assert np.array_equal(align_scores(series, 4, 1), series)

    def test_output_length(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            t = int(rng.choice([1, 3, 5]))
            f = int(rng.integers(t, t + 20))
            out = align_scores(rng.random(f - t + 1), f, t)
            assert len(out) == f

    def test_wrong_coverage_rejected(self):
        with pytest.raises(ContractError):
            align_scores(np.zeros(3), num_frames=5, clip_len=5)


# -- AUC ----------------------------------------------------------------------

class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([0.0, 0.0, 1.0, 1.0], [0, 0, 1, 1]) == 1.0

    def test_all_ties(self):
        assert roc_auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5

    def test_pair_counting_example(self):
        # 4 positive-negative pairs, 3 wins
        assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75, abs=1e-12)

    def test_matches_exhaustive_pair_counting(self):
        rng = np.random.default_rng(7)
        trials = 0
        while trials < 300:
            n = int(rng.integers(2, 13))
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                continue
            # quantized scores force plenty of ties
            scores = np.round(rng.random(n) * 4) / 4
            got = roc_auc(scores, labels)
            assert got == pytest.approx(brute_force_auc(scores, labels), abs=1e-12)
            trials += 1

    def test_single_class_rejected(self):
        with pytest.raises(ContractError):
            roc_auc([0.1, 0.2], [1, 1])

    def test_non_binary_labels_rejected(self):
        with pytest.raises(ContractError):
            roc_auc([0.1, 0.2], [0, 2])


class TestSceneAggregation:
    def test_single_scene(self):
        assert aggregate_scene_auc([0.7]) == 0.7

    def test_odd_count_median(self):
        assert aggregate_scene_auc([0.6, 0.8, 0.9]) == 0.8

    def test_even_count_mean_of_central(self):
        assert aggregate_scene_auc([0.6, 0.8]) == pytest.approx(0.7)

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            aggregate_scene_auc([])


# -- reconstruction and the full pipeline --------------------------------------

@pytest.fixture(scope="module")
def small_model():
    return build_model(ModelConfig(base_channels=8, depth=2, clip_len=3, seed=0))


def make_seq(num_frames, size=32):
    gen = torch.Generator().manual_seed(99)
    return FrameSequence(frames=torch.rand(1, num_frames, size, size, generator=gen), video_id="v")


class TestReconstructVideo:
    def test_covered_indices(self, small_model):
        outs = reconstruct_video(small_model, make_seq(5), 3)
        assert [idx for idx, _ in outs] == [1, 2, 3]

    def test_single_frame_window_covers_all(self):
        model = build_model(ModelConfig(base_channels=8, depth=2, clip_len=1, seed=0))
        outs = reconstruct_video(model, make_seq(4), 1)
        assert [idx for idx, _ in outs] == [0, 1, 2, 3]

    def test_deterministic(self, small_model):
        seq = make_seq(6)
        a = reconstruct_video(small_model, seq, 3)
        b = reconstruct_video(small_model, seq, 3)
        for (ia, ra), (ib, rb) in zip(a, b):
            assert ia == ib and torch.equal(ra, rb)

    def test_too_short_video_rejected(self, small_model):
        with pytest.raises(ContractError):
            reconstruct_video(small_model, make_seq(2), 3)


class TestScoreVideo:
    def test_stage_lengths_and_ranges(self, small_model):
        seq = make_seq(25)
        out = score_video(small_model, seq, 3, patch=16, median_window=5)
        assert len(out.raw) == len(out.filtered) == len(out.normalized) == 25
        assert out.normalized.min() == 0.0 and out.normalized.max() == 1.0
        assert np.all(out.raw >= 0.0)


class TestEvaluateScores:
    def test_per_video_and_dataset(self):
        scores = {"a": np.array([0.1, 0.9, 0.8]), "b": np.array([0.2, 0.3, 0.9])}
        labels = {"a": np.array([0, 1, 1]), "b": np.array([0, 0, 1])}
        result = evaluate_scores(scores, labels)
        assert result["per_video_auc"]["a"] == 1.0
        assert result["per_video_auc"]["b"] == 1.0
        assert 0.9 <= result["dataset_auc"] <= 1.0

    def test_single_class_video_skipped_with_warning(self):
        scores = {"a": np.array([0.1, 0.9]), "b": np.array([0.2, 0.3])}
        labels = {"a": np.array([0, 1]), "b": np.array([0, 0])}
        with pytest.warns(UserWarning, match="single-class"):
            result = evaluate_scores(scores, labels)
        assert result["per_video_auc"]["b"] is None
        assert result["skipped_videos"] == ["b"]
        assert result["dataset_auc"] is not None

    def test_scene_median(self):
        scores = {"a": np.array([0.1, 0.9]), "b": np.array([0.9, 0.2])}
        labels = {"a": np.array([0, 1]), "b": np.array([0, 1])}
        result = evaluate_scores(scores, labels, scene_map={"s1": ["a"], "s2": ["b"]})
        assert result["per_scene_auc"]["s1"] == 1.0
        assert result["per_scene_auc"]["s2"] == 0.0
        assert result["scene_median_auc"] == 0.5
