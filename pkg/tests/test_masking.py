import json

import numpy as np
import pytest
import torch

from distinctvad.errors import IngestError
from distinctvad.masking import (
    TrackedObjectSet,
    full_frame_fallback,
    load_tracks,
    random_object_mask,
)


def write_tracks(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))


class TestLoadTracks:
    def test_empty_file(self, tmp_path):
        p = tmp_path / "tracks.jsonl"
        p.write_text("")
        tracks = load_tracks(p, (8, 8))
        assert tracks.boxes_at(0) == []
        assert tracks.object_ids_in(range(10)) == []

    def test_boxes_clamped_to_frame(self, tmp_path):
        p = tmp_path / "tracks.jsonl"
        write_tracks(p, [{"frame": 0, "object_id": 0, "box": [-2, 0, 5, 5]}])
        tracks = load_tracks(p, (8, 8))
        assert tracks.boxes_at(0) == [(0, (0, 0, 5, 5))]

    def test_two_objects_same_frame(self, tmp_path):
        p = tmp_path / "tracks.jsonl"
        write_tracks(
            p,
            [
                {"frame": 1, "object_id": 0, "box": [0, 0, 2, 2]},
                {"frame": 1, "object_id": 1, "box": [3, 3, 5, 5]},
            ],
        )
        tracks = load_tracks(p, (8, 8))
        assert len(tracks.boxes_at(1)) == 2
        assert tracks.object_ids_in([1]) == [0, 1]

    def test_malformed_line_rejected(self, tmp_path):
        p = tmp_path / "tracks.jsonl"
        p.write_text('{"frame": 0, "object_id": 0}\n')
        with pytest.raises(IngestError, match="malformed"):
            load_tracks(p, (8, 8))

    def test_negative_object_id_rejected(self, tmp_path):
        p = tmp_path / "tracks.jsonl"
        write_tracks(p, [{"frame": 0, "object_id": -1, "box": [0, 0, 2, 2]}])
        with pytest.raises(IngestError, match="negative"):
            load_tracks(p, (8, 8))


class TestFullFrameFallback:
    def test_all_ones(self):
        mask = full_frame_fallback((1, 3, 4, 4))
        assert mask.object_id is None
        assert float(mask.mask.sum()) == 48.0

    def test_channel_slices_identical(self):
        mask = full_frame_fallback((3, 3, 4, 4))
        for c in range(1, 3):
            assert torch.equal(mask.mask[c], mask.mask[0])

    def test_sum_equals_volume(self):
        c, t, h, w = 2, 5, 6, 7
        assert float(full_frame_fallback((c, t, h, w)).mask.sum()) == c * t * h * w


class TestRandomObjectMask:
    def full_cover_tracks(self):
        tracks = TrackedObjectSet(frame_size=(4, 4))
        for f in range(3):
            tracks.boxes.setdefault(f, []).append((0, (0, 0, 4, 4)))
        return tracks

    def test_full_frame_object_gives_all_ones(self):
        mask = random_object_mask(
            self.full_cover_tracks(), range(3), 1, np.random.default_rng(0)
        )
        assert mask.object_id == 0
        assert torch.all(mask.mask == 1.0)

    def test_fallback_when_no_objects(self):
        tracks = TrackedObjectSet(frame_size=(4, 4))
        mask = random_object_mask(tracks, range(3), 1, np.random.default_rng(0))
        assert mask.object_id is None
        assert torch.all(mask.mask == 1.0)

    def test_selection_matches_rng_replay(self, tmp_path):
        p = tmp_path / "tracks.jsonl"
        write_tracks(
            p,
            [
                {"frame": f, "object_id": i, "box": [i * 3, 0, i * 3 + 2, 2]}
                for f in range(3)
                for i in range(2)
            ],
        )
        tracks = load_tracks(p, (8, 8))
        seed = 42
        mask = random_object_mask(tracks, range(3), 1, np.random.default_rng(seed))
        expected_id = [0, 1][int(np.random.default_rng(seed).integers(2))]
        assert mask.object_id == expected_id
        # independent rasterization of the chosen object's boxes
        expected = torch.zeros(1, 3, 8, 8)
        x0 = expected_id * 3
        expected[:, :, 0:2, x0 : x0 + 2] = 1.0
        assert torch.equal(mask.mask, expected)

    def test_absent_frames_get_zero_mask(self, tmp_path):
        p = tmp_path / "tracks.jsonl"
        write_tracks(p, [{"frame": 1, "object_id": 0, "box": [0, 0, 2, 2]}])
        tracks = load_tracks(p, (4, 4))
        mask = random_object_mask(tracks, range(3), 1, np.random.default_rng(0))
        assert float(mask.mask[:, 0].sum()) == 0.0
        assert float(mask.mask[:, 1].sum()) == 4.0
        assert float(mask.mask[:, 2].sum()) == 0.0

    def test_mask_is_idempotent_under_elementwise_square(self):
        mask = random_object_mask(
            self.full_cover_tracks(), range(3), 2, np.random.default_rng(3)
        ).mask
        assert torch.equal(mask * mask, mask)

    def test_uniform_selection_frequency(self, tmp_path):
        # 10,000 seeded draws over k equally-present objects: 1/k +- 0.02
        k = 4
        p = tmp_path / "tracks.jsonl"
        write_tracks(
            p,
            [{"frame": 0, "object_id": i, "box": [i, 0, i + 1, 1]} for i in range(k)],
        )
        tracks = load_tracks(p, (4, 8))
        rng = np.random.default_rng(7)
        counts = np.zeros(k)
        for _ in range(10_000):
            counts[random_object_mask(tracks, [0], 1, rng).object_id] += 1
        freqs = counts / counts.sum()
        assert np.all(np.abs(freqs - 1.0 / k) <= 0.02)

    def test_support_never_exceeds_union_of_boxes(self, tmp_path):
        rng = np.random.default_rng(5)
        p = tmp_path / "tracks.jsonl"
        records = []
        for f in range(4):
            for i in range(3):
                x0, y0 = int(rng.integers(0, 6)), int(rng.integers(0, 6))
                records.append(
                    {"frame": f, "object_id": i, "box": [x0, y0, x0 + 2, y0 + 2]}
                )
        write_tracks(p, records)
        tracks = load_tracks(p, (8, 8))
        for trial in range(20):
            mask = random_object_mask(tracks, range(4), 1, np.random.default_rng(trial))
            union = torch.zeros(1, 4, 8, 8)
            for f in range(4):
                for obj_id, (x0, y0, x1, y1) in tracks.boxes_at(f):
                    if obj_id == mask.object_id:
                        union[:, f, y0:y1, x0:x1] = 1.0
            assert torch.all(mask.mask <= union)
