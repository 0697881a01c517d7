"""Tracker semantics against an oracle directory provider and scripted providers."""

import numpy as np
import pytest

from splatinit.detection import extract_regions
from splatinit.errors import ProviderFailure
from splatinit.formats import InstanceMaskFrame, write_masks
from splatinit.tracking import (
    DirectoryMaskProvider,
    MaskProvider,
    accept_masks,
    compute_prompts,
    reverse_propagate,
    run_tracking,
)

WIDTH, HEIGHT, FRAMES = 64, 48, 30
CONF = {1: 0.95, 2: 0.9}


def gt_ids(frame, second_vanish=FRAMES):
    """Ground truth id raster: object 1 always, object 2 on frames [12, second_vanish)."""
    ids = np.zeros((HEIGHT, WIDTH), dtype=np.uint16)
    x = 4 + frame // 4
    ids[6:14, x : x + 8] = 1
    if 12 <= frame < second_vanish:
        ids[20:26, 40:50] = 2
    return ids


def write_gt(tmp_path, second_vanish=FRAMES):
    mask_dir = tmp_path / "masks"
    mask_dir.mkdir()
    for f in range(FRAMES):
        ids = gt_ids(f, second_vanish)
        conf = {iid: CONF[iid] for iid in np.unique(ids) if iid != 0}
        write_masks(
            InstanceMaskFrame(WIDTH, HEIGHT, ids, conf),
            mask_dir / f"frame_{f:06d}.pgm",
        )
    return mask_dir


def regions_at(frames, second_vanish=FRAMES):
    return {f: extract_regions(gt_ids(f, second_vanish) > 0, frame_index=f) for f in frames}


@pytest.fixture()
def oracle(tmp_path):
    mask_dir = write_gt(tmp_path)
    return DirectoryMaskProvider(mask_dir)


def run_oracle(provider, second_vanish=FRAMES):
    return run_tracking(
        FRAMES,
        WIDTH,
        HEIGHT,
        regions_at([0, 10, 20], second_vanish),
        provider,
        propagation_interval=10,
        tau_mask=0.8,
    )


class TestOracleScenario:
    def test_full_span_object_tracked_everywhere(self, oracle):
        result = run_tracking(FRAMES, WIDTH, HEIGHT, regions_at([0]), oracle)
        assert [tl.instance_id for tl in result.timelines] == [1]
        tl = result.timelines[0]
        assert tl.first_frame == 0 and tl.last_frame == FRAMES - 1
        assert tl.frames() == list(range(FRAMES))
        assert all(c == CONF[1] for c in tl.confidence.values())

    def test_exact_masks_against_ground_truth(self, oracle):
        result = reverse_propagate(run_oracle(oracle), oracle)
        for f in range(FRAMES):
            truth = gt_ids(f)
            got = result.masks[f].ids
            for tracker_id, gt_id in ((1, 1), (2, 2)):
                np.testing.assert_array_equal(got == tracker_id, truth == gt_id)

    def test_iou_exactly_one_for_every_tracked_frame(self, oracle):
        result = reverse_propagate(run_oracle(oracle), oracle)
        for tl in result.timelines:
            for f in tl.frames():
                ours = result.masks[f].ids == tl.instance_id
                truth = gt_ids(f) == tl.instance_id
                inter = np.logical_and(ours, truth).sum()
                union = np.logical_or(ours, truth).sum()
                assert union > 0 and inter / union == 1.0

    def test_late_object_starts_at_boundary_before_reverse(self, oracle):
        result = run_oracle(oracle)
        assert [tl.instance_id for tl in result.timelines] == [1, 2]
        assert result.timelines[1].first_frame == 20
        assert not (result.masks[12].ids == 2).any()

    def test_reverse_extends_to_true_first_frame(self, oracle):
        result = reverse_propagate(run_oracle(oracle), oracle)
        tl = result.timelines[1]
        assert tl.first_frame == 12
        assert tl.frames() == list(range(12, FRAMES))
        assert (result.masks[12].ids == 2).any()
        assert not (result.masks[11].ids == 2).any()

    def test_reverse_does_not_mutate_input(self, oracle):
        forward = run_oracle(oracle)
        before = {tl.instance_id: dict(tl.confidence) for tl in forward.timelines}
        reverse_propagate(forward, oracle)
        after = {tl.instance_id: dict(tl.confidence) for tl in forward.timelines}
        assert before == after

    def test_absence_retires_instance(self, tmp_path):
        mask_dir = write_gt(tmp_path, second_vanish=25)
        provider = DirectoryMaskProvider(mask_dir)
        result = run_tracking(
            FRAMES, WIDTH, HEIGHT, regions_at([0, 10, 20], 25), provider
        )
        tl = {t.instance_id: t for t in result.timelines}[2]
        assert tl.first_frame == 20 and tl.last_frame == 24
        for f in range(25, FRAMES):
            assert not (result.masks[f].ids == 2).any()

    def test_no_duplicate_prompt_for_covered_object(self, oracle):
        result = run_tracking(FRAMES, WIDTH, HEIGHT, regions_at([0, 10, 20]), oracle)
        ids = [tl.instance_id for tl in result.timelines]
        assert ids == [1, 2]

    def test_mask_frames_are_consistent(self, oracle):
        result = reverse_propagate(run_oracle(oracle), oracle)
        assert len(result.masks) == FRAMES
        for frame in result.masks:
            present = set(int(v) for v in np.unique(frame.ids)) - {0}
            assert present == set(frame.confidence)


class TestDirectoryProvider:
    def test_segment_majority_id_returns_full_mask(self, oracle):
        # window holds one pixel of object 1 and all 60 of object 2
        box = (14, 13, 49, 25)
        assert gt_ids(15)[13, 14] == 1
        [(mask, conf)] = oracle.segment(15, [box])
        np.testing.assert_array_equal(mask, gt_ids(15) == 2)
        assert conf == CONF[2]

    def test_segment_empty_box_returns_zero_confidence(self, oracle):
        [(mask, conf)] = oracle.segment(0, [(55, 40, 60, 45)])
        assert conf == 0.0 and not mask.any()

    def test_missing_frame_file_raises(self, oracle):
        with pytest.raises(ProviderFailure, match="frame 99"):
            oracle.segment(99, [(0, 0, 5, 5)])

    def test_propagate_rejects_unknown_direction(self, oracle):
        with pytest.raises(ValueError):
            oracle.propagate(0, {1: gt_ids(0) == 1}, [1], "sideways")

    def test_propagate_matches_seed_by_overlap(self, oracle):
        seed = gt_ids(20) == 2
        out = oracle.propagate(20, {7: seed}, [21, 22], "forward")
        np.testing.assert_array_equal(out[21][7][0], gt_ids(21) == 2)
        assert out[22][7][1] == CONF[2]

    def test_propagate_omits_absent_frames(self, oracle):
        seed = gt_ids(12) == 2
        out = oracle.propagate(12, {2: seed}, [11, 10], "backward")
        assert 2 not in out[11] and 2 not in out[10]


class ScriptedProvider(MaskProvider):
    """Returns canned segment candidates; propagation is unused."""

    def __init__(self, by_frame):
        self.by_frame = by_frame

    def segment(self, frame_index, boxes):
        candidates = self.by_frame[frame_index]
        assert len(candidates) == len(boxes)
        return candidates

    def propagate(self, start_frame, seeds, target_frames, direction):
        return {f: {} for f in target_frames}


def rect_mask(x0, x1, y0=2, y1=7):
    mask = np.zeros((HEIGHT, WIDTH), dtype=bool)
    mask[y0:y1, x0:x1] = True
    return mask


def regions_from_components(frame, *masks):
    combined = np.zeros((HEIGHT, WIDTH), dtype=bool)
    for m in masks:
        combined |= m
    return {frame: extract_regions(combined, frame_index=frame)}


class TestAcceptanceAndOverlap:
    def test_confidence_threshold_boundary(self):
        a, b = rect_mask(0, 6), rect_mask(12, 18)
        provider = ScriptedProvider({0: [(a, 0.79), (b, 0.8)]})
        result = run_tracking(1, WIDTH, HEIGHT, regions_from_components(0, a, b), provider)
        assert [tl.instance_id for tl in result.timelines] == [1]
        np.testing.assert_array_equal(result.masks[0].ids == 1, b)

    def test_accept_masks_assigns_fresh_ids(self):
        a, b, c = rect_mask(0, 4), rect_mask(8, 12), rect_mask(16, 20)
        accepted, next_id = accept_masks([(a, 0.9), (b, 0.5), (c, 0.8)], 0.8, 5)
        assert [iid for iid, _, _ in accepted] == [5, 6]
        assert next_id == 7

    def test_accept_masks_skips_empty(self):
        empty = np.zeros((HEIGHT, WIDTH), dtype=bool)
        accepted, next_id = accept_masks([(empty, 0.99)], 0.8, 1)
        assert accepted == [] and next_id == 1

    def test_overlap_goes_to_higher_confidence(self):
        a, b = rect_mask(0, 6), rect_mask(3, 9)
        provider = ScriptedProvider({0: [(a, 0.9), (b, 0.95)]})
        result = run_tracking(1, WIDTH, HEIGHT, regions_from_components(0, rect_mask(0, 2), rect_mask(7, 9)), provider)
        ids = result.masks[0].ids
        np.testing.assert_array_equal(ids == 1, rect_mask(0, 3))
        np.testing.assert_array_equal(ids == 2, rect_mask(3, 9))

    def test_overlap_tie_goes_to_lower_id(self):
        a, b = rect_mask(0, 6), rect_mask(3, 9)
        provider = ScriptedProvider({0: [(a, 0.9), (b, 0.9)]})
        result = run_tracking(1, WIDTH, HEIGHT, regions_from_components(0, rect_mask(0, 2), rect_mask(7, 9)), provider)
        ids = result.masks[0].ids
        np.testing.assert_array_equal(ids == 1, rect_mask(0, 6))
        np.testing.assert_array_equal(ids == 2, rect_mask(6, 9))

    def test_suppressed_duplicate_consumes_id(self):
        a = rect_mask(0, 9)
        dup = rect_mask(2, 5)
        c = rect_mask(20, 26)
        provider = ScriptedProvider({0: [(a, 0.9), (dup, 0.85), (c, 0.9)]})
        regions = regions_from_components(0, rect_mask(0, 2), rect_mask(4, 6), rect_mask(20, 26))
        result = run_tracking(1, WIDTH, HEIGHT, regions, provider)
        assert [tl.instance_id for tl in result.timelines] == [1, 3]

    def test_interval_must_be_positive(self):
        with pytest.raises(ValueError):
            run_tracking(1, WIDTH, HEIGHT, {}, ScriptedProvider({}), propagation_interval=0)

    def test_provider_exception_wrapped(self):
        class Broken(MaskProvider):
            def segment(self, frame_index, boxes):
                raise RuntimeError("backend crashed")

            def propagate(self, start_frame, seeds, target_frames, direction):
                return {}

        a = rect_mask(0, 6)
        with pytest.raises(ProviderFailure, match="frame 0"):
            run_tracking(1, WIDTH, HEIGHT, regions_from_components(0, a), Broken())


class TestPromptComputation:
    def test_prompts_subtract_existing_instances(self):
        mask = rect_mask(0, 10) | rect_mask(30, 40)
        regions = extract_regions(mask, frame_index=0)
        ids = np.zeros((HEIGHT, WIDTH), dtype=np.uint16)
        ids[rect_mask(0, 10)] = 3
        existing = InstanceMaskFrame(WIDTH, HEIGHT, ids, {3: 0.9})
        boxes = compute_prompts(regions, existing)
        assert boxes == [(30, 2, 39, 6)]

    def test_prompts_empty_when_fully_covered(self):
        mask = rect_mask(0, 10)
        regions = extract_regions(mask, frame_index=0)
        ids = np.zeros((HEIGHT, WIDTH), dtype=np.uint16)
        ids[mask] = 1
        existing = InstanceMaskFrame(WIDTH, HEIGHT, ids, {1: 0.9})
        assert compute_prompts(regions, existing) == []

    def test_shape_mismatch_rejected(self):
        regions = extract_regions(np.zeros((8, 8), dtype=bool))
        existing = InstanceMaskFrame(WIDTH, HEIGHT, np.zeros((HEIGHT, WIDTH), dtype=np.uint16), {})
        with pytest.raises(ValueError):
            compute_prompts(regions, existing)
