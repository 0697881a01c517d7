"""Instance mask tracking against a pluggable segmentation provider.

The tracker prompts the provider with boxes of dynamic regions not yet
covered by tracked instances, filters candidates by confidence, propagates
live instances forward at a fixed frame interval, and finally extends each
instance backward from its first frame so objects that were static early
in the sequence still get masks there.

Instance ids are assigned monotonically and never reused. When masks
overlap, the pixel goes to the higher confidence, ties to the lower id.
"""

from __future__ import annotations

import abc
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detection import DynamicRegionSet, extract_regions
from .errors import ProviderFailure
from .formats import InstanceMaskFrame, read_masks

logger = logging.getLogger(__name__)


class MaskProvider(abc.ABC):
    """Prompted segmentation and mask propagation backend."""

    @abc.abstractmethod
    def segment(
        self, frame_index: int, boxes: list[tuple[int, int, int, int]]
    ) -> list[tuple[np.ndarray, float]]:
        """One (mask, confidence) per box prompt; masks are (H, W) bool."""

    @abc.abstractmethod
    def propagate(
        self,
        start_frame: int,
        seeds: dict[int, np.ndarray],
        target_frames: list[int],
        direction: str,
    ) -> dict[int, dict[int, tuple[np.ndarray, float]]]:
        """Propagate seed masks to target frames.

        Returns {frame: {instance_id: (mask, confidence)}}; an id missing
        from a frame means the provider reports the instance absent there.
        """


class DirectoryMaskProvider(MaskProvider):
    """Provider backed by per-frame instance masks on disk.

    Serves both roles: the oracle provider pointed at synthetic ground
    truth, and the file provider pointed at externally produced masks.
    Box prompts select the majority instance id inside the box; seeds are
    matched to stored ids by maximum overlap.
    """

    def __init__(self, mask_dir, pattern: str = "frame_{:06d}.pgm"):
        self.mask_dir = Path(mask_dir)
        self.pattern = pattern
        self._cache: dict[int, InstanceMaskFrame] = {}

    def _frame(self, frame_index: int) -> InstanceMaskFrame:
        if frame_index not in self._cache:
            path = self.mask_dir / self.pattern.format(frame_index)
            if not path.exists():
                raise ProviderFailure(f"frame {frame_index}: no mask file {path.name}")
            self._cache[frame_index] = read_masks(path)
        return self._cache[frame_index]

    def segment(self, frame_index, boxes):
        frame = self._frame(frame_index)
        out = []
        for x0, y0, x1, y1 in boxes:
            window = frame.ids[y0 : y1 + 1, x0 : x1 + 1]
            ids, counts = np.unique(window[window > 0], return_counts=True)
            if ids.size == 0:
                out.append((np.zeros_like(frame.ids, dtype=bool), 0.0))
                continue
            winner = int(ids[np.argmax(counts)])  # ties: first = smaller id
            out.append((frame.ids == winner, frame.confidence[winner]))
        return out

    def propagate(self, start_frame, seeds, target_frames, direction):
        if direction not in ("forward", "backward"):
            raise ValueError(f"direction {direction!r}")
        source = self._frame(start_frame)
        matched: dict[int, int] = {}
        for iid in sorted(seeds):
            seed = np.asarray(seeds[iid], dtype=bool)
            best_iou, best_gid = 0.0, 0
            for gid in sorted(int(v) for v in np.unique(source.ids) if v != 0):
                stored = source.ids == gid
                union = float(np.logical_or(seed, stored).sum())
                if union == 0.0:
                    continue
                iou = float(np.logical_and(seed, stored).sum()) / union
                if iou > best_iou:
                    best_iou, best_gid = iou, gid
            if best_gid:
                matched[iid] = best_gid
        out: dict[int, dict[int, tuple[np.ndarray, float]]] = {}
        for f in target_frames:
            frame = self._frame(f)
            per_frame: dict[int, tuple[np.ndarray, float]] = {}
            for iid, gid in matched.items():
                mask = frame.ids == gid
                if mask.any():
                    per_frame[iid] = (mask, frame.confidence[gid])
            out[f] = per_frame
        return out


@dataclass
class InstanceTimeline:
    """Per-frame presence and confidence of one tracked instance."""

    instance_id: int
    confidence: dict[int, float] = field(default_factory=dict)

    @property
    def first_frame(self) -> int:
        return min(self.confidence)

    @property
    def last_frame(self) -> int:
        return max(self.confidence)

    def frames(self) -> list[int]:
        return sorted(self.confidence)


@dataclass
class TrackingResult:
    timelines: list[InstanceTimeline]
    masks: list[InstanceMaskFrame]


def compute_prompts(
    regions: DynamicRegionSet, existing: InstanceMaskFrame, min_area: int = 1
) -> list[tuple[int, int, int, int]]:
    """Boxes of dynamic components not yet covered by tracked masks."""
    if regions.mask.shape != existing.ids.shape:
        raise ValueError("regions and existing mask disagree on raster shape")
    remaining = regions.mask & (existing.ids == 0)
    return extract_regions(remaining, min_area=min_area, frame_index=regions.frame_index).boxes


def accept_masks(
    candidates: list[tuple[np.ndarray, float]], tau_mask: float, start_id: int
) -> tuple[list[tuple[int, np.ndarray, float]], int]:
    """Filter candidates by confidence >= tau_mask and assign fresh ids."""
    if not 0.0 <= tau_mask <= 1.0:
        raise ValueError("tau_mask must lie in [0, 1]")
    accepted = []
    next_id = start_id
    for mask, conf in candidates:
        if conf < tau_mask or not np.asarray(mask, dtype=bool).any():
            continue
        accepted.append((next_id, np.asarray(mask, dtype=bool), conf))
        next_id += 1
    return accepted, next_id


class _TrackerState:
    """Mutable per-frame id rasters with the canonical overlap rule."""

    def __init__(self, num_frames: int, width: int, height: int):
        self.width = width
        self.height = height
        self.ids = [np.zeros((height, width), dtype=np.uint16) for _ in range(num_frames)]
        self.conf: list[dict[int, float]] = [{} for _ in range(num_frames)]

    def merge(self, frame: int, iid: int, mask: np.ndarray, conf: float) -> bool:
        """Claim pixels for iid; returns True when any pixel survives."""
        ids = self.ids[frame]
        free = mask & (ids == 0)
        ids[free] = iid
        for other in np.unique(ids[mask & (ids != 0) & (ids != iid)]):
            other = int(other)
            other_conf = self.conf[frame][other]
            if conf > other_conf or (conf == other_conf and iid < other):
                ids[(ids == other) & mask] = iid
        won = bool((ids == iid).any())
        if won:
            self.conf[frame][iid] = conf
        return won

    def frame_mask(self, frame: int) -> InstanceMaskFrame:
        present = set(int(v) for v in np.unique(self.ids[frame])) - {0}
        conf = {iid: self.conf[frame][iid] for iid in present}
        return InstanceMaskFrame(self.width, self.height, self.ids[frame].copy(), conf)

    @classmethod
    def from_masks(cls, masks: list[InstanceMaskFrame]) -> "_TrackerState":
        state = cls(len(masks), masks[0].width, masks[0].height)
        for f, frame in enumerate(masks):
            state.ids[f] = frame.ids.copy()
            state.conf[f] = dict(frame.confidence)
        return state


def run_tracking(
    num_frames: int,
    width: int,
    height: int,
    regions_by_frame: dict[int, DynamicRegionSet],
    provider: MaskProvider,
    propagation_interval: int = 10,
    tau_mask: float = 0.8,
    min_prompt_area: int = 1,
) -> TrackingResult:
    """Forward tracking pass over interval boundaries.

    An instance the provider reports absent is retired from that frame on;
    a later detection would start a fresh id. Accepted instances whose
    pixels are entirely taken by higher-confidence masks are dropped as
    duplicates (their id stays consumed).
    """
    if propagation_interval < 1:
        raise ValueError("propagation_interval must be >= 1")
    state = _TrackerState(num_frames, width, height)
    records: dict[int, dict[int, float]] = {}
    active: set[int] = set()
    next_id = 1
    for boundary in range(0, num_frames, propagation_interval):
        regions = regions_by_frame.get(boundary)
        if regions is not None:
            prompts = compute_prompts(regions, state.frame_mask(boundary), min_prompt_area)
            if prompts:
                try:
                    candidates = provider.segment(boundary, prompts)
                except ProviderFailure:
                    raise
                except Exception as exc:
                    raise ProviderFailure(f"frame {boundary}: segment failed: {exc}") from exc
                accepted, next_id = accept_masks(candidates, tau_mask, next_id)
                for iid, mask, conf in accepted:
                    if state.merge(boundary, iid, mask, conf):
                        records.setdefault(iid, {})[boundary] = conf
                        active.add(iid)
                    else:
                        logger.info("frame %d: candidate %d fully suppressed", boundary, iid)
        segment_end = min(boundary + propagation_interval, num_frames - 1)
        live = sorted(iid for iid in active if (state.ids[boundary] == iid).any())
        active = set(live)
        if not live or segment_end <= boundary:
            continue
        seeds = {iid: state.ids[boundary] == iid for iid in live}
        targets = list(range(boundary + 1, segment_end + 1))
        try:
            propagated = provider.propagate(boundary, seeds, targets, "forward")
        except ProviderFailure:
            raise
        except Exception as exc:
            raise ProviderFailure(f"frame {boundary}: propagate failed: {exc}") from exc
        retired: set[int] = set()
        for f in targets:
            per_frame = propagated.get(f, {})
            for iid in live:
                if iid in retired:
                    continue
                entry = per_frame.get(iid)
                if entry is None:
                    logger.info("frame %d: instance %d absent, retiring", f, iid)
                    retired.add(iid)
                    continue
                mask, conf = entry
                if state.merge(f, iid, np.asarray(mask, dtype=bool), conf):
                    records.setdefault(iid, {})[f] = conf
                else:
                    retired.add(iid)
        active -= retired
    timelines = [
        InstanceTimeline(instance_id=iid, confidence=dict(sorted(records[iid].items())))
        for iid in sorted(records)
    ]
    masks = [state.frame_mask(f) for f in range(num_frames)]
    return TrackingResult(timelines=timelines, masks=masks)


def reverse_propagate(result: TrackingResult, provider: MaskProvider) -> TrackingResult:
    """Extend every instance from its first frame back toward frame 0.

    Walks backward until the provider reports absence (or a merge leaves
    no pixels), keeping timelines contiguous.
    """
    if not result.masks:
        return result
    state = _TrackerState.from_masks(result.masks)
    num_frames = len(result.masks)
    timelines = [
        InstanceTimeline(tl.instance_id, dict(tl.confidence))
        for tl in sorted(result.timelines, key=lambda tl: tl.instance_id)
    ]
    for timeline in timelines:
        first = timeline.first_frame
        if first == 0:
            continue
        iid = timeline.instance_id
        seed = state.ids[first] == iid
        if not seed.any():
            continue
        targets = list(range(first - 1, -1, -1))
        try:
            propagated = provider.propagate(first, {iid: seed}, targets, "backward")
        except ProviderFailure:
            raise
        except Exception as exc:
            raise ProviderFailure(f"frame {first}: propagate failed: {exc}") from exc
        for f in targets:
            entry = propagated.get(f, {}).get(iid)
            if entry is None:
                break
            mask, conf = entry
            if not state.merge(f, iid, np.asarray(mask, dtype=bool), conf):
                break
            timeline.confidence[f] = conf
    masks = [state.frame_mask(f) for f in range(num_frames)]
    for timeline in timelines:
        timeline.confidence = dict(sorted(timeline.confidence.items()))
    return TrackingResult(timelines=timelines, masks=masks)
