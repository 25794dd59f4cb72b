"""Temporal-median background plates over sliding frame windows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataio import Scene


@dataclass
class MedianPlate:
    """Per-pixel, per-channel median of a frame window (lower median when even)."""

    center_index: int
    window: int
    pixels: np.ndarray


def median_plate(frames: list[np.ndarray], center_index: int = 0) -> MedianPlate:
    """Lower median across a non-empty window of equally sized frames."""
    if not frames:
        raise ValueError("median window is empty")
    shape = frames[0].shape
    for f in frames[1:]:
        if f.shape != shape:
            raise ValueError("frames in a median window must share dimensions")
    stack = np.stack(frames).astype(np.uint8, copy=False)
    return MedianPlate(center_index, len(frames), kernels.median_stack(stack))


def window_bounds(frame_index: int, window_frames: int, frame_count: int) -> tuple[int, int]:
    """Centered window [start, stop), clipped to the sequence without shrinking."""
    length = max(1, min(window_frames, frame_count))
    start = frame_index - (length - 1) // 2
    start = min(max(start, 0), frame_count - length)
    return start, start + length


def plate_for_frame(scene: Scene, frame_index: int, window_frames: int,
                    frame_limit: int | None = None) -> MedianPlate:
    """Median plate for one frame, window clipped near sequence bounds.

    frame_limit restricts the window to a prefix of the sequence (used to
    keep training-split products from reading test frames).
    """
    count = scene.manifest.frame_count if frame_limit is None else frame_limit
    if not 0 <= frame_index < count:
        raise ValueError(f"frame {frame_index} out of range for {count} frames")
    start, stop = window_bounds(frame_index, window_frames, count)
    frames = [scene.frame(i) for i in range(start, stop)]
    plate = median_plate(frames, frame_index)
    return plate


def one_second_window(fps: float) -> int:
    return max(1, int(round(fps)))


def background_image(scene: Scene, min_confidence: float = 0.75) -> np.ndarray:
    """Display/compositing base: first frame free of detections, else the
    first one-second median."""
    window = one_second_window(scene.manifest.fps)
    for t in range(scene.manifest.frame_count):
        if not scene.detections(t, min_confidence):
            return scene.frame(t).copy()
    frames = [scene.frame(i)
              for i in range(min(window, scene.manifest.frame_count))]
    return median_plate(frames, 0).pixels
