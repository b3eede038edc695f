"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from benchlab.label_model import BoundarySegment, LabelerMap, MasterMap, MasterPixel


def make_master(
    positions,
    responses,
    image_id: str = "img",
    width: int = 64,
    height: int = 64,
    labeler_ids=None,
) -> MasterMap:
    """MasterMap from parallel position/response lists."""
    n_labelers = len(responses[0])
    if labeler_ids is None:
        labeler_ids = tuple(f"lab-{i}" for i in range(n_labelers))
    pixels = tuple(
        MasterPixel(pixel_id=i, position=tuple(pos), responses=tuple(resp))
        for i, (pos, resp) in enumerate(zip(positions, responses))
    )
    return MasterMap(
        image_id=image_id,
        width=width,
        height=height,
        labeler_ids=tuple(labeler_ids),
        pixels=pixels,
    )


def random_master(rng: np.random.Generator, n_pixels: int, n_labelers: int) -> MasterMap:
    """Random valid master map on a grid wide enough to hold the pixels."""
    side = int(np.ceil(np.sqrt(n_pixels))) + 2
    flat = rng.choice(side * side, size=n_pixels, replace=False)
    positions = [(int(f) // side, int(f) % side) for f in flat]
    responses = []
    for _ in range(n_pixels):
        row = rng.integers(0, 2, size=n_labelers)
        if not row.any():
            row[rng.integers(n_labelers)] = 1
        responses.append(tuple(int(v) for v in row))
    return make_master(positions, responses, width=side, height=side)


def make_segment(
    segment_id: str = "human-img-0000",
    image_id: str = "img",
    source: str = "human",
    positions=((10, 10), (10, 11)),
    pixel_ids=None,
    strength=None,
    image_size=(64, 64),
) -> BoundarySegment:
    positions = tuple(tuple(p) for p in positions)
    if pixel_ids is None:
        pixel_ids = tuple(range(len(positions)))
    if positions:
        rows = [p[0] for p in positions]
        cols = [p[1] for p in positions]
        center = (sum(rows) // len(rows), sum(cols) // len(cols))
    else:
        center = (0, 0)
    return BoundarySegment(
        segment_id=segment_id,
        image_id=image_id,
        member_pixel_ids=tuple(pixel_ids),
        member_positions=positions,
        window_center=center,
        source=source,
        strength=strength,
        image_size=image_size,
    )


def make_labeler_map(
    labeler_id: str,
    pixels,
    image_id: str = "img",
    width: int = 64,
    height: int = 64,
) -> LabelerMap:
    return LabelerMap(
        labeler_id=labeler_id,
        image_id=image_id,
        width=width,
        height=height,
        pixels=frozenset(tuple(p) for p in pixels),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
