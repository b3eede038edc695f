"""Master-map bookkeeping: orphan extraction and segment cutting."""

import numpy as np
import pytest

from benchlab.label_model import (
    BoundarySegment,
    LabelerMap,
    MasterMap,
    MasterPixel,
    SegmentCollection,
    _grow_segments,
    _window_start,
    extract_orphans,
    extract_segments,
    orphan_fraction,
    segments_from_positions,
)
from conftest import make_master, make_segment, random_master


def test_labeler_map_rejects_out_of_bounds_pixels():
    with pytest.raises(ValueError):
        LabelerMap("a", "img", width=10, height=10, pixels=frozenset({(10, 0)}))
    with pytest.raises(ValueError):
        LabelerMap("a", "img", width=10, height=10, pixels=frozenset({(0, -1)}))


def test_master_pixel_needs_a_positive_response():
    with pytest.raises(ValueError):
        MasterPixel(pixel_id=0, position=(1, 1), responses=(0, 0, 0))
    px = MasterPixel(pixel_id=0, position=(1, 1), responses=(0, 1, 1))
    assert px.vote_count == 2


def test_master_map_rejects_duplicate_positions_and_ragged_responses():
    with pytest.raises(ValueError):
        make_master([(1, 1), (1, 1)], [(1, 0), (0, 1)])
    with pytest.raises(ValueError):
        make_master([(1, 1), (2, 2)], [(1, 0), (0, 1, 1)])


def test_extract_orphans_matches_brute_filter(rng):
    for _ in range(20):
        master = random_master(rng, n_pixels=int(rng.integers(1, 40)), n_labelers=4)
        brute = {px.pixel_id for px in master.pixels if sum(px.responses) == 1}
        assert extract_orphans(master) == brute


def test_orphan_fraction_hand_case():
    master = make_master(
        [(0, 0), (0, 1), (0, 2), (0, 3)],
        [(1, 0, 0), (1, 1, 0), (0, 0, 1), (1, 1, 1)],
    )
    assert orphan_fraction(master) == 0.5


def test_window_start_centers_then_clamps():
    # plenty of room: center the window on the rounded centroid
    assert _window_start(lo=10, hi=10, centroid=10.0, window=5, extent=100) == 8
    # round half up: centroid 10.5 behaves like 11
    assert _window_start(lo=10, hi=11, centroid=10.5, window=5, extent=100) == 9
    # must cover the bounding box even if that means leaving center
    assert _window_start(lo=0, hi=4, centroid=4.0, window=5, extent=100) == 0
    # clamped into the image at the high end
    assert _window_start(lo=98, hi=99, centroid=98.5, window=5, extent=100) == 95
    # window larger than the image: pin to zero
    assert _window_start(lo=1, hi=2, centroid=1.5, window=10, extent=6) == 0


def _connected(members: set) -> bool:
    if not members:
        return False
    seen = {next(iter(sorted(members)))}
    frontier = list(seen)
    while frontier:
        r, c = frontier.pop()
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                q = (r + dr, c + dc)
                if q in members and q not in seen:
                    seen.add(q)
                    frontier.append(q)
    return seen == members


def test_grow_segments_partitions_into_connected_window_sized_chains(rng):
    for _ in range(15):
        n = int(rng.integers(1, 60))
        pts = {(int(r), int(c)) for r, c in rng.integers(0, 30, size=(n, 2))}
        window = int(rng.integers(3, 12))
        chains = _grow_segments(set(pts), window)
        out = [p for chain in chains for p in chain]
        assert sorted(out) == sorted(pts)  # a partition
        for chain in chains:
            rows = [p[0] for p in chain]
            cols = [p[1] for p in chain]
            assert max(rows) - min(rows) + 1 <= window
            assert max(cols) - min(cols) + 1 <= window
            assert _connected(set(chain))


def test_grow_segments_is_deterministic():
    pts = {(r, (r * 7) % 13) for r in range(40)}
    assert _grow_segments(set(pts), 9) == _grow_segments(set(pts), 9)


def test_extract_segments_splits_a_long_line():
    n = 100
    master = make_master(
        [(5, c) for c in range(n)],
        [(1, 1)] * n,
        width=120,
        height=20,
    )
    segs = extract_segments(master, range(n), window_size=64)
    assert len(segs) >= 2
    covered = sorted(p for s in segs for p in s.member_positions)
    assert covered == [(5, c) for c in range(n)]
    for s in segs:
        cols = [p[1] for p in s.member_positions]
        assert max(cols) - min(cols) + 1 <= 64
        # window covers all members and stays inside the image
        r0 = s.window_center[0] - 32
        c0 = s.window_center[1] - 32
        assert 0 <= c0 <= 120 - 64
        for (r, c) in s.member_positions:
            assert c0 <= c < c0 + 64
            assert r0 <= r < r0 + 64


def test_extract_segments_attaches_mean_strength():
    master = make_master([(0, 0), (0, 1)], [(1, 0), (0, 1)], width=8, height=8)
    segs = extract_segments(master, [0, 1], window_size=8, strengths={0: 0.2, 1: 0.6})
    assert len(segs) == 1
    assert segs[0].strength == pytest.approx(0.4)
    assert segs[0].image_size == (8, 8)


def test_extract_segments_rejects_foreign_pixel_ids():
    master = make_master([(0, 0)], [(1,)], width=8, height=8)
    with pytest.raises(ValueError):
        extract_segments(master, [7])


def test_segments_from_positions_uses_sorted_unique_indices():
    segs = segments_from_positions(
        "img", [(3, 3), (3, 4), (3, 3)], width=16, height=16, window_size=8
    )
    assert len(segs) == 1
    assert segs[0].member_pixel_ids == (0, 1)
    assert segs[0].source == "algorithm"
    with pytest.raises(ValueError):
        segments_from_positions("img", [(20, 0)], width=16, height=16)


def test_segment_validation():
    with pytest.raises(ValueError):
        make_segment(positions=())
    with pytest.raises(ValueError):
        make_segment(source="robot")
    with pytest.raises(ValueError):
        make_segment(strength=1.5)


def test_collection_checks_name_and_unique_ids():
    seg = make_segment()
    with pytest.raises(ValueError):
        SegmentCollection(name="bogus", segments=(seg,))
    with pytest.raises(ValueError):
        SegmentCollection(name="S1", segments=(seg, seg))
    coll = SegmentCollection(
        name="S1",
        segments=(seg, make_segment(segment_id="human-other-0000", image_id="other")),
    )
    assert sorted(coll.by_image()) == ["img", "other"]
