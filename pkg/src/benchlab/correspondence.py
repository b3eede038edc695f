"""Distance-tolerant fusion of per-labeler boundary maps.

Boundary labels from different people rarely land on identical pixels, so
maps are merged by optimal assignment: pixels within a distance tolerance
may pair up, each pixel at most once, maximizing the number of pairs and,
among maximum pairings, minimizing total Euclidean distance.  Merging is
incremental over labelers; matched pixels set the labeler's response bit
on the existing master pixel, unmatched ones become new master pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import min_weight_full_bipartite_matching
from scipy.spatial import cKDTree

from .errors import DimensionMismatchError
from .label_model import LabelerMap, MasterMap, MasterPixel, Pixel


@dataclass(frozen=True)
class MatchResult:
    """Outcome of pairing two pixel sets.

    ``matched`` holds (ref_index, new_index, distance) triples; indices
    refer to the sequences passed to :func:`match_maps`.
    """

    matched: tuple[tuple[int, int, float], ...]
    unmatched_ref: tuple[int, ...]
    unmatched_new: tuple[int, ...]

    @property
    def total_distance(self) -> float:
        return float(sum(d for _, _, d in self.matched))


def default_tolerance(width: int, height: int, fraction: float = 0.0075) -> int:
    """Match tolerance in pixels: ``fraction`` of the image diagonal,
    rounded up."""
    return int(math.ceil(fraction * math.hypot(width, height)))


def match_maps(
    ref: Sequence[Pixel] | set[Pixel],
    new: Sequence[Pixel] | set[Pixel],
    d_max: float,
) -> MatchResult:
    """Min-cost maximum-cardinality matching between two pixel sets.

    Only pairs with Euclidean distance <= ``d_max`` are admissible.  Among
    all matchings of maximum cardinality, one of minimum total distance is
    returned.  Sets are ordered by scan order before indexing.
    """
    if d_max <= 0:
        raise ValueError("d_max must be positive")
    ref_pts = sorted(ref) if isinstance(ref, (set, frozenset)) else list(ref)
    new_pts = sorted(new) if isinstance(new, (set, frozenset)) else list(new)
    n_ref, n_new = len(ref_pts), len(new_pts)
    if n_ref == 0 or n_new == 0:
        return MatchResult((), tuple(range(n_ref)), tuple(range(n_new)))

    ref_arr = np.asarray(ref_pts, dtype=float)
    new_arr = np.asarray(new_pts, dtype=float)
    candidates = cKDTree(ref_arr).query_ball_point(new_arr, r=d_max)

    # Rows = new pixels; columns = ref pixels plus one private dummy per
    # row so a full row matching always exists.  Weights are shifted by +1
    # (the sparse solver treats explicit zeros as absent edges); the shift
    # adds a constant n_new to every full matching, so optima are preserved.
    # A dummy edge costs more than any all-real assignment, which makes the
    # solver maximize real-pair cardinality first, total distance second.
    big = (d_max + 1.0) * n_new + 1.0
    rows, cols, weights = [], [], []
    for ni, ref_indices in enumerate(candidates):
        for ri in ref_indices:
            d = float(np.hypot(*(new_arr[ni] - ref_arr[ri])))
            rows.append(ni)
            cols.append(ri)
            weights.append(d + 1.0)
        rows.append(ni)
        cols.append(n_ref + ni)
        weights.append(big)
    graph = csr_matrix(
        (weights, (rows, cols)), shape=(n_new, n_ref + n_new)
    )
    row_ind, col_ind = min_weight_full_bipartite_matching(graph)

    matched = []
    matched_new = set()
    matched_ref = set()
    for ni, ci in zip(row_ind, col_ind):
        if ci < n_ref:
            d = float(np.hypot(*(new_arr[ni] - ref_arr[ci])))
            matched.append((int(ci), int(ni), d))
            matched_new.add(int(ni))
            matched_ref.add(int(ci))
    matched.sort()
    return MatchResult(
        matched=tuple(matched),
        unmatched_ref=tuple(i for i in range(n_ref) if i not in matched_ref),
        unmatched_new=tuple(i for i in range(n_new) if i not in matched_new),
    )


def merge_labelers(maps: Sequence[LabelerMap], d_max: float | None = None) -> MasterMap:
    """Fuse per-labeler boundary maps into one master map.

    The first labeler seeds the master pixel set and fixes fused pixel
    positions; each later labeler is matched against the current master
    positions within ``d_max`` (default: 0.75% of the image diagonal,
    rounded up).  Every input pixel is accounted for exactly once, so the
    per-labeler response marginals equal the input map sizes.
    """
    if not maps:
        raise ValueError("need at least one labeler map")
    first = maps[0]
    for m in maps[1:]:
        if (m.image_id, m.width, m.height) != (first.image_id, first.width, first.height):
            raise DimensionMismatchError(
                f"labeler {m.labeler_id}: image {m.image_id} {m.width}x{m.height} "
                f"does not match {first.image_id} {first.width}x{first.height}"
            )
    if d_max is None:
        d_max = default_tolerance(first.width, first.height)
    n_labelers = len(maps)

    positions: list[Pixel] = sorted(first.pixels)
    responses: list[list[int]] = [
        [1] + [0] * (n_labelers - 1) for _ in positions
    ]
    for l in range(1, n_labelers):
        new_pts = sorted(maps[l].pixels)
        if d_max > 0:
            result = match_maps(positions, new_pts, d_max)
        else:
            # Exact positional union: only identical pixels merge.
            index = {p: i for i, p in enumerate(positions)}
            matched = tuple(
                (index[p], ni, 0.0) for ni, p in enumerate(new_pts) if p in index
            )
            hit = {ni for _, ni, _ in matched}
            result = MatchResult(
                matched,
                tuple(i for i in range(len(positions)) if i not in {m[0] for m in matched}),
                tuple(ni for ni in range(len(new_pts)) if ni not in hit),
            )
        for ri, _, _ in result.matched:
            responses[ri][l] = 1
        for ni in result.unmatched_new:
            positions.append(new_pts[ni])
            bits = [0] * n_labelers
            bits[l] = 1
            responses.append(bits)

    pixels = tuple(
        MasterPixel(pixel_id=i, position=pos, responses=tuple(bits))
        for i, (pos, bits) in enumerate(zip(positions, responses))
    )
    return MasterMap(
        image_id=first.image_id,
        width=first.width,
        height=first.height,
        labeler_ids=tuple(m.labeler_id for m in maps),
        pixels=pixels,
    )


def algorithm_only_pixels(
    master: MasterMap, algo_pixels: Sequence[Pixel] | set[Pixel], d_max: float
) -> list[Pixel]:
    """Algorithm pixels with no human counterpart within ``d_max``:
    the false-alarm side of a risk comparison."""
    algo_sorted = sorted(set(algo_pixels))
    if not algo_sorted:
        return []
    human_positions = [px.position for px in master.pixels]
    if not human_positions:
        return algo_sorted
    result = match_maps(human_positions, algo_sorted, d_max)
    return [algo_sorted[ni] for ni in result.unmatched_new]
