"""Core data model for multi-labeler boundary annotations.

A *master map* fuses the binary boundary maps drawn by L labelers over one
image: each fused pixel carries the full response vector (one bit per
labeler).  *Orphans* are master pixels marked by exactly one labeler.
*Segments* are small 8-connected pixel chains cut out of a pixel set so
that each fits inside a square crop window; they are the unit shown to
subjects in forced-choice trials.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

Pixel = tuple[int, int]

# 8-neighborhood offsets in scan order.
_NEIGHBORS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)


@dataclass(frozen=True)
class LabelerMap:
    """One labeler's binary boundary map: the set of marked pixels."""

    labeler_id: str
    image_id: str
    width: int
    height: int
    pixels: frozenset[Pixel]

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        object.__setattr__(self, "pixels", frozenset(self.pixels))
        for (r, c) in self.pixels:
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise ValueError(
                    f"pixel ({r}, {c}) outside image {self.width}x{self.height}"
                )


@dataclass(frozen=True)
class MasterPixel:
    """One fused boundary pixel with the response bit of every labeler."""

    pixel_id: int
    position: Pixel
    responses: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "responses", tuple(int(b) for b in self.responses))
        if any(b not in (0, 1) for b in self.responses):
            raise ValueError("responses must be 0/1 bits")
        if sum(self.responses) < 1:
            raise ValueError("a master pixel must be marked by at least one labeler")

    @property
    def vote_count(self) -> int:
        return sum(self.responses)


@dataclass(frozen=True)
class MasterMap:
    """Fusion of all labelers' boundary maps for one image.

    ``labeler_ids`` fixes the semantic order of every pixel's response
    vector.
    """

    image_id: str
    width: int
    height: int
    labeler_ids: tuple[str, ...]
    pixels: tuple[MasterPixel, ...]

    def __post_init__(self):
        object.__setattr__(self, "labeler_ids", tuple(self.labeler_ids))
        object.__setattr__(self, "pixels", tuple(self.pixels))
        n_labelers = len(self.labeler_ids)
        if n_labelers == 0:
            raise ValueError("a master map needs at least one labeler")
        if len(set(self.labeler_ids)) != n_labelers:
            raise ValueError("labeler ids must be unique")
        seen: set[Pixel] = set()
        for px in self.pixels:
            if len(px.responses) != n_labelers:
                raise ValueError(
                    f"pixel {px.pixel_id}: {len(px.responses)} responses, "
                    f"expected {n_labelers}"
                )
            r, c = px.position
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise ValueError(f"pixel {px.pixel_id} outside image bounds")
            if px.position in seen:
                raise ValueError(f"duplicate master pixel position {px.position}")
            seen.add(px.position)

    @property
    def n_labelers(self) -> int:
        return len(self.labeler_ids)

    def positions_by_id(self) -> dict[int, Pixel]:
        return {px.pixel_id: px.position for px in self.pixels}


@dataclass(frozen=True)
class BoundarySegment:
    """A short 8-connected boundary chain plus the crop window that frames it.

    ``member_pixel_ids`` index whatever pixel space the segment came from
    (master pixel ids for human-side segments, positional indices for
    algorithm-side ones); ``member_positions`` is the drawable chain.
    """

    segment_id: str
    image_id: str
    member_pixel_ids: tuple[int, ...]
    member_positions: tuple[Pixel, ...]
    window_center: Pixel
    source: str  # "human" | "algorithm"
    strength: float | None = None
    image_size: tuple[int, int] | None = None  # (width, height), for rendering

    def __post_init__(self):
        if not self.member_pixel_ids:
            raise ValueError("a segment needs at least one member pixel")
        if len(self.member_pixel_ids) != len(self.member_positions):
            raise ValueError("pixel id list and position list must align")
        if self.source not in ("human", "algorithm"):
            raise ValueError(f"unknown segment source {self.source!r}")
        if self.strength is not None and not (0.0 <= self.strength <= 1.0):
            raise ValueError("segment strength must lie in [0, 1]")


COLLECTION_NAMES = ("S", "S1", "A", "A_minus_S", "S_bar_tau")


@dataclass(frozen=True)
class SegmentCollection:
    """A named set of segments (e.g. the orphan set S1, or the
    algorithm-only set A_minus_S), optionally tagged with the strength
    threshold that produced it."""

    name: str
    segments: tuple[BoundarySegment, ...]
    tau: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.name not in COLLECTION_NAMES:
            raise ValueError(f"collection name must be one of {COLLECTION_NAMES}")
        ids = [s.segment_id for s in self.segments]
        if len(set(ids)) != len(ids):
            raise ValueError("segment ids must be unique within a collection")
        if self.tau is not None and not (0.0 <= self.tau <= 1.0 + 1e-9):
            raise ValueError("tau must lie in [0, 1]")

    def by_image(self) -> dict[str, list[BoundarySegment]]:
        out: dict[str, list[BoundarySegment]] = {}
        for seg in self.segments:
            out.setdefault(seg.image_id, []).append(seg)
        return out


def extract_orphans(master: MasterMap) -> set[int]:
    """Pixel ids marked by exactly one labeler (response sum == 1)."""
    return {px.pixel_id for px in master.pixels if px.vote_count == 1}


def orphan_fraction(master: MasterMap) -> float:
    """Share of master pixels that are orphans; 0.0 on an empty map."""
    if not master.pixels:
        return 0.0
    return len(extract_orphans(master)) / len(master.pixels)


def _window_start(lo: int, hi: int, centroid: float, window: int, extent: int) -> int:
    """Deterministic window placement along one axis.

    Prefers centering on the member centroid, then shifts as little as
    needed so the window covers the member bounding box [lo, hi] and,
    when the image is large enough, lies fully inside [0, extent).
    """
    start = int(math.floor(centroid + 0.5)) - window // 2
    start = min(max(start, hi + 1 - window), lo)
    return min(max(start, 0), max(0, extent - window))


def _grow_segments(positions: set[Pixel], window_size: int) -> list[list[Pixel]]:
    """Partition ``positions`` into 8-connected chains whose bounding boxes
    fit a ``window_size`` square.

    Seeds are taken in scan order; each segment grows by best-first
    expansion over unassigned 8-neighbors, refusing any pixel that would
    push the bounding box past the window.  Refused pixels seed later
    segments, so the output is a partition and every segment is connected.
    """
    assigned: set[Pixel] = set()
    segments: list[list[Pixel]] = []
    for seed in sorted(positions):
        if seed in assigned:
            continue
        members: list[Pixel] = []
        min_r, max_r, min_c, max_c = seed[0], seed[0], seed[1], seed[1]
        heap: list[Pixel] = [seed]
        queued = {seed}
        while heap:
            p = heapq.heappop(heap)
            if p in assigned:
                continue
            r, c = p
            nr0, nr1 = min(min_r, r), max(max_r, r)
            nc0, nc1 = min(min_c, c), max(max_c, c)
            if nr1 - nr0 + 1 > window_size or nc1 - nc0 + 1 > window_size:
                continue  # stays unassigned; a later seed will pick it up
            assigned.add(p)
            members.append(p)
            min_r, max_r, min_c, max_c = nr0, nr1, nc0, nc1
            for dr, dc in _NEIGHBORS:
                q = (r + dr, c + dc)
                if q in positions and q not in assigned and q not in queued:
                    queued.add(q)
                    heapq.heappush(heap, q)
        segments.append(members)
    return segments


def extract_segments(
    master: MasterMap,
    pixel_subset: Iterable[int],
    window_size: int = 64,
    source: str = "human",
    strengths: Mapping[int, float] | None = None,
) -> list[BoundarySegment]:
    """Cut a subset of master pixels into displayable boundary segments.

    The subset is partitioned into 8-connected components, each split so
    every segment's bounding box fits a ``window_size`` square.  The crop
    window is centered on the member centroid, clamped to cover all
    members and to stay inside the image.  When ``strengths`` is given,
    each segment gets the mean strength of its member pixels.
    """
    if window_size < 3:
        raise ValueError("window_size must be >= 3")
    subset = set(pixel_subset)
    if not subset:
        return []
    by_id = master.positions_by_id()
    missing = subset - by_id.keys()
    if missing:
        raise ValueError(f"pixel ids not in master map: {sorted(missing)[:5]}")
    pos_to_id = {by_id[i]: i for i in subset}
    chains = _grow_segments(set(pos_to_id), window_size)

    out: list[BoundarySegment] = []
    for k, chain in enumerate(chains):
        rows = [p[0] for p in chain]
        cols = [p[1] for p in chain]
        row0 = _window_start(
            min(rows), max(rows), sum(rows) / len(rows), window_size, master.height
        )
        col0 = _window_start(
            min(cols), max(cols), sum(cols) / len(cols), window_size, master.width
        )
        center = (row0 + window_size // 2, col0 + window_size // 2)
        ids = tuple(pos_to_id[p] for p in chain)
        strength = None
        if strengths is not None:
            strength = sum(strengths[i] for i in ids) / len(ids)
        out.append(
            BoundarySegment(
                segment_id=f"{source}-{master.image_id}-{k:04d}",
                image_id=master.image_id,
                member_pixel_ids=ids,
                member_positions=tuple(chain),
                window_center=center,
                source=source,
                strength=strength,
                image_size=(master.width, master.height),
            )
        )
    return out


def segments_from_positions(
    image_id: str,
    positions: Sequence[Pixel],
    width: int,
    height: int,
    window_size: int = 64,
    source: str = "algorithm",
) -> list[BoundarySegment]:
    """Like :func:`extract_segments` but for raw positions that have no
    master-map identity (algorithm-side pixel sets).  Member ids are
    indices into the sorted position list."""
    if window_size < 3:
        raise ValueError("window_size must be >= 3")
    uniq = sorted(set(positions))
    for (r, c) in uniq:
        if not (0 <= r < height and 0 <= c < width):
            raise ValueError(f"position ({r}, {c}) outside image {width}x{height}")
    pos_to_id = {p: i for i, p in enumerate(uniq)}
    chains = _grow_segments(set(uniq), window_size)
    out: list[BoundarySegment] = []
    for k, chain in enumerate(chains):
        rows = [p[0] for p in chain]
        cols = [p[1] for p in chain]
        row0 = _window_start(min(rows), max(rows), sum(rows) / len(rows), window_size, height)
        col0 = _window_start(min(cols), max(cols), sum(cols) / len(cols), window_size, width)
        out.append(
            BoundarySegment(
                segment_id=f"{source}-{image_id}-{k:04d}",
                image_id=image_id,
                member_pixel_ids=tuple(pos_to_id[p] for p in chain),
                member_positions=tuple(chain),
                window_center=(row0 + window_size // 2, col0 + window_size // 2),
                source=source,
                image_size=(width, height),
            )
        )
    return out
