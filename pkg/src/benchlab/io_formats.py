"""Decoding and encoding of all on-disk data.

Covers label files and derived artifacts (JSON), soft boundary rasters
(binary P5-style grayscale or JSON), and the matched-cardinality
thresholding that turns a detector's soft map into a pixel set of a
required size.
"""

from __future__ import annotations

import json
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import FormatError, ShortfallError
from .label_model import BoundarySegment, LabelerMap, MasterMap, MasterPixel, Pixel, SegmentCollection
from .strength_inference import EmConfig, EmResult, SigmoidParams, StrengthField

FORMAT_VERSION = 1
_MAX_PIXELS = 10 ** 8
_ALLOWED_MAXVALS = (255, 65535)


def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, no float mangling, one trailing
    newline.  Identical inputs give identical bytes."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=1) + "\n"


# ---------------------------------------------------------------------------
# Soft boundary maps: binary P5-style grayscale and a JSON alternative.


class _ByteScanner:
    """Header tokenizer that remembers byte offsets for error messages."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def skip_separators(self) -> None:
        data = self.data
        while self.pos < len(data):
            b = data[self.pos : self.pos + 1]
            if b.isspace():
                self.pos += 1
            elif b == b"#":
                while self.pos < len(data) and data[self.pos : self.pos + 1] != b"\n":
                    self.pos += 1
            else:
                return

    def int_token(self, what: str) -> int:
        self.skip_separators()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos : self.pos + 1].isdigit():
            self.pos += 1
        if self.pos == start:
            raise FormatError(f"expected {what} as an unsigned integer", offset=start)
        return int(self.data[start : self.pos])


def load_soft_map(data: bytes) -> np.ndarray:
    """Decode a confidence grid in [0, 1] from raster or JSON bytes.

    Raster samples are divided by the declared maxval; JSON values are
    taken as confidences directly.
    """
    if data[:2] == b"P5":
        return _load_p5(data)
    try:
        obj = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise FormatError("neither a P5 raster nor UTF-8 JSON", offset=e.start) from e
    except json.JSONDecodeError as e:
        raise FormatError(f"bad JSON soft map: {e.msg}", offset=e.pos) from e
    return _soft_map_from_json(obj)


def _load_p5(data: bytes) -> np.ndarray:
    scanner = _ByteScanner(data)
    scanner.pos = 2
    width = scanner.int_token("width")
    height = scanner.int_token("height")
    if width < 1 or height < 1 or width * height > _MAX_PIXELS:
        raise FormatError(
            f"raster dimensions {width}x{height} out of range", offset=scanner.pos
        )
    scanner.skip_separators()
    maxval_at = scanner.pos
    maxval = scanner.int_token("maxval")
    if maxval not in _ALLOWED_MAXVALS:
        raise FormatError(
            f"maxval must be one of {_ALLOWED_MAXVALS}, got {maxval}", offset=maxval_at
        )
    if scanner.pos >= len(data) or not data[scanner.pos : scanner.pos + 1].isspace():
        raise FormatError("expected single whitespace after maxval", offset=scanner.pos)
    scanner.pos += 1

    bytes_per = 1 if maxval == 255 else 2
    needed = width * height * bytes_per
    available = len(data) - scanner.pos
    if available < needed:
        raise FormatError(
            f"truncated payload: need {needed} bytes, found {available}",
            offset=len(data),
        )
    dtype = np.uint8 if maxval == 255 else np.dtype(">u2")
    samples = np.frombuffer(data, dtype=dtype, count=width * height, offset=scanner.pos)
    return samples.reshape(height, width).astype(float) / maxval


def save_soft_map(values: np.ndarray, maxval: int = 255) -> bytes:
    """Encode a confidence grid as a binary P5-style raster."""
    if maxval not in _ALLOWED_MAXVALS:
        raise ValueError(f"maxval must be one of {_ALLOWED_MAXVALS}")
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("soft map must be a nonempty 2-d array")
    if not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 1:
        raise ValueError("confidences must be finite and lie in [0, 1]")
    height, width = arr.shape
    dtype = np.uint8 if maxval == 255 else np.dtype(">u2")
    samples = np.rint(arr * maxval).astype(dtype)
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    return header + samples.tobytes()


def soft_map_to_json_dict(values: np.ndarray) -> dict:
    arr = np.asarray(values, dtype=float)
    return {
        "format_version": FORMAT_VERSION,
        "width": int(arr.shape[1]),
        "height": int(arr.shape[0]),
        "values": [[float(v) for v in row] for row in arr],
    }


def _soft_map_from_json(obj) -> np.ndarray:
    if isinstance(obj, list):
        rows = obj
    elif isinstance(obj, dict) and "values" in obj:
        _check_version(obj)
        rows = obj["values"]
    else:
        raise FormatError("JSON soft map must be a row list or carry a 'values' key")
    try:
        arr = np.asarray(rows, dtype=float)
    except ValueError as e:
        raise FormatError(f"JSON soft map rows are not rectangular numbers: {e}") from e
    if arr.ndim != 2 or arr.size == 0:
        raise FormatError("JSON soft map must be a nonempty 2-d row list")
    if not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 1:
        raise FormatError("JSON soft map confidences must lie in [0, 1]")
    if isinstance(obj, dict):
        if obj.get("height") not in (None, arr.shape[0]) or obj.get("width") not in (
            None,
            arr.shape[1],
        ):
            raise FormatError("declared width/height disagree with the value rows")
    return arr


def threshold_matched(soft: np.ndarray, target_count: int) -> set[Pixel]:
    """The target_count highest-confidence pixels, ties at the cut broken
    by (row, col) order so the result size is exact."""
    arr = np.asarray(soft, dtype=float)
    if arr.ndim != 2:
        raise ValueError("soft map must be 2-d")
    if target_count < 0:
        raise ValueError("target_count must be >= 0")
    rows, cols = np.nonzero(arr > 0)
    if target_count > rows.size:
        raise ShortfallError(target_count, int(rows.size), what="nonzero-confidence pixels")
    if target_count == 0:
        return set()
    conf = arr[rows, cols]
    order = np.lexsort((cols, rows, -conf))[:target_count]
    return {(int(rows[i]), int(cols[i])) for i in order}


# ---------------------------------------------------------------------------
# Label files and derived artifacts (JSON schemas, format_version 1).


def _check_version(obj: dict) -> None:
    version = obj.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {version!r}")


def labeler_maps_to_json_dict(maps: Sequence[LabelerMap]) -> dict:
    if not maps:
        raise ValueError("need at least one labeler map")
    first = maps[0]
    for m in maps[1:]:
        if (m.image_id, m.width, m.height) != (first.image_id, first.width, first.height):
            raise ValueError("all labeler maps in one file must share image and size")
    return {
        "format_version": FORMAT_VERSION,
        "image_id": first.image_id,
        "width": first.width,
        "height": first.height,
        "labelers": [
            {"labeler_id": m.labeler_id, "pixels": [list(p) for p in sorted(m.pixels)]}
            for m in maps
        ],
    }


def labeler_maps_from_json_dict(obj: dict) -> list[LabelerMap]:
    try:
        _check_version(obj)
        return [
            LabelerMap(
                labeler_id=entry["labeler_id"],
                image_id=obj["image_id"],
                width=int(obj["width"]),
                height=int(obj["height"]),
                pixels=frozenset((int(r), int(c)) for r, c in entry["pixels"]),
            )
            for entry in obj["labelers"]
        ]
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad labels file: {e}") from e


def master_map_to_json_dict(master: MasterMap) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "image_id": master.image_id,
        "width": master.width,
        "height": master.height,
        "labeler_ids": list(master.labeler_ids),
        "pixels": [
            {
                "pixel_id": px.pixel_id,
                "position": list(px.position),
                "responses": list(px.responses),
            }
            for px in master.pixels
        ],
    }


def master_map_from_json_dict(obj: dict) -> MasterMap:
    try:
        _check_version(obj)
        return MasterMap(
            image_id=obj["image_id"],
            width=int(obj["width"]),
            height=int(obj["height"]),
            labeler_ids=tuple(obj["labeler_ids"]),
            pixels=tuple(
                MasterPixel(
                    pixel_id=int(px["pixel_id"]),
                    position=(int(px["position"][0]), int(px["position"][1])),
                    responses=tuple(int(v) for v in px["responses"]),
                )
                for px in obj["pixels"]
            ),
        )
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad master map file: {e}") from e


def em_result_to_json_dict(result: EmResult, config: EmConfig) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "sigma": config.sigma,
        "grid_size": config.grid_size,
        "epsilon": config.epsilon,
        "max_iters": config.max_iters,
        "tol": config.tol,
        "mu_mode": config.mu_mode,
        "iterations_run": result.iterations_run,
        "final_max_delta": result.final_max_delta,
        "degenerate": result.degenerate,
        "history": list(result.history),
        "strengths": {str(i): result.strengths[i] for i in result.strengths.ids()},
        "profiles": [
            {"labeler_id": p.labeler_id, "theta": list(p.theta.as_tuple())}
            for p in result.profiles
        ],
    }


def strength_field_from_json_dict(obj: dict) -> StrengthField:
    try:
        _check_version(obj)
        return StrengthField({int(k): float(v) for k, v in obj["strengths"].items()})
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad strengths file: {e}") from e


def profiles_from_json_dict(obj: dict) -> dict[str, SigmoidParams]:
    try:
        return {
            p["labeler_id"]: SigmoidParams(*map(float, p["theta"]))
            for p in obj.get("profiles", [])
        }
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad profiles block: {e}") from e


def strength_list_from_json(obj) -> list[float]:
    """Accept a bare JSON array of strengths or {"values": [...]}."""
    values = obj
    if isinstance(obj, dict):
        _check_version(obj)
        values = obj.get("values")
    if not isinstance(values, list) or not values:
        raise FormatError("expected a nonempty JSON array of strengths")
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError) as e:
        raise FormatError(f"strengths must be numbers: {e}") from e


def segment_to_json_dict(seg: BoundarySegment) -> dict:
    return {
        "segment_id": seg.segment_id,
        "image_id": seg.image_id,
        "pixel_ids": list(seg.member_pixel_ids),
        "positions": [list(p) for p in seg.member_positions],
        "window_center": list(seg.window_center),
        "source": seg.source,
        "strength": seg.strength,
        "image_size": list(seg.image_size) if seg.image_size else None,
    }


def segment_from_json_dict(obj: dict) -> BoundarySegment:
    return BoundarySegment(
        segment_id=obj["segment_id"],
        image_id=obj["image_id"],
        member_pixel_ids=tuple(int(i) for i in obj["pixel_ids"]),
        member_positions=tuple((int(r), int(c)) for r, c in obj["positions"]),
        window_center=(int(obj["window_center"][0]), int(obj["window_center"][1])),
        source=obj["source"],
        strength=obj.get("strength"),
        image_size=tuple(obj["image_size"]) if obj.get("image_size") else None,
    )


def collection_to_json_dict(collection: SegmentCollection) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "name": collection.name,
        "tau": collection.tau,
        "segments": [segment_to_json_dict(s) for s in collection.segments],
    }


def collection_from_json_dict(obj: dict) -> SegmentCollection:
    try:
        _check_version(obj)
        return SegmentCollection(
            name=obj["name"],
            segments=tuple(segment_from_json_dict(s) for s in obj["segments"]),
            tau=obj.get("tau"),
        )
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad segment collection file: {e}") from e


def positions_from_iterable(pixels: Iterable[Sequence[int]]) -> list[Pixel]:
    return [(int(r), int(c)) for r, c in pixels]
