"""Forced-choice trial generation, session bookkeeping, and persistence.

Trials pair one human-side boundary segment with one algorithm-side
segment from the same image.  Subjects see both segments framed on the
original image and pick the perceptually stronger one; their choices
stream into an append-only journal that survives crashes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DuplicateResponseError,
    FormatError,
    SequencingError,
    SessionCompleteError,
    ShortfallError,
)
from .io_formats import segment_from_json_dict, segment_to_json_dict
from .label_model import BoundarySegment, Pixel, SegmentCollection

CHOICES = ("left_stronger", "right_stronger")
SIDES = ("human", "algo")


@dataclass(frozen=True)
class TrialRecord:
    """One forced-choice comparison between a human and an algorithm segment.

    ``left_assignment`` says which source the UI labels as the left
    option; it is randomized per trial to cancel side bias.
    """

    trial_id: str
    image_id: str
    human_segment: BoundarySegment
    algo_segment: BoundarySegment
    left_assignment: str  # "human" | "algo"
    window_size: int
    seed_used: int

    def __post_init__(self):
        if self.human_segment.image_id != self.image_id:
            raise ValueError("human segment belongs to a different image")
        if self.algo_segment.image_id != self.image_id:
            raise ValueError("algorithm segment belongs to a different image")
        if self.human_segment.source != "human":
            raise ValueError("human-side segment must have source 'human'")
        if self.algo_segment.source != "algorithm":
            raise ValueError("algorithm-side segment must have source 'algorithm'")
        if self.left_assignment not in SIDES:
            raise ValueError(f"left_assignment must be one of {SIDES}")
        if self.window_size < 3:
            raise ValueError("window_size must be >= 3")

    def algo_on_left(self) -> bool:
        return self.left_assignment == "algo"


@dataclass(frozen=True)
class ResponseRecord:
    """A single subject's forced choice on one trial."""

    trial_id: str
    subject_id: str
    choice: str
    response_time_ms: float
    timestamp: float

    def __post_init__(self):
        if self.choice not in CHOICES:
            raise ValueError(f"choice must be one of {CHOICES}")
        if not self.subject_id:
            raise ValueError("subject_id must be nonempty")
        if self.response_time_ms < 0:
            raise ValueError("response_time_ms must be >= 0")


@dataclass
class Session:
    """Mutable per-subject progress through a fixed trial order."""

    session_id: str
    subject_id: str
    trial_order: tuple[str, ...]
    cursor: int = 0
    status: str = "active"
    responses: list[ResponseRecord] = field(default_factory=list)

    def __post_init__(self):
        self.trial_order = tuple(self.trial_order)
        if not self.trial_order:
            raise ValueError("a session needs at least one trial")
        if not (0 <= self.cursor <= len(self.trial_order)):
            raise ValueError("cursor out of range")
        if self.status not in ("active", "complete"):
            raise ValueError(f"unknown session status {self.status!r}")

    @property
    def n_trials(self) -> int:
        return len(self.trial_order)

    def current_trial_id(self) -> str | None:
        if self.cursor >= len(self.trial_order):
            return None
        return self.trial_order[self.cursor]


@dataclass(frozen=True)
class WindowSpec:
    """One outlined crop window in a trial presentation."""

    label: str  # "left" | "right"
    origin: Pixel  # top-left corner (row, col)
    size: int
    polyline: tuple[Pixel, ...]  # segment chain in absolute image coords


@dataclass(frozen=True)
class TrialSpec:
    """Declarative description of what one trial shows the subject."""

    trial_id: str
    image_id: str
    image_size: tuple[int, int]  # (width, height)
    left: WindowSpec
    right: WindowSpec
    original_image_ref: str
    windows_overlap: bool


def sample_trial_pairs(
    human_side: SegmentCollection,
    algo_side: SegmentCollection,
    n: int,
    seed: int,
    window_size: int = 64,
) -> list[TrialRecord]:
    """Draw ``n`` trials, at most one per image, deterministically.

    Eligible images are those with at least one segment in both
    collections.  Within each chosen image the pair is sampled uniformly,
    and the left/right assignment is an independent fair coin.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    human_by_image = human_side.by_image()
    algo_by_image = algo_side.by_image()
    eligible = sorted(set(human_by_image) & set(algo_by_image))
    if n > len(eligible):
        raise ShortfallError(n, len(eligible), what="eligible images")

    rng = np.random.default_rng(seed)
    picked_idx = sorted(rng.choice(len(eligible), size=n, replace=False).tolist())
    trials: list[TrialRecord] = []
    for k, idx in enumerate(picked_idx):
        image_id = eligible[idx]
        humans = sorted(human_by_image[image_id], key=lambda s: s.segment_id)
        algos = sorted(algo_by_image[image_id], key=lambda s: s.segment_id)
        human_seg = humans[int(rng.integers(len(humans)))]
        algo_seg = algos[int(rng.integers(len(algos)))]
        left = SIDES[int(rng.integers(2))]
        trials.append(
            TrialRecord(
                trial_id=f"trial-{k:04d}",
                image_id=image_id,
                human_segment=human_seg,
                algo_segment=algo_seg,
                left_assignment=left,
                window_size=window_size,
                seed_used=seed,
            )
        )
    return trials


def _window_origin(segment: BoundarySegment, window: int, size: tuple[int, int]) -> Pixel:
    width, height = size
    r0 = segment.window_center[0] - window // 2
    c0 = segment.window_center[1] - window // 2
    r0 = min(max(r0, 0), max(0, height - window))
    c0 = min(max(c0, 0), max(0, width - window))
    return (r0, c0)


def _boxes_overlap(a: Pixel, b: Pixel, size: int) -> bool:
    return abs(a[0] - b[0]) < size and abs(a[1] - b[1]) < size


def render_trial_spec(trial: TrialRecord, master=None) -> TrialSpec:
    """Lay out one trial: two outlined windows over the full image, each
    framing its segment's pixel chain, labeled per the side assignment.

    ``master`` (when given) must agree with the human segment's recorded
    positions; it also supplies image dimensions if the segments carry
    none.  Overlapping windows are allowed but flagged.
    """
    size = trial.human_segment.image_size or trial.algo_segment.image_size
    if size is None and master is not None:
        size = (master.width, master.height)
    if size is None:
        raise ValueError("image size unknown; segments carry none and no master map given")
    width, height = size

    if master is not None and trial.human_segment.source == "human":
        by_id = master.positions_by_id()
        for pid, pos in zip(
            trial.human_segment.member_pixel_ids, trial.human_segment.member_positions
        ):
            if by_id.get(pid) != pos:
                raise ValueError(
                    f"segment pixel {pid} at {pos} disagrees with the master map"
                )

    for seg in (trial.human_segment, trial.algo_segment):
        for (r, c) in seg.member_positions:
            if not (0 <= r < height and 0 <= c < width):
                raise ValueError(f"segment pixel ({r}, {c}) outside image {width}x{height}")

    window = trial.window_size
    human_origin = _window_origin(trial.human_segment, window, size)
    algo_origin = _window_origin(trial.algo_segment, window, size)
    algo_label = "left" if trial.algo_on_left() else "right"
    human_label = "right" if trial.algo_on_left() else "left"
    human_spec = WindowSpec(
        label=human_label,
        origin=human_origin,
        size=window,
        polyline=trial.human_segment.member_positions,
    )
    algo_spec = WindowSpec(
        label=algo_label,
        origin=algo_origin,
        size=window,
        polyline=trial.algo_segment.member_positions,
    )
    left, right = (algo_spec, human_spec) if trial.algo_on_left() else (human_spec, algo_spec)
    return TrialSpec(
        trial_id=trial.trial_id,
        image_id=trial.image_id,
        image_size=size,
        left=left,
        right=right,
        original_image_ref=trial.image_id,
        windows_overlap=_boxes_overlap(human_origin, algo_origin, window),
    )


def record_response(session: Session, response: ResponseRecord) -> Session:
    """Append a response to its session, enforcing strict trial order.

    The response must answer the trial at the session cursor; anything
    else is a duplicate or an out-of-order submission.
    """
    if session.status == "complete":
        raise SessionCompleteError(
            f"session {session.session_id} is already complete"
        )
    expected = session.trial_order[session.cursor]
    if response.trial_id != expected:
        if response.trial_id in session.trial_order[: session.cursor]:
            raise DuplicateResponseError(
                f"trial {response.trial_id} was already answered in session "
                f"{session.session_id}"
            )
        raise SequencingError(
            f"session {session.session_id} expects trial {expected}, "
            f"got {response.trial_id}"
        )
    session.responses.append(response)
    session.cursor += 1
    if session.cursor == len(session.trial_order):
        session.status = "complete"
    return session


# ---------------------------------------------------------------------------
# Persistence: trials file and response journal, one JSON object per line.


def trial_to_json(trial: TrialRecord) -> dict:
    return {
        "trial_id": trial.trial_id,
        "image_id": trial.image_id,
        "human_segment": segment_to_json_dict(trial.human_segment),
        "algo_segment": segment_to_json_dict(trial.algo_segment),
        "left": trial.left_assignment,
        "window": trial.window_size,
        "seed": trial.seed_used,
    }


def trial_from_json(obj: dict) -> TrialRecord:
    return TrialRecord(
        trial_id=obj["trial_id"],
        image_id=obj["image_id"],
        human_segment=segment_from_json_dict(obj["human_segment"]),
        algo_segment=segment_from_json_dict(obj["algo_segment"]),
        left_assignment=obj["left"],
        window_size=int(obj["window"]),
        seed_used=int(obj["seed"]),
    )


def write_trials(trials: Sequence[TrialRecord], path: str | Path) -> None:
    lines = [json.dumps(trial_to_json(t), sort_keys=True) for t in trials]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_trials(path: str | Path) -> list[TrialRecord]:
    trials: list[TrialRecord] = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            trials.append(trial_from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise FormatError(f"bad trial record on line {lineno}: {e}") from e
    seen = [t.trial_id for t in trials]
    if len(set(seen)) != len(seen):
        raise FormatError("duplicate trial ids in trials file")
    return trials


def response_to_json(response: ResponseRecord) -> dict:
    return {
        "trial_id": response.trial_id,
        "subject_id": response.subject_id,
        "choice": response.choice,
        "rt_ms": response.response_time_ms,
        "ts": response.timestamp,
    }


def response_from_json(obj: dict) -> ResponseRecord:
    return ResponseRecord(
        trial_id=obj["trial_id"],
        subject_id=obj["subject_id"],
        choice=obj["choice"],
        response_time_ms=float(obj["rt_ms"]),
        timestamp=float(obj["ts"]),
    )


def append_response(response: ResponseRecord, path: str | Path) -> None:
    """Durably append one response; one JSON object per journal line."""
    line = json.dumps(response_to_json(response), sort_keys=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        fh.flush()


def load_responses(path: str | Path) -> list[ResponseRecord]:
    """Replay a journal, skipping a trailing half-written line if the
    writer died mid-append."""
    p = Path(path)
    if not p.exists():
        return []
    out: list[ResponseRecord] = []
    lines = p.read_text(encoding="utf-8").splitlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append(response_from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            if lineno == len(lines):
                break  # torn final record from a crash; everything before is intact
            raise FormatError(f"bad response record on line {lineno}: {e}") from e
    return out
