"""Risk estimation for boundary sets.

The risk of a human-labeled set against an algorithm-produced set is the
probability that a randomly drawn human element is perceptually weaker
than a randomly drawn algorithm element.  Two routes compute it: an
empirical estimator over forced-choice responses, and an exact pairwise
count when latent strengths are known (synthetic validation).  The same
module thresholds strength fields into subsets and traces the resulting
risk-utility trade-off curve.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import NoDataError
from .strength_inference import StrengthField
from .trial_engine import CHOICES, ResponseRecord, TrialRecord

POOLING_MODES = ("mode_vote", "per_subject_mean")
TIE = "tie"


@dataclass(frozen=True)
class SubjectRisk:
    risk: float
    n_trials: int

    def __post_init__(self):
        if not (0.0 <= self.risk <= 1.0):
            raise ValueError("risk must lie in [0, 1]")
        if self.n_trials < 1:
            raise ValueError("a reported risk needs at least one trial")


@dataclass(frozen=True)
class RiskReport:
    """Per-subject and pooled risk over one batch of forced-choice data.

    ``excluded_trials`` counts trials dropped from the pooled estimate
    (exact ties under mode_vote pooling).  ``human_set_label`` records
    which human-side sampling produced the trials (e.g. the full set or
    the single-labeler subset), since the estimator itself cannot tell.
    """

    per_subject: dict[str, SubjectRisk]
    pooled_risk: float
    pooled_n_trials: int
    pooling: str
    excluded_trials: int
    human_set_label: str = "S1"

    def __post_init__(self):
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}")
        if not (0.0 <= self.pooled_risk <= 1.0):
            raise ValueError("pooled risk must lie in [0, 1]")
        if self.pooled_n_trials < 1:
            raise ValueError("a reported risk needs at least one trial")

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "per_subject": {
                sid: {"risk": sr.risk, "n_trials": sr.n_trials}
                for sid, sr in sorted(self.per_subject.items())
            },
            "pooled": {
                "risk": self.pooled_risk,
                "n_trials": self.pooled_n_trials,
                "pooling": self.pooling,
            },
            "excluded_trials": self.excluded_trials,
            "human_set": self.human_set_label,
        }


@dataclass(frozen=True)
class ThresholdSubset:
    """Pixels whose strength clears a threshold; utility is their count."""

    tau: float
    pixel_ids: tuple[int, ...]
    segment_ids: tuple[str, ...] = ()

    @property
    def utility(self) -> int:
        return len(self.pixel_ids)


@dataclass(frozen=True)
class CurvePoint:
    tau: float
    utility: int
    risk: float | None  # None when the subset is empty (risk undefined)


def majority_choice(choices: Sequence[str]) -> str:
    """Most frequent choice; exact ties return the tie tag."""
    if not choices:
        raise ValueError("majority_choice needs at least one choice")
    for c in choices:
        if c not in CHOICES:
            raise ValueError(f"choice must be one of {CHOICES}, got {c!r}")
    counts = Counter(choices)
    ranked = counts.most_common()
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return TIE
    return ranked[0][0]


def _algo_chosen(choice: str, algo_on_left: bool) -> bool:
    return (choice == "left_stronger") == algo_on_left


def estimate_risk(
    trials: Sequence[TrialRecord],
    responses: Sequence[ResponseRecord],
    pooling: str = "mode_vote",
    human_set_label: str = "S1",
) -> RiskReport:
    """Empirical risk: how often subjects judged the algorithm side stronger.

    Per-subject risks are each subject's algorithm-win fraction.  Pooling
    either takes the per-trial majority vote (exact ties excluded and
    counted) or averages the per-subject risks unweighted.
    """
    if pooling not in POOLING_MODES:
        raise ValueError(f"pooling must be one of {POOLING_MODES}")
    algo_left = {t.trial_id: t.algo_on_left() for t in trials}
    if len(algo_left) != len(trials):
        raise ValueError("duplicate trial ids")
    for r in responses:
        if r.trial_id not in algo_left:
            raise ValueError(f"response references unknown trial {r.trial_id}")

    by_subject: dict[str, list[ResponseRecord]] = {}
    for r in responses:
        by_subject.setdefault(r.subject_id, []).append(r)
    per_subject = {
        sid: SubjectRisk(
            risk=sum(_algo_chosen(r.choice, algo_left[r.trial_id]) for r in rs) / len(rs),
            n_trials=len(rs),
        )
        for sid, rs in by_subject.items()
    }

    excluded = 0
    if pooling == "mode_vote":
        by_trial: dict[str, list[str]] = {}
        for r in responses:
            by_trial.setdefault(r.trial_id, []).append(r.choice)
        algo_wins = 0
        included = 0
        for trial_id in sorted(by_trial):
            winner = majority_choice(by_trial[trial_id])
            if winner == TIE:
                excluded += 1
                continue
            included += 1
            algo_wins += _algo_chosen(winner, algo_left[trial_id])
        if included == 0:
            raise NoDataError("no trials left after tie exclusion")
        pooled_risk = algo_wins / included
        pooled_n = included
    else:
        if not per_subject:
            raise NoDataError("no responses to pool")
        pooled_risk = sum(sr.risk for sr in per_subject.values()) / len(per_subject)
        pooled_n = sum(sr.n_trials for sr in per_subject.values())

    return RiskReport(
        per_subject=per_subject,
        pooled_risk=pooled_risk,
        pooled_n_trials=pooled_n,
        pooling=pooling,
        excluded_trials=excluded,
        human_set_label=human_set_label,
    )


def true_strength_risk(set_s: Iterable[float], set_a: Iterable[float]) -> float:
    """P(x_s < x_a) over the full cross product, ties counting one half.

    Exact, and computed in O((m+n) log(m+n)) by ranking the algorithm-side
    values against the sorted human-side values.
    """
    s = np.asarray(list(set_s), dtype=float)
    a = np.asarray(list(set_a), dtype=float)
    if s.size == 0 or a.size == 0:
        raise NoDataError("risk needs nonempty strength sets on both sides")
    s_sorted = np.sort(s)
    below = np.searchsorted(s_sorted, a, side="left")
    ties = np.searchsorted(s_sorted, a, side="right") - below
    wins = below.sum() + 0.5 * ties.sum()
    return float(wins / (s.size * a.size))


def build_subset(
    strengths: StrengthField | Mapping[int, float], tau: float
) -> ThresholdSubset:
    """Members are the pixel ids whose strength is >= tau.

    tau = 0 reproduces the full set; tau > 1 expresses the empty-set
    limit (risk-free, zero utility).
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    items = strengths.strengths if isinstance(strengths, StrengthField) else strengths
    members = tuple(sorted(i for i, x in items.items() if x >= tau))
    return ThresholdSubset(tau=tau, pixel_ids=members)


def risk_utility_curve(
    strengths: StrengthField | Mapping[int, float],
    taus: Sequence[float],
    a_strengths: Iterable[float],
    eval_strengths: Mapping[int, float] | None = None,
) -> list[CurvePoint]:
    """One (tau, utility, risk) row per threshold, taus ascending.

    Subsets are selected by ``strengths``; the risk of each subset is
    computed from ``eval_strengths`` when given (e.g. select by inferred
    strength, score by ground truth), else from the selection values.
    An empty subset yields utility 0 and no risk value.
    """
    taus = list(taus)
    if not taus:
        raise ValueError("need at least one tau")
    if any(b < a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be sorted ascending")
    a_vals = np.asarray(list(a_strengths), dtype=float)
    items = strengths.strengths if isinstance(strengths, StrengthField) else strengths
    scores: Mapping[int, float] = eval_strengths if eval_strengths is not None else items

    points: list[CurvePoint] = []
    for tau in taus:
        subset = build_subset(items, tau)
        if subset.utility == 0:
            points.append(CurvePoint(tau=tau, utility=0, risk=None))
            continue
        member_scores = [scores[i] for i in subset.pixel_ids]
        risk = true_strength_risk(member_scores, a_vals)
        points.append(CurvePoint(tau=tau, utility=subset.utility, risk=risk))
    return points


def curve_to_csv(points: Sequence[CurvePoint]) -> str:
    """Render a risk-utility curve as CSV with header tau,utility,risk."""
    lines = ["tau,utility,risk"]
    for p in points:
        risk = "" if p.risk is None else repr(p.risk)
        lines.append(f"{p.tau!r},{p.utility},{risk}")
    return "\n".join(lines) + "\n"
