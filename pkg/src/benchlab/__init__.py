"""benchlab: how benchmarkable is a human-labeled boundary benchmark?

Merges multi-labeler boundary maps, infers a latent perceptual strength
per boundary pixel from the label votes, and quantifies the risk that a
benchmark penalizes an algorithm for disagreeing with weak labels.
"""

from .correspondence import (
    MatchResult,
    algorithm_only_pixels,
    default_tolerance,
    match_maps,
    merge_labelers,
)
from .errors import (
    BenchlabError,
    DimensionMismatchError,
    DuplicateResponseError,
    FormatError,
    NoDataError,
    SequencingError,
    SessionCompleteError,
    ShortfallError,
)
from .label_model import (
    BoundarySegment,
    LabelerMap,
    MasterMap,
    MasterPixel,
    SegmentCollection,
    extract_orphans,
    extract_segments,
    orphan_fraction,
    segments_from_positions,
)
from .risk_eval import (
    CurvePoint,
    RiskReport,
    ThresholdSubset,
    build_subset,
    curve_to_csv,
    estimate_risk,
    majority_choice,
    risk_utility_curve,
    true_strength_risk,
)
from .strength_inference import (
    EmConfig,
    EmResult,
    LabelerProfile,
    SigmoidParams,
    StrengthField,
    StrengthGrid,
    fit_theta,
    init_strengths,
    kernel_weights,
    response_prob,
    run_em,
    sigmoid,
    sigmoid_curve,
    update_mu,
    update_strength,
)
from .trial_engine import (
    ResponseRecord,
    Session,
    TrialRecord,
    record_response,
    render_trial_spec,
    sample_trial_pairs,
)
from .validation_sim import (
    RecoveryResult,
    SyntheticScenario,
    recovery_experiment,
    simulate_labels,
)

__version__ = "0.1.0"

__all__ = [
    "BenchlabError",
    "BoundarySegment",
    "CurvePoint",
    "DimensionMismatchError",
    "DuplicateResponseError",
    "EmConfig",
    "EmResult",
    "FormatError",
    "LabelerMap",
    "LabelerProfile",
    "MasterMap",
    "MasterPixel",
    "MatchResult",
    "NoDataError",
    "RecoveryResult",
    "ResponseRecord",
    "RiskReport",
    "SegmentCollection",
    "SequencingError",
    "Session",
    "SessionCompleteError",
    "ShortfallError",
    "SigmoidParams",
    "StrengthField",
    "StrengthGrid",
    "SyntheticScenario",
    "ThresholdSubset",
    "TrialRecord",
    "algorithm_only_pixels",
    "build_subset",
    "curve_to_csv",
    "default_tolerance",
    "estimate_risk",
    "extract_orphans",
    "extract_segments",
    "fit_theta",
    "init_strengths",
    "kernel_weights",
    "majority_choice",
    "match_maps",
    "merge_labelers",
    "orphan_fraction",
    "record_response",
    "recovery_experiment",
    "render_trial_spec",
    "response_prob",
    "risk_utility_curve",
    "run_em",
    "sample_trial_pairs",
    "segments_from_positions",
    "sigmoid",
    "sigmoid_curve",
    "simulate_labels",
    "true_strength_risk",
    "update_mu",
    "update_strength",
]
