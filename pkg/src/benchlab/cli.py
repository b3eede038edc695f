"""Command-line pipeline.

Chains the full workflow: merge labeler maps, infer strengths, build
threshold subsets and risk-utility curves, cut segment sets, generate
forced-choice trials, serve the collection UI backend, and score risk
from recorded responses.  Commands never mutate their inputs, and reruns
with identical inputs and seeds produce byte-identical outputs.

Exit codes: 0 success, 2 input error, 3 runtime error.  Errors go to
stderr as single-line JSON.  BENCHLAB_THREADS caps numeric parallelism.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import BenchlabError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3

_INPUT_ERRORS = (BenchlabError, OSError, ValueError)


def _apply_thread_cap() -> None:
    """Honor BENCHLAB_THREADS before any numeric library spins up."""
    cap = os.environ.get("BENCHLAB_THREADS")
    if cap is None or cap == "":
        return
    n = int(cap)
    if n < 1:
        raise ValueError("BENCHLAB_THREADS must be a positive integer")
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = str(n)


def _read_json(path: str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _write_text(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _taus_arg(raw: str) -> list[float]:
    taus = [float(part) for part in raw.split(",") if part.strip()]
    if not taus:
        raise argparse.ArgumentTypeError("need at least one tau")
    return taus


def cmd_merge(args: argparse.Namespace) -> None:
    from .correspondence import default_tolerance, merge_labelers
    from .io_formats import (
        canonical_json,
        labeler_maps_from_json_dict,
        master_map_to_json_dict,
    )

    maps = labeler_maps_from_json_dict(_read_json(args.labels))
    d_max = default_tolerance(maps[0].width, maps[0].height, fraction=args.tolerance)
    master = merge_labelers(maps, d_max=d_max)
    _write_text(args.out, canonical_json(master_map_to_json_dict(master)))


def cmd_infer(args: argparse.Namespace) -> None:
    from .io_formats import canonical_json, em_result_to_json_dict, master_map_from_json_dict
    from .strength_inference import EmConfig, run_em

    if args.grid < 11:
        raise ValueError("--grid must be at least 11 points")
    master = master_map_from_json_dict(_read_json(args.master))
    config = EmConfig(
        sigma=args.sigma,
        grid_size=args.grid,
        epsilon=args.epsilon,
        max_iters=args.max_iters,
        tol=args.tol,
        mu_mode=args.mu_mode,
    )
    result = run_em(master, config)
    _write_text(args.out, canonical_json(em_result_to_json_dict(result, config)))


def cmd_subset(args: argparse.Namespace) -> None:
    from .io_formats import canonical_json, strength_field_from_json_dict
    from .risk_eval import build_subset

    field = strength_field_from_json_dict(_read_json(args.strengths))
    subset = build_subset(field, args.tau)
    _write_text(
        args.out,
        canonical_json(
            {
                "format_version": 1,
                "tau": subset.tau,
                "pixel_ids": list(subset.pixel_ids),
                "segment_ids": list(subset.segment_ids),
                "utility": subset.utility,
            }
        ),
    )


def cmd_curve(args: argparse.Namespace) -> None:
    from .io_formats import strength_field_from_json_dict, strength_list_from_json
    from .risk_eval import curve_to_csv, risk_utility_curve

    field = strength_field_from_json_dict(_read_json(args.strengths))
    algo = strength_list_from_json(_read_json(args.algo_strengths))
    points = risk_utility_curve(field, args.taus, algo)
    _write_text(args.out, curve_to_csv(points))


def cmd_segments(args: argparse.Namespace) -> None:
    from .io_formats import (
        canonical_json,
        collection_to_json_dict,
        master_map_from_json_dict,
        strength_field_from_json_dict,
    )
    from .label_model import SegmentCollection, extract_orphans, extract_segments
    from .risk_eval import build_subset

    master = master_map_from_json_dict(_read_json(args.master))
    field = None
    if args.strengths:
        field = strength_field_from_json_dict(_read_json(args.strengths))

    tau = None
    if args.tau is not None:
        if field is None:
            raise ValueError("--tau requires --strengths")
        tau = args.tau
        name = "S_bar_tau"
        ids = list(build_subset(field, tau).pixel_ids)
    elif args.set == "S1":
        name = "S1"
        ids = sorted(extract_orphans(master))
    else:
        name = "S"
        ids = sorted(px.pixel_id for px in master.pixels)

    segments = extract_segments(
        master,
        ids,
        window_size=args.window,
        source="human",
        strengths=field.strengths if field else None,
    )
    collection = SegmentCollection(name=name, segments=tuple(segments), tau=tau)
    _write_text(args.out, canonical_json(collection_to_json_dict(collection)))


def cmd_algoset(args: argparse.Namespace) -> None:
    from .correspondence import algorithm_only_pixels, default_tolerance
    from .errors import DimensionMismatchError
    from .io_formats import (
        canonical_json,
        collection_to_json_dict,
        load_soft_map,
        master_map_from_json_dict,
        threshold_matched,
    )
    from .label_model import SegmentCollection, segments_from_positions

    master = master_map_from_json_dict(_read_json(args.master))
    soft = load_soft_map(Path(args.soft).read_bytes())
    if soft.shape != (master.height, master.width):
        raise DimensionMismatchError(
            f"soft map is {soft.shape[1]}x{soft.shape[0]} but the master map is "
            f"{master.width}x{master.height}"
        )
    count = args.count if args.count is not None else len(master.pixels)
    algo_pixels = threshold_matched(soft, count)
    d_max = default_tolerance(master.width, master.height, fraction=args.tolerance)
    only = algorithm_only_pixels(master, algo_pixels, d_max)
    segments = segments_from_positions(
        master.image_id,
        sorted(only),
        master.width,
        master.height,
        window_size=args.window,
        source="algorithm",
    )
    collection = SegmentCollection(name="A_minus_S", segments=tuple(segments))
    _write_text(args.out, canonical_json(collection_to_json_dict(collection)))


def cmd_trials(args: argparse.Namespace) -> None:
    from .io_formats import collection_from_json_dict
    from .trial_engine import sample_trial_pairs, write_trials

    human = collection_from_json_dict(_read_json(args.human_set))
    algo = collection_from_json_dict(_read_json(args.algo_set))
    trials = sample_trial_pairs(
        human, algo, n=args.n, seed=args.seed, window_size=args.window
    )
    write_trials(trials, args.out)


def cmd_risk(args: argparse.Namespace) -> None:
    from .io_formats import canonical_json
    from .risk_eval import estimate_risk
    from .trial_engine import load_responses, load_trials

    trials = load_trials(args.trials)
    responses = load_responses(args.responses)
    pooling = {"mode": "mode_vote", "mean": "per_subject_mean"}[args.pooling]
    report = estimate_risk(
        trials, responses, pooling=pooling, human_set_label=args.human_set_label
    )
    _write_text(args.out, canonical_json(report.to_json_dict()))


def cmd_serve(args: argparse.Namespace) -> None:
    import uvicorn

    from .collect_service import create_app

    app = create_app(args.trials, args.journal, images_dir=args.images_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="benchlab",
        description="Measure how reliably a human-labeled boundary benchmark "
        "can rank algorithms: merge labels, infer perceptual strengths, "
        "build subsets, run forced-choice trials, and score risk.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("merge", help="merge per-labeler boundary maps into a master map")
    p.add_argument("--labels", required=True, help="labels JSON (one image, all labelers)")
    p.add_argument("--tolerance", type=float, default=0.0075,
                   help="match radius as a fraction of the image diagonal")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("infer", help="infer per-pixel perceptual strengths")
    p.add_argument("--master", required=True)
    p.add_argument("--sigma", type=float, default=0.15)
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--mu-mode", choices=("sigmoid", "raw"), default="sigmoid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("subset", help="threshold a strength field at tau")
    p.add_argument("--strengths", required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_subset)

    p = sub.add_parser("curve", help="risk-utility curve over a tau list")
    p.add_argument("--strengths", required=True)
    p.add_argument("--taus", type=_taus_arg, default=[0.2, 0.5, 0.8, 1.0])
    p.add_argument("--algo-strengths", required=True,
                   help="JSON array of algorithm-side strengths")
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("segments", help="cut human-side pixels into boundary segments")
    p.add_argument("--master", required=True)
    p.add_argument("--strengths", default=None)
    p.add_argument("--set", choices=("S", "S1"), default="S1",
                   help="S = all master pixels, S1 = single-labeler pixels")
    p.add_argument("--tau", type=float, default=None,
                   help="threshold subset instead (requires --strengths)")
    p.add_argument("--window", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segments)

    p = sub.add_parser("algoset", help="algorithm-only segments from a soft map")
    p.add_argument("--soft", required=True, help="soft boundary map (P5 raster or JSON)")
    p.add_argument("--master", required=True)
    p.add_argument("--count", type=int, default=None,
                   help="pixels to keep; default matches the master map size")
    p.add_argument("--tolerance", type=float, default=0.0075)
    p.add_argument("--window", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_algoset)

    p = sub.add_parser("trials", help="sample forced-choice trial pairs")
    p.add_argument("--human-set", required=True)
    p.add_argument("--algo-set", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--window", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trials)

    p = sub.add_parser("risk", help="score risk from a response journal")
    p.add_argument("--trials", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--pooling", choices=("mode", "mean"), default="mode")
    p.add_argument("--human-set-label", default="S1",
                   help="which human-side sampling produced the trials")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("serve", help="serve trials to the browser UI")
    p.add_argument("--trials", required=True)
    p.add_argument("--journal", required=True)
    p.add_argument("--images-dir", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        _apply_thread_cap()
    except ValueError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return EXIT_INPUT
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
        return EXIT_OK
    except _INPUT_ERRORS as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001 - last-resort CLI boundary
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entrypoint()
