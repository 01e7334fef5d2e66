"""Command line entry point.

Exit codes: 0 success, 1 runtime or pipeline failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .campaign import ConfigError, load_config, open_channel, run_campaign
from .device import SimulatedCard, load_profile
from .documents import (
    DocumentError,
    isolated_from_file,
    reference_from_file,
    reference_to_dict,
    scorecard_csv,
    scorecard_from_file,
    scorecard_to_dict,
    weights_from_file,
    weights_to_dict,
    write_json,
)
from .errors import BindError, MesureError, ProfileInvariantError, ProfileParseError, SuiteError
from .harness import calibrate
from .profiler import ReferenceMarker, UsageWeighter, load_domain_traces, score
from .suite import load_suite
from .transport import serve

log = logging.getLogger("mesure")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _fail(stage, exc, code=EXIT_RUNTIME):
    case = getattr(exc, "case_id", None)
    where = f"{stage}" + (f" [{case}]" if case else "")
    print(f"mesure: {where}: {type(exc).__name__}: {exc}", file=sys.stderr)
    return code


def _campaign_flags(p):
    p.add_argument("config", nargs="?", help="campaign config (JSON)")
    p.add_argument("--device", help="profile path (in-process virtual clock) or host:port")
    p.add_argument("--suite")
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--ratio", type=float)
    p.add_argument("--min-duration-ns", type=int)
    p.add_argument("--probe-reps", type=int)
    p.add_argument("--confirm-reps", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--n-sigma", type=float)
    p.add_argument("--min-retained", type=int)
    p.add_argument("--loop-p2", type=int)
    p.add_argument("--cases", nargs="+")


_FLAG_FIELDS = ("device", "suite", "output_dir", "seed", "ratio", "min_duration_ns", "probe_reps",
                "confirm_reps", "repetitions", "n_sigma", "min_retained", "loop_p2", "cases")


def _config(args):
    overrides = {k: getattr(args, k) for k in _FLAG_FIELDS}
    return load_config(args.config, overrides)


def cmd_serve(args) -> int:
    try:
        card = SimulatedCard(load_profile(Path(args.profile)), load_suite(args.suite))
    except (OSError, ProfileParseError, ProfileInvariantError, SuiteError) as exc:
        return _fail("serve", exc, EXIT_USAGE)
    try:
        serve(card, args.listen)
    except BindError as exc:
        return _fail("serve", exc, EXIT_USAGE)
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        config = _config(args)
        suite = load_suite(config.suite)
        channel, _ = open_channel(config, suite)
    except (ConfigError, OSError, ProfileParseError, ProfileInvariantError, SuiteError) as exc:
        return _fail("config", exc, EXIT_USAGE)
    except MesureError as exc:
        return _fail("connect", exc)
    out = {}
    with channel:
        try:
            ids = config.cases or suite.features()
            for cid in suite.closure(ids):
                case = suite[cid]
                if case.is_reference:
                    continue
                size = calibrate(channel, case, config.policy)
                out[cid] = {"p2": size.p2, "l": size.l}
        except MesureError as exc:
            exc.case_id = getattr(exc, "case_id", None) or cid
            return _fail("calibrate", exc)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        config = _config(args)
    except (ConfigError, SuiteError) as exc:
        return _fail("config", exc, EXIT_USAGE)
    try:
        doc = run_campaign(config)
    except (ProfileParseError, ProfileInvariantError, SuiteError) as exc:
        return _fail("config", exc, EXIT_USAGE)
    except (MesureError, OSError) as exc:
        return _fail("bench", exc)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc.save(out / "results.json")
    (out / "samples.csv").write_text(doc.samples_csv())
    for fid, t in doc.isolated.items():
        log.info("%s: %.2f ns (spread %.2f, L=%d)", fid, t.mean, t.spread, t.loop_size)
    print(f"wrote {out / 'results.json'} and {out / 'samples.csv'}")
    return EXIT_OK


def cmd_profile(args) -> int:
    try:
        features = load_suite(args.suite).features() if args.suite else None
        traces = load_domain_traces(args.traces_dir)
        weighter = UsageWeighter(features).fit(traces)
    except (FileNotFoundError, SuiteError) as exc:
        return _fail("profile", exc, EXIT_USAGE)
    except MesureError as exc:
        return _fail("profile", exc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for domain, weights in weighter.weights_.items():
        path = out / f"weights-{domain}.json"
        write_json(path, weights_to_dict(weights, weighter.usage_[domain].beta))
        print(f"wrote {path}")
    return EXIT_OK


def cmd_score(args) -> int:
    try:
        cards = [isolated_from_file(p) for p in args.isolated]
        weights = [weights_from_file(p) for p in args.weights]
        if args.build_reference:
            marker = ReferenceMarker(aggregation=args.aggregation).fit(
                [{f: t.mean for f, t in iso.items()} for _, iso in cards])
            write_json(args.reference, reference_to_dict(marker.reference_))
        else:
            marker = ReferenceMarker()
            marker.reference_ = reference_from_file(args.reference)
    except (OSError, DocumentError, KeyError) as exc:
        return _fail("score", exc, EXIT_USAGE)
    except MesureError as exc:
        return _fail("score", exc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for card_id, iso in cards:
        try:
            marks = marker.transform({f: t.mean for f, t in iso.items()})
            card = score(marks, weights, card_id)
        except MesureError as exc:
            return _fail(f"score {card_id}", exc)
        path = out / f"scorecard-{card_id}.json"
        write_json(path, scorecard_to_dict(card))
        print(f"wrote {path}: overall {card.overall:.6f}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        card = scorecard_from_file(args.scorecard)
    except (OSError, DocumentError, KeyError) as exc:
        return _fail("report", exc, EXIT_USAGE)
    if args.format == "csv":
        text = scorecard_csv(card)
    else:
        text = json.dumps(scorecard_to_dict(card), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mesure", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="serve a simulated card over TCP")
    p.add_argument("--profile", required=True)
    p.add_argument("--suite", required=True)
    p.add_argument("--listen", default="127.0.0.1:7816")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("calibrate", help="find loop sizes for each case")
    _campaign_flags(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("bench", help="run a full campaign and write results")
    _campaign_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("profile", help="derive domain weights from trace directories")
    p.add_argument("traces_dir")
    p.add_argument("--suite", help="count only the features benchmarked by this suite")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("score", help="turn isolated times into marks and scorecards")
    p.add_argument("isolated", nargs="+", help="results or isolated documents, one per card")
    p.add_argument("--reference", required=True, help="reference base document")
    p.add_argument("--weights", nargs="+", required=True, help="domain weight documents")
    p.add_argument("--build-reference", action="store_true",
                   help="compute the reference base from the given cards and write it to --reference")
    p.add_argument("--aggregation", choices=("arithmetic", "geometric"), default="arithmetic")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="render a scorecard")
    p.add_argument("scorecard")
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("MESURE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
