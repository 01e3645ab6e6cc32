"""Command-line interface.

Subcommands mirror the library: `sketch` for single-sketch operations,
`attack` for crafting/filtering attack sets, `sns` for the guarded pair,
`experiment` for the seeded experiment runners (CSV + JSON + rendered
figure per run).

Exit codes: 0 success | 2 usage | 3 malformed file | 4 non-mergeable
sketches | 5 attack detected.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .attacks import (
    AttackSetFormatError,
    craft_inflation,
    craft_m1,
    load_attack_set,
    save_attack_set,
)
from .experiments import run_clean_fp, run_detect, run_fig4, run_m2
from .flows import FlowParseError, encode_flow, generate_flows, read_elements
from .hashing import split_seed
from .sketch import (
    HashConfig,
    IncompatibleSketchError,
    Sketch,
    SketchFormatError,
    config_fingerprint,
    merge,
)
from .sns import AttackDetectedError, SnsSketch, sns_merge
from .stats import normal_cdf
from . import report

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_NON_MERGEABLE = 4
EXIT_ATTACK = 5


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _print_json(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _add_element_source(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--from-csv", metavar="FILE", help="flow CSV to insert")
    group.add_argument("--from-hex", metavar="FILE", help="hex-lines file to insert")
    group.add_argument(
        "--generate", type=_non_negative_int, metavar="N", help="insert N generated flows"
    )
    parser.add_argument(
        "--gen-seed", type=int, default=0, help="seed for --generate (default 0)"
    )


def _elements_from(args) -> list[bytes]:
    if args.from_csv:
        return list(read_elements(args.from_csv, "csv"))
    if args.from_hex:
        return list(read_elements(args.from_hex, "hex-lines"))
    return [encode_flow(f) for f in generate_flows(args.gen_seed, args.generate)]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--index-seed", type=int, default=0, help="index-hash seed")
    parser.add_argument("--value-seed", type=int, default=0, help="value-hash seed")
    parser.add_argument("--salt", type=int, default=None, help="explicit 64-bit salt")


def _config_from(args) -> HashConfig:
    return HashConfig(
        index_seed=args.index_seed, value_seed=args.value_seed, salt=args.salt
    )


# -- sketch ------------------------------------------------------------------


def cmd_sketch_new(args) -> int:
    salt = None
    if args.salted:
        salt = args.salt if args.salt is not None else _entropy_salt(args.seed)
    config = HashConfig(index_seed=args.index_seed, value_seed=args.value_seed, salt=salt)
    sk = Sketch(args.precision, config)
    sk.save(args.out)
    _print_json(_sketch_info(sk, args.out))
    return EXIT_OK


def _entropy_salt(seed: int | None) -> int:
    if seed is None:
        import secrets

        return secrets.randbits(64)
    return split_seed(seed, 0)


def _sketch_info(sk: Sketch, path) -> dict:
    return {
        "file": str(path),
        "precision": sk.precision,
        "registers": sk.num_registers,
        "salted": sk.config.salted,
        "zero_registers": sk.zero_register_count(),
        "estimate": sk.estimate(),
        "fingerprint": config_fingerprint(sk.config, sk.precision),
    }


def cmd_sketch_insert(args) -> int:
    sk = Sketch.load(args.file)
    inserted = sk.insert_many(_elements_from(args))
    out = args.out or args.file
    sk.save(out)
    _print_json({"file": str(out), "registers_increased": inserted, "estimate": sk.estimate()})
    return EXIT_OK


def cmd_sketch_estimate(args) -> int:
    print(f"{Sketch.load(args.file).estimate():.6f}")
    return EXIT_OK


def cmd_sketch_merge(args) -> int:
    merged = merge(Sketch.load(args.a), Sketch.load(args.b))
    merged.save(args.out)
    _print_json(_sketch_info(merged, args.out))
    return EXIT_OK


def cmd_sketch_info(args) -> int:
    _print_json(_sketch_info(Sketch.load(args.file), args.file))
    return EXIT_OK


# -- attack ------------------------------------------------------------------


def cmd_attack_craft_m1(args) -> int:
    from .attacks import flow_candidates

    config = _config_from(args)
    attack = craft_m1(config, args.precision, args.count, flow_candidates(args.seed))
    save_attack_set(attack, args.out)
    _print_json(
        {
            "file": str(args.out),
            "model": attack.model,
            "count": attack.true_cardinality,
            "config_fingerprint": attack.fingerprint,
        }
    )
    return EXIT_OK


def cmd_attack_craft_inflation(args) -> int:
    config = _config_from(args)
    attack = craft_inflation(config, args.precision, args.min_rank, args.budget)
    save_attack_set(attack, args.out)
    _print_json(
        {
            "file": str(args.out),
            "model": attack.model,
            "count": attack.true_cardinality,
            "min_rank": args.min_rank,
            "budget": args.budget,
            "config_fingerprint": attack.fingerprint,
        }
    )
    return EXIT_OK


def cmd_attack_filter_m2(args) -> int:
    outcome = run_m2(
        candidates=args.candidates,
        rounds=args.rounds,
        victim_precision=args.victim_precision,
        seed=args.seed,
    )
    save_attack_set(outcome.result.attack_set, args.out)
    summary = report.m2_summary(outcome.result)
    summary["file"] = str(args.out)
    _print_json(summary)
    return EXIT_OK


# -- sns ---------------------------------------------------------------------


def cmd_sns_new(args) -> int:
    sns = SnsSketch.new(
        m_salted=args.m_salted,
        m_unsalted=args.m_unsalted,
        fp_target=args.fp_target,
        entropy=args.seed,
        d_t=args.dt,
        two_sided=args.two_sided,
    )
    sns.save(args.out)
    _print_json(
        {
            "file": str(args.out),
            "m_salted": sns.salted.num_registers,
            "m_unsalted": sns.unsalted.num_registers,
            "sigma": sns.params.sigma,
            "d_t": sns.params.d_t,
            "fp_target": sns.params.fp_target,
        }
    )
    return EXIT_OK


def cmd_sns_insert(args) -> int:
    sns = SnsSketch.load(args.file)
    sns.insert_many(_elements_from(args))
    out = args.out or args.file
    sns.save(out)
    verdict = sns.check()
    _print_json({"file": str(out), "c_salted": verdict.c_salted, "c_unsalted": verdict.c_unsalted})
    return EXIT_OK


def _verdict_dict(v) -> dict:
    return {
        "c_salted": v.c_salted,
        "c_unsalted": v.c_unsalted,
        "normalized_diff": v.normalized_diff,
        "attacked": v.attacked,
        "trusted_estimate": v.trusted_estimate,
        "indeterminate": v.indeterminate,
    }


def cmd_sns_check(args) -> int:
    verdict = SnsSketch.load(args.file).check()
    _print_json(_verdict_dict(verdict))
    return EXIT_ATTACK if verdict.attacked else EXIT_OK


def cmd_sns_merge(args) -> int:
    outcome = sns_merge(SnsSketch.load(args.a), SnsSketch.load(args.b))
    if outcome.protected:
        outcome.sns.save(args.out)
    else:
        outcome.unsalted.save(args.out)
    _print_json(
        {
            "file": str(args.out),
            "protected": outcome.protected,
            "verdict_a": _verdict_dict(outcome.verdict_a),
            "verdict_b": _verdict_dict(outcome.verdict_b),
            "note": None
            if outcome.protected
            else "salts differ: merged sketch is unsalted-only and unprotected",
        }
    )
    return EXIT_OK


# -- experiment ----------------------------------------------------------------


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_experiment_fig4(args) -> int:
    result = run_fig4(
        trials=args.trials,
        cardinality=args.cardinality,
        m_salted=args.m_salted,
        m_unsalted=args.m_unsalted,
        seed=args.seed,
        d_t=args.dt,
    )
    out = _outdir(args)
    report.write_fig4_trials_csv(out / "fig4_trials.csv", result)
    report.write_fig4_histogram_csv(out / "fig4_histogram.csv", result, bins=args.bins)
    summary = report.fig4_summary(result)
    report.write_json(out / "fig4_summary.json", summary)
    if not args.no_plot:
        report.render_fig4(out / "fig4.png", result, bins=args.bins)
        summary["figure"] = str(out / "fig4.png")
    _print_json(summary)
    return EXIT_OK


def cmd_experiment_detect(args) -> int:
    if args.attack_file:
        elements = list(load_attack_set(args.attack_file).elements)
    else:
        from .attacks import flow_candidates

        b_ns = args.m_unsalted.bit_length() - 1
        attack = craft_m1(HashConfig(), b_ns, args.craft_m1, flow_candidates(args.seed))
        elements = list(attack.elements)
    result = run_detect(
        elements,
        trials=args.trials,
        m_salted=args.m_salted,
        m_unsalted=args.m_unsalted,
        d_t=args.dt,
        fp_target=args.fp_target,
        seed=args.seed,
        clean_count=args.clean_count,
    )
    out = _outdir(args)
    report.write_detect_trials_csv(out / "detect_trials.csv", result)
    summary = {"attack": report.detect_summary(result)}
    clean = None
    if args.clean_trials:
        clean = run_clean_fp(
            trials=args.clean_trials,
            cardinality=max(len(elements), 1),
            m_salted=args.m_salted,
            m_unsalted=args.m_unsalted,
            seed=split_seed(args.seed, 0xC1EA4),
            d_t=args.dt,
            fp_target=args.fp_target,
        )
        summary["clean_control"] = report.clean_fp_summary(clean)
    report.write_json(out / "detect_summary.json", summary)
    if not args.no_plot:
        report.render_detect(out / "detect.png", result, clean)
        summary["figure"] = str(out / "detect.png")
    _print_json(summary)
    return EXIT_OK


def cmd_experiment_m2(args) -> int:
    outcome = run_m2(
        candidates=args.candidates,
        rounds=args.rounds,
        victim_precision=args.victim_precision,
        seed=args.seed,
    )
    out = _outdir(args)
    report.write_m2_rounds_csv(out / "m2_rounds.csv", outcome.result)
    save_attack_set(outcome.result.attack_set, out / "m2_attack_set.hex")
    summary = report.m2_summary(outcome.result)
    summary.update(
        {
            "candidates": outcome.candidates,
            "victim_precision": outcome.victim_precision,
            "seed": outcome.seed,
            "attack_set_file": str(out / "m2_attack_set.hex"),
        }
    )
    report.write_json(out / "m2_summary.json", summary)
    if not args.no_plot:
        report.render_m2(out / "m2.png", outcome.result)
        summary["figure"] = str(out / "m2.png")
    _print_json(summary)
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hllguard",
        description="HyperLogLog sketches, estimate-manipulation attacks, and the salted+unsalted guard.",
    )
    top = parser.add_subparsers(dest="command", required=True)

    # sketch ----------------------------------------------------------------
    sketch = top.add_parser("sketch", help="single-sketch operations").add_subparsers(
        dest="subcommand", required=True
    )

    p = sketch.add_parser("new", help="create an empty sketch file")
    p.add_argument("--precision", "-b", type=int, default=12, help="2^b registers (4..18)")
    p.add_argument("--salted", action="store_true", help="draw a random salt")
    p.add_argument("--seed", type=int, default=None, help="entropy seed for --salted")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sketch_new)

    p = sketch.add_parser("insert", help="insert elements into a sketch file")
    p.add_argument("file")
    _add_element_source(p)
    p.add_argument("--out", default=None, help="write here instead of in place")
    p.set_defaults(func=cmd_sketch_insert)

    p = sketch.add_parser("estimate", help="print the cardinality estimate")
    p.add_argument("file")
    p.set_defaults(func=cmd_sketch_estimate)

    p = sketch.add_parser("merge", help="merge two compatible sketches")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sketch_merge)

    p = sketch.add_parser("info", help="print sketch metadata as JSON")
    p.add_argument("file")
    p.set_defaults(func=cmd_sketch_info)

    # attack ----------------------------------------------------------------
    attack = top.add_parser("attack", help="attack-set construction").add_subparsers(
        dest="subcommand", required=True
    )

    p = attack.add_parser("craft-m1", help="rank-1 elements against a known config")
    p.add_argument("--precision", "-b", type=int, default=10)
    p.add_argument("--count", type=_non_negative_int, default=100_000)
    p.add_argument("--seed", type=int, default=0, help="candidate-template seed")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack_craft_m1)

    p = attack.add_parser("craft-inflation", help="high-rank elements against a known config")
    p.add_argument("--precision", "-b", type=int, default=10)
    p.add_argument("--min-rank", type=_positive_int, required=True)
    p.add_argument("--budget", type=_non_negative_int, default=1 << 20)
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack_craft_inflation)

    p = attack.add_parser("filter-m2", help="black-box insert-and-observe filtering")
    p.add_argument("--candidates", type=_positive_int, default=250_000)
    p.add_argument("--rounds", type=_positive_int, default=3)
    p.add_argument("--victim-precision", type=int, default=14)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="attack-set output file")
    p.set_defaults(func=cmd_attack_filter_m2)

    # sns ---------------------------------------------------------------------
    sns = top.add_parser("sns", help="salted+unsalted guarded sketch").add_subparsers(
        dest="subcommand", required=True
    )

    p = sns.add_parser("new", help="create a guarded sketch file")
    p.add_argument("--m-salted", type=int, default=1024)
    p.add_argument("--m-unsalted", type=int, default=1024)
    p.add_argument("--fp-target", type=float, default=normal_cdf(-5.0))
    p.add_argument("--dt", type=float, default=None, help="override the calibrated threshold")
    p.add_argument("--seed", type=int, default=None, help="salt entropy (default: OS randomness)")
    p.add_argument("--two-sided", action="store_true", help="also flag inflated unsalted estimates")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sns_new)

    p = sns.add_parser("insert", help="insert elements into both members")
    p.add_argument("file")
    _add_element_source(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sns_insert)

    p = sns.add_parser("check", help="manipulation verdict (exit 5 when attacked)")
    p.add_argument("file")
    p.set_defaults(func=cmd_sns_check)

    p = sns.add_parser("merge", help="checked merge of two guarded sketches")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sns_merge)

    # experiment ----------------------------------------------------------------
    experiment = top.add_parser("experiment", help="seeded experiment runs").add_subparsers(
        dest="subcommand", required=True
    )

    p = experiment.add_parser("fig4", help="clean-stream gap distribution")
    p.add_argument("--trials", type=_positive_int, default=1000)
    p.add_argument("--cardinality", type=_positive_int, default=100_000)
    p.add_argument("--m-salted", type=int, default=1024)
    p.add_argument("--m-unsalted", type=int, default=1024)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bins", type=_positive_int, default=61)
    p.add_argument("--out", default="fig4-out", help="output directory")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_experiment_fig4)

    p = experiment.add_parser("detect", help="detection power + optional clean control")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--attack-file", help="attack set (hex-lines with JSON header)")
    src.add_argument(
        "--craft-m1", type=_positive_int, metavar="COUNT", help="craft a rank-1 set first"
    )
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--m-salted", type=int, default=1024)
    p.add_argument("--m-unsalted", type=int, default=1024)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--fp-target", type=float, default=normal_cdf(-5.0))
    p.add_argument("--clean-count", type=_non_negative_int, default=0, help="background clean traffic per trial")
    p.add_argument("--clean-trials", type=_non_negative_int, default=0, help="matched clean-control trials")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="detect-out", help="output directory")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_experiment_detect)

    p = experiment.add_parser("m2", help="black-box filtering experiment")
    p.add_argument("--candidates", type=_positive_int, default=250_000)
    p.add_argument("--rounds", type=_positive_int, default=3)
    p.add_argument("--victim-precision", type=int, default=14)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="m2-out", help="output directory")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_experiment_m2)

    return parser


def entry(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints its own message
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (SketchFormatError, AttackSetFormatError, FlowParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except IncompatibleSketchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NON_MERGEABLE
    except AttackDetectedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ATTACK
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(entry())
