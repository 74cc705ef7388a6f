"""``ctg`` command line: prepare, tune, ensemble, evaluate and report.

Exit codes: 0 success, 2 usage or input error, 3 runtime failure (non-converged
optimizer, failed grid, unreadable model file).  Failures also print a one-line
JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import experiment as ex
from .core import ConvergenceError, CtgError, InputError
from .modelfile import ModelFileError
from .select import PROPOSED, GridFailure

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("usage", message, EXIT_INPUT)
        raise SystemExit(EXIT_INPUT)


def _emit_error(category: str, message: str, code: int) -> None:
    print(json.dumps({"error": category, "message": message, "exit_code": code}), file=sys.stderr)


def _common(suppress: bool) -> argparse.ArgumentParser:
    # Subcommands re-declare the global flags with suppressed defaults so a flag given
    # before the subcommand is not reset by the subparser.
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config", **kw)
    common.add_argument("--mode", choices=["paper_faithful", "leakage_safe"], help="preprocessing order", **kw)
    common.add_argument("--seed", type=int, help="master seed", **kw)
    common.add_argument("--out", help="output directory (falls back to $CTG_OUT_DIR, then ./ctg_out)", **kw)
    common.add_argument("--quiet", action="store_true", help="suppress progress lines", **kw)
    return common


def build_parser() -> argparse.ArgumentParser:
    top = _common(False)
    common = _common(True)

    p = _Parser(prog="ctg", description="CTG fetal-health classification experiments", parents=[top])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("prepare", parents=[common], help="load, preprocess and split the data")
    sp.add_argument("--data", help="input CSV (overrides data_path)")

    sp = sub.add_parser("tune", parents=[common], help="grid-search models and save the refit winners")
    sp.add_argument("models", nargs="*", default=["all"], help="svm xgb lgbm dt rf et knn, or all")

    sp = sub.add_parser("ensemble", parents=[common], help="save a hard-voting model over tuned members")
    sp.add_argument("members", nargs="*", help="member model names")
    sp.add_argument("--etse", action="store_true", help="shorthand for the Extra Trees + SVM pair")
    sp.add_argument("--name", help="output model name (default: members joined by '+')")

    sp = sub.add_parser("evaluate", parents=[common], help="score models and ensembles on the test split")
    sp.add_argument("models", nargs="*", help="models or saved ensembles (default: configured models)")

    sub.add_parser("report", parents=[common], help="rebuild metrics from persisted predictions")
    return p


def _config(args) -> ex.ExperimentConfig:
    return ex.load_config(args.config, mode=args.mode, seed=args.seed, out=args.out,
                          data=getattr(args, "data", None))


def run(args) -> int:
    log = None if args.quiet else (lambda msg: print(msg, flush=True))
    cfg = _config(args)
    if args.command == "prepare":
        s = ex.prepare(cfg)
        if log:
            log(f"prepared {s['train_rows']} train / {s['test_rows']} test rows ({s['mode']}) in {cfg.out}")
            log(f"test class counts (N/S/P): {s['test_class_counts']}")
    elif args.command == "tune":
        ex.tune(cfg, args.models, log)
    elif args.command == "ensemble":
        members = list(args.members)
        if args.etse:
            members = [m for m in PROPOSED if m not in members] + members
        path = ex.build_ensemble(cfg, members, args.name)
        if log:
            log(f"saved {path}")
    elif args.command == "evaluate":
        doc = ex.evaluate(cfg, args.models)
        if log:
            for r in doc["results"]:
                log(f"{r['name']:<12} {r['accuracy_2dp']}%  errors={r['errors']}")
            log(f"report written to {cfg.out / 'report.txt'}")
    elif args.command == "report":
        doc = ex.report(cfg)
        if log:
            log(f"rebuilt {len(doc['results'])} rows into {cfg.out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return run(args)
    except FileNotFoundError as exc:
        msg = str(exc) if str(exc).startswith("file not found") else f"file not found: {exc.filename}"
        _emit_error("file_not_found", msg, EXIT_INPUT)
        return EXIT_INPUT
    except InputError as exc:
        _emit_error("input", str(exc), EXIT_INPUT)
        return EXIT_INPUT
    except ModelFileError as exc:
        _emit_error("model_file", str(exc), EXIT_RUNTIME)
        return EXIT_RUNTIME
    except ConvergenceError as exc:
        _emit_error("convergence", f"{exc} {json.dumps(exc.diagnostics)}", EXIT_RUNTIME)
        return EXIT_RUNTIME
    except GridFailure as exc:
        _emit_error("grid", str(exc), EXIT_RUNTIME)
        return EXIT_RUNTIME
    except CtgError as exc:
        _emit_error("runtime", str(exc), EXIT_RUNTIME)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
