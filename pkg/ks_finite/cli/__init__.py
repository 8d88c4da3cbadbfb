# ruff: noqa: T201
import argparse
import dataclasses
import datetime
import functools
import json
import logging
import os
import pathlib
import sys
from typing import List, Optional

import numpy as np
import pydantic
import tabulate

import ks_finite._experiment as experiment
import ks_finite._ghz as ghz
import ks_finite._kscore as kscore
import ks_finite._models as models
import ks_finite._util as util

try:
    from ..__about__ import __version__
except ModuleNotFoundError:
    __version__ = "dev"

logger = logging.getLogger(__name__)

BUILTIN_SETS = {
    "builtin:peres": kscore.peres_set,
    "builtin:peres-completed": functools.partial(kscore.peres_set, complete=True),
}
LOG_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
}
EXIT_INPUT_ERROR = 2
EXIT_INTERRUPTED = 130
EXIT_NUMERICAL_ERROR = 3
# LinAlgError is a ValueError, so internal errors are matched first
INTERNAL_ERRORS = (ArithmeticError, RuntimeError, np.linalg.LinAlgError)
INPUT_ERRORS = (ValueError,)


@dataclasses.dataclass
class RunManifest:
    subcommand: str
    inputs: List[str]
    config: Optional[dict]
    started: str
    finished: str = ""
    version: str = __version__

    def to_doc(self):
        return models.RunManifestDoc(**dataclasses.asdict(self)).dict()


# ruff: noqa: PLR0915
def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Test non-contextual hidden variables with finite precision"
    )
    parser.add_argument(
        "-V", "--version", action="version", version=f"%(prog)s {__version__}"
    )
    subparsers = parser.add_subparsers(
        dest="command",
        required=True,
        metavar="command",
        help="for more info use: %(prog)s <command> -h",
    )

    def add_subcommand(name, *args, **kwargs):
        subparser = subparsers.add_parser(name, *args, **kwargs)
        subparser.set_defaults(func=globals()[f"_{name}_command"])
        subparser.add_argument(
            "-v", "--verbose", action="store_true", help="Enable debug logs"
        )
        subparser.add_argument(
            "-o", "--out", type=pathlib.Path, help="write the result to this file"
        )
        subparser.add_argument(
            "--format",
            choices=["json", "table"],
            default="json",
            help="output format (default: %(default)s)",
        )
        return subparser

    def add_set_arg(subparser, required=True):
        subparser.add_argument(
            "--set",
            dest="ks_set",
            required=required,
            help="path to a KS set file, builtin:peres or builtin:peres-completed",
        )
        subparser.add_argument(
            "--complete", action="store_true", help="triad-complete the set first"
        )

    def add_run_args(subparser):
        subparser.add_argument("--seed", type=int, help="override the seed")
        subparser.add_argument("--trials", type=int, help="override trials per triad")
        subparser.add_argument("--alpha", type=float, help="override alpha")

    subparser = add_subcommand("generate", help="print the built-in Peres set")
    subparser.add_argument(
        "--complete", action="store_true", help="triad-complete the set"
    )

    subparser = add_subcommand("verify", help="check colorability of a KS set")
    add_set_arg(subparser)
    subparser.add_argument(
        "--cross-check",
        action="store_true",
        help="verify the result with an independent clause encoding",
    )
    subparser.add_argument(
        "--min-violated",
        action="store_true",
        help="compute the minimum number of violated triads",
    )

    subparser = add_subcommand("simulate", help="simulate an experiment")
    subparser.add_argument(
        "--config", type=pathlib.Path, required=True, help="experiment config"
    )
    add_set_arg(subparser, required=False)
    add_run_args(subparser)
    subparser.add_argument(
        "--mode",
        choices=["sequential", "joint"],
        help="override the measurement model of a quantum source",
    )

    subparser = add_subcommand("analyze", help="analyze recorded trials")
    add_set_arg(subparser)
    subparser.add_argument(
        "--counts", type=pathlib.Path, required=True, help="trial CSV file"
    )
    subparser.add_argument(
        "--alpha", type=float, default=0.01, help="confidence (default: %(default)s)"
    )
    subparser.add_argument(
        "--no-click-policy",
        choices=[p.value for p in experiment.NoClickPolicy],
        default=experiment.NoClickPolicy.COUNT_AS_FAILURE.value,
        help="how trials without a click count (default: %(default)s)",
    )

    subparser = add_subcommand("ghz", help="simulate the GHZ experiment")
    subparser.add_argument("--config", type=pathlib.Path, help="GHZ config")
    add_run_args(subparser)

    args = parser.parse_args(argv)

    # Don't use escape sequences, if stdout is not a tty
    if not sys.stdout.isatty():
        for attr in dir(Format):
            if not attr.startswith("_"):
                setattr(Format, attr, "")

    if args.verbose:
        level = logging.DEBUG
    else:
        level = LOG_LEVELS.get(
            os.environ.get("KSF_LOG_LEVEL", "").lower(), logging.WARNING
        )

    logging.basicConfig(
        format="%(asctime)s %(levelname)s: %(name)s: %(message)s", level=level
    )

    try:
        return args.func(args) or 0
    except KeyboardInterrupt:
        return EXIT_INTERRUPTED
    except INTERNAL_ERRORS as e:
        logger.debug("Internal failure", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL_ERROR
    except INPUT_ERRORS as e:
        logger.debug("Invalid input", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR


def _generate_command(args):
    ks_set = kscore.peres_set(complete=args.complete)
    if args.format == "table":
        _emit(args, _set_table(ks_set))
    else:
        _emit(args, util.dumps(kscore.ks_set_to_doc(ks_set)))


def _verify_command(args):
    manifest = _manifest(args, [args.ks_set])
    ks_set = _load_set(args)

    report = kscore.is_colorable(ks_set)
    doc = {
        "set_name": ks_set.name,
        "N": ks_set.N,
        "directions": len(ks_set.directions),
        "shared_directions": len(kscore.shared_directions(ks_set)),
        "status": report.status.value,
        "nodes_explored": report.nodes_explored,
        "witness": None if report.witness is None else list(report.witness.values()),
        "threshold": None if report.colorable else 1.0 / ks_set.N,
    }

    if args.cross_check:
        colorable = kscore.is_colorable_clauses(ks_set)
        if colorable != report.colorable:
            raise RuntimeError(
                f"Clause encoding disagrees: colorable={colorable}, "
                f"search says {report.status.value}"
            )
        doc["cross_check"] = "Colorable" if colorable else "Uncolorable"

    if args.min_violated:
        doc["min_violated_triads"] = kscore.min_violated_triads(ks_set)

    if args.format == "table":
        status_color = Format.YELLOW if report.colorable else Format.GREEN
        doc["status"] = f"{status_color}{doc['status']}{Format.RESET}"
        rows = [[key, value] for key, value in doc.items() if key != "witness"]
        _emit(args, tabulate.tabulate(rows, tablefmt="plain"))
    else:
        _emit_report(args, manifest, doc)


def _simulate_command(args):
    config_doc = _load_config(args.config, models.ExperimentConfigDoc)
    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.trials is not None:
        update["trials_per_triad"] = args.trials
    if args.alpha is not None:
        update["alpha"] = args.alpha
    if args.mode is not None:
        update["source"] = config_doc.source.copy(update={"model": args.mode})
    config_doc = config_doc.copy(update=update)

    if args.ks_set is not None:
        ks_set = _load_set(args)
    else:
        ks_set = _resolve_config_set(config_doc.ks_set, args.config.parent)
        if args.complete:
            ks_set = kscore.triad_complete(ks_set)

    config = experiment.config_from_doc(config_doc, ks_set)
    manifest = _manifest(args, [str(args.config)], config.to_doc())
    report = experiment.run_experiment(config)
    if report is None:
        return EXIT_INTERRUPTED
    _emit_experiment(args, manifest, report)


def _analyze_command(args):
    manifest = _manifest(args, [args.ks_set, str(args.counts)])
    ks_set = _load_set(args)
    try:
        f = open(args.counts, newline="", encoding="utf-8")
    except OSError as e:
        raise ParseError(f"Can't read {args.counts}: {e.strerror}") from e

    with f:
        try:
            report = experiment.analyze_counts(
                f,
                ks_set,
                args.alpha,
                experiment.NoClickPolicy(args.no_click_policy),
            )
        except UnicodeDecodeError as e:
            raise ParseError(
                f"Can't read {args.counts}: not UTF-8 text ({e.reason})"
            ) from e
    _emit_experiment(args, manifest, report)


def _ghz_command(args):
    if args.config is not None:
        config_doc = _load_config(args.config, models.GhzConfigDoc)
    else:
        config_doc = models.GhzConfigDoc(trials_per_context=1000, seed=0)

    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.trials is not None:
        update["trials_per_context"] = args.trials
    if args.alpha is not None:
        update["alpha"] = args.alpha
    config = ghz.config_from_doc(config_doc.copy(update=update))

    inputs = [] if args.config is None else [str(args.config)]
    manifest = _manifest(args, inputs, config.to_doc())
    report = ghz.run_ghz_experiment(config)
    if report is None:
        return EXIT_INTERRUPTED
    _emit_experiment(args, manifest, report)


def _read_text(path):
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"Can't read {path}: {e.strerror}") from e
    except UnicodeDecodeError as e:
        raise ParseError(f"Can't read {path}: not UTF-8 text ({e.reason})") from e


def parse_ks_file(path):
    path = pathlib.Path(path)
    text = _read_text(path)

    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(
            f"{path}:{e.lineno}:{e.colno}: {e.msg}", line=e.lineno, offset=e.colno
        ) from e

    return _ks_set_from_obj(obj, path)


def _ks_set_from_obj(obj, source):
    try:
        doc = models.KSSetDoc.parse_obj(obj)
    except pydantic.ValidationError as e:
        raise ValidationError(f"{source}: {e}") from e

    try:
        return kscore.ks_set_from_doc(doc.dict())
    except kscore.InvalidSet as e:
        raise ValidationError(f"{source}: {e}", triad=e.triad) from e


def _load_set(args):
    name = args.ks_set
    if name in BUILTIN_SETS:
        ks_set = BUILTIN_SETS[name]()
    else:
        ks_set = parse_ks_file(name)
    if args.complete:
        ks_set = kscore.triad_complete(ks_set)
    return ks_set


def _resolve_config_set(value, base):
    if isinstance(value, models.KSSetDoc):
        return _ks_set_from_obj(value.dict(), "config")
    if value in BUILTIN_SETS:
        return BUILTIN_SETS[value]()
    return parse_ks_file(base / value)


def _load_config(path, model):
    text = _read_text(path)

    try:
        if path.suffix == ".toml":
            obj = util.toml_loads(text)
        else:
            obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(
            f"{path}:{e.lineno}:{e.colno}: {e.msg}", line=e.lineno, offset=e.colno
        ) from e
    except ValueError as e:
        # tomllib.TOMLDecodeError
        raise ParseError(f"{path}: {e}") from e

    try:
        return model.parse_obj(obj)
    except pydantic.ValidationError as e:
        raise ValidationError(f"{path}: {e}") from e


def _manifest(args, inputs, config=None):
    return RunManifest(args.command, [str(i) for i in inputs], config, _now())


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _emit_experiment(args, manifest, report):
    doc = models.ExperimentReportDoc.parse_obj(report.to_doc()).dict()
    if args.format == "table":
        _emit(args, _report_table(report))
    else:
        _emit_report(args, manifest, doc)


def _emit_report(args, manifest, report_doc):
    manifest.finished = _now()
    _emit(args, util.dumps({"manifest": manifest.to_doc(), "report": report_doc}))


def _emit(args, text):
    if args.out is None:
        print(text)
    else:
        args.out.write_text(text + "\n")


def _set_table(ks_set):
    headers = ["Index", "x", "y", "z", "Triads"]
    headers[0] = f"{Format.BOLD}{headers[0]}"
    headers[-1] = f"{headers[-1]}{Format.RESET}"
    degrees = ks_set.degrees()
    table = [[i, *d, degrees[i]] for i, d in enumerate(ks_set.directions)]
    return tabulate.tabulate(table, headers=headers, tablefmt="plain", floatfmt=".6f")


def _report_table(report):
    ghz_mode = report.mode == "ghz"
    headers = [
        "Context" if ghz_mode else "Triad",
        "Settings" if ghz_mode else "Members",
        "Trials",
        "No click",
        "Failures",
        "Epsilon",
        "Upper bound",
    ]
    headers[0] = f"{Format.BOLD}{headers[0]}"
    headers[-1] = f"{headers[-1]}{Format.RESET}"

    def row(stats):
        label = stats.settings if ghz_mode else " ".join(map(str, stats.members))
        upper = f"{stats.upper_bound:.3g}"
        if stats.upper_bound >= report.threshold:
            upper = f"{Format.RED}{upper}{Format.RESET}"
        return [
            stats.index,
            label,
            stats.trials,
            stats.no_click,
            stats.failures,
            f"{stats.epsilon_hat:.3g}",
            upper,
        ]

    lines = [
        tabulate.tabulate(
            [row(s) for s in report.triads], headers=headers, tablefmt="plain"
        ),
        "",
        f"{Format.BOLD}epsilon_max:{Format.RESET} {report.epsilon_max:.3g}",
        f"{Format.BOLD}u_max:{Format.RESET} {report.u_max:.3g}",
        f"{Format.BOLD}threshold:{Format.RESET} {report.threshold:.3g}",
    ]
    verdict = report.verdict
    if verdict is not None:
        color = (
            Format.GREEN if verdict is experiment.Verdict.EXCLUDED else Format.YELLOW
        )
        lines.append(f"{Format.BOLD}verdict:{Format.RESET} {color}{verdict.value}")
        lines[-1] += Format.RESET
    return "\n".join(lines)


class ParseError(ValueError):
    def __init__(self, message, line=None, offset=None):
        super().__init__(message)
        self.line = line
        self.offset = offset


class ValidationError(ValueError):
    def __init__(self, message, triad=None):
        super().__init__(message)
        self.triad = triad


class Format:
    RESET = "\033[0m"
    BOLD = "\033[1m"
    RED = "\033[31m"
    GREEN = "\033[32m"
    YELLOW = "\033[33m"
