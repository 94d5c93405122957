"""Command line interface.

Four subcommands cover the workflow end to end:

* ``check``     validate policy/monitor files and print diagnostics
* ``enforce``   rewrite a trace file through a stack of policies
* ``simulate``  run a lifecycle scenario with and without enforcement
* ``verify``    exhaustively check a policy against a monitor up to a bound

Exit codes are part of the interface and kept distinct per subcommand; see
each ``cmd_*`` docstring. ``--format structured`` switches the report
output to line-delimited ``key=value`` records for scripting.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Sequence

from .dsl import parse_document
from .enforcement import (
    EnforcementError,
    EnforcementReport,
    ModuleRegistry,
    UnknownModuleError,
    enforce_trace,
)
from .events import (
    Trace,
    TraceParseError,
    TraceValidationError,
    parse_event_literal,
    parse_trace,
    serialize_trace,
)
from .oracle import (
    EventUniverse,
    MonitorAutomaton,
    brute_force_verify,
    validate_monitor,
)
from .policy import DispatchError, PolicySpec, Severity, validate_policy
from .simulator import (
    LeakReport,
    ScenarioError,
    ScenarioParseError,
    parse_scenario,
    run_scenario,
)

__all__ = ["main"]

DEPTH_ENV_VAR = "ENFORCEKIT_DEPTH"
DEFAULT_DEPTH_LIMIT = 16
VERIFY_TRACE_LIMIT = 1_000_000

# Exit codes shared by the subcommands. "Unusable" covers everything that
# stops a run before it starts: unreadable files, parse errors, bad flags.
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_UNUSABLE = 2
EXIT_LEAKS_REMAIN = 3


class _CliError(Exception):
    """Abort the subcommand with a message on stderr and an exit code."""

    def __init__(self, message: str, code: int = EXIT_UNUSABLE):
        super().__init__(message)
        self.code = code


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return handle.read()
    except OSError as err:
        raise _CliError(f"cannot read {path}: {err.strerror or err}") from err


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
    except OSError as err:
        raise _CliError(f"cannot write {path}: {err.strerror or err}") from err


def _trace_file_text(trace: Trace) -> str:
    text = serialize_trace(trace)
    return text + "\n" if text else ""


def _load_policy(path: str) -> PolicySpec:
    try:
        document = parse_document(_read_text(path))
    except ValueError as err:
        raise _CliError(f"{path}: {err}") from err
    if not isinstance(document, PolicySpec):
        raise _CliError(f"{path}: expected a policy, found a monitor")
    return document


def _load_monitor(path: str) -> MonitorAutomaton:
    try:
        document = parse_document(_read_text(path))
    except ValueError as err:
        raise _CliError(f"{path}: {err}") from err
    if not isinstance(document, MonitorAutomaton):
        raise _CliError(f"{path}: expected a monitor, found a policy")
    return document


def _depth_limit(args: argparse.Namespace) -> int:
    """Insertion depth bound: --depth flag, else env var, else the default."""
    if args.depth is not None:
        value, origin = args.depth, "--depth"
    elif DEPTH_ENV_VAR in os.environ:
        raw = os.environ[DEPTH_ENV_VAR]
        try:
            value = int(raw)
        except ValueError:
            raise _CliError(f"{DEPTH_ENV_VAR} must be an integer, got {raw!r}") from None
        origin = DEPTH_ENV_VAR
    else:
        return DEFAULT_DEPTH_LIMIT
    if value < 1:
        raise _CliError(f"{origin} must be a positive integer, got {value}")
    return value


def _build_registry(args: argparse.Namespace) -> ModuleRegistry:
    policies = [_load_policy(path) for path in args.policy]
    registry = ModuleRegistry.from_policies(policies, insert_depth_limit=_depth_limit(args))
    for name in args.deactivate:
        try:
            registry.set_active(name, False)
        except UnknownModuleError as err:
            raise _CliError(str(err)) from err
    return registry


def _print_report(report: EnforcementReport, structured: bool, stream) -> None:
    total = report.total
    if structured:
        for name, counts in report.counts.items():
            print(
                f"type=module name={name} inserted={counts.inserted} "
                f"suppressed={counts.suppressed} passed={counts.passed}",
                file=stream,
            )
        for record in report.records:
            print(f"type=edit {record}", file=stream)
        print(
            f"type=total inserted={total.inserted} suppressed={total.suppressed} "
            f"passed={total.passed} delta={report.delta}",
            file=stream,
        )
        return
    for name, counts in report.counts.items():
        print(
            f"module {name}: inserted={counts.inserted} "
            f"suppressed={counts.suppressed} passed={counts.passed}",
            file=stream,
        )
    for record in report.records:
        print(f"edit {record}", file=stream)
    print(
        f"total: inserted={total.inserted} suppressed={total.suppressed} "
        f"passed={total.passed} delta={report.delta:+d}",
        file=stream,
    )


def cmd_check(args: argparse.Namespace) -> int:
    """Validate each file; 0 clean (warnings allowed), 1 errors, 2 unreadable."""
    structured = args.format == "structured"
    worst = EXIT_OK
    for path in args.files:
        text = _read_text(path)
        errors = warnings = 0
        try:
            document = parse_document(text)
        except ValueError as err:
            errors = 1
            if structured:
                print(f"type=diagnostic file={path} severity=error message={err}")
            else:
                print(f"{path}: error: {err}")
        else:
            if isinstance(document, PolicySpec):
                diagnostics = validate_policy(document)
            else:
                diagnostics = validate_monitor(document)
            errors = sum(d.severity is Severity.ERROR for d in diagnostics)
            warnings = len(diagnostics) - errors
            for diag in diagnostics:
                if structured:
                    print(
                        f"type=diagnostic file={path} severity={diag.severity.value} "
                        f"message={diag.message}"
                    )
                else:
                    print(f"{path}: {diag}")
        if structured:
            print(f"type=summary file={path} errors={errors} warnings={warnings}")
        else:
            print(f"{path}: {errors} errors, {warnings} warnings")
        if errors:
            worst = max(worst, EXIT_FAILURE)
    return worst


def cmd_enforce(args: argparse.Namespace) -> int:
    """Rewrite a trace; the enforced trace goes to --out or stdout.

    With --out, the edit report is printed to stdout; without it the trace
    itself owns stdout and the report moves to stderr so the two streams
    never mix. Exit 0 on success (edited or not), 1 on an enforcement error
    (reported with the seq of the input event that triggered it), 2 on
    unusable inputs.
    """
    registry = _build_registry(args)
    try:
        trace = parse_trace(_read_text(args.trace))
    except (TraceParseError, TraceValidationError) as err:
        raise _CliError(f"{args.trace}: {err}") from err
    try:
        enforced, report = enforce_trace(registry, trace)
    except EnforcementError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAILURE
    if args.out:
        _write_text(args.out, _trace_file_text(enforced))
        report_stream = sys.stdout
    else:
        text = serialize_trace(enforced)
        if text:
            print(text)
        report_stream = sys.stderr
    _print_report(report, args.format == "structured", report_stream)
    return EXIT_OK


def _leak_lines(run: str, report: LeakReport, structured: bool) -> list[str]:
    lines = []
    for leak in report.leaks:
        if structured:
            key = f" key={leak.key}" if leak.key else ""
            lines.append(
                f"type=leak run={run} component={leak.component} state={leak.state} "
                f"resource={leak.resource}{key} seq={leak.seq}"
            )
        else:
            lines.append(f"{run} leak: {leak}")
    for denial in report.denied:
        if structured:
            key = f" key={denial.key}" if denial.key else ""
            lines.append(
                f"type=denied run={run} component={denial.component} "
                f"resource={denial.resource}{key} holder={denial.holder} seq={denial.seq}"
            )
        else:
            lines.append(f"{run} denied: {denial}")
    return lines


def cmd_simulate(args: argparse.Namespace) -> int:
    """Run a scenario unenforced and enforced, then compare leak counts.

    Exit 0 when enforcement removes every leak, 3 when leaks remain in the
    enforced run, 1 on a scenario or enforcement error (reported with the
    failing step), 2 on unusable inputs.
    """
    registry = _build_registry(args)
    try:
        scenario = parse_scenario(
            _read_text(args.scenario),
            default_name=os.path.splitext(os.path.basename(args.scenario))[0],
        )
    except ScenarioParseError as err:
        raise _CliError(f"{args.scenario}: {err}") from err
    structured = args.format == "structured"
    try:
        baseline_trace, baseline = run_scenario(scenario)
        enforced_trace, enforced = run_scenario(scenario, registry)
    except (ScenarioError, EnforcementError, DispatchError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAILURE
    if args.out:
        _write_text(args.out, _trace_file_text(enforced_trace))
        _write_text(args.out + ".unenforced", _trace_file_text(baseline_trace))
    for line in _leak_lines("baseline", baseline, structured):
        print(line)
    for line in _leak_lines("enforced", enforced, structured):
        print(line)
    if structured:
        print(
            f"type=summary baseline_leaks={len(baseline.leaks)} "
            f"enforced_leaks={len(enforced.leaks)} "
            f"baseline_denied={len(baseline.denied)} "
            f"enforced_denied={len(enforced.denied)}"
        )
    else:
        print(f"leaks: {len(baseline.leaks)} -> {len(enforced.leaks)}")
    return EXIT_LEAKS_REMAIN if enforced.leaks else EXIT_OK


def _format_counterexample(trace: Trace, structured: bool) -> str:
    literals = [event.literal() for event in trace]
    if structured:
        return ";".join(literals)
    return " ".join(literals) if literals else "(empty)"


def cmd_verify(args: argparse.Namespace) -> int:
    """Exhaustively verify a policy against a monitor over a bounded universe.

    Exit 0 when the policy is sound and transparent up to the bound, 1 when
    either fails (counterexamples are printed), 2 when the inputs are
    unusable or the universe exceeds the enumeration budget.
    """
    policy = _load_policy(args.policy)
    monitor = _load_monitor(args.monitor)
    for source, diagnostics in (
        (args.policy, validate_policy(policy)),
        (args.monitor, validate_monitor(monitor)),
    ):
        bad = [d for d in diagnostics if d.severity is Severity.ERROR]
        if bad:
            raise _CliError(f"{source}: {bad[0].message}")
    try:
        alphabet = tuple(parse_event_literal(text) for text in args.event)
        universe = EventUniverse(alphabet, args.max_len)
    except ValueError as err:
        raise _CliError(str(err)) from err
    size = universe.size()
    if size > VERIFY_TRACE_LIMIT:
        raise _CliError(
            f"universe holds {size} traces, over the {VERIFY_TRACE_LIMIT} budget; "
            f"shrink the alphabet or --max-len"
        )
    verdict = brute_force_verify(policy, monitor, universe)
    structured = args.format == "structured"
    yes_no = {True: "yes", False: "no"}
    if structured:
        print(
            f"type=verdict traces={verdict.traces_checked} "
            f"sound={yes_no[verdict.sound]} transparent={yes_no[verdict.transparent]}"
        )
    else:
        print(f"traces checked: {verdict.traces_checked}")
        print(f"sound: {yes_no[verdict.sound]}")
        print(f"transparent: {yes_no[verdict.transparent]}")
    for kind, counterexamples in (
        ("soundness", verdict.sound_counterexamples),
        ("transparency", verdict.transparent_counterexamples),
    ):
        for trace in counterexamples:
            rendered = _format_counterexample(trace, structured)
            if structured:
                print(f"type=counterexample kind={kind} trace={rendered}")
            else:
                print(f"counterexample ({kind}): {rendered}")
    return EXIT_OK if verdict.ok else EXIT_FAILURE


def _add_format_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--format",
        choices=("text", "structured"),
        default="text",
        help="report style: human-readable text or key=value records",
    )


def _add_registry_flags(parser: argparse.ArgumentParser, *, require_policy: bool) -> None:
    parser.add_argument(
        "-p",
        "--policy",
        action="append",
        required=require_policy,
        default=[],
        metavar="FILE",
        help="policy file; repeat to stack modules, order sets priority",
    )
    parser.add_argument(
        "--deactivate",
        action="append",
        default=[],
        metavar="NAME",
        help="start with the named module deactivated (repeatable)",
    )
    parser.add_argument(
        "--depth",
        type=int,
        default=None,
        metavar="N",
        help=f"insertion depth limit (default {DEFAULT_DEPTH_LIMIT}, "
        f"or the {DEPTH_ENV_VAR} environment variable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="enforcekit",
        description="Validate, enforce, simulate and verify runtime policies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="validate policy and monitor files")
    check.add_argument("files", nargs="+", metavar="FILE")
    _add_format_flag(check)
    check.set_defaults(func=cmd_check)

    enforce = sub.add_parser("enforce", help="rewrite a trace through policies")
    _add_registry_flags(enforce, require_policy=True)
    enforce.add_argument("trace", metavar="TRACE", help="input trace file")
    enforce.add_argument("-o", "--out", metavar="FILE", help="write the enforced trace here")
    _add_format_flag(enforce)
    enforce.set_defaults(func=cmd_enforce)

    simulate = sub.add_parser("simulate", help="run a lifecycle scenario")
    _add_registry_flags(simulate, require_policy=False)
    simulate.add_argument("scenario", metavar="SCENARIO", help="scenario script")
    simulate.add_argument(
        "-o",
        "--out",
        metavar="FILE",
        help="write the enforced trace here and the baseline to FILE.unenforced",
    )
    _add_format_flag(simulate)
    simulate.set_defaults(func=cmd_simulate)

    verify = sub.add_parser("verify", help="brute-force soundness and transparency")
    verify.add_argument("-p", "--policy", required=True, metavar="FILE")
    verify.add_argument("-m", "--monitor", required=True, metavar="FILE")
    verify.add_argument(
        "-e",
        "--event",
        action="append",
        required=True,
        metavar="LITERAL",
        help="alphabet event as kind:name@component{k=v,...} (repeatable)",
    )
    verify.add_argument(
        "--max-len",
        type=int,
        default=6,
        metavar="N",
        help="enumerate traces up to this length (default 6)",
    )
    _add_format_flag(verify)
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
