import json
import logging
import os
import secrets
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional

# Add project root to path to enable imports
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.audit.audit_log import AuditLog, parse_log
from src.audit.logprof import apply_suggestions, suggest_rules
from src.engine.context import UNCONFINED, change_hat, confined
from src.engine.decision import AccessRequest, Operation, check_access, check_capability, set_mode
from src.errors import ArmorcageError, HatError, ParseError, PolicyDenied, ProfileNotFound, SetupError, TaskError
from src.limits.identity import Identity
from src.limits.rlimits import format_limit, limits_table, parse_rlimit_spec
from src.parser.include_resolver import IncludeResolver
from src.parser.lint import has_findings, lint_profiles
from src.parser.profile_parser import ProfileParser
from src.parser.serializer import serialize_profile
from src.policy.modes import AccessModeSet
from src.policy.profile import ProfileMode, ProfileSet
from src.sanitize import sanitize_identifier
from src.settings import BACKENDS, CliConfig, configure_logging, load_config
from src.supervisor.sandbox_spec import CommandJob, EvalResult, EvalStatus, SandboxSpec
from src.supervisor.secure_eval import Supervisor
from src.tasks.fixtures import builtin_fixture
from src.tasks.runner import TaskRunner
from src.tasks.script_parser import load_task_file
from src.tasks.steps import TaskScript

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_DENIED = 10
EXIT_TIMEOUT = 11
EXIT_LIMIT_KILLED = 12
EXIT_TASK_ERROR = 13
EXIT_SETUP = 64

RUN_EXIT_CODES = {
    EvalStatus.OK: EXIT_OK,
    EvalStatus.DENIED: EXIT_DENIED,
    EvalStatus.TIMEOUT: EXIT_TIMEOUT,
    EvalStatus.LIMIT_KILLED: EXIT_LIMIT_KILLED,
    EvalStatus.TASK_ERROR: EXIT_TASK_ERROR,
    EvalStatus.SETUP_ERROR: EXIT_SETUP,
}


def _error(message: str):
    print(f"armorcage: {message}", file=sys.stderr)


def load_profiles(config: CliConfig) -> ProfileSet:
    """Every profile file directly under the configured roots; unparsable files are skipped."""
    parser = ProfileParser(IncludeResolver(config.profile_roots), strict=config.strict_includes)
    return parser.load_profile_dir(skip_invalid=True)


def load_task(name: str) -> TaskScript:
    """A task file path, or the name of a shipped fixture."""
    if Path(name).is_file():
        return load_task_file(name)
    return builtin_fixture(name)


def _apply_mode(profile_set: ProfileSet, profile: Optional[str], mode: Optional[str]) -> ProfileSet:
    if mode is None or profile is None:
        return profile_set
    return set_mode(profile_set, profile, mode)


def expand_home(path: str, environ=None) -> str:
    """Expand a leading '~' and every '@{HOME}' from $HOME."""
    environ = os.environ if environ is None else environ
    home = environ.get("HOME", "/").rstrip("/") or ""
    if path == "~" or path.startswith("~/"):
        path = home + path[1:]
    return path.replace("@{HOME}", home)


def cmd_run(args, config: CliConfig) -> int:
    """
    Run a task or command in a sandboxed child.

    Exit codes: 0 ok, 10 denied, 11 timeout, 12 limit killed, 13 task error, 64 setup error.
    """
    if bool(args.task) == bool(args.command):
        _error("run needs exactly one of --task or a command after '--'")
        return EXIT_USAGE
    try:
        if args.profile:
            config.require_roots()
        profile_set = _apply_mode(load_profiles(config), args.profile, args.mode)
        job = load_task(args.task) if args.task else CommandJob(tuple(args.command))
        rlimits = dict(parse_rlimit_spec(text) for text in args.rlimit)
        identity = Identity.parse(args.uid, args.gid) if (args.uid or args.gid) else None
        spec = SandboxSpec(identity=identity, priority=args.priority, rlimits=rlimits, profile=args.profile,
                           timeout=args.timeout, workdir=args.workdir)
    except (ArmorcageError, ValueError, OSError) as e:
        _error(str(e))
        return EXIT_SETUP

    supervisor = Supervisor(
        profile_set,
        backend=config.backend,
        audit_log=AuditLog(config.audit_log),
        grace=config.grace_seconds,
        dangerous=args.dangerous,
        fork_bound=config.fork_bound,
    )
    jobs = max(1, args.jobs)
    if jobs == 1:
        results = [supervisor.secure_eval(job, spec)]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            futures = [executor.submit(supervisor.secure_eval, job, spec) for _ in range(jobs)]
            results = [future.result() for future in futures]
    supervisor.reap()

    if args.json:
        documents = [result.to_dict() for result in results]
        print(json.dumps(documents[0] if jobs == 1 else documents, indent=2))
    else:
        for result in results:
            _print_result(result)
    codes = [RUN_EXIT_CODES[result.status] for result in results]
    return next((code for code in codes if code != EXIT_OK), EXIT_OK)


def _print_result(result: EvalResult):
    if result.payload:
        text = result.payload.decode("utf-8", errors="replace")
        print(text, end="" if text.endswith("\n") else "\n")
    print(result.summary())


def cmd_check(args, config: CliConfig) -> int:
    """
    Decide one access for a profile. Exit codes: 0 allowed, 10 denied, 2 usage error.
    """
    try:
        profile_set = _apply_mode(load_profiles(config), args.profile, args.mode)
        ctx = confined(args.profile)
        profile_set.get(args.profile)
        if args.hat:
            ctx = change_hat(ctx, profile_set, args.hat, secrets.token_hex(8))
    except (ProfileNotFound, HatError, ValueError) as e:
        _error(str(e))
        return EXIT_USAGE

    if args.capability:
        allowed = check_capability(ctx, profile_set, args.capability)
        print(f"{ctx.label}: capability {args.capability} {'allowed' if allowed else 'denied'}")
        return EXIT_OK if allowed else EXIT_DENIED

    if not args.path:
        _error("check needs a path or --capability")
        return EXIT_USAGE
    try:
        modes = AccessModeSet.parse(args.modes)
        path = expand_home(args.path)
        if modes.exec_mode is not None:
            operation = Operation.EXEC
        elif path.endswith("/") and modes == AccessModeSet.parse("r"):
            operation = Operation.LIST
        else:
            operation = Operation.READ
        request = AccessRequest.of(operation, path, modes)
    except (ArmorcageError, ValueError) as e:
        _error(str(e))
        return EXIT_USAGE

    decision = check_access(ctx, profile_set, request)
    verdict = "allowed" if decision.allowed else f"denied (missing {decision.missing_modes})"
    if not decision.allowed and decision.effective:
        verdict += ", not enforced in complain mode"
    print(f"{ctx.label}: {request.path} {modes.canonical()} {verdict}")
    for rule in decision.matched:
        print(f"  matched: {rule.render()}")
    return EXIT_OK if decision.allowed else EXIT_DENIED


def cmd_simulate(args, config: CliConfig) -> int:
    """
    Decide every step of a task without running it. Exit codes: 0 no denials, 1 denials, 2 usage error.
    """
    audit_log = AuditLog(config.audit_log)
    try:
        profile_set = _apply_mode(load_profiles(config), args.profile, args.mode)
        ctx = confined(args.profile) if args.profile else UNCONFINED
        if args.profile:
            profile_set.get(args.profile)
        script = load_task(args.task)
    except (ArmorcageError, ValueError, OSError) as e:
        _error(str(e))
        return EXIT_USAGE

    denials = []

    def record(audit):
        denials.append(audit)
        audit_log.append_record(audit)

    runner = TaskRunner(profile_set, ctx, simulate=True, home=args.home, audit=record)
    outcome = "completed"
    try:
        runner.run(script)
    except PolicyDenied as e:
        outcome = f"stopped: {e}"
    except TaskError as e:
        outcome = f"failed: {e}"
    for decision in runner.decisions:
        print(f"step {decision.step}: {decision.operation} {decision.path} "
              f"{'allowed' if decision.allowed else 'denied'}")
    print(f"{script.name or 'task'} {outcome} under {ctx.label}, {len(denials)} denial(s)")
    return EXIT_FINDINGS if denials or outcome != "completed" else EXIT_OK


def cmd_lint(args, config: CliConfig) -> int:
    """
    Report policy hazards. Exit codes: 0 clean, 1 findings, 2 parse or usage error.
    """
    parser = ProfileParser(IncludeResolver(config.profile_roots), strict=config.strict_includes)
    try:
        if not args.targets:
            profile_set = parser.load_profile_dir(skip_invalid=True)
        else:
            profile_set = ProfileSet()
            for target in args.targets:
                if Path(target).is_file():
                    profile_set = profile_set.merge(parser.parse_file(target))
                else:
                    profile_set = profile_set.merge(parser.load_profile_dir([target]))
    except (ParseError, ValueError, OSError) as e:
        _error(str(e))
        return EXIT_USAGE

    diagnostics = lint_profiles(profile_set)
    for diagnostic in diagnostics:
        print(diagnostic)
    print(f"{len(profile_set)} profile(s), {len(diagnostics)} diagnostic(s)")
    return EXIT_FINDINGS if has_findings(diagnostics) else EXIT_OK


def cmd_logprof(args, config: CliConfig) -> int:
    """
    Suggest rules from an audit log. Exit codes: 0 nothing to suggest, 1 suggestions, 2 usage error.
    """
    try:
        text = sys.stdin.read() if args.log == "-" else Path(args.log).read_text(encoding="utf-8")
        profile_set = load_profiles(config)
    except (ArmorcageError, OSError, UnicodeDecodeError) as e:
        _error(str(e))
        return EXIT_USAGE

    records, diagnostics = parse_log(text)
    for diagnostic in diagnostics:
        _error(f"{args.log}: {diagnostic}")
    suggestions = suggest_rules(records, profile_set, generalize=args.generalize)
    for suggestion in suggestions:
        print(suggestion)
    if args.apply and suggestions:
        updated = apply_suggestions(profile_set, suggestions)
        for name in sorted({suggestion.profile for suggestion in suggestions}):
            print()
            print(serialize_profile(updated.get(name)), end="")
    return EXIT_FINDINGS if suggestions else EXIT_OK


def cmd_limits(args, config: CliConfig) -> int:
    """Print the resource-limit table of a process. Exit codes: 0, 2 when the process is missing."""
    try:
        rows = limits_table(args.pid)
    except (ArmorcageError, ProcessLookupError) as e:
        _error(str(e))
        return EXIT_USAGE
    print(f"{'LIMIT':<12}{'UNIT':<14}{'SOFT':>22}{'HARD':>22}")
    for row in rows:
        print(f"{row.kind.value:<12}{row.unit.value:<14}"
              f"{format_limit(row.value.soft):>22}{format_limit(row.value.hard):>22}")
    return EXIT_OK


def cmd_sanitize(args, config: CliConfig) -> int:
    print(sanitize_identifier(args.text))
    return EXIT_OK


def build_parser():
    import argparse

    parser = argparse.ArgumentParser(prog="armorcage", description="Profile-confined, resource-limited evaluation")
    parser.add_argument("--config", type=str, default=None, help="YAML config file (default: conf.yaml)")
    parser.add_argument("--profile-root", action="append", default=[],
                        help="Profile search root, searched before configured roots (repeatable)")
    parser.add_argument("--backend", choices=BACKENDS, default=None, help="Enforcement backend")
    parser.add_argument("--audit-log", type=str, default=None, help="Audit log file (default: stderr)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    subparsers = parser.add_subparsers(dest="command_name", required=True)

    mode_choices = [mode.value for mode in ProfileMode]

    run = subparsers.add_parser("run", help="Run a task or command in a sandbox")
    run.add_argument("--profile", type=str, default=None)
    run.add_argument("--uid", type=str, default=None, help="User id or name")
    run.add_argument("--gid", type=str, default=None, help="Group id or name")
    run.add_argument("--priority", type=int, default=None, help="Niceness, -20..19")
    run.add_argument("--rlimit", action="append", default=[], help="KIND=SOFT[:HARD], e.g. AS=10M (repeatable)")
    run.add_argument("--timeout", type=float, default=None, help="Wall-clock seconds")
    run.add_argument("--workdir", type=str, default=None)
    run.add_argument("--mode", choices=mode_choices, default=None, help="Switch the profile's mode first")
    run.add_argument("--task", type=str, default=None, help="Task file or fixture name")
    run.add_argument("--json", action="store_true", help="Print the result as JSON")
    run.add_argument("--jobs", type=int, default=1, help="Concurrent evaluations (default: 1)")
    run.add_argument("--dangerous", action="store_true", help="Let unbounded fork loops self-replicate")
    run.add_argument("command", nargs="*", help="Command to run after '--'")
    run.set_defaults(handler=cmd_run)

    check = subparsers.add_parser("check", help="Decide one access")
    check.add_argument("profile")
    check.add_argument("path", nargs="?", default=None)
    check.add_argument("modes", nargs="?", default="r")
    check.add_argument("--hat", type=str, default=None)
    check.add_argument("--capability", type=str, default=None)
    check.add_argument("--mode", choices=mode_choices, default=None)
    check.set_defaults(handler=cmd_check)

    simulate = subparsers.add_parser("simulate", help="Decide every step of a task without side effects")
    simulate.add_argument("--profile", type=str, default=None)
    simulate.add_argument("--task", type=str, required=True)
    simulate.add_argument("--mode", choices=mode_choices, default=None)
    simulate.add_argument("--home", type=str, default=None, help="Directory '~' expands to")
    simulate.set_defaults(handler=cmd_simulate)

    lint = subparsers.add_parser("lint", help="Report policy hazards")
    lint.add_argument("targets", nargs="*", help="Profile file paths, or file names under the profile roots (default: all)")
    lint.set_defaults(handler=cmd_lint)

    logprof = subparsers.add_parser("logprof", help="Suggest rules from an audit log")
    logprof.add_argument("log", help="Audit log file, '-' for stdin")
    logprof.add_argument("--generalize", action="store_true", help="Collapse 3+ sibling files into dir/*")
    logprof.add_argument("--apply", action="store_true", help="Print the profiles with suggestions merged")
    logprof.set_defaults(handler=cmd_logprof)

    limits = subparsers.add_parser("limits", help="Show resource limits")
    limits.add_argument("--pid", type=int, default=None)
    limits.set_defaults(handler=cmd_limits)

    sanitize = subparsers.add_parser("sanitize", help="Strip everything but letters and digits")
    sanitize.add_argument("text")
    sanitize.set_defaults(handler=cmd_sanitize)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Command-line entry point.

    Args:
        argv: Arguments without the program name; defaults to sys.argv[1:].

    Returns:
        Process exit status.
    """
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.profile_root, args.backend, args.audit_log, args.verbose)
    except (ValueError, KeyError) as e:
        _error(f"configuration: {e}")
        return EXIT_USAGE
    configure_logging(config.verbosity)
    try:
        return args.handler(args, config)
    except SetupError as e:
        _error(str(e))
        return EXIT_SETUP
    except ArmorcageError as e:
        if config.verbosity >= 2:
            raise
        _error(str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
