"""
Fork supervisor.

Each evaluation runs in a forked child that sits in its own process group.
The child applies the sandbox spec (resource limits, credentials, priority,
profile, working directory), runs the job and exits; nothing it changes
reaches the supervisor. The parent streams the payload and report pipes,
enforces the wall-clock timeout on the whole group and collects every
descendant.
"""

import ctypes
import ctypes.util
import json
import logging
import os
import selectors
import shutil
import signal
import sys
import threading
import time
from typing import Dict, List, Optional, Set

import psutil

from src.audit.audit_log import AuditLog
from src.engine.decision import AccessRequest, Operation, check_access
from src.errors import ArmorcageError, PolicyDenied, ProfileNotFound, SetupError, TaskError
from src.limits.identity import set_identity
from src.limits.priority import set_priority
from src.limits.rlimits import RlimitKind, apply_rlimits, set_rlimit
from src.policy.profile import ProfileSet
from src.supervisor.backend import BackendFactory, EnforcementBackend
from src.supervisor.channel import CHUNK_SIZE, decode_frame, read_available, split_frames, write_frame
from src.supervisor.sandbox_spec import (
    DEFAULT_GRACE_SECONDS,
    CommandJob,
    EvalResult,
    EvalStatus,
    Job,
    ResourceUsage,
    SandboxSpec,
)
from src.tasks.runner import DEFAULT_FORK_BOUND, TaskRunner

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SETUP = 64
EXIT_DENIED = 65
EXIT_TASK_ERROR = 66

LIMIT_SIGNALS = frozenset({signal.SIGXCPU, signal.SIGXFSZ, signal.SIGKILL, signal.SIGSEGV, signal.SIGBUS})
RESET_SIGNALS = (signal.SIGINT, signal.SIGTERM, signal.SIGXCPU, signal.SIGXFSZ, signal.SIGPIPE)

_PR_SET_CHILD_SUBREAPER = 36
_POLL_SECONDS = 0.05
_GROUP_DRAIN_SECONDS = 2.0


def _load_libc() -> Optional[ctypes.CDLL]:
    libc_path = ctypes.util.find_library("c")
    if not libc_path:
        return None
    return ctypes.CDLL(libc_path, use_errno=True)


def become_subreaper() -> bool:
    """Adopt orphaned descendants so reap() can collect them (Linux only)."""
    if not sys.platform.startswith("linux"):
        return False
    libc = _load_libc()
    if libc is None:
        return False
    if libc.prctl(_PR_SET_CHILD_SUBREAPER, 1, 0, 0, 0) != 0:
        logger.debug(f"prctl(PR_SET_CHILD_SUBREAPER) failed: {os.strerror(ctypes.get_errno())}")
        return False
    return True


def _signal_name(signum: int) -> str:
    try:
        return signal.Signals(signum).name
    except ValueError:
        return f"signal {signum}"


def _job_label(job: Job) -> str:
    if isinstance(job, CommandJob):
        return str(job)
    return job.name or f"{len(job)}-step task"


def _killpg_quietly(pgid: int, signum: int):
    try:
        os.killpg(pgid, signum)
    except (ProcessLookupError, PermissionError):
        pass


def reap(pgids: Set[int]) -> int:
    """
    Kill and collect the children of the calling process that belong to one
    of the given process groups. Other children are left alone.

    Returns:
        Number of children collected.
    """
    collected = 0
    for child in psutil.Process().children(recursive=False):
        try:
            if os.getpgid(child.pid) not in pgids:
                continue
        except ProcessLookupError:
            continue
        try:
            os.kill(child.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        try:
            os.waitpid(child.pid, 0)
            collected += 1
        except ChildProcessError:
            pass
    return collected


class Supervisor:
    """
    Runs jobs in sandboxed children. Safe to use from several threads.
    """
    def __init__(
        self,
        profile_set: ProfileSet,
        backend: str = "auto",
        audit_log: Optional[AuditLog] = None,
        grace: float = DEFAULT_GRACE_SECONDS,
        dangerous: bool = False,
        fork_bound: int = DEFAULT_FORK_BOUND,
    ):
        """
        Initialize the supervisor.

        Args:
            profile_set: Loaded profiles.
            backend: 'auto', 'native' or 'simulated'.
            audit_log: Receives the audit lines reported by children; None discards them.
            grace: Seconds between the termination and kill signals on timeout.
            dangerous: Let fork bombs self-replicate without a cap.
            fork_bound: Cap on unbounded fork loops when not dangerous.
        """
        self.profile_set = profile_set
        self.backend = backend
        self.audit_log = audit_log
        self.grace = grace
        self.dangerous = dangerous
        self.fork_bound = fork_bound
        self.spawned = 0
        self.collected = 0
        self._finished_pgids: Set[int] = set()
        self._lock = threading.Lock()
        self.subreaper = become_subreaper()

    def secure_eval(self, job: Job, spec: SandboxSpec) -> EvalResult:
        """
        Run job in a child confined by spec.

        Args:
            job: TaskScript, or CommandJob whose standard output is the payload.
            spec: Sandbox to apply.

        Returns:
            EvalResult. Failures of the child never raise.
        """
        try:
            spec.validate(self.profile_set)
            backend = BackendFactory.create_backend(self.backend, self.profile_set, spec.profile)
        except (ProfileNotFound, ValueError) as e:
            return EvalResult(EvalStatus.SETUP_ERROR, message=f"profile: {e}", step="profile")

        payload_r, payload_w = os.pipe()
        report_r, report_w = os.pipe()

        # Prevent parent buffered output from being duplicated after fork.
        sys.stdout.flush()
        sys.stderr.flush()

        with self._lock:
            try:
                pid = os.fork()
            except OSError as e:
                for fd in (payload_r, payload_w, report_r, report_w):
                    os.close(fd)
                return EvalResult(EvalStatus.SETUP_ERROR, message=f"fork: {e.strerror}", step="fork")
            if pid == 0:
                os.close(payload_r)
                os.close(report_r)
                self._child_entry(job, spec, backend, payload_w, report_w)
                os._exit(EXIT_SETUP)
            try:
                os.setpgid(pid, pid)
            except OSError:
                pass
            self.spawned += 1

        os.close(payload_w)
        os.close(report_w)
        logger.info(f"Started {pid} for '{_job_label(job)}' with {spec.describe()}")
        try:
            return self._wait_and_collect(pid, job, spec, payload_r, report_r)
        finally:
            os.close(payload_r)
            os.close(report_r)

    def reap(self) -> int:
        """
        Collect leftover descendants of finished evaluations.

        Only process groups this supervisor created are touched; groups that
        have no members left are forgotten.
        """
        with self._lock:
            pgids = set(self._finished_pgids)
            count = reap(pgids)
            for pgid in pgids:
                try:
                    os.killpg(pgid, 0)
                except ProcessLookupError:
                    self._finished_pgids.discard(pgid)
                except PermissionError:
                    pass
            self.collected += count
        if count:
            logger.info(f"Reaped {count} leftover process(es)")
        return count

    # Child side

    def _child_entry(self, job: Job, spec: SandboxSpec, backend: EnforcementBackend,
                     payload_fd: int, report_fd: int):
        """Never returns."""
        logging.disable(logging.CRITICAL)
        step = "setpgid"
        try:
            os.setpgid(0, 0)
            for signum in RESET_SIGNALS:
                signal.signal(signum, signal.SIG_DFL)
            step = "rlimits"
            apply_rlimits(spec.rlimits, skip=[RlimitKind.NPROC])
            if spec.identity is not None:
                step = "identity"
                set_identity(spec.identity)
            if RlimitKind.NPROC in spec.rlimits:
                step = "nproc"
                value = spec.rlimits[RlimitKind.NPROC]
                set_rlimit(RlimitKind.NPROC, value.hard, value.soft)
            if spec.priority is not None:
                step = "priority"
                set_priority(spec.priority)
            step = "profile"
            ctx = backend.enter(spec.profile)
            if spec.workdir:
                step = "workdir"
                os.chdir(spec.workdir)
        except SetupError as e:
            self._child_exit(report_fd, EXIT_SETUP, EvalStatus.SETUP_ERROR, str(e), e.step)
        except (ArmorcageError, OSError) as e:
            self._child_exit(report_fd, EXIT_SETUP, EvalStatus.SETUP_ERROR, f"{step}: {e}", step)
        except BaseException as e:
            self._child_exit(report_fd, EXIT_SETUP, EvalStatus.SETUP_ERROR, f"{step}: {e!r}", step)

        if isinstance(job, CommandJob):
            self._child_exec(job, ctx, backend, payload_fd, report_fd)
        self._child_run_task(job, ctx, payload_fd, report_fd)

    def _child_run_task(self, job, ctx, payload_fd: int, report_fd: int):
        audit: List[str] = []
        runner = TaskRunner(
            self.profile_set, ctx,
            audit=lambda record: audit.append(record.to_line()),
            fork_bound=self.fork_bound,
            dangerous=self.dangerous,
        )
        try:
            payload = runner.run(job)
        except PolicyDenied as e:
            self._child_exit(report_fd, EXIT_DENIED, EvalStatus.DENIED, str(e), e.step, audit)
        except TaskError as e:
            self._child_exit(report_fd, EXIT_TASK_ERROR, EvalStatus.TASK_ERROR, str(e), e.step, audit)
        except BaseException as e:
            self._child_exit(report_fd, EXIT_TASK_ERROR, EvalStatus.TASK_ERROR, repr(e), None, audit)
        try:
            write_frame(payload_fd, payload)
        except OSError as e:
            self._child_exit(report_fd, EXIT_TASK_ERROR, EvalStatus.TASK_ERROR, f"payload: {e}", None, audit)
        self._child_exit(report_fd, EXIT_OK, EvalStatus.OK, "", None, audit)

    def _child_exec(self, job: CommandJob, ctx, backend: EnforcementBackend, payload_fd: int, report_fd: int):
        program = shutil.which(job.argv[0]) or job.argv[0]
        if backend.checks_commands and not ctx.is_unconfined:
            decision = check_access(ctx, self.profile_set, AccessRequest.of(Operation.EXEC, os.path.abspath(program)))
            audit = [decision.audit.to_line()] if decision.audit is not None else []
            if not decision.effective:
                self._child_exit(report_fd, EXIT_DENIED, EvalStatus.DENIED,
                                 f"exec {program} denied (missing modes: {decision.missing_modes})", "exec", audit)
            if audit:
                # complain-mode denial: report it before the exec closes the channel
                write_frame(report_fd, self._report(EvalStatus.OK, "", None, audit))
        try:
            os.dup2(payload_fd, 1)
            os.execv(program, list(job.argv))
        except OSError as e:
            self._child_exit(report_fd, EXIT_TASK_ERROR, EvalStatus.TASK_ERROR,
                             f"cannot execute '{program}': {e.strerror}", "exec")

    @staticmethod
    def _report(status: EvalStatus, message: str, step, audit: Optional[List[str]]) -> bytes:
        return json.dumps({"status": status.value, "message": message, "step": step,
                           "audit": audit or []}).encode("utf-8")

    def _child_exit(self, report_fd: int, code: int, status: EvalStatus, message: str, step,
                    audit: Optional[List[str]] = None):
        try:
            write_frame(report_fd, self._report(status, message, step, audit))
        except BaseException:
            pass
        os._exit(code)

    # Parent side

    def _wait_and_collect(self, pid: int, job: Job, spec: SandboxSpec, payload_fd: int, report_fd: int) -> EvalResult:
        buffers: Dict[int, bytearray] = {payload_fd: bytearray(), report_fd: bytearray()}
        start = time.monotonic()
        deadline = start + spec.timeout if spec.timeout else None
        timed_out = False
        status, rusage = self._poll_child(pid, buffers, deadline)
        if status is None:
            timed_out = True
            logger.warning(f"Child {pid} did not return within {spec.timeout:g} seconds, terminating")
            status, rusage = self._terminate(pid)
        duration = time.monotonic() - start

        with self._lock:
            self._finished_pgids.add(pid)
            self.collected += 1
        self._drain_group(pid)
        for fd in buffers:
            buffers[fd].extend(read_available(fd))

        usage = ResourceUsage(rusage.ru_utime + rusage.ru_stime, rusage.ru_maxrss * 1024)
        reports = self._decode_reports(bytes(buffers[report_fd]))
        self._forward_audit(reports)
        result = self._build_result(status, job, bytes(buffers[payload_fd]), reports, usage, duration,
                                    timed_out, spec.timeout)
        logger.info(f"Child {pid}: {result.status.value} after {duration:.3f}s")
        return result

    def _poll_child(self, pid: int, buffers: Dict[int, bytearray], deadline: Optional[float]):
        """Pump both pipes until the child exits (status, rusage) or the deadline passes (None, None)."""
        with selectors.DefaultSelector() as selector:
            for fd in buffers:
                os.set_blocking(fd, False)
                selector.register(fd, selectors.EVENT_READ)
            while True:
                done, status, rusage = os.wait4(pid, os.WNOHANG)
                if done:
                    return status, rusage
                now = time.monotonic()
                if deadline is not None and now >= deadline:
                    return None, None
                wait = _POLL_SECONDS if deadline is None else min(_POLL_SECONDS, deadline - now)
                if not selector.get_map():
                    time.sleep(wait)
                    continue
                for key, _ in selector.select(wait):
                    try:
                        data = os.read(key.fd, CHUNK_SIZE)
                    except BlockingIOError:
                        continue
                    if data:
                        buffers[key.fd].extend(data)
                    else:
                        selector.unregister(key.fd)

    def _terminate(self, pid: int):
        _killpg_quietly(pid, signal.SIGTERM)
        grace_end = time.monotonic() + self.grace
        while time.monotonic() < grace_end:
            done, status, rusage = os.wait4(pid, os.WNOHANG)
            if done:
                return status, rusage
            time.sleep(0.01)
        _killpg_quietly(pid, signal.SIGKILL)
        _, status, rusage = os.wait4(pid, 0)
        return status, rusage

    def _drain_group(self, pgid: int):
        """Kill what is left of the child's process group and wait until it is gone."""
        _killpg_quietly(pgid, signal.SIGKILL)
        end = time.monotonic() + _GROUP_DRAIN_SECONDS
        while True:
            self.reap()
            try:
                os.killpg(pgid, 0)
            except (ProcessLookupError, PermissionError):
                return
            if time.monotonic() >= end:
                logger.warning(f"Process group {pgid} still has members after kill")
                return
            time.sleep(0.01)

    @staticmethod
    def _decode_reports(buffer: bytes) -> List[dict]:
        reports = []
        for frame in split_frames(buffer):
            try:
                reports.append(json.loads(frame.decode("utf-8")))
            except ValueError:
                logger.warning("Discarding a malformed child report")
        return reports

    def _forward_audit(self, reports: List[dict]):
        lines = [line for report in reports for line in report.get("audit", [])]
        if lines and self.audit_log is not None:
            self.audit_log.append_lines(lines)

    @staticmethod
    def _build_result(status: int, job: Job, raw_payload: bytes, reports: List[dict], usage: ResourceUsage,
                      duration: float, timed_out: bool, timeout: Optional[float]) -> EvalResult:
        is_command = isinstance(job, CommandJob)
        payload = raw_payload if is_command else (decode_frame(raw_payload) or b"")
        final = reports[-1] if reports else None

        def result(eval_status: EvalStatus, message: str = "", step=None, signal_name=None):
            return EvalResult(eval_status, payload, usage, duration, signal_name, message, step)

        if timed_out:
            return result(EvalStatus.TIMEOUT, f"terminated after {timeout:g}s")
        if os.WIFSIGNALED(status):
            signum = os.WTERMSIG(status)
            name = _signal_name(signum)
            if signum in LIMIT_SIGNALS:
                return result(EvalStatus.LIMIT_KILLED, f"killed by {name}", signal_name=name)
            return result(EvalStatus.TASK_ERROR, f"killed by {name}", signal_name=name)

        code = os.WEXITSTATUS(status)
        if final is not None and final.get("status") != EvalStatus.OK.value:
            return result(EvalStatus(final["status"]), final.get("message", ""), final.get("step"))
        if is_command:
            if code == EXIT_OK:
                return result(EvalStatus.OK)
            return result(EvalStatus.TASK_ERROR, f"command exited with status {code}")
        if code == EXIT_OK and final is not None and decode_frame(raw_payload) is not None:
            return result(EvalStatus.OK)
        if code == EXIT_SETUP:
            return result(EvalStatus.SETUP_ERROR, "setup failed without a report")
        if code == EXIT_DENIED:
            return result(EvalStatus.DENIED, "denied without a report")
        return result(EvalStatus.TASK_ERROR, f"child exited with status {code} without a complete payload")


def secure_eval(job: Job, spec: SandboxSpec, profile_set: ProfileSet, **options) -> EvalResult:
    """Run one job with a throwaway Supervisor. Options are passed to Supervisor."""
    return Supervisor(profile_set, **options).secure_eval(job, spec)
