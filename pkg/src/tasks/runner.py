"""
Interpreter for task scripts.

Every step that touches a path asks the policy engine first. Denials in
enforce mode abort the script with PolicyDenied; in complain mode they are
only reported through the audit callback.
"""

import errno
import logging
import os
import pwd
import re
import signal
import subprocess
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from src.audit.record import AuditRecord
from src.engine.context import SubjectContext
from src.engine.decision import AccessRequest, Decision, Operation, check_access, exec_transition
from src.errors import AllocationFailure, ExecTransitionError, ForkFailure, PathError, PolicyDenied, TaskError
from src.policy.pattern import normalize_path
from src.policy.profile import ProfileSet
from src.tasks.steps import (
    AllocBytes,
    BurnCpu,
    Emit,
    Exec,
    ForkN,
    ListDir,
    ReadFile,
    ScanPattern,
    Sleep,
    TaskScript,
    TaskStep,
    WriteFile,
)

logger = logging.getLogger(__name__)

DEFAULT_FORK_BOUND = 64
FORK_HOLD_SECONDS = 1.0
FORK_FAILURE_MESSAGE = "unable to fork, possible reason: Resource temporarily unavailable"

AuditCallback = Callable[[AuditRecord], None]


@dataclass(frozen=True)
class StepDecision:
    """One access decision taken while running a script."""
    step: int
    operation: str
    path: str
    allowed: bool


class TaskRunner:
    """
    Runs a TaskScript in the calling process under a subject context.
    """
    def __init__(
        self,
        profile_set: ProfileSet,
        ctx: SubjectContext,
        simulate: bool = False,
        home: Optional[str] = None,
        audit: Optional[AuditCallback] = None,
        fork_bound: int = DEFAULT_FORK_BOUND,
        dangerous: bool = False,
    ):
        """
        Initialize the runner.

        Args:
            profile_set: Loaded profiles.
            ctx: Starting context; exec steps may replace it.
            simulate: Decide every step but skip real effects (allocation, CPU
                burn, forks, sleeps, exec, file contents). Scans still walk the tree.
            home: Directory that '~' expands to; defaults to the effective user's home.
            audit: Receives the AuditRecord of every denial.
            fork_bound: Cap on 'forkn unbounded' when not dangerous.
            dangerous: Let 'forkn unbounded' self-replicate without a cap.
        """
        self.profile_set = profile_set
        self.ctx = ctx
        self.simulate = simulate
        self.home = home
        self.audit = audit
        self.fork_bound = fork_bound
        self.dangerous = dangerous
        self.decisions: List[StepDecision] = []
        self._payload = bytearray()
        self._handlers: Dict[type, Callable[[int, TaskStep], None]] = {
            ReadFile: self._read_file,
            WriteFile: self._write_file,
            ListDir: self._list_dir,
            Exec: self._exec,
            AllocBytes: self._alloc,
            BurnCpu: self._burn,
            ForkN: self._forkn,
            Sleep: self._sleep,
            ScanPattern: self._scan,
            Emit: self._emit,
        }

    def run(self, script: TaskScript) -> bytes:
        """
        Run every step in order.

        Returns:
            Payload bytes produced by the steps.

        Raises:
            PolicyDenied: an enforced denial; names step, path and missing modes.
            TaskError: I/O errors, AllocationFailure, ForkFailure.
        """
        for index, step in enumerate(script.steps):
            logger.debug(f"Step {index}: {step}")
            self._handlers[type(step)](index, step)
        return bytes(self._payload)

    @property
    def payload(self) -> bytes:
        return bytes(self._payload)

    def expand_path(self, path: str) -> str:
        """Expand '~' to the home directory and normalize."""
        if path == "~" or path.startswith("~/"):
            path = self._home().rstrip("/") + "/" + path[2:]
        return normalize_path(path)

    def _home(self) -> str:
        if self.home:
            return self.home
        try:
            return pwd.getpwuid(os.geteuid()).pw_dir
        except KeyError:
            return os.environ.get("HOME", "/")

    def _check(self, index: int, operation: Operation, path: str) -> Decision:
        request = AccessRequest.of(operation, path)
        decision = check_access(self.ctx, self.profile_set, request)
        self.decisions.append(StepDecision(index, operation.value, request.path, decision.allowed))
        if decision.audit is not None and self.audit is not None:
            self.audit(decision.audit)
        if not decision.effective:
            raise PolicyDenied(index, request.path, decision.missing_modes, operation.value)
        return decision

    def _resolve(self, index: int, path: str) -> str:
        try:
            return self.expand_path(path)
        except PathError as e:
            raise TaskError(f"step {index}: {e}", step=index) from None

    def _read_file(self, index: int, step: ReadFile):
        path = self._resolve(index, step.path)
        self._check(index, Operation.READ, path)
        if self.simulate:
            return
        try:
            with open(path, "rb") as f:
                self._payload.extend(f.read())
        except OSError as e:
            raise TaskError(f"step {index}: cannot open file '{path}': {e.strerror}", step=index) from None

    def _write_file(self, index: int, step: WriteFile):
        path = self._resolve(index, step.path)
        self._check(index, Operation.WRITE, path)
        if self.simulate:
            return
        try:
            with open(path, "wb") as f:
                f.write(step.data)
        except OSError as e:
            raise TaskError(f"step {index}: cannot write '{path}': {e.strerror}", step=index) from None

    def _list_dir(self, index: int, step: ListDir):
        path = self._resolve(index, step.path)
        self._check(index, Operation.LIST, path)
        if self.simulate:
            return
        try:
            names = sorted(os.listdir(path))
        except OSError as e:
            raise TaskError(f"step {index}: cannot list '{path}': {e.strerror}", step=index) from None
        self._payload.extend("".join(f"{name}\n" for name in names).encode("utf-8"))

    def _exec(self, index: int, step: Exec):
        path = self._resolve(index, step.path)
        self._check(index, Operation.EXEC, path)
        try:
            self.ctx = exec_transition(self.ctx, self.profile_set, path)
        except ExecTransitionError as e:
            raise TaskError(f"step {index}: {e}", step=index) from None
        logger.debug(f"Step {index}: context after exec is {self.ctx.label}")
        if self.simulate:
            return
        try:
            completed = subprocess.run([path, *step.args], stdout=subprocess.PIPE, stdin=subprocess.DEVNULL, check=False)
        except OSError as e:
            raise TaskError(f"step {index}: cannot execute '{path}': {e.strerror}", step=index) from None
        self._payload.extend(completed.stdout)
        if completed.returncode != 0:
            raise TaskError(f"step {index}: {path} exited with status {completed.returncode}", step=index)

    def _alloc(self, index: int, step: AllocBytes):
        if self.simulate:
            return
        try:
            block = bytearray(step.n)
        except MemoryError:
            raise AllocationFailure(
                f"step {index}: cannot allocate vector of size {step.n / 1024 ** 2:.1f} Mb", step=index
            ) from None
        del block

    def _burn(self, index: int, step: BurnCpu):
        if self.simulate:
            return
        start = time.process_time()
        value = 0
        while time.process_time() - start < step.seconds:
            for i in range(10000):
                value = (value * 31 + i) % 1000003

    def _forkn(self, index: int, step: ForkN):
        if self.simulate:
            return
        replicate = step.unbounded and self.dangerous
        if step.unbounded and not self.dangerous:
            logger.warning(f"Step {index}: unbounded fork loop clamped to {self.fork_bound}")
        target = step.count if step.count is not None else self.fork_bound
        children: List[int] = []
        try:
            while replicate or len(children) < target:
                pid = self._fork_once(index)
                if pid == 0:
                    self._hold_fork_slot(replicate)
                children.append(pid)
        finally:
            for pid in children:
                if replicate:
                    _kill_quietly(pid)
                try:
                    os.waitpid(pid, 0)
                except ChildProcessError:
                    pass

    def _fork_once(self, index: int) -> int:
        try:
            return os.fork()
        except OSError as e:
            if e.errno in (errno.EAGAIN, errno.ENOMEM):
                raise ForkFailure(f"step {index}: {FORK_FAILURE_MESSAGE}", step=index) from None
            raise TaskError(f"step {index}: fork failed: {e.strerror}", step=index) from None

    @staticmethod
    def _hold_fork_slot(replicate: bool):
        # forked child: never returns into the interpreter loop
        try:
            if replicate:
                while True:
                    try:
                        os.fork()
                    except OSError:
                        time.sleep(FORK_HOLD_SECONDS)
            time.sleep(FORK_HOLD_SECONDS)
        finally:
            os._exit(0)

    def _sleep(self, index: int, step: Sleep):
        if not self.simulate:
            time.sleep(step.seconds)

    def _scan(self, index: int, step: ScanPattern):
        root = self._resolve(index, step.root)
        try:
            matches = scan_pattern(root, step.regex, step.size_cap, check=lambda op, path: self._check(index, op, path))
        except TaskError as e:
            if e.step is not None:
                raise
            raise TaskError(f"step {index}: {e}", step=index) from None
        for path, match in matches:
            self._payload.extend(f"{path} : {match}\n".encode("utf-8"))

    def _emit(self, index: int, step: Emit):
        self._payload.extend(step.data)


def scan_pattern(root: str, regex: str, size_cap: int,
                 check: Optional[Callable[[Operation, str], object]] = None) -> List[Tuple[str, str]]:
    """
    Recursively search files under root for regex.

    Directories are visited in sorted order; every directory and file passes
    check(operation, path) before it is opened. Files larger than size_cap
    bytes are skipped. Symbolic links to directories are not followed.

    Returns:
        (path, matched text) pairs in visit order.
    """
    compiled = re.compile(regex)
    found: List[Tuple[str, str]] = []
    check = check or (lambda operation, path: None)

    def visit(directory: str):
        listing = directory if directory.endswith("/") else directory + "/"
        check(Operation.LIST, listing)
        try:
            entries = sorted(os.scandir(directory), key=lambda entry: entry.name)
        except FileNotFoundError:
            raise TaskError(f"no such directory: {directory}") from None
        except OSError as e:
            raise TaskError(f"cannot list '{directory}': {e.strerror}") from None
        for entry in entries:
            path = listing + entry.name
            if entry.is_dir(follow_symlinks=False):
                visit(path)
                continue
            if not entry.is_file():
                continue
            check(Operation.READ, path)
            try:
                if entry.stat().st_size > size_cap:
                    continue
                with open(path, "rb") as f:
                    text = f.read().decode("utf-8", errors="replace")
            except OSError as e:
                raise TaskError(f"cannot open file '{path}': {e.strerror}") from None
            found.extend((path, match.group(0)) for match in compiled.finditer(text))

    visit(root.rstrip("/") or "/")
    return found


def run_task(script: TaskScript, ctx: SubjectContext, profile_set: ProfileSet, **options) -> bytes:
    """Run script under ctx. Options are passed to TaskRunner."""
    return TaskRunner(profile_set, ctx, **options).run(script)


def _kill_quietly(pid: int):
    try:
        os.kill(pid, signal.SIGKILL)
    except ProcessLookupError:
        pass
