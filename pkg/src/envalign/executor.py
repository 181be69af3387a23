"""Install / launch / test execution with captured, bounded logs."""

from __future__ import annotations

import os
import re
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional

STREAM_CAP = 256 * 1024
KILL_GRACE = 5.0
WORKSPACE_TOKEN = "<workspace>"
SITE_DIR = ".envalign/site"


# test-runner summaries that embed wall-clock time
_RUNNER_TIMINGS = (
    re.compile(r"(?m)^(Ran \d+ tests? in )\d+(?:\.\d+)?s$"),        # unittest
    re.compile(r"(?m)^(=+ .* in )\d+(?:\.\d+)?s( \(\d+:\d\d:\d\d\))?( =+)$"),  # pytest
)


def mask_timings(text: str) -> str:
    """Replace runner-reported durations with ``<duration>`` so reports are reproducible."""
    text = _RUNNER_TIMINGS[0].sub(r"\1<duration>", text)
    return _RUNNER_TIMINGS[1].sub(r"\1<duration>\3", text)


class Phase(str, Enum):
    INSTALL = "install"
    LAUNCH = "launch"
    TEST = "test"


PHASE_ORDER = (Phase.INSTALL, Phase.LAUNCH, Phase.TEST)

DEFAULT_ENV_ALLOWLIST = ("PATH", "HOME", "LANG", "LC_ALL", "LC_CTYPE", "TMPDIR", "SYSTEMROOT")


def default_install_cmd(local_index: Optional[str] = None) -> list[str]:
    cmd = ["{python}", "-m", "envalign.install", "--target", "{root}/" + SITE_DIR]
    if local_index:
        cmd += ["--local-index", local_index]
    return cmd + ["{root}"]


DEFAULT_LAUNCH_CMD = ["{python}", "-S", "{root}/main.py"]
DEFAULT_TEST_CMD = ["{python}", "-S", "-m", "unittest", "discover", "-s", "{root}", "-t", "{root}"]


@dataclass(frozen=True)
class ExecConfig:
    """Validation setting. A phase whose command is None is disabled.

    Commands are argv templates; ``{root}`` expands to the workspace and
    ``{python}`` to the running interpreter. The launch and test defaults run
    the interpreter without site-packages, so only dependencies installed into
    the workspace's private site directory are importable.
    """

    install_cmd: Optional[list[str]] = field(default_factory=default_install_cmd)
    launch_cmd: Optional[list[str]] = field(default_factory=lambda: list(DEFAULT_LAUNCH_CMD))
    test_cmd: Optional[list[str]] = field(default_factory=lambda: list(DEFAULT_TEST_CMD))
    timeout: float = 120.0
    env_allowlist: tuple[str, ...] = DEFAULT_ENV_ALLOWLIST
    env_extra: dict = field(default_factory=lambda: {
        "PYTHONPATH": "{root}/" + SITE_DIR,
        "PYTHONDONTWRITEBYTECODE": "1",
        "PYTHONHASHSEED": "0",
    })
    workspace_policy: str = "in-place"
    stream_cap: int = STREAM_CAP

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.workspace_policy not in ("in-place", "copy-to-temp"):
            raise ValueError(f"unknown workspace policy {self.workspace_policy!r}")
        for phase in PHASE_ORDER:
            cmd = self.command(phase)
            if cmd is not None and not cmd:
                raise ValueError(f"{phase.value} command is empty")

    def command(self, phase: Phase) -> Optional[list[str]]:
        return {Phase.INSTALL: self.install_cmd, Phase.LAUNCH: self.launch_cmd,
                Phase.TEST: self.test_cmd}[Phase(phase)]

    @property
    def enabled_phases(self) -> list[Phase]:
        return [p for p in PHASE_ORDER if self.command(p) is not None]

    def with_phases(self, *phases: str) -> "ExecConfig":
        keep = {Phase(p) for p in phases}
        return replace(self,
                       install_cmd=self.install_cmd if Phase.INSTALL in keep else None,
                       launch_cmd=self.launch_cmd if Phase.LAUNCH in keep else None,
                       test_cmd=self.test_cmd if Phase.TEST in keep else None)


@dataclass(frozen=True)
class RawExecutionLog:
    phase: Phase
    exit_code: Optional[int]
    timed_out: bool
    stdout: str
    stderr: str
    duration: float
    stdout_truncated: bool = False
    stderr_truncated: bool = False
    command_not_found: bool = False

    @property
    def ok(self) -> bool:
        return not self.timed_out and self.exit_code == 0

    def to_dict(self, timings: bool = False) -> dict:
        d = {
            "phase": self.phase.value,
            "exit_code": self.exit_code,
            "timed_out": self.timed_out,
            "stdout": self.stdout if timings else mask_timings(self.stdout),
            "stderr": self.stderr if timings else mask_timings(self.stderr),
            "stdout_truncated": self.stdout_truncated,
            "stderr_truncated": self.stderr_truncated,
            "command_not_found": self.command_not_found,
        }
        if timings:
            d["duration"] = round(self.duration, 3)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RawExecutionLog":
        return cls(Phase(d["phase"]), d.get("exit_code"), bool(d.get("timed_out", False)),
                   d.get("stdout", ""), d.get("stderr", ""), float(d.get("duration", 0.0)),
                   bool(d.get("stdout_truncated", False)), bool(d.get("stderr_truncated", False)),
                   bool(d.get("command_not_found", False)))


def _expand(template: str, root: Path) -> str:
    return template.replace("{root}", str(root)).replace("{python}", sys.executable)


def _clean_stream(data: bytes, cap: int, root: Path) -> tuple[str, bool]:
    truncated = len(data) > cap
    if truncated:
        data = data[-cap:]  # tails carry the error
    text = data.decode("utf-8", errors="replace")
    for prefix in {str(root), os.path.realpath(root)}:
        text = text.replace(prefix, WORKSPACE_TOKEN)
    return text, truncated


def _environment(config: ExecConfig, root: Path) -> dict[str, str]:
    env = {k: os.environ[k] for k in config.env_allowlist if k in os.environ}
    for k, v in config.env_extra.items():
        env[k] = _expand(v, root)
    return env


def run_phase(workspace: os.PathLike | str, phase: Phase | str, config: ExecConfig) -> RawExecutionLog:
    """Run one phase in ``workspace``; never raises on failure of the command.

    Streams are captured with the workspace path replaced by ``<workspace>``
    so logs do not depend on where the repository lives.
    """
    phase = Phase(phase)
    root = Path(workspace).resolve()
    template = config.command(phase)
    if template is None:
        raise ValueError(f"phase {phase.value} is disabled")
    argv = [_expand(a, root) for a in template]

    start = time.monotonic()
    try:
        proc = subprocess.Popen(argv, cwd=root, env=_environment(config, root),
                                stdin=subprocess.DEVNULL, stdout=subprocess.PIPE,
                                stderr=subprocess.PIPE, start_new_session=True)
    except (FileNotFoundError, PermissionError) as exc:
        return RawExecutionLog(phase, 127, False, "", f"command not found: {argv[0]} ({exc.strerror})",
                               time.monotonic() - start, command_not_found=True)

    timed_out = False
    try:
        out, err = proc.communicate(timeout=config.timeout)
    except subprocess.TimeoutExpired:
        timed_out = True
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        try:
            out, err = proc.communicate(timeout=KILL_GRACE)
        except subprocess.TimeoutExpired:
            proc.kill()
            out, err = b"", b""
    duration = time.monotonic() - start

    stdout, out_trunc = _clean_stream(out or b"", config.stream_cap, root)
    stderr, err_trunc = _clean_stream(err or b"", config.stream_cap, root)
    return RawExecutionLog(phase, None if timed_out else proc.returncode, timed_out,
                           stdout, stderr, duration, out_trunc, err_trunc)


def _run_sequence(root: Path, config: ExecConfig) -> list[RawExecutionLog]:
    logs = []
    for phase in config.enabled_phases:
        log = run_phase(root, phase, config)
        logs.append(log)
        if not log.ok:
            break  # downstream phases would be masked
    return logs


def run_all(workspace: os.PathLike | str, config: ExecConfig) -> list[RawExecutionLog]:
    """Enabled phases in install -> launch -> test order, stopping at the first failure."""
    if config.workspace_policy == "copy-to-temp":
        with tempfile.TemporaryDirectory(prefix="envalign-") as tmp:
            copy = Path(tmp) / "repo"
            shutil.copytree(workspace, copy, symlinks=True,
                            ignore=shutil.ignore_patterns(".envalign"))
            return _run_sequence(copy, config)
    return _run_sequence(Path(workspace), config)


def pass_exec(logs: list[RawExecutionLog], config: Optional[ExecConfig] = None) -> bool:
    """True iff every enabled phase ran and exited 0 (vacuously true with none enabled)."""
    if config is not None:
        ran = [log.phase for log in logs]
        if ran != config.enabled_phases:
            return False
    return all(log.ok for log in logs)
