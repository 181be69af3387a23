"""Normalization of raw execution logs into fixed-schema evidence records."""

from __future__ import annotations

import json
import logging
import re
import subprocess
import sys
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path, PurePosixPath
from typing import Iterable, Optional, Protocol

from .executor import PHASE_ORDER, WORKSPACE_TOKEN, Phase, RawExecutionLog
from .ext_graph import ImportClass, resolve_import_target
from .graph import Graph
from .names import load_stdlib
from .repo_model import ScanConfig
from .source_parser import InvalidSourcePath, ParseFailure, derive_module_name, extract_imports

log = logging.getLogger(__name__)

EXCERPT_LIMIT = 2048


class EvidenceKind(str, Enum):
    DEPENDENCY_INSTALL_FAILURE = "dependency-install-failure"
    MISSING_MODULE = "missing-module"
    MISSING_SYMBOL = "missing-symbol"
    PARSE_FAILURE = "parse-failure"
    TEST_ASSERTION_FAILURE = "test-assertion-failure"
    RUNTIME_EXCEPTION_OTHER = "runtime-exception-other"
    TIMEOUT = "timeout"
    NONZERO_EXIT_OTHER = "nonzero-exit-other"


class Origin(str, Enum):
    EXTERNAL = "external"
    INTERNAL = "internal"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class StackFrame:
    file: str
    line: int
    scope: str = "<module>"
    in_repo: bool = False

    def to_dict(self) -> dict:
        return {"file": self.file, "line": self.line, "scope": self.scope, "in_repo": self.in_repo}

    @classmethod
    def from_dict(cls, d: dict) -> "StackFrame":
        return cls(str(d["file"]), int(d["line"]), str(d.get("scope", "<module>")),
                   bool(d.get("in_repo", False)))


@dataclass(frozen=True)
class EvidenceRecord:
    phase: Phase
    kind: EvidenceKind
    subject: Optional[str] = None
    origin_hint: Origin = Origin.UNKNOWN
    file: Optional[str] = None
    line: Optional[int] = None
    frames: tuple[StackFrame, ...] = ()
    excerpt: str = ""
    confidence: str = "certain"
    occurrences: int = 1

    def to_dict(self) -> dict:
        return {
            "phase": self.phase.value,
            "kind": self.kind.value,
            "subject": self.subject,
            "origin_hint": self.origin_hint.value,
            "file": self.file,
            "line": self.line,
            "frames": [f.to_dict() for f in self.frames],
            "excerpt": self.excerpt,
            "confidence": self.confidence,
            "occurrences": self.occurrences,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvidenceRecord":
        line = d.get("line")
        return cls(
            phase=Phase(d["phase"]),
            kind=EvidenceKind(d["kind"]),
            subject=d.get("subject"),
            origin_hint=Origin(d.get("origin_hint", "unknown")),
            file=d.get("file"),
            line=None if line is None else int(line),
            frames=tuple(StackFrame.from_dict(f) for f in d.get("frames", [])),
            excerpt=str(d.get("excerpt", "")),
            confidence=d.get("confidence", "certain"),
            occurrences=int(d.get("occurrences", 1)),
        )


# --- stack traces -----------------------------------------------------------

FRAME_RE = re.compile(r'^\s*File "(?P<file>[^"]+)", line (?P<line>\d+)(?:, in (?P<scope>.+?))?\s*$')
EXC_RE = re.compile(
    r"^(?:E\s+)?(?P<exc>(?:[A-Za-z_]\w*\.)*[A-Za-z_]\w*(?:Error|Exception|Exit|Interrupt|Warning))"
    r"(?::\s?(?P<msg>.*))?\s*$"
)
WRAPPER_RE = re.compile(r"^ImportError: Failed to import test module")
PIP_MISSING_RE = re.compile(
    r"(?:No matching distribution found for|"
    r"Could not find a version that satisfies the requirement)\s+(?P<req>[^\s;]+)"
)
MISSING_MODULE_RE = re.compile(r"No module named '(?P<mod>[^']+)'")
MISSING_NAME_RE = re.compile(
    r"cannot import name '(?P<name>[^']+)'(?: from (?:partially initialized module )?'(?P<mod>[^']+)')?"
)
UNDEFINED_NAME_RE = re.compile(r"^name '(?P<name>[^']+)' is not defined")
PYTEST_FAILED_RE = re.compile(r"^FAILED (?P<test>\S+)(?: - (?P<reason>.*))?$")
SYNTAX_EXCS = ("SyntaxError", "IndentationError", "TabError")


def _relativize(path: str, workspace: Optional[Path], scan: ScanConfig) -> tuple[str, bool]:
    rel = None
    if path.startswith(WORKSPACE_TOKEN + "/"):
        rel = path[len(WORKSPACE_TOKEN) + 1:]
    elif workspace is not None:
        for base in {str(workspace), str(Path(workspace).resolve())}:
            if path.startswith(base.rstrip("/") + "/"):
                rel = path[len(base.rstrip("/")) + 1:]
                break
    if rel is None:
        return path, False
    rel = PurePosixPath(rel).as_posix()
    return rel, not scan.is_excluded_path(rel) and ".." not in PurePosixPath(rel).parts


@dataclass
class _Signal:
    exc: str
    msg: str
    frames: list[StackFrame]
    sources: list[str]  # source line shown under each frame ("" if none)
    start: int
    end: int


def _scan_signals(text: str, workspace: Optional[Path], scan: ScanConfig) -> list[_Signal]:
    lines = text.splitlines(keepends=True)
    offsets = []
    pos = 0
    for ln in lines:
        offsets.append(pos)
        pos += len(ln)

    signals = []
    frames: list[StackFrame] = []
    sources: list[str] = []
    start = None
    i = 0
    while i < len(lines):
        raw = lines[i].rstrip("\r\n")
        if raw.startswith("Traceback (most recent call last):"):
            frames, sources, start = [], [], offsets[i]
        elif (m := FRAME_RE.match(raw)):
            if start is None:
                start = offsets[i]
            rel, in_repo = _relativize(m.group("file"), workspace, scan)
            frames.append(StackFrame(rel, int(m.group("line")), m.group("scope") or "<module>", in_repo))
            src = ""
            if i + 1 < len(lines):
                nxt = lines[i + 1].rstrip("\r\n")
                if nxt.startswith("    ") and not FRAME_RE.match(nxt):
                    src = nxt.strip()
            sources.append(src)
        elif not raw[:1].isspace() and (m := EXC_RE.match(raw)) and not WRAPPER_RE.match(raw):
            begin = start if start is not None else offsets[i]
            signals.append(_Signal(m.group("exc"), (m.group("msg") or "").strip(), frames, sources,
                                   begin, offsets[i] + len(raw)))
            frames, sources, start = [], [], None
        elif raw.startswith("During handling") or raw.startswith("The above exception"):
            frames, sources, start = [], [], None
        i += 1
    return signals


def parse_stack_trace(stderr: str, workspace: Optional[str | Path] = None,
                      scan: ScanConfig = ScanConfig()) -> list[StackFrame]:
    """Frames of the last traceback in ``stderr``, outermost first.

    Paths under the workspace (or the ``<workspace>`` token) become relative
    and are flagged in-repo unless they sit in an ignored or hidden directory.
    """
    ws = Path(workspace) if workspace is not None else None
    signals = _scan_signals(stderr, ws, scan)
    return list(signals[-1].frames) if signals else []


# --- normalization ----------------------------------------------------------


class Normalizer(Protocol):
    def __call__(self, logs: list[RawExecutionLog], g_ext: Graph, g_int: Graph) -> list[EvidenceRecord]:
        ...


def internal_module_names(g_int: Graph) -> set[str]:
    """Defined modules plus the would-be modules of files that failed to parse."""
    names = {n.attrs["name"] for n in g_int.nodes_of("module")}
    for n in g_int.nodes_of("parse-error"):
        try:
            names.add(derive_module_name(n.attrs["file"]))
        except InvalidSourcePath:
            pass
    return names


def origin_of(subject: Optional[str], internal: set[str], stdlib) -> Origin:
    if not subject:
        return Origin.UNKNOWN
    res = resolve_import_target(subject, internal, stdlib)
    if res.kind is ImportClass.INTERNAL:
        return Origin.INTERNAL
    if res.kind is ImportClass.EXTERNAL:
        return Origin.EXTERNAL
    return Origin.UNKNOWN


def _clip(chunk: str) -> str:
    """Trailing part of ``chunk`` within the excerpt byte limit."""
    data = chunk.encode("utf-8")
    if len(data) <= EXCERPT_LIMIT:
        return chunk
    # dropping a split leading character keeps the result a substring
    return data[-EXCERPT_LIMIT:].decode("utf-8", errors="ignore")


def _excerpt(text: str, start: int, end: int) -> str:
    return _clip(text[start:end])


def _innermost_in_repo(frames) -> Optional[StackFrame]:
    for fr in reversed(frames):
        if fr.in_repo:
            return fr
    return None


def _refine_module(subject: str, sig: _Signal, g_int: Graph) -> str:
    """Widen ``No module named 'app'`` to the full dotted import that failed."""
    for idx in range(len(sig.frames) - 1, -1, -1):
        fr = sig.frames[idx]
        if not fr.in_repo:
            continue
        candidates = []
        for n in g_int.nodes_of("unresolved-ref"):
            for site in n.attrs.get("sites", []):
                if site["file"] == fr.file and site["line"] == fr.line:
                    candidates.append(n.attrs["target"])
        src = sig.sources[idx] if idx < len(sig.sources) else ""
        if src:
            recs = extract_imports(src, fr.file)
            if not isinstance(recs, ParseFailure):
                candidates += [r.target for r in recs if r.relative_level == 0]
        matching = [c for c in candidates if c == subject or c.startswith(subject + ".")]
        if matching:
            return max(matching, key=lambda c: (len(c), c))
        break
    return subject


def _classify_signal(sig: _Signal, phase: Phase, g_int: Graph):
    exc = sig.exc.rsplit(".", 1)[-1]
    frame = _innermost_in_repo(sig.frames)
    file = frame.file if frame else None
    line = frame.line if frame else None

    if exc in SYNTAX_EXCS:
        last = sig.frames[-1] if sig.frames else None
        if last is not None and last.in_repo:
            file, line = last.file, last.line
            try:
                subject = derive_module_name(file)
            except InvalidSourcePath:
                subject = None
        else:
            subject = None
        return EvidenceKind.PARSE_FAILURE, subject, file, line

    if exc == "ModuleNotFoundError" or (exc == "ImportError" and MISSING_MODULE_RE.search(sig.msg)):
        m = MISSING_MODULE_RE.search(sig.msg)
        if m:
            return EvidenceKind.MISSING_MODULE, _refine_module(m.group("mod"), sig, g_int), file, line
    if exc == "ImportError":
        m = MISSING_NAME_RE.search(sig.msg)
        if m:
            subject = f"{m.group('mod')}.{m.group('name')}" if m.group("mod") else m.group("name")
            return EvidenceKind.MISSING_SYMBOL, subject, file, line
    if exc == "NameError" and frame is not None and (m := UNDEFINED_NAME_RE.match(sig.msg)):
        # a global the module no longer defines is a broken in-repo reference
        try:
            module = derive_module_name(file)
        except InvalidSourcePath:
            module = None
        name = m.group("name")
        if module and g_int.node(f"module:{module}") is not None \
                and g_int.node(f"symbol:{module}:{name}") is None:
            return EvidenceKind.MISSING_SYMBOL, f"{module}.{name}", file, line
    if exc == "AssertionError" and phase is Phase.TEST:
        return EvidenceKind.TEST_ASSERTION_FAILURE, None, file, line
    return EvidenceKind.RUNTIME_EXCEPTION_OTHER, exc, file, line


def _origin(kind: EvidenceKind, subject: Optional[str], internal, stdlib) -> Origin:
    if kind is EvidenceKind.MISSING_SYMBOL and subject and "." in subject:
        return origin_of(subject.rsplit(".", 1)[0], internal, stdlib)
    if kind in (EvidenceKind.MISSING_MODULE, EvidenceKind.DEPENDENCY_INSTALL_FAILURE,
                EvidenceKind.PARSE_FAILURE):
        return origin_of(subject, internal, stdlib)
    return Origin.UNKNOWN


def _tail(text: str) -> str:
    return _clip(text.rstrip())


class RuleNormalizer:
    """Deterministic, pattern-based normalizer (the default)."""

    def __init__(self, workspace: Optional[str | Path] = None, stdlib=None,
                 scan: ScanConfig = ScanConfig()):
        self.workspace = Path(workspace) if workspace is not None else None
        self.stdlib = load_stdlib() if stdlib is None else frozenset(stdlib)
        self.scan = scan

    def __call__(self, logs, g_ext, g_int) -> list[EvidenceRecord]:
        return normalize(logs, g_ext, g_int, workspace=self.workspace, stdlib=self.stdlib,
                         scan=self.scan)


def normalize(logs: list[RawExecutionLog], g_ext: Graph, g_int: Graph,
              workspace: Optional[str | Path] = None, stdlib=None,
              scan: ScanConfig = ScanConfig()) -> list[EvidenceRecord]:
    """One record per distinct failure signal, ordered by phase then first occurrence.

    Returns no records iff every log succeeded.
    """
    stdlib = load_stdlib() if stdlib is None else stdlib
    ws = Path(workspace) if workspace is not None else None
    internal = internal_module_names(g_int)
    ordered = sorted(logs, key=lambda lg: PHASE_ORDER.index(lg.phase))

    records: list[EvidenceRecord] = []
    index: dict[tuple, int] = {}

    def add(rec: EvidenceRecord):
        key = (rec.phase, rec.kind, rec.subject, rec.file, rec.line)
        if key in index:
            i = index[key]
            records[i] = replace(records[i], occurrences=records[i].occurrences + 1)
        else:
            index[key] = len(records)
            records.append(rec)

    for lg in ordered:
        if lg.ok:
            continue
        before = len(records)
        if lg.timed_out:
            add(EvidenceRecord(lg.phase, EvidenceKind.TIMEOUT, excerpt=_tail(lg.stderr)))
            continue
        for stream in (lg.stderr, lg.stdout):
            if lg.phase is Phase.INSTALL:
                for m in PIP_MISSING_RE.finditer(stream):
                    req = m.group("req").rstrip(")")
                    name = re.split(r"[<>=!~\[(]", req, maxsplit=1)[0]
                    ls = stream.rfind("\n", 0, m.start()) + 1
                    le = stream.find("\n", m.end())
                    le = len(stream) if le < 0 else le
                    add(EvidenceRecord(
                        lg.phase, EvidenceKind.DEPENDENCY_INSTALL_FAILURE, name,
                        _origin(EvidenceKind.DEPENDENCY_INSTALL_FAILURE, name, internal, stdlib),
                        excerpt=_excerpt(stream, ls, le)))
            for sig in _scan_signals(stream, ws, scan):
                kind, subject, file, line = _classify_signal(sig, lg.phase, g_int)
                if lg.phase is Phase.INSTALL and kind is not EvidenceKind.PARSE_FAILURE:
                    kind, subject = EvidenceKind.DEPENDENCY_INSTALL_FAILURE, \
                        (subject if kind is EvidenceKind.MISSING_MODULE else None)
                add(EvidenceRecord(
                    lg.phase, kind, subject, _origin(kind, subject, internal, stdlib), file, line,
                    tuple(sig.frames), _excerpt(stream, sig.start, sig.end)))
            if lg.phase is Phase.TEST:
                for m in re.finditer(r"(?m)" + PYTEST_FAILED_RE.pattern, stream):
                    reason = m.group("reason") or ""
                    kind = (EvidenceKind.TEST_ASSERTION_FAILURE
                            if "assert" in reason.lower() or not reason
                            else EvidenceKind.RUNTIME_EXCEPTION_OTHER)
                    if any(r.phase is Phase.TEST for r in records[before:]):
                        break  # traceback already classified the failure
                    add(EvidenceRecord(lg.phase, kind, None, Origin.UNKNOWN,
                                       excerpt=_excerpt(stream, m.start(), m.end()),
                                       confidence="heuristic"))
        if len(records) == before:
            stream = lg.stderr if lg.stderr.strip() else lg.stdout
            kind = (EvidenceKind.DEPENDENCY_INSTALL_FAILURE if lg.phase is Phase.INSTALL
                    else EvidenceKind.NONZERO_EXIT_OTHER)
            add(EvidenceRecord(lg.phase, kind, None, Origin.UNKNOWN, excerpt=_tail(stream),
                               confidence="heuristic"))
    return records


# --- validation and the external normalizer ---------------------------------


class SchemaViolation(ValueError):
    pass


def validate_record(rec: EvidenceRecord, logs: Iterable[RawExecutionLog], internal: set[str],
                    stdlib) -> list[str]:
    """Invariant violations of one record (empty list means valid)."""
    problems = []
    if rec.kind is EvidenceKind.MISSING_MODULE and not rec.subject:
        problems.append("missing-module record without subject")
    if len(rec.excerpt.encode("utf-8")) > EXCERPT_LIMIT:
        problems.append("excerpt exceeds 2 KiB")
    streams = [s for lg in logs for s in (lg.stdout, lg.stderr)]
    if not any(rec.excerpt in s for s in streams) and rec.excerpt:
        problems.append("excerpt is not a substring of any log stream")
    if rec.line is not None and rec.line < 1:
        problems.append("line must be positive")
    if rec.confidence not in ("certain", "heuristic"):
        problems.append(f"bad confidence {rec.confidence!r}")
    if rec.occurrences < 1:
        problems.append("occurrences must be positive")
    if rec.subject and rec.origin_hint is not Origin.UNKNOWN:
        module = rec.subject
        if rec.kind is EvidenceKind.MISSING_SYMBOL and "." in module:
            module = module.rsplit(".", 1)[0]
        actual = origin_of(module, internal, stdlib)
        if rec.origin_hint is Origin.EXTERNAL and actual is Origin.INTERNAL:
            problems.append("origin external but subject is internal")
        if rec.origin_hint is Origin.INTERNAL and actual is not Origin.INTERNAL:
            problems.append("origin internal but subject is not internal")
    if rec.kind is EvidenceKind.MISSING_MODULE and rec.subject:
        if rec.origin_hint is not origin_of(rec.subject, internal, stdlib):
            problems.append("missing-module origin disagrees with import classification")
    return problems


class ProcessFailure(RuntimeError):
    pass


@dataclass
class ExternalNormalizer:
    """Normalizer backed by a local command speaking JSON over stdin/stdout.

    Input: ``{"logs": [...], "g_ext": {...}, "g_int": {...}}``. Output: a JSON
    array of evidence records. Invalid records are dropped; a failing process
    (or an empty answer for a failed run) falls back to the rule normalizer.
    """

    cmd: list[str]
    timeout: float = 120.0
    fallback: Normalizer = field(default_factory=RuleNormalizer)
    warnings: list[str] = field(default_factory=list)

    def _run(self, payload: str) -> list:
        argv = [a.replace("{python}", sys.executable) for a in self.cmd]
        try:
            proc = subprocess.run(argv, input=payload, capture_output=True, text=True,
                                  timeout=self.timeout)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ProcessFailure(str(exc)) from exc
        if proc.returncode != 0:
            raise ProcessFailure(f"exit {proc.returncode}: {proc.stderr.strip()[-200:]}")
        try:
            data = json.loads(proc.stdout)
        except json.JSONDecodeError as exc:
            raise ProcessFailure(f"invalid JSON output: {exc}") from exc
        if not isinstance(data, list):
            raise ProcessFailure("output is not a JSON array")
        return data

    def __call__(self, logs, g_ext, g_int) -> list[EvidenceRecord]:
        payload = json.dumps({"logs": [lg.to_dict() for lg in logs],
                              "g_ext": g_ext.to_dict(), "g_int": g_int.to_dict()})
        try:
            raw = self._run(payload)
        except ProcessFailure as exc:
            self._warn(f"external normalizer failed ({exc}); using rule-based output")
            return self.fallback(logs, g_ext, g_int)

        internal = internal_module_names(g_int)
        stdlib = getattr(self.fallback, "stdlib", None) or load_stdlib()
        records = []
        for i, item in enumerate(raw):
            try:
                rec = EvidenceRecord.from_dict(item)
            except (KeyError, ValueError, TypeError) as exc:
                self._warn(f"record {i} dropped: {exc!r}")
                continue
            problems = validate_record(rec, logs, internal, stdlib)
            if problems:
                self._warn(f"record {i} dropped: {'; '.join(problems)}")
                continue
            records.append(rec)
        if not records and not all(lg.ok for lg in logs):
            self._warn("external normalizer produced no valid records for a failed run; "
                       "using rule-based output")
            return self.fallback(logs, g_ext, g_int)
        return records

    def _warn(self, msg: str):
        self.warnings.append(msg)
        log.warning(msg)


def external_normalizer(cmd: list[str], timeout: float = 120.0) -> ExternalNormalizer:
    return ExternalNormalizer(list(cmd), timeout)
