"""Verdict-conditioned revision: plan directives, apply the mechanical ones, delegate the rest."""

from __future__ import annotations

import hashlib
import json
import os
import re
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path, PurePosixPath
from typing import Optional, Sequence

from .attribution import AttributionVerdict, Source
from .evidence import EvidenceKind, EvidenceRecord, Origin
from .ext_graph import GapKind, find_dependency_gaps
from .graph import Graph, canonical_json
from .manifests import PREFERRED_MANIFESTS, add_declaration_text, declared_names
from .names import normalize_package_name
from .source_parser import derive_module_name, InvalidSourcePath


class Action(str, Enum):
    ADD_DECLARATION = "add-declaration"
    REWRITE_IMPORT = "rewrite-import"
    CREATE_INITIALIZER = "create-package-initializer"
    DELEGATE = "delegate-to-reviser"


ALLOWED_ACTIONS = {
    Source.EXTERNAL: {Action.ADD_DECLARATION, Action.DELEGATE},
    Source.INTERNAL: {Action.REWRITE_IMPORT, Action.CREATE_INITIALIZER, Action.DELEGATE},
    Source.RESIDUAL: {Action.DELEGATE},
    Source.PASS: set(),
}

PAYLOAD_KEYS = {
    Action.ADD_DECLARATION: ({"package"}, {"constraint"}),
    Action.REWRITE_IMPORT: ({"old_target", "new_target", "lines"}, set()),
    Action.CREATE_INITIALIZER: ({"directory"}, set()),
    Action.DELEGATE: ({"focus", "evidence", "nodes", "instruction"}, set()),
}

_ACTION_ORDER = list(Action)


@dataclass(frozen=True)
class RevisionDirective:
    action: Action
    target_file: str
    payload: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        required, optional = PAYLOAD_KEYS[self.action]
        keys = set(self.payload)
        if not required <= keys or not keys <= required | optional:
            raise ValueError(f"{self.action.value} payload keys {sorted(keys)} "
                             f"(required {sorted(required)})")

    def sort_key(self):
        return (_ACTION_ORDER.index(self.action), self.target_file,
                json.dumps(self.payload, sort_keys=True))

    def to_dict(self) -> dict:
        return {"action": self.action.value, "target_file": self.target_file, "payload": self.payload}

    @classmethod
    def from_dict(cls, d: dict) -> "RevisionDirective":
        return cls(Action(d["action"]), d["target_file"], dict(d["payload"]))


@dataclass(frozen=True)
class RevisionPlan:
    verdict: AttributionVerdict
    directives: tuple[RevisionDirective, ...]
    file_hashes: dict = field(default_factory=dict, hash=False)  # path -> sha256 or None

    def __post_init__(self):
        allowed = ALLOWED_ACTIONS[self.verdict.source]
        for d in self.directives:
            if d.action not in allowed:
                raise ValueError(f"{d.action.value} not admissible for {self.verdict.source.value}")
        if not self.directives and self.verdict.source is not Source.PASS:
            raise ValueError("empty plan for a non-pass verdict")

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.to_dict(),
                "directives": [d.to_dict() for d in self.directives],
                "file_hashes": dict(sorted(self.file_hashes.items()))}


def _sha(path: Path) -> Optional[str]:
    try:
        return hashlib.sha256(path.read_bytes()).hexdigest()
    except (FileNotFoundError, IsADirectoryError):
        return None


_INSTRUCTIONS = {
    Source.EXTERNAL: "Make the external execution context satisfiable: reconcile declared and "
                     "installed dependencies named in the evidence.",
    Source.INTERNAL: "Restore internal resolvability: fix the module, symbol or syntax "
                     "references named in the evidence without changing behaviour.",
    Source.RESIDUAL: "Dependencies and internal references are aligned; correct the implementation "
                     "so the failing checks pass while keeping imports and declarations intact.",
}


def _delegate(source: Source, evidence_idx, nodes, target_file: str = ".") -> RevisionDirective:
    return RevisionDirective(Action.DELEGATE, target_file, {
        "focus": source.value,
        "evidence": sorted(set(evidence_idx)),
        "nodes": sorted(set(nodes)),
        "instruction": _INSTRUCTIONS[source],
    })


def choose_manifest(manifests: Sequence[str]) -> tuple[str, bool]:
    """(path, exists) of the manifest that receives new declarations."""
    top = {PurePosixPath(m).name: m for m in sorted(manifests) if "/" not in m}
    for name in PREFERRED_MANIFESTS:
        if name in top:
            return top[name], True
    return "requirements.txt", "requirements.txt" in top


def _plan_external(verdict, g_ext, evidence, workspace):
    manifests = [n.id[len("file:"):] for n in g_ext.nodes_of("file") if n.attrs.get("role") == "manifest"]
    implicated = set()
    for i in verdict.supporting_evidence:
        rec = evidence[i]
        if rec.subject:
            implicated.add(rec.subject.split(".")[0])
            implicated.add(normalize_package_name(rec.subject.split(".")[0]))
    for nid in verdict.supporting_nodes:
        if nid.startswith("pkg:"):
            implicated.add(nid[len("pkg:"):])

    directives = []
    manifest, _ = choose_manifest(manifests)
    if manifest == "pyproject.toml" and workspace is not None:
        text = (Path(workspace) / manifest).read_text("utf-8")
        if add_declaration_text(manifest, text, "x") is None:
            manifest = "requirements.txt"
    for gap in find_dependency_gaps(g_ext):
        if gap.kind is not GapKind.USED_NOT_DECLARED:
            continue
        node = g_ext.node(f"pkg:{gap.package}")
        names = {gap.package, *node.attrs.get("import_names", [])}
        if names & implicated:
            directives.append(RevisionDirective(Action.ADD_DECLARATION, manifest, {"package": gap.package}))
    covered = set()
    for d in directives:
        node = g_ext.node(f"pkg:{d.payload['package']}")
        covered |= {d.payload["package"], *node.attrs.get("import_names", [])}

    def handled(rec):
        if rec.kind is EvidenceKind.DEPENDENCY_INSTALL_FAILURE or not rec.subject:
            return False
        first = rec.subject.split(".")[0]
        return first in covered or normalize_package_name(first) in covered

    leftover = [i for i in verdict.supporting_evidence if not handled(evidence[i])]
    if leftover or not directives:
        directives.append(_delegate(Source.EXTERNAL, leftover or verdict.supporting_evidence,
                                    verdict.supporting_nodes))
    return directives


def _module_dirs(g_int: Graph) -> dict[str, tuple[str, bool]]:
    """Directory module name -> (directory path, has initializer) for dirs holding sources."""
    dirs: dict[str, tuple[str, bool]] = {}
    for n in g_int.nodes_of("file"):
        path = PurePosixPath(n.attrs["path"])
        for parent in list(path.parents)[:-1]:
            try:
                name = derive_module_name(parent.as_posix() + "/__init__.py")
            except InvalidSourcePath:
                continue
            has_init = g_int.node(f"file:{parent.as_posix()}/__init__.py") is not None
            prev = dirs.get(name)
            dirs[name] = (parent.as_posix(), has_init or (prev[1] if prev else False))
    return dirs


def _plan_internal(verdict, g_int, evidence):
    directives = []
    delegated_ev, delegated_nodes = set(), set()
    dirs = _module_dirs(g_int)
    implicated_targets = set()

    for n in g_int.nodes_of("unresolved-ref"):
        target = n.attrs["target"]
        implicated_targets.add(target)
        bm = n.attrs.get("best_match")
        if bm is None:
            delegated_nodes.add(n.id)
            continue
        by_file: dict[str, list[int]] = {}
        written: dict[str, str] = {}
        for site in n.attrs["sites"]:
            by_file.setdefault(site["file"], []).append(site["line"])
            written[site["file"]] = site.get("written", target)
        for f, lines in sorted(by_file.items()):
            directives.append(RevisionDirective(Action.REWRITE_IMPORT, f, {
                "old_target": written[f], "new_target": bm["module"], "lines": sorted(set(lines))}))

    for i in verdict.supporting_evidence:
        rec = evidence[i]
        if rec.kind is EvidenceKind.MISSING_MODULE and rec.origin_hint is Origin.INTERNAL:
            implicated_targets.add(rec.subject)
            if f"unresolved:{rec.subject}" not in {n.id for n in g_int.nodes_of("unresolved-ref")}:
                delegated_ev.add(i)
        elif rec.kind in (EvidenceKind.MISSING_SYMBOL, EvidenceKind.PARSE_FAILURE):
            delegated_ev.add(i)
    for nid in verdict.supporting_nodes:
        if nid.startswith("parse-error:"):
            delegated_nodes.add(nid)

    for name, (directory, has_init) in sorted(dirs.items()):
        if has_init:
            continue
        if any(t == name or t.startswith(name + ".") for t in implicated_targets):
            directives.append(RevisionDirective(Action.CREATE_INITIALIZER, f"{directory}/__init__.py",
                                                {"directory": directory}))
    if delegated_ev or delegated_nodes or not directives:
        ev = delegated_ev or set(verdict.supporting_evidence)
        directives.append(_delegate(Source.INTERNAL, ev, delegated_nodes or verdict.supporting_nodes))
    return directives


def plan_revision(verdict: AttributionVerdict, g_ext: Graph, g_int: Graph,
                  evidence: Sequence[EvidenceRecord], workspace=None) -> RevisionPlan:
    """Directives admissible for the verdict's source, deterministic and sorted.

    ``workspace`` (optional) lets the plan record file hashes for staleness
    checks at apply time.
    """
    if verdict.source is Source.PASS:
        raise ValueError("no revision for a passing verdict")
    if verdict.source is Source.EXTERNAL:
        directives = _plan_external(verdict, g_ext, evidence, workspace)
    elif verdict.source is Source.INTERNAL:
        directives = _plan_internal(verdict, g_int, evidence)
    else:
        failing = list(range(len(evidence)))
        directives = [_delegate(Source.RESIDUAL, failing, verdict.supporting_nodes)]
    directives = tuple(sorted(set(directives), key=RevisionDirective.sort_key))

    hashes = {}
    if workspace is not None:
        for d in directives:
            if d.action is not Action.DELEGATE:
                hashes[d.target_file] = _sha(Path(workspace) / d.target_file)
    return RevisionPlan(verdict, directives, hashes)


# --- application ------------------------------------------------------------


@dataclass
class ApplyResult:
    applied: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # (directive, reason)

    def to_dict(self) -> dict:
        return {"applied": [d.to_dict() for d in self.applied],
                "skipped": [{"directive": d.to_dict(), "reason": r} for d, r in self.skipped]}


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def rewrite_import_line(line: str, old: str, new: str) -> str:
    """Replace the dotted import target ``old`` (as written) with ``new`` once."""
    if old.startswith("."):
        pattern = r"(?<=from)(\s+)" + re.escape(old) + r"(?![\w.])"
        return re.sub(pattern, lambda m: m.group(1) + new, line, count=1)
    pattern = r"(?<![\w.])" + re.escape(old) + r"(?![\w.])"
    return re.sub(pattern, lambda m: new, line, count=1)


def _edit(text: Optional[str], d: RevisionDirective) -> tuple[Optional[str], Optional[str]]:
    """(new text, skip reason) for one directive against one file's current text."""
    if d.action is Action.ADD_DECLARATION:
        current = text or ""
        pkg = normalize_package_name(d.payload["package"])
        if pkg in declared_names(d.target_file, current):
            return text, "already-declared"
        new = add_declaration_text(d.target_file, current, pkg, d.payload.get("constraint"))
        if new is None:
            return text, "manifest-not-editable"
        return new, None
    if d.action is Action.REWRITE_IMPORT:
        if text is None:
            return text, "file-missing"
        lines = text.splitlines(keepends=True)
        changed = False
        for ln in d.payload["lines"]:
            if not 1 <= ln <= len(lines):
                return text, f"line {ln} out of range"
            body = lines[ln - 1]
            new_body = rewrite_import_line(body, d.payload["old_target"], d.payload["new_target"])
            if new_body != body:
                lines[ln - 1] = new_body
                changed = True
        if not changed:
            return text, "import-not-found"
        return "".join(lines), None
    if d.action is Action.CREATE_INITIALIZER:
        if text is not None:
            return text, "initializer-exists"
        return "", None
    return text, "requires-reviser"


def apply_mechanical(plan: RevisionPlan, workspace) -> ApplyResult:
    """Apply non-delegated directives; each file is checked once and written atomically."""
    root = Path(workspace)
    result = ApplyResult()
    by_file: dict[str, list[RevisionDirective]] = {}
    for d in plan.directives:
        if d.action is Action.DELEGATE:
            result.skipped.append((d, "requires-reviser"))
        else:
            by_file.setdefault(d.target_file, []).append(d)

    for rel, directives in sorted(by_file.items()):
        path = root / rel
        if rel in plan.file_hashes and _sha(path) != plan.file_hashes[rel]:
            result.skipped += [(d, "stale-snapshot") for d in directives]
            continue
        try:
            text = path.read_text("utf-8") if path.is_file() else None
        except (OSError, UnicodeDecodeError) as exc:
            result.skipped += [(d, f"io-failure: {exc}") for d in directives]
            continue
        original = text
        done = []
        for d in directives:
            new, reason = _edit(text, d)
            if reason:
                result.skipped.append((d, reason))
            else:
                text = new
                done.append(d)
        if not done or text == original:
            continue
        try:
            _atomic_write(path, text.encode("utf-8"))
        except OSError as exc:
            result.skipped += [(d, f"io-failure: {exc.strerror or exc}") for d in done]
            continue
        result.applied += done
    return result


# --- external reviser -------------------------------------------------------


@dataclass
class ReviserOutcome:
    ok: bool
    reason: str = ""


@dataclass
class ExternalReviser:
    """Local command that edits the workspace in place given JSON on stdin.

    Input: ``{"workspace", "plan", "evidence", "g_ext", "g_int"}``; runs with
    cwd = workspace; exit 0 means success. The loop rescans afterwards
    regardless of what the command claims.
    """

    cmd: list[str]
    timeout: float = 300.0

    def __call__(self, workspace, plan: RevisionPlan, evidence, g_ext: Graph, g_int: Graph) -> ReviserOutcome:
        payload = canonical_json({
            "workspace": str(Path(workspace).resolve()),
            "plan": plan.to_dict(),
            "evidence": [r.to_dict() for r in evidence],
            "g_ext": g_ext.to_dict(),
            "g_int": g_int.to_dict(),
        })
        argv = [a.replace("{python}", sys.executable).replace("{root}", str(Path(workspace).resolve()))
                for a in self.cmd]
        try:
            proc = subprocess.run(argv, input=payload, text=True, capture_output=True,
                                  cwd=workspace, timeout=self.timeout)
        except subprocess.TimeoutExpired:
            return ReviserOutcome(False, f"reviser-timeout after {self.timeout}s")
        except OSError as exc:
            return ReviserOutcome(False, f"reviser-failed: {exc}")
        if proc.returncode != 0:
            return ReviserOutcome(False, f"reviser-failed: exit {proc.returncode}")
        return ReviserOutcome(True)


def external_reviser(cmd: list[str], timeout: float = 300.0) -> ExternalReviser:
    return ExternalReviser(list(cmd), timeout)
