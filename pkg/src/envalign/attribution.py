"""Dominant-misalignment attribution under a strict priority ordering.

external dependency satisfaction > internal reference resolution > residual logic
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .evidence import EvidenceKind, EvidenceRecord, Origin
from .executor import Phase
from .ext_graph import GapKind, PROJECT_ID, find_dependency_gaps, package_id
from .graph import Graph
from .names import normalize_package_name


class InconsistentInputs(ValueError):
    pass


class Source(str, Enum):
    EXTERNAL = "external-dependency"
    INTERNAL = "internal-reference"
    RESIDUAL = "residual-logic"
    PASS = "pass"


# fired-rule identifiers
R_INSTALL_FAILURE = "ext:install-failure"
R_EXTERNAL_MISSING_MODULE = "ext:missing-module"
R_GAP_CORROBORATED = "ext:undeclared-package"
R_INTERNAL_MISSING_MODULE = "int:missing-module"
R_MISSING_SYMBOL = "int:missing-symbol"
R_PARSE_FAILURE = "int:parse-failure"
R_UNRESOLVED_CORROBORATED = "int:unresolved-node"
R_PARSE_NODE_CORROBORATED = "int:parse-error-node"
R_RESIDUAL = "logic:residual"


@dataclass(frozen=True)
class AttributionVerdict:
    source: Source
    fired_rules: tuple[str, ...] = ()
    supporting_evidence: tuple[int, ...] = ()
    supporting_nodes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"source": self.source.value, "fired_rules": list(self.fired_rules),
                "supporting_evidence": list(self.supporting_evidence),
                "supporting_nodes": list(self.supporting_nodes)}

    @classmethod
    def from_dict(cls, d: dict) -> "AttributionVerdict":
        return cls(Source(d["source"]), tuple(d["fired_rules"]), tuple(d["supporting_evidence"]),
                   tuple(d["supporting_nodes"]))


@dataclass
class _Clause:
    rules: list = field(default_factory=list)
    evidence: set = field(default_factory=set)
    nodes: set = field(default_factory=set)

    def fire(self, rule, ev=None, node=None):
        if rule not in self.rules:
            self.rules.append(rule)
        if ev is not None:
            self.evidence.add(ev)
        if node is not None:
            self.nodes.add(node)

    @property
    def fired(self) -> bool:
        return bool(self.rules)


def _touches(rec: EvidenceRecord, files: set[str]) -> bool:
    if rec.file in files:
        return True
    return any(fr.in_repo and fr.file in files for fr in rec.frames)


def _first_segment(subject: Optional[str]) -> Optional[str]:
    return subject.split(".")[0] if subject else None


def _external_clause(g_ext: Graph, evidence: Sequence[EvidenceRecord]) -> _Clause:
    c = _Clause()
    pkg_nodes = {n.id for n in g_ext.nodes_of("package")}

    def pkg_node(name):
        if not name:
            return None
        nid = package_id(normalize_package_name(name))
        return nid if nid in pkg_nodes else None

    for i, rec in enumerate(evidence):
        if rec.kind is EvidenceKind.DEPENDENCY_INSTALL_FAILURE:
            c.fire(R_INSTALL_FAILURE, i, pkg_node(rec.subject))
        elif rec.kind is EvidenceKind.MISSING_MODULE and rec.origin_hint is not Origin.INTERNAL:
            # unknown origin breaks toward the higher-priority source
            c.fire(R_EXTERNAL_MISSING_MODULE, i, pkg_node(_first_segment(rec.subject)))

    for gap in find_dependency_gaps(g_ext):
        if gap.kind is not GapKind.USED_NOT_DECLARED:
            continue
        node = g_ext.node(package_id(gap.package))
        names = {gap.package, *node.attrs.get("import_names", [])}
        users = set(gap.using_files)
        for i, rec in enumerate(evidence):
            if rec.phase not in (Phase.LAUNCH, Phase.TEST):
                continue
            named = _first_segment(rec.subject) in names or \
                (rec.subject and normalize_package_name(_first_segment(rec.subject)) in names)
            if named or _touches(rec, users):
                c.fire(R_GAP_CORROBORATED, i, node.id)
    return c


def _internal_clause(g_int: Graph, evidence: Sequence[EvidenceRecord]) -> _Clause:
    c = _Clause()
    for i, rec in enumerate(evidence):
        if rec.kind is EvidenceKind.MISSING_MODULE and rec.origin_hint is Origin.INTERNAL:
            nid = f"unresolved:{rec.subject}"
            c.fire(R_INTERNAL_MISSING_MODULE, i, nid if g_int.node(nid) else None)
        elif rec.kind is EvidenceKind.MISSING_SYMBOL:
            module = rec.subject.rsplit(".", 1)[0] if rec.subject and "." in rec.subject else None
            nid = f"module:{module}" if module else None
            c.fire(R_MISSING_SYMBOL, i, nid if nid and g_int.node(nid) else None)
        elif rec.kind is EvidenceKind.PARSE_FAILURE:
            nid = f"parse-error:{rec.file}" if rec.file else None
            c.fire(R_PARSE_FAILURE, i, nid if nid and g_int.node(nid) else None)

    for n in g_int.nodes_of("unresolved-ref"):
        target = n.attrs["target"]
        sites = {s["file"] for s in n.attrs.get("sites", [])}
        for i, rec in enumerate(evidence):
            subj = rec.subject or ""
            named = bool(subj) and (subj == target or target.startswith(subj + "."))
            if named or _touches(rec, sites):
                c.fire(R_UNRESOLVED_CORROBORATED, i, n.id)
    for n in g_int.nodes_of("parse-error"):
        for i, rec in enumerate(evidence):
            if _touches(rec, {n.attrs["file"]}):
                c.fire(R_PARSE_NODE_CORROBORATED, i, n.id)
    return c


def _check_consistency(g_ext: Graph, g_int: Graph, evidence: Sequence[EvidenceRecord]):
    known = {n.id[len("file:"):] for g in (g_ext, g_int) for n in g.nodes_of("file")}
    for i, rec in enumerate(evidence):
        stale = sorted({fr.file for fr in rec.frames if fr.in_repo and fr.file not in known})
        if stale:
            raise InconsistentInputs(f"evidence {i} references files absent from the snapshot: {stale}")


def _verdict(source: Source, clause: _Clause, fallback_node: str) -> AttributionVerdict:
    nodes = clause.nodes - {None} or {fallback_node}
    return AttributionVerdict(source, tuple(clause.rules), tuple(sorted(clause.evidence)),
                              tuple(sorted(nodes)))


def external_satisfiable(g_ext: Graph, evidence: Sequence[EvidenceRecord]) -> bool:
    return not _external_clause(g_ext, evidence).fired


def internal_resolved(g_int: Graph, evidence: Sequence[EvidenceRecord]) -> bool:
    return not _internal_clause(g_int, evidence).fired


def attribute(g_ext: Graph, g_int: Graph, evidence: Sequence[EvidenceRecord]) -> AttributionVerdict:
    """Single dominant misalignment source for one iteration's evidence.

    Graph-only signals never produce a verdict on their own: with no
    evidence the verdict is ``pass``.
    """
    if not evidence:
        return AttributionVerdict(Source.PASS)
    _check_consistency(g_ext, g_int, evidence)

    ext = _external_clause(g_ext, evidence)
    if ext.fired:
        return _verdict(Source.EXTERNAL, ext, PROJECT_ID)
    internal = _internal_clause(g_int, evidence)
    if internal.fired:
        fallback = sorted(n.id for n in g_int.nodes_of("file"))[:1] or [PROJECT_ID]
        return _verdict(Source.INTERNAL, internal, fallback[0])
    residual = _Clause()
    for i, rec in enumerate(evidence):
        residual.fire(R_RESIDUAL, i)
        for fr in rec.frames:
            if fr.in_repo and g_int.node(f"file:{fr.file}") is not None:
                residual.nodes.add(f"file:{fr.file}")
    return _verdict(Source.RESIDUAL, residual, PROJECT_ID)
