"""External environment graph: which packages the code uses versus declares."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional

from .graph import Edge, Graph, Node
from .manifests import DeclaredDependency
from .names import DEFAULT_ALIASES, distribution_name
from .repo_model import RepoSnapshot
from .source_parser import ImportRecord

ExternalEnvGraph = Graph

SUFFIX_THRESHOLD = 0.5

PROJECT_ID = "project"


def file_id(rel_path: str) -> str:
    return f"file:{rel_path}"


def package_id(name: str) -> str:
    return f"pkg:{name}"


class ImportClass(str, Enum):
    INTERNAL = "internal"
    STDLIB = "stdlib"
    EXTERNAL = "external"


@dataclass(frozen=True)
class Resolution:
    kind: ImportClass
    package: Optional[str] = None  # first import segment, for external/stdlib


def suffix_similarity(target: str, module: str) -> float:
    """Shared trailing dotted segments divided by the target's segment count."""
    t = target.split(".")
    m = module.split(".")
    shared = 0
    for a, b in zip(reversed(t), reversed(m)):
        if a != b:
            break
        shared += 1
    return shared / len(t)


def resolve_import_target(imp: ImportRecord | str, internal_modules: Iterable[str],
                          stdlib: Iterable[str],
                          threshold: float = SUFFIX_THRESHOLD) -> Resolution:
    """Classify an import as internal, stdlib or external. Total.

    Rule chain: relative -> internal; first segment names an internal
    top-level module -> internal; first segment in stdlib -> stdlib; suffix
    similarity against some internal module >= threshold -> internal;
    otherwise external keyed by the first segment.
    """
    if isinstance(imp, ImportRecord):
        if imp.relative_level > 0:
            return Resolution(ImportClass.INTERNAL)
        target = imp.target
    else:
        target = imp
    internal_modules = set(internal_modules)
    first = target.split(".")[0]
    if first in {m.split(".")[0] for m in internal_modules}:
        return Resolution(ImportClass.INTERNAL)
    if first in stdlib:
        return Resolution(ImportClass.STDLIB, first)
    if any(suffix_similarity(target, m) >= threshold for m in internal_modules):
        return Resolution(ImportClass.INTERNAL)
    return Resolution(ImportClass.EXTERNAL, first)


@dataclass
class _PackageInfo:
    used: bool = False
    declared: bool = False
    constraint: Optional[str] = None
    origin: str = "external"
    import_names: set = field(default_factory=set)


def build_ext_graph(snapshot: RepoSnapshot, imports: Mapping[str, list[ImportRecord]],
                    declarations: list[DeclaredDependency], stdlib: Iterable[str],
                    internal_modules: Iterable[str],
                    aliases: Mapping[str, str] = DEFAULT_ALIASES,
                    warnings: Iterable[str] = ()) -> ExternalEnvGraph:
    """Project/file/package graph with usage and declaration flags on packages.

    ``imports`` maps source paths to their import records (files that failed
    to parse map to an empty list).
    """
    stdlib = frozenset(stdlib)
    internal_modules = set(internal_modules)
    nodes = [Node(PROJECT_ID, "project", {})]
    edges = []
    packages: dict[str, _PackageInfo] = {}

    for f in snapshot.sources + snapshot.manifests:
        nodes.append(Node(file_id(f.rel_path), "file", {"role": f.role.value}))
        edges.append(Edge(PROJECT_ID, file_id(f.rel_path), "contains"))

    for rel_path, recs in sorted(imports.items()):
        for imp in recs:
            res = resolve_import_target(imp, internal_modules, stdlib)
            if res.kind is ImportClass.INTERNAL:
                continue
            if res.kind is ImportClass.STDLIB:
                name = res.package
            else:
                name = distribution_name(res.package, aliases)
            info = packages.setdefault(name, _PackageInfo())
            info.used = True
            info.import_names.add(res.package)
            if res.kind is ImportClass.STDLIB:
                info.origin = "stdlib"
            edges.append(Edge(file_id(rel_path), package_id(name), "imports"))

    for dep in declarations:
        info = packages.setdefault(dep.package, _PackageInfo())
        if not info.used and dep.package in stdlib:
            info.origin = "stdlib"
        if not info.declared:
            info.constraint = dep.version_constraint
        info.declared = True

    for name, info in packages.items():
        nodes.append(Node(package_id(name), "package", {
            "name": name,
            "used_in_code": info.used,
            "declared": info.declared,
            "declared_version_constraint": info.constraint,
            "origin": info.origin,
            "import_names": sorted(info.import_names),
        }))
    return Graph.build("ext", nodes, edges, snapshot.digest, warnings)


class GapKind(str, Enum):
    USED_NOT_DECLARED = "used-not-declared"
    DECLARED_NOT_USED = "declared-not-used"


@dataclass(frozen=True)
class DependencyGap:
    package: str
    kind: GapKind
    using_files: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"package": self.package, "kind": self.kind.value,
                "using_files": list(self.using_files)}


def find_dependency_gaps(graph: ExternalEnvGraph) -> list[DependencyGap]:
    gaps = []
    for node in graph.nodes_of("package"):
        a = node.attrs
        if a["used_in_code"] and not a["declared"] and a["origin"] == "external":
            users = sorted(e.src[len("file:"):] for e in graph.edges
                           if e.kind == "imports" and e.dst == node.id)
            gaps.append(DependencyGap(a["name"], GapKind.USED_NOT_DECLARED, tuple(users)))
        elif a["declared"] and not a["used_in_code"]:
            gaps.append(DependencyGap(a["name"], GapKind.DECLARED_NOT_USED))
    return sorted(gaps, key=lambda g: (g.package, g.kind.value))
