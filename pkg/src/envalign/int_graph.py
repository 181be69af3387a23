"""Repository dependency graph: modules, symbols, unresolved references, parse errors."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional

from .ext_graph import SUFFIX_THRESHOLD, ImportClass, Resolution, resolve_import_target
from .graph import Edge, Graph, Node
from .repo_model import RepoSnapshot
from .source_parser import (
    ImportRecord,
    InvalidSourcePath,
    ParseFailure,
    SymbolDef,
    derive_module_name,
    is_package_initializer,
    resolve_relative,
)

RepoDependencyGraph = Graph


def file_id(rel_path: str) -> str:
    return f"file:{rel_path}"


def module_id(name: str) -> str:
    return f"module:{name}"


def symbol_id(module: str, name: str) -> str:
    return f"symbol:{module}:{name}"


def unresolved_id(target: str) -> str:
    return f"unresolved:{target}"


def parse_error_id(rel_path: str) -> str:
    return f"parse-error:{rel_path}"


def _suffix_fraction(target: str, module: str) -> Fraction:
    t = target.split(".")
    m = module.split(".")
    shared = 0
    for a, b in zip(reversed(t), reversed(m)):
        if a != b:
            break
        shared += 1
    return Fraction(shared, len(t))


def suggest_module_match(target: str, defined: Iterable[str],
                         threshold: float = SUFFIX_THRESHOLD) -> Optional[tuple[str, Fraction]]:
    """Best defined module by suffix similarity, ties to the lexicographically smallest."""
    best = None
    for module in sorted(defined):
        score = _suffix_fraction(target, module)
        if best is None or score > best[1]:
            best = (module, score)
    if best is None or best[1] < threshold or best[1] == 0:
        return None
    return best


def strict_prefixes(modules: Iterable[str]) -> set[str]:
    out = set()
    for m in modules:
        parts = m.split(".")
        for i in range(1, len(parts)):
            out.add(".".join(parts[:i]))
    return out


def build_int_graph(snapshot: RepoSnapshot,
                    imports: Mapping[str, list[ImportRecord]],
                    symbols: Mapping[str, list[SymbolDef]],
                    parse_failures: Mapping[str, ParseFailure],
                    classify: Optional[Callable[[ImportRecord], Resolution]] = None,
                    stdlib: Iterable[str] = frozenset(),
                    warnings: Iterable[str] = ()) -> RepoDependencyGraph:
    """Build G_int from per-file extraction results of one snapshot.

    ``imports`` and ``symbols`` are keyed by source path; files listed in
    ``parse_failures`` define no module. ``classify`` gives each import's
    internal/stdlib/external verdict; only internal imports enter this graph.
    """
    warnings = list(warnings)
    sources = [f.rel_path for f in snapshot.sources]
    names = {}
    for rel in sources:
        try:
            names[rel] = derive_module_name(rel)
        except InvalidSourcePath:
            warnings.append(f"{rel}: not a source path")

    if classify is None:
        all_names = set(names.values())
        classify = lambda imp: resolve_import_target(imp, all_names, stdlib)  # noqa: E731

    nodes: dict[str, Node] = {}
    edges: list[Edge] = []
    defined: dict[str, str] = {}  # module name -> defining file

    # initializers claim their package name before same-named plain modules
    for rel in sorted(sources, key=lambda r: (not is_package_initializer(r), r)):
        nodes[file_id(rel)] = Node(file_id(rel), "file", {"path": rel})
        if rel in parse_failures:
            pf = parse_failures[rel]
            nodes[parse_error_id(rel)] = Node(parse_error_id(rel), "parse-error",
                                              {"file": rel, "line": pf.line, "message": pf.message})
            edges.append(Edge(file_id(rel), parse_error_id(rel), "has-parse-error"))
            continue
        if rel not in names:
            continue
        name = names[rel]
        if name in defined:
            msg = f"module-name-collision: {rel} and {defined[name]} both define {name}"
            nodes[file_id(rel)].attrs["warning"] = msg
            warnings.append(msg)
            continue
        defined[name] = rel
        nodes[module_id(name)] = Node(module_id(name), "module", {
            "name": name, "file": rel, "is_package": is_package_initializer(rel)})
        edges.append(Edge(file_id(rel), module_id(name), "defines-module"))

    symbol_table: dict[str, set[str]] = {}
    for rel, defs in sorted(symbols.items()):
        name = names.get(rel)
        if name is None or defined.get(name) != rel:
            continue
        latest: dict[str, SymbolDef] = {}
        counts: dict[str, int] = {}
        for d in defs:
            latest[d.name] = d  # last binding wins
            counts[d.name] = counts.get(d.name, 0) + 1
        for sym, d in latest.items():
            sid = symbol_id(name, sym)
            nodes[sid] = Node(sid, "symbol", {"module": name, "name": sym, "kind": d.kind.value,
                                              "line": d.line, "definitions": counts[sym]})
            edges.append(Edge(module_id(name), sid, "defines-symbol"))
        symbol_table[name] = set(latest)

    prefixes = strict_prefixes(defined)
    unresolved: dict[str, dict] = {}

    def mark_unresolved(target, importer, rec):
        entry = unresolved.setdefault(target, {"importers": set(), "sites": []})
        entry["importers"].add(importer)
        entry["sites"].append({"file": rec.importer_file, "line": rec.line,
                               "written": rec.written_target})

    for rel, recs in sorted(imports.items()):
        importer = names.get(rel)
        if importer is None or defined.get(importer) != rel:
            continue
        for rec in recs:
            if classify(rec).kind is not ImportClass.INTERNAL:
                continue
            target = resolve_relative(rec, importer)
            if not target:
                # `from . import x` at the top level: each name is a module reference
                for sym in rec.imported_symbols:
                    if sym in defined:
                        edges.append(Edge(module_id(importer), module_id(sym), "imports-module"))
                    elif sym not in prefixes:
                        mark_unresolved(sym, importer, rec)
                continue
            if target in defined:
                edges.append(Edge(module_id(importer), module_id(target), "imports-module"))
            elif target not in prefixes:
                mark_unresolved(target, importer, rec)
                continue
            for sym in rec.imported_symbols:
                sub = f"{target}.{sym}"
                if sub in defined:
                    edges.append(Edge(module_id(importer), module_id(sub), "imports-module"))
                elif sym in symbol_table.get(target, ()):
                    edges.append(Edge(module_id(importer), symbol_id(target, sym), "references-symbol"))

    for target, entry in unresolved.items():
        match = suggest_module_match(target, defined)
        uid = unresolved_id(target)
        nodes[uid] = Node(uid, "unresolved-ref", {
            "target": target,
            "importing_modules": sorted(entry["importers"]),
            "sites": sorted(entry["sites"], key=lambda s: (s["file"], s["line"])),
            "best_match": None if match is None else {
                "module": match[0], "score": float(match[1]),
                "fraction": f"{match[1].numerator}/{match[1].denominator}"},
        })
        for imp in sorted(entry["importers"]):
            edges.append(Edge(module_id(imp), uid, "imports-unresolved"))

    return Graph.build("int", nodes.values(), edges, snapshot.digest, warnings)


def defined_modules(graph: RepoDependencyGraph) -> set[str]:
    return {n.attrs["name"] for n in graph.nodes_of("module")}


@dataclass(frozen=True)
class UnresolvedRef:
    target: str
    importing_modules: tuple[str, ...]
    best_match: Optional[tuple[str, float]] = None

    def to_dict(self) -> dict:
        return {"target": self.target, "importing_modules": list(self.importing_modules),
                "best_match": None if self.best_match is None else
                {"module": self.best_match[0], "score": self.best_match[1]}}


def find_unresolved_refs(graph: RepoDependencyGraph) -> list[UnresolvedRef]:
    out = []
    for n in graph.nodes_of("unresolved-ref"):
        bm = n.attrs.get("best_match")
        out.append(UnresolvedRef(n.attrs["target"], tuple(n.attrs["importing_modules"]),
                                 None if bm is None else (bm["module"], bm["score"])))
    return sorted(out, key=lambda r: r.target)


class SymbolStatus(str, Enum):
    RESOLVED = "resolved"
    MISSING_SYMBOL = "missing-symbol"
    MISSING_MODULE = "missing-module"


@dataclass(frozen=True)
class SymbolResolution:
    status: SymbolStatus
    node_id: Optional[str] = None


def resolve_symbol_reference(module: str, symbol: str, graph: RepoDependencyGraph) -> SymbolResolution:
    if graph.node(module_id(module)) is None:
        return SymbolResolution(SymbolStatus.MISSING_MODULE)
    sid = symbol_id(module, symbol)
    if graph.node(sid) is None:
        return SymbolResolution(SymbolStatus.MISSING_SYMBOL)
    return SymbolResolution(SymbolStatus.RESOLVED, sid)
