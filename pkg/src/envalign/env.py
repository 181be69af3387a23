"""BuildEnv: snapshot -> (external environment graph, repository dependency graph)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from .ext_graph import ExternalEnvGraph, build_ext_graph, resolve_import_target
from .int_graph import RepoDependencyGraph, build_int_graph
from .manifests import DeclaredDependency, parse_manifest
from .names import DEFAULT_ALIASES, load_stdlib
from .repo_model import RepoSnapshot
from .source_parser import (
    ImportRecord,
    InvalidSourcePath,
    ParseFailure,
    SymbolDef,
    derive_module_name,
    extract_imports,
    extract_symbols,
)


@dataclass
class Environment:
    snapshot: RepoSnapshot
    g_ext: ExternalEnvGraph
    g_int: RepoDependencyGraph
    imports: dict[str, list[ImportRecord]] = field(default_factory=dict)
    symbols: dict[str, list[SymbolDef]] = field(default_factory=dict)
    parse_failures: dict[str, ParseFailure] = field(default_factory=dict)
    declarations: list[DeclaredDependency] = field(default_factory=list)
    module_names: dict[str, str] = field(default_factory=dict)
    stdlib: frozenset = frozenset()


def build_env(snapshot: RepoSnapshot, stdlib: Optional[frozenset] = None,
              aliases: Mapping[str, str] = DEFAULT_ALIASES) -> Environment:
    if stdlib is None:
        stdlib = load_stdlib()
    warnings = list(snapshot.warnings)
    imports: dict[str, list[ImportRecord]] = {}
    symbols: dict[str, list[SymbolDef]] = {}
    failures: dict[str, ParseFailure] = {}
    names: dict[str, str] = {}

    for f in snapshot.sources:
        try:
            names[f.rel_path] = derive_module_name(f.rel_path)
        except InvalidSourcePath:
            continue
        if f.text is None:
            failures[f.rel_path] = ParseFailure(f.rel_path, 0, "undecodable source file")
            continue
        recs = extract_imports(f.text, f.rel_path)
        if isinstance(recs, ParseFailure):
            failures[f.rel_path] = recs
            continue
        imports[f.rel_path] = recs
        defs = extract_symbols(f.text, names[f.rel_path], f.rel_path)
        symbols[f.rel_path] = defs  # cannot fail once imports parsed

    declarations: list[DeclaredDependency] = []
    for m in snapshot.manifests:
        declarations.extend(parse_manifest(m, warnings))

    internal = set(names.values())
    g_ext = build_ext_graph(snapshot, imports, declarations, stdlib, internal, aliases, warnings)
    g_int = build_int_graph(snapshot, imports, symbols, failures,
                            classify=lambda imp: resolve_import_target(imp, internal, stdlib),
                            warnings=[])
    return Environment(snapshot, g_ext, g_int, imports, symbols, failures, declarations,
                       names, frozenset(stdlib))
