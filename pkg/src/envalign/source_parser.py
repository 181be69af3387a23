"""Import, definition and parse-failure extraction for Python sources."""

from __future__ import annotations

import ast
from dataclasses import dataclass
from enum import Enum
from pathlib import PurePosixPath
from typing import Union


class InvalidSourcePath(ValueError):
    pass


@dataclass(frozen=True)
class ImportRecord:
    importer_file: str
    target: str
    imported_symbols: tuple[str, ...] = ()
    relative_level: int = 0
    line: int = 1
    nested: bool = False

    @property
    def is_from(self) -> bool:
        return bool(self.imported_symbols) or self.relative_level > 0

    @property
    def written_target(self) -> str:
        """The module reference as it appears in the source text."""
        return "." * self.relative_level + self.target


class SymbolKind(str, Enum):
    FUNCTION = "function-def"
    CLASS = "class-def"
    BINDING = "top-level-binding"


@dataclass(frozen=True)
class SymbolDef:
    module: str
    name: str
    kind: SymbolKind
    line: int


@dataclass(frozen=True)
class ParseFailure:
    file: str
    line: int
    message: str


def _parse(text: str, file: str) -> Union[ast.Module, ParseFailure]:
    try:
        return ast.parse(text, filename=file)
    except SyntaxError as exc:
        return ParseFailure(file=file, line=exc.lineno or 0, message=f"{type(exc).__name__}: {exc.msg}")
    except ValueError as exc:  # null bytes
        return ParseFailure(file=file, line=0, message=str(exc))


class _ImportCollector(ast.NodeVisitor):
    def __init__(self, file: str):
        self.file = file
        self.depth = 0
        self.found: list[tuple[int, int, ImportRecord]] = []

    def _scoped(self, node):
        self.depth += 1
        self.generic_visit(node)
        self.depth -= 1

    visit_FunctionDef = visit_AsyncFunctionDef = visit_ClassDef = visit_Lambda = _scoped

    def visit_Import(self, node: ast.Import):
        for alias in node.names:
            rec = ImportRecord(self.file, alias.name, (), 0, node.lineno, self.depth > 0)
            self.found.append((node.lineno, node.col_offset, rec))

    def visit_ImportFrom(self, node: ast.ImportFrom):
        names = tuple(a.name for a in node.names if a.name != "*")
        rec = ImportRecord(self.file, node.module or "", names, node.level or 0,
                           node.lineno, self.depth > 0)
        self.found.append((node.lineno, node.col_offset, rec))


def extract_imports(text: str, file: str) -> Union[list[ImportRecord], ParseFailure]:
    """All import statements in source order, or a ParseFailure value.

    Nested imports (inside functions or classes) are included and flagged.
    String-based dynamic imports are not seen.
    """
    tree = _parse(text, file)
    if isinstance(tree, ParseFailure):
        return tree
    collector = _ImportCollector(file)
    collector.visit(tree)
    collector.found.sort(key=lambda t: (t[0], t[1]))
    return [rec for _, _, rec in collector.found]


def _binding_names(target: ast.expr) -> list[str]:
    if isinstance(target, ast.Name):
        return [target.id]
    if isinstance(target, (ast.Tuple, ast.List)):
        out = []
        for elt in target.elts:
            out.extend(_binding_names(elt))
        return out
    if isinstance(target, ast.Starred):
        return _binding_names(target.value)
    return []


def _top_level(body: list[ast.stmt]):
    # module body plus bodies of module-level if/try/with blocks
    for stmt in body:
        yield stmt
        if isinstance(stmt, ast.If):
            yield from _top_level(stmt.body)
            yield from _top_level(stmt.orelse)
        elif isinstance(stmt, ast.Try):
            yield from _top_level(stmt.body)
            for h in stmt.handlers:
                yield from _top_level(h.body)
            yield from _top_level(stmt.orelse)
            yield from _top_level(stmt.finalbody)
        elif isinstance(stmt, (ast.With, ast.AsyncWith)):
            yield from _top_level(stmt.body)


def extract_symbols(text: str, module: str, file: str = "<unknown>") -> Union[list[SymbolDef], ParseFailure]:
    tree = _parse(text, file)
    if isinstance(tree, ParseFailure):
        return tree
    out = []
    for stmt in _top_level(tree.body):
        if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
            out.append(SymbolDef(module, stmt.name, SymbolKind.FUNCTION, stmt.lineno))
        elif isinstance(stmt, ast.ClassDef):
            out.append(SymbolDef(module, stmt.name, SymbolKind.CLASS, stmt.lineno))
        elif isinstance(stmt, ast.Assign):
            for t in stmt.targets:
                for name in _binding_names(t):
                    out.append(SymbolDef(module, name, SymbolKind.BINDING, stmt.lineno))
        elif isinstance(stmt, (ast.AnnAssign, ast.AugAssign)):
            for name in _binding_names(stmt.target):
                out.append(SymbolDef(module, name, SymbolKind.BINDING, stmt.lineno))
    return out


INIT_STEM = "__init__"


def derive_module_name(rel_path: str, source_extensions=(".py",)) -> str:
    """Dotted module name for a source path: ``src/client.py`` -> ``src.client``.

    A package initializer names its directory; a root-level initializer keeps
    the name ``__init__``.
    """
    p = PurePosixPath(rel_path)
    if p.suffix not in source_extensions or p.is_absolute() or ".." in p.parts:
        raise InvalidSourcePath(rel_path)
    parts = list(p.with_suffix("").parts)
    if len(parts) > 1 and parts[-1] == INIT_STEM:
        parts.pop()
    return ".".join(parts)


def is_package_initializer(rel_path: str) -> bool:
    return PurePosixPath(rel_path).stem == INIT_STEM


def resolve_relative(imp: ImportRecord, importer_module: str) -> str:
    """Absolute dotted target of an import (identity for absolute imports).

    Relative imports that climb past the top level keep their leading dots.
    """
    if imp.relative_level == 0:
        return imp.target
    parts = importer_module.split(".") if importer_module else []
    if not is_package_initializer(imp.importer_file):
        parts = parts[:-1]
    up = imp.relative_level - 1
    if up > len(parts):
        return imp.written_target
    base = parts[: len(parts) - up]
    return ".".join(base + ([imp.target] if imp.target else []))
