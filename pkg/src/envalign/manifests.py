"""Reading and editing dependency declarations.

Supported manifests: requirement lists, ``pyproject.toml`` (PEP 621 and
Poetry tables), ``setup.cfg`` ``install_requires`` and literal
``install_requires`` lists in ``setup.py``.
"""

from __future__ import annotations

import ast
import re
import sys
from dataclasses import dataclass
from pathlib import PurePosixPath
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .names import normalize_package_name
from .repo_model import RepoFile

REQUIREMENT = re.compile(
    r"""^\s*
    (?P<name>[A-Za-z0-9](?:[A-Za-z0-9._-]*[A-Za-z0-9])?)
    \s*(?:\[[^\]]*\])?
    \s*(?P<rest>.*?)\s*$""",
    re.VERBOSE,
)

# primary-manifest preference for new declarations
PREFERRED_MANIFESTS = ("requirements.txt", "pyproject.toml")


class MalformedManifestLine(ValueError):
    pass


@dataclass(frozen=True)
class DeclaredDependency:
    package: str
    version_constraint: Optional[str]
    manifest: str
    line: int


def parse_requirement(spec: str) -> tuple[str, Optional[str]]:
    """Split one requirement string into (normalized name, verbatim constraint)."""
    m = REQUIREMENT.match(spec)
    if not m:
        raise MalformedManifestLine(spec)
    rest = m.group("rest")
    if rest and not re.match(r"^(?:[<>=!~;@(]|===)", rest):
        raise MalformedManifestLine(spec)
    return normalize_package_name(m.group("name")), (rest or None)


def _strip_comment(line: str) -> str:
    if line.lstrip().startswith("#"):
        return ""
    return re.split(r"\s+#", line, maxsplit=1)[0].strip()


def _parse_requirements(text: str, path: str, warnings: list[str]) -> list[DeclaredDependency]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw)
        if not line or line.startswith("-"):
            # blank, comment, or installer option (-r, -e, --index-url)
            continue
        try:
            name, constraint = parse_requirement(line)
        except MalformedManifestLine:
            warnings.append(f"{path}:{lineno}: malformed requirement {raw.strip()!r}")
            continue
        out.append(DeclaredDependency(name, constraint, path, lineno))
    return out


def _line_of(text: str, needle: str, default: int = 1) -> int:
    for lineno, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return lineno
    return default


def _parse_pyproject(text: str, path: str, warnings: list[str]) -> list[DeclaredDependency]:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        warnings.append(f"{path}: invalid TOML: {exc}")
        return []
    out = []
    for spec in data.get("project", {}).get("dependencies", []) or []:
        try:
            name, constraint = parse_requirement(spec)
        except MalformedManifestLine:
            warnings.append(f"{path}: malformed requirement {spec!r}")
            continue
        out.append(DeclaredDependency(name, constraint, path, _line_of(text, f'"{spec}"')))
    poetry = data.get("tool", {}).get("poetry", {}).get("dependencies", {}) or {}
    for name, value in poetry.items():
        if name.lower() == "python":
            continue
        constraint = value if isinstance(value, str) else None
        if constraint == "*":
            constraint = None
        out.append(DeclaredDependency(normalize_package_name(name), constraint, path,
                                      _line_of(text, name)))
    return out


def _parse_setup_cfg(text: str, path: str, warnings: list[str]) -> list[DeclaredDependency]:
    out = []
    in_options = in_requires = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        if stripped.startswith("["):
            in_options = stripped == "[options]"
            in_requires = False
            continue
        if not in_options:
            continue
        if re.match(r"^install_requires\s*=", stripped):
            in_requires = True
            stripped = stripped.split("=", 1)[1].strip()
        elif raw[:1] not in (" ", "\t") and stripped:
            in_requires = False
            continue
        if in_requires:
            line = _strip_comment(stripped)
            if not line:
                continue
            try:
                name, constraint = parse_requirement(line)
            except MalformedManifestLine:
                warnings.append(f"{path}:{lineno}: malformed requirement {line!r}")
                continue
            out.append(DeclaredDependency(name, constraint, path, lineno))
    return out


def _parse_setup_py(text: str, path: str, warnings: list[str]) -> list[DeclaredDependency]:
    try:
        tree = ast.parse(text)
    except SyntaxError as exc:
        warnings.append(f"{path}: unparseable setup script: {exc.msg}")
        return []
    out = []
    for node in ast.walk(tree):
        if isinstance(node, ast.keyword) and node.arg == "install_requires" \
                and isinstance(node.value, (ast.List, ast.Tuple)):
            for elt in node.value.elts:
                if isinstance(elt, ast.Constant) and isinstance(elt.value, str):
                    try:
                        name, constraint = parse_requirement(elt.value)
                    except MalformedManifestLine:
                        warnings.append(f"{path}:{elt.lineno}: malformed requirement {elt.value!r}")
                        continue
                    out.append(DeclaredDependency(name, constraint, path, elt.lineno))
    return out


_PARSERS = {
    "pyproject.toml": _parse_pyproject,
    "setup.cfg": _parse_setup_cfg,
    "setup.py": _parse_setup_py,
}


def parse_manifest(file: RepoFile, warnings: Optional[list[str]] = None) -> list[DeclaredDependency]:
    """Declarations in one manifest; malformed entries are skipped into ``warnings``."""
    if warnings is None:
        warnings = []
    if file.text is None:
        warnings.append(f"{file.rel_path}: manifest is not decodable text")
        return []
    parser = _PARSERS.get(PurePosixPath(file.rel_path).name, _parse_requirements)
    return parser(file.text, file.rel_path, warnings)


def declared_names(manifest_name: str, text: str) -> set[str]:
    """Normalized package names a manifest's text declares (malformed entries ignored)."""
    parser = _PARSERS.get(PurePosixPath(manifest_name).name, _parse_requirements)
    return {d.package for d in parser(text, manifest_name, [])}


def add_declaration_text(manifest_name: str, text: str, package: str,
                         constraint: Optional[str] = None) -> Optional[str]:
    """New manifest text declaring ``package``, or None if this manifest kind can't be edited."""
    entry = package + (constraint or "")
    name = PurePosixPath(manifest_name).name
    if name == "pyproject.toml":
        m = re.search(r"(?m)^dependencies\s*=\s*\[[ \t]*(\r?\n)?", text)
        if not m:
            return None
        if m.group(1):
            # multi-line list: one new line, indented like the next entry
            nxt = re.match(r"[ \t]*", text[m.end():]).group(0) or "    "
            return text[: m.end()] + f'{nxt}"{entry}",{m.group(1)}' + text[m.end():]
        return text[: m.end()] + f'"{entry}", ' + text[m.end():]
    if name in ("setup.py", "setup.cfg"):
        return None
    if text and not text.endswith("\n"):
        text += "\n"
    return text + entry + "\n"
