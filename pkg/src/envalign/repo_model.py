"""Immutable repository snapshots.

A snapshot is the shared input of every graph builder: the sorted list of
non-ignored files under a root, each tagged with a role and (when the bytes
decode as UTF-8) its text.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path, PurePosixPath
from typing import Iterator, Optional


class RootNotFound(FileNotFoundError):
    pass


class FileRole(str, Enum):
    SOURCE = "source"
    MANIFEST = "manifest"
    CONFIG = "config"
    ASSET = "asset"


DEFAULT_SOURCE_EXTENSIONS = (".py",)
DEFAULT_MANIFEST_NAMES = ("requirements.txt", "pyproject.toml", "setup.py", "setup.cfg")
DEFAULT_CONFIG_NAMES = ("pytest.ini", "tox.ini", "MANIFEST.in", "Makefile", "Dockerfile")
DEFAULT_IGNORES = (".git", "__pycache__", ".venv", "venv", "node_modules")


@dataclass(frozen=True)
class ScanConfig:
    source_extensions: tuple[str, ...] = DEFAULT_SOURCE_EXTENSIONS
    manifest_names: tuple[str, ...] = DEFAULT_MANIFEST_NAMES
    config_names: tuple[str, ...] = DEFAULT_CONFIG_NAMES
    ignores: tuple[str, ...] = DEFAULT_IGNORES
    include_hidden: bool = False

    def is_excluded_dir(self, name: str) -> bool:
        if name in self.ignores:
            return True
        return not self.include_hidden and name.startswith(".")

    def is_excluded_path(self, rel_path: str) -> bool:
        """True if any directory component of ``rel_path`` is excluded."""
        parts = PurePosixPath(rel_path).parts[:-1]
        return any(self.is_excluded_dir(p) for p in parts)


@dataclass(frozen=True)
class RepoFile:
    rel_path: str
    role: FileRole
    bytes_len: int
    text: Optional[str] = None
    sha256: str = ""

    @property
    def name(self) -> str:
        return PurePosixPath(self.rel_path).name


@dataclass(frozen=True)
class RepoSnapshot:
    root: Path
    files: tuple[RepoFile, ...]
    digest: str
    warnings: tuple[str, ...] = field(default=())

    def __iter__(self) -> Iterator[RepoFile]:
        return iter(self.files)

    def __len__(self) -> int:
        return len(self.files)

    def get(self, rel_path: str) -> Optional[RepoFile]:
        for f in self.files:
            if f.rel_path == rel_path:
                return f
        return None

    def paths(self) -> list[str]:
        return [f.rel_path for f in self.files]

    def by_role(self, role: FileRole) -> list[RepoFile]:
        return [f for f in self.files if f.role is role]

    @property
    def sources(self) -> list[RepoFile]:
        return self.by_role(FileRole.SOURCE)

    @property
    def manifests(self) -> list[RepoFile]:
        return self.by_role(FileRole.MANIFEST)


def classify_file(rel_path: str, config: ScanConfig = ScanConfig()) -> FileRole:
    """Role of a file from its path alone; total, falls back to asset.

    Manifest names win over the source-extension rule, so ``setup.py`` is a
    manifest rather than an importable module.
    """
    p = PurePosixPath(rel_path)
    if p.name in config.manifest_names:
        return FileRole.MANIFEST
    if p.suffix in config.source_extensions:
        return FileRole.SOURCE
    if p.name in config.config_names:
        return FileRole.CONFIG
    return FileRole.ASSET


def snapshot_digest(entries: list[tuple[str, bytes]]) -> str:
    h = hashlib.sha256()
    for rel, data in entries:
        h.update(hashlib.sha256(rel.encode("utf-8")).digest())
        h.update(hashlib.sha256(data).digest())
    return h.hexdigest()


def _walk(root: Path, config: ScanConfig) -> list[str]:
    out = []
    for dirpath, dirnames, filenames in os.walk(root, followlinks=False):
        dirnames[:] = sorted(
            d for d in dirnames
            if not config.is_excluded_dir(d) and not os.path.islink(os.path.join(dirpath, d))
        )
        for name in filenames:
            full = os.path.join(dirpath, name)
            if os.path.islink(full):
                continue
            if not config.include_hidden and name.startswith("."):
                continue
            rel = Path(full).relative_to(root).as_posix()
            out.append(rel)
    return sorted(out)


def scan_repository(root: os.PathLike | str, config: ScanConfig = ScanConfig()) -> RepoSnapshot:
    root = Path(root)
    if not root.is_dir():
        raise RootNotFound(f"repository root not found: {root}")
    root = root.resolve()

    files = []
    entries = []
    warnings = []
    for rel in _walk(root, config):
        try:
            data = (root / rel).read_bytes()
        except OSError as exc:
            # unreadable files are kept as opaque assets
            warnings.append(f"unreadable file {rel}: {exc.strerror or exc}")
            files.append(RepoFile(rel, FileRole.ASSET, 0, None, ""))
            entries.append((rel, b""))
            continue
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            text = None
        files.append(RepoFile(
            rel_path=rel,
            role=classify_file(rel, config),
            bytes_len=len(data),
            text=text,
            sha256=hashlib.sha256(data).hexdigest(),
        ))
        entries.append((rel, data))

    return RepoSnapshot(root=root, files=tuple(files), digest=snapshot_digest(entries),
                        warnings=tuple(warnings))
