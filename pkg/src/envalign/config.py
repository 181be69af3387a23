"""Tool configuration: one flat TOML document, overridable by command-line flags.

Every key is optional; the defaults below apply when neither the file nor a
flag sets it. The file is found via ``--config`` or the ENVALIGN_CONFIG
environment variable. Unknown keys and wrongly typed values are errors.

Phase commands are argv lists (or one shell-style string) with ``{root}``
and ``{python}`` placeholders; ``false`` disables a phase.
"""

from __future__ import annotations

import os
import shlex
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .executor import (
    DEFAULT_LAUNCH_CMD,
    DEFAULT_TEST_CMD,
    PHASE_ORDER,
    ExecConfig,
    default_install_cmd,
)
from .loop import LoopConfig
from .names import load_aliases, load_stdlib
from .repo_model import DEFAULT_IGNORES, DEFAULT_SOURCE_EXTENSIONS, ScanConfig

ENV_VAR = "ENVALIGN_CONFIG"

Command = Union[list, str, bool, None]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ToolConfig:
    # scan
    source_extensions: tuple = DEFAULT_SOURCE_EXTENSIONS
    ignores: tuple = DEFAULT_IGNORES
    include_hidden: bool = False
    # execution
    install_cmd: Command = None  # None: the built-in installer
    launch_cmd: Command = None
    test_cmd: Command = None
    phases: tuple = tuple(p.value for p in PHASE_ORDER)
    local_index: Optional[str] = "bundled"  # offline package directory; "bundled" = shipped stubs
    online_install: bool = False  # install with pip instead (needs network)
    timeout: float = 120.0
    workspace_policy: str = "in-place"
    stream_cap: int = 256 * 1024
    # loop
    budget: int = 4
    normalizer_cmd: Command = None
    reviser_cmd: Command = None
    reviser_timeout: float = 300.0
    report: Optional[str] = None
    timestamps: bool = False
    # name tables
    stdlib_override: Optional[str] = None
    alias_table: Optional[str] = None

    def __post_init__(self):
        for f in fields(self):
            _check_type(f.name, getattr(self, f.name))
        bad = set(self.phases) - {p.value for p in PHASE_ORDER}
        if bad:
            raise ConfigError(f"unknown phases: {sorted(bad)}")
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if self.timeout <= 0 or self.reviser_timeout <= 0:
            raise ConfigError("timeouts must be positive")
        if self.workspace_policy not in ("in-place", "copy-to-temp"):
            raise ConfigError(f"unknown workspace_policy {self.workspace_policy!r}")

    def with_overrides(self, **flags) -> "ToolConfig":
        """Apply flag values; None means the flag was not given."""
        given = {k: v for k, v in flags.items() if v is not None}
        unknown = set(given) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown settings: {sorted(unknown)}")
        return replace(self, **{k: _coerce(k, v) for k, v in given.items()})

    def scan_config(self) -> ScanConfig:
        return ScanConfig(source_extensions=tuple(self.source_extensions),
                          ignores=tuple(self.ignores), include_hidden=self.include_hidden)

    def exec_config(self) -> ExecConfig:
        if self.install_cmd is None or self.install_cmd is True:
            install = default_install_cmd(None if self.online_install else self.local_index)
        else:
            install = _argv(self.install_cmd)
        launch = list(DEFAULT_LAUNCH_CMD) if self.launch_cmd in (None, True) else _argv(self.launch_cmd)
        test = list(DEFAULT_TEST_CMD) if self.test_cmd in (None, True) else _argv(self.test_cmd)
        cfg = ExecConfig(install_cmd=install, launch_cmd=launch, test_cmd=test,
                         timeout=float(self.timeout), workspace_policy=self.workspace_policy,
                         stream_cap=int(self.stream_cap))
        return cfg.with_phases(*[p.value for p in cfg.enabled_phases if p.value in self.phases])

    def loop_config(self) -> LoopConfig:
        return LoopConfig(
            budget=int(self.budget), exec=self.exec_config(), scan=self.scan_config(),
            normalizer_cmd=_argv(self.normalizer_cmd), reviser_cmd=_argv(self.reviser_cmd),
            reviser_timeout=float(self.reviser_timeout), report_path=self.report,
            stdlib=load_stdlib(self.stdlib_override) if self.stdlib_override else None,
            aliases=load_aliases(self.alias_table))


def _argv(cmd: Command) -> Optional[list[str]]:
    if cmd is None or cmd is False:
        return None
    if isinstance(cmd, str):
        return shlex.split(cmd) or None
    return [str(a) for a in cmd] or None


_TYPES = {f.name: f.type for f in fields(ToolConfig)}


def _check_type(key: str, value) -> None:
    kind = _TYPES[key]
    ok = {
        "tuple": isinstance(value, (tuple, list)) and all(isinstance(v, str) for v in value),
        "bool": isinstance(value, bool),
        "int": isinstance(value, int) and not isinstance(value, bool),
        "float": isinstance(value, (int, float)) and not isinstance(value, bool),
        "str": isinstance(value, str),
        "Optional[str]": value is None or isinstance(value, str),
        "Command": value is None or isinstance(value, (bool, str)) or (
            isinstance(value, (list, tuple)) and all(isinstance(v, str) for v in value)),
    }[kind]
    if not ok:
        raise ConfigError(f"{key}: expected {kind}, got {type(value).__name__}")


def _coerce(key: str, value):
    if _TYPES[key] == "tuple" and isinstance(value, list):
        return tuple(value)
    if _TYPES[key] == "float" and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def parse_config_text(text: str, source: str = "<config>") -> ToolConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    nested = sorted(k for k, v in data.items() if isinstance(v, dict))
    if nested:
        raise ConfigError(f"{source}: the config is flat; unexpected tables {nested}")
    unknown = sorted(set(data) - set(_TYPES))
    if unknown:
        raise ConfigError(f"{source}: unknown keys {unknown}")
    return ToolConfig(**{k: _coerce(k, v) for k, v in data.items()})


def load_config(path: Optional[str] = None, environ=None) -> ToolConfig:
    """Explicit path, else ENVALIGN_CONFIG, else pure defaults."""
    environ = os.environ if environ is None else environ
    path = path or environ.get(ENV_VAR) or None
    if path is None:
        return ToolConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"), str(p))
