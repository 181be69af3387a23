"""Iterative environment alignment for multi-file Python repositories.

Two graphs describe a repository: what it imports versus what it declares
(external layer) and how its files, modules and symbols connect (internal
layer). The alignment loop executes the repository, turns the logs into
evidence, attributes the failure to one source under a fixed priority and
applies a targeted revision, until validation passes or the budget runs out.
"""

__version__ = "0.1.0"

from .attribution import AttributionVerdict, Source, attribute
from .env import Environment, build_env
from .executor import ExecConfig, RawExecutionLog, run_all
from .loop import AlignmentRunReport, LoopConfig, align
from .repo_model import RepoSnapshot, ScanConfig, scan_repository

__all__ = [
    "AlignmentRunReport",
    "AttributionVerdict",
    "Environment",
    "ExecConfig",
    "LoopConfig",
    "RawExecutionLog",
    "RepoSnapshot",
    "ScanConfig",
    "Source",
    "align",
    "attribute",
    "build_env",
    "run_all",
    "scan_repository",
]
