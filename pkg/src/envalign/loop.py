"""The alignment loop: rebuild, execute, attribute, revise, until pass or budget."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .attribution import AttributionVerdict, InconsistentInputs, Source, attribute
from .env import build_env
from .evidence import EvidenceRecord, ExternalNormalizer, Normalizer, RuleNormalizer
from .executor import ExecConfig, RawExecutionLog, pass_exec, run_all
from .graph import canonical_json
from .names import DEFAULT_ALIASES, load_stdlib
from .repo_model import RootNotFound, ScanConfig, scan_repository
from .revision import (
    Action,
    ApplyResult,
    ExternalReviser,
    RevisionPlan,
    apply_mechanical,
    plan_revision,
)

log = logging.getLogger(__name__)

REPORT_VERSION = 1


class WorkspaceError(RuntimeError):
    pass


@dataclass
class LoopConfig:
    budget: int = 4
    exec: ExecConfig = field(default_factory=ExecConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    normalizer_cmd: Optional[list[str]] = None  # None: rule-based
    reviser_cmd: Optional[list[str]] = None
    reviser_timeout: float = 300.0
    report_path: Optional[str] = None
    stdlib: Optional[frozenset] = None
    aliases: dict = field(default_factory=lambda: dict(DEFAULT_ALIASES))

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")


@dataclass
class IterationRecord:
    index: int
    snapshot_digest: str
    g_ext_digest: str
    g_int_digest: str
    logs: list[RawExecutionLog]
    evidence: list[EvidenceRecord]
    verdict: AttributionVerdict
    plan: Optional[RevisionPlan] = None
    apply_result: Optional[ApplyResult] = None
    post_revision_digest: Optional[str] = None
    errors: list[str] = field(default_factory=list)

    def to_dict(self, timings: bool = False) -> dict:
        return {
            "index": self.index,
            "snapshot_digest": self.snapshot_digest,
            "g_ext_digest": self.g_ext_digest,
            "g_int_digest": self.g_int_digest,
            "logs": [lg.to_dict(timings) for lg in self.logs],
            "evidence": [r.to_dict() for r in self.evidence],
            "verdict": self.verdict.to_dict(),
            "plan": None if self.plan is None else self.plan.to_dict(),
            "apply_result": None if self.apply_result is None else self.apply_result.to_dict(),
            "post_revision_digest": self.post_revision_digest,
            "errors": list(self.errors),
        }


@dataclass
class AlignmentRunReport:
    iterations: list[IterationRecord]
    outcome: str  # success | budget-exhausted | aborted
    final_digest: Optional[str]
    budget: int
    error: Optional[str] = None

    @property
    def aborted(self) -> bool:
        return self.outcome == "aborted"

    def to_dict(self, timings: bool = False) -> dict:
        return {
            "version": REPORT_VERSION,
            "budget": self.budget,
            "outcome": self.outcome,
            "final_digest": self.final_digest,
            "error": self.error,
            "iterations": [it.to_dict(timings) for it in self.iterations],
        }

    def to_json(self, timings: bool = False) -> str:
        return canonical_json(self.to_dict(timings))


def write_report(report: AlignmentRunReport, path, timestamps: bool = False) -> None:
    """Canonical JSON; durations and the write time only with ``timestamps``."""
    data = report.to_dict(timings=timestamps)
    if timestamps:
        from datetime import datetime, timezone
        data["written_at"] = datetime.now(timezone.utc).isoformat()
    Path(path).write_text(canonical_json(data), encoding="utf-8")


def _normalizer(config: LoopConfig, workspace: Path, stdlib) -> Normalizer:
    rules = RuleNormalizer(workspace, stdlib, config.scan)
    if config.normalizer_cmd:
        return ExternalNormalizer(list(config.normalizer_cmd), fallback=rules)
    return rules


def align(workspace, config: LoopConfig = None, reviser=None) -> AlignmentRunReport:
    """Iteratively align ``workspace`` (edited in place) with its validation setting.

    ``reviser`` overrides ``config.reviser_cmd`` with any callable of the
    ExternalReviser shape.
    """
    config = config or LoopConfig()
    root = Path(workspace)
    stdlib = config.stdlib if config.stdlib is not None else load_stdlib()
    normalizer = _normalizer(config, root, stdlib)
    if reviser is None and config.reviser_cmd:
        reviser = ExternalReviser(list(config.reviser_cmd), config.reviser_timeout)

    iterations: list[IterationRecord] = []

    def finish(outcome, digest, error=None):
        report = AlignmentRunReport(iterations, outcome, digest, config.budget, error)
        if config.report_path:
            write_report(report, config.report_path)
        return report

    last_digest = None
    for t in range(1, config.budget + 1):
        try:
            snapshot = scan_repository(root, config.scan)
        except (RootNotFound, OSError) as exc:
            return finish("aborted", last_digest, f"workspace error: {exc}")
        env = build_env(snapshot, stdlib, config.aliases)
        logs = run_all(root, config.exec)
        evidence = normalizer(logs, env.g_ext, env.g_int)
        record = IterationRecord(t, snapshot.digest, env.g_ext.digest(), env.g_int.digest(),
                                 logs, evidence, AttributionVerdict(Source.PASS))
        iterations.append(record)
        last_digest = snapshot.digest

        if pass_exec(logs, config.exec):
            if evidence:
                record.errors.append("normalizer reported evidence for a passing run; ignored")
                record.evidence = []
            return finish("success", snapshot.digest)

        try:
            record.verdict = attribute(env.g_ext, env.g_int, evidence)
        except InconsistentInputs as exc:
            record.errors.append(f"attribution: {exc}")
            return finish("aborted", snapshot.digest, str(exc))
        if record.verdict.source is Source.PASS:
            msg = "execution failed but no evidence was produced"
            record.errors.append(msg)
            return finish("aborted", snapshot.digest, msg)

        record.plan = plan_revision(record.verdict, env.g_ext, env.g_int, evidence, root)
        result = apply_mechanical(record.plan, root)
        delegated = [d for d in record.plan.directives if d.action is Action.DELEGATE]
        if delegated:
            result.skipped = [(d, r) for d, r in result.skipped if d.action is not Action.DELEGATE]
            if reviser is None:
                result.skipped += [(d, "no-reviser-configured") for d in delegated]
            else:
                outcome = reviser(root, record.plan, evidence, env.g_ext, env.g_int)
                if outcome.ok:
                    result.applied += delegated
                else:
                    result.skipped += [(d, outcome.reason) for d in delegated]
        record.apply_result = result
        try:
            record.post_revision_digest = scan_repository(root, config.scan).digest
        except (RootNotFound, OSError) as exc:
            return finish("aborted", last_digest, f"workspace error: {exc}")
        last_digest = record.post_revision_digest
        log.info("iteration %d: %s, %d applied, %d skipped", t, record.verdict.source.value,
                 len(result.applied), len(result.skipped))

    return finish("budget-exhausted", last_digest)


def attribute_once(workspace, config: LoopConfig):
    """One iteration without revision: BuildEnv, execute, normalize, attribute."""
    root = Path(workspace)
    stdlib = config.stdlib if config.stdlib is not None else load_stdlib()
    snapshot = scan_repository(root, config.scan)
    env = build_env(snapshot, stdlib, config.aliases)
    exec_config = replace(config.exec, workspace_policy="copy-to-temp")
    logs = run_all(root, exec_config)
    evidence = _normalizer(config, root, stdlib)(logs, env.g_ext, env.g_int)
    if pass_exec(logs, exec_config):
        evidence = []
    return attribute(env.g_ext, env.g_int, evidence), evidence, env


def check_report_contract(report: AlignmentRunReport) -> list[str]:
    """Violations of the loop contract (empty when the report is well-formed)."""
    problems = []
    its = report.iterations
    if report.outcome == "aborted":
        return problems
    if not its:
        problems.append("no iterations")
        return problems
    if len(its) > report.budget:
        problems.append(f"{len(its)} iterations exceed budget {report.budget}")
    for i, it in enumerate(its):
        if it.index != i + 1:
            problems.append(f"iteration {i} has index {it.index}")
        passed = it.verdict.source is Source.PASS
        if passed and i != len(its) - 1:
            problems.append(f"iteration {it.index} passed but the loop continued")
        if passed != (it.plan is None) or passed != (it.apply_result is None):
            problems.append(f"iteration {it.index}: plan/apply presence disagrees with verdict")
        if it.plan is not None and it.plan.verdict != it.verdict:
            problems.append(f"iteration {it.index}: plan verdict differs from iteration verdict")
        if i > 0 and its[i - 1].post_revision_digest != it.snapshot_digest:
            problems.append(f"iteration {it.index}: snapshot digest does not chain from the "
                            f"previous revision")
    if (report.outcome == "success") != (its[-1].verdict.source is Source.PASS):
        problems.append("outcome disagrees with last verdict")
    return problems
