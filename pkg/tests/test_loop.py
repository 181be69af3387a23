import json
import sys
import time

from envalign.attribution import Source
from envalign.corpus import (
    FaultKind,
    FaultSpec,
    copy_fixture,
    corpus_loop_config,
    inject_fault,
    load_template,
    write_tree,
)
from envalign.executor import ExecConfig, default_install_cmd
from envalign.loop import LoopConfig, align, attribute_once, check_report_contract, write_report
from envalign.revision import Action

from conftest import validate

LAUNCH_ONLY = ExecConfig(install_cmd=default_install_cmd("bundled"), test_cmd=None)


def launch_config(**kw):
    return LoopConfig(exec=LAUNCH_ONLY, **kw)


def subjects(it):
    return sorted({r.subject for r in it.evidence if r.subject})


def test_client_trace(client):
    start = time.monotonic()
    report = align(client, launch_config())
    assert time.monotonic() - start < 30
    trace = [(it.verdict.source, subjects(it)) for it in report.iterations]
    assert trace == [(Source.EXTERNAL, ["requests"]), (Source.INTERNAL, ["app.client"]), (Source.PASS, [])]
    assert report.outcome == "success" and check_report_contract(report) == []
    assert (client / "requirements.txt").read_text() == "requests\n"
    assert "from src.client import APIClient\n" in (client / "main.py").read_text()


def test_budget_one_exhausts(client):
    report = align(client, launch_config(budget=1))
    assert report.outcome == "budget-exhausted" and len(report.iterations) == 1
    assert report.final_digest == report.iterations[0].post_revision_digest
    assert check_report_contract(report) == []


def test_passing_repo_exits_after_one_iteration(make_repo, offline_exec):
    root = make_repo({"main.py": "print('ok')\n"})
    report = align(root, LoopConfig(exec=offline_exec))
    assert report.outcome == "success" and len(report.iterations) == 1
    it = report.iterations[0]
    assert it.verdict.source is Source.PASS and it.plan is None and it.evidence == []


def _logic_case(tmp_path, template="calc", seed=3):
    files, edit = inject_fault(load_template(template), FaultSpec(FaultKind.INJECT_LOGIC_FAULT, seed))
    root = tmp_path / "case"
    write_tree(files, root)
    return root, edit


def test_logic_fault_without_reviser_uses_whole_budget(tmp_path):
    root, _ = _logic_case(tmp_path)
    report = align(root, corpus_loop_config())
    assert report.outcome == "budget-exhausted" and len(report.iterations) == 4
    for it in report.iterations:
        assert it.verdict.source is Source.RESIDUAL
        assert [d.action for d in it.plan.directives] == [Action.DELEGATE]
        assert [r for _, r in it.apply_result.skipped] == ["no-reviser-configured"]
        assert it.post_revision_digest == it.snapshot_digest
    assert check_report_contract(report) == []


REVERT = """
import json, pathlib, sys
payload = json.load(sys.stdin)
assert payload["plan"]["verdict"]["source"] == "residual-logic"
rel, line, old, new = sys.argv[1], int(sys.argv[2]), sys.argv[3], sys.argv[4]
p = pathlib.Path(payload["workspace"]) / rel
lines = p.read_text().splitlines(keepends=True)
lines[line - 1] = lines[line - 1].replace(new, old, 1)
p.write_text("".join(lines))
"""


def test_scripted_reviser_fixes_logic_fault(tmp_path):
    root, edit = _logic_case(tmp_path)
    script = tmp_path / "revert.py"
    script.write_text(REVERT)
    cmd = [sys.executable, str(script), edit["file"], str(edit["line"]), edit["from"], edit["to"]]
    report = align(root, corpus_loop_config(reviser_cmd=cmd))
    assert [it.verdict.source for it in report.iterations] == [Source.RESIDUAL, Source.PASS]
    assert report.outcome == "success" and check_report_contract(report) == []
    assert (root / edit["file"]).read_text() == load_template("calc")[edit["file"]]


def test_noop_reviser_keeps_digest(tmp_path):
    root, _ = _logic_case(tmp_path)
    report = align(root, corpus_loop_config(budget=2, reviser_cmd=[sys.executable, "-c", "pass"]))
    first, second = report.iterations
    assert first.post_revision_digest == first.snapshot_digest == second.snapshot_digest
    assert [e.to_dict() for e in first.evidence] == [e.to_dict() for e in second.evidence]
    assert first.apply_result.applied == list(first.plan.directives)


def test_reviser_deleting_a_file_is_rescanned(tmp_path):
    root, edit = _logic_case(tmp_path)
    victim = "calc/report.py"
    cmd = [sys.executable, "-c", f"import os; os.remove({victim!r})"]
    report = align(root, corpus_loop_config(budget=2, reviser_cmd=cmd))
    assert not (root / victim).exists()
    first, second = report.iterations
    assert first.post_revision_digest != first.snapshot_digest
    assert second.snapshot_digest == first.post_revision_digest
    assert second.verdict.source is Source.INTERNAL
    assert check_report_contract(report) == []


def test_failing_reviser_recorded_unapplied(tmp_path):
    root, _ = _logic_case(tmp_path)
    report = align(root, corpus_loop_config(budget=1, reviser_cmd=[sys.executable, "-c", "raise SystemExit(5)"]))
    (it,) = report.iterations
    assert it.apply_result.applied == [] and it.apply_result.skipped[0][1] == "reviser-failed: exit 5"


def test_report_is_deterministic_and_valid(tmp_path):
    reports = []
    for n in range(2):
        root = tmp_path / f"client{n}"
        copy_fixture("client", root)
        out = tmp_path / f"report{n}.json"
        write_report(align(root, launch_config()), out)
        reports.append(out.read_bytes())
    assert reports[0] == reports[1]
    data = json.loads(reports[0])
    validate("report", data)
    assert "written_at" not in data and all("duration" not in lg for it in data["iterations"] for lg in it["logs"])


def test_report_with_timestamps(client, tmp_path):
    out = tmp_path / "r.json"
    write_report(align(client, launch_config()), out, timestamps=True)
    data = json.loads(out.read_text())
    validate("report", data)
    assert "written_at" in data and "duration" in data["iterations"][0]["logs"][0]


def test_missing_workspace_aborts(tmp_path):
    report = align(tmp_path / "nope", launch_config())
    assert report.outcome == "aborted" and report.iterations == [] and "workspace" in report.error


def test_attribute_once_leaves_workspace_untouched(client):
    before = {p: p.read_bytes() for p in client.rglob("*") if p.is_file()}
    verdict, evidence, env = attribute_once(client, launch_config())
    assert verdict.source is Source.EXTERNAL and evidence[0].subject == "requests"
    assert {p: p.read_bytes() for p in client.rglob("*") if p.is_file()} == before
