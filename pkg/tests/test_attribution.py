import pytest

from envalign.attribution import (
    InconsistentInputs,
    R_EXTERNAL_MISSING_MODULE,
    R_GAP_CORROBORATED,
    R_RESIDUAL,
    Source,
    attribute,
    external_satisfiable,
    internal_resolved,
)
from envalign.env import build_env
from envalign.evidence import EvidenceKind, EvidenceRecord, Origin, StackFrame, normalize
from envalign.executor import ExecConfig, Phase, default_install_cmd, run_all
from envalign.repo_model import scan_repository

from conftest import validate

LAUNCH_ONLY = ExecConfig(install_cmd=default_install_cmd("bundled"), test_cmd=None)


def pipeline(root, stdlib):
    env = build_env(scan_repository(root), stdlib)
    ev = normalize(run_all(root, LAUNCH_ONLY), env.g_ext, env.g_int, workspace=root, stdlib=stdlib)
    return env, ev


def rec(kind, subject=None, origin=Origin.UNKNOWN, phase=Phase.LAUNCH, file=None, frames=()):
    return EvidenceRecord(phase, kind, subject, origin, file, 1 if file else None, tuple(frames), "x")


def test_client_first_run_is_external(client, stdlib):
    env, ev = pipeline(client, stdlib)
    v = attribute(env.g_ext, env.g_int, ev)
    assert v.source is Source.EXTERNAL
    assert R_EXTERNAL_MISSING_MODULE in v.fired_rules and R_GAP_CORROBORATED in v.fired_rules
    assert "pkg:requests" in v.supporting_nodes and v.supporting_evidence == (0,)
    assert not external_satisfiable(env.g_ext, ev)
    validate("verdict", v.to_dict())


def test_client_after_dependency_repair_is_internal(client, stdlib):
    (client / "requirements.txt").write_text("requests\n")
    env, ev = pipeline(client, stdlib)
    v = attribute(env.g_ext, env.g_int, ev)
    assert v.source is Source.INTERNAL and "unresolved:app.client" in v.supporting_nodes
    assert external_satisfiable(env.g_ext, ev) and not internal_resolved(env.g_int, ev)


def test_fully_repaired_client_passes(client, stdlib):
    (client / "requirements.txt").write_text("requests\n")
    main = client / "main.py"
    main.write_text(main.read_text().replace("app.client", "src.client"))
    env, ev = pipeline(client, stdlib)
    assert ev == [] and attribute(env.g_ext, env.g_int, ev).source is Source.PASS
    assert external_satisfiable(env.g_ext, ev) and internal_resolved(env.g_int, ev)


def test_assertion_failure_on_clean_graphs_is_residual(make_repo, stdlib):
    root = make_repo({"main.py": "import os\nVALUE = 1\n"})
    env = build_env(scan_repository(root), stdlib)
    v = attribute(env.g_ext, env.g_int, [rec(EvidenceKind.TEST_ASSERTION_FAILURE, phase=Phase.TEST)])
    assert v.source is Source.RESIDUAL and v.fired_rules == (R_RESIDUAL,) and v.supporting_evidence == (0,)
    assert v.supporting_nodes


def test_external_beats_internal_when_both_present(client, stdlib):
    env = build_env(scan_repository(client), stdlib)
    ev = [rec(EvidenceKind.MISSING_MODULE, "app.client", Origin.INTERNAL),
          rec(EvidenceKind.MISSING_MODULE, "requests", Origin.EXTERNAL)]
    v = attribute(env.g_ext, env.g_int, ev)
    assert v.source is Source.EXTERNAL and 1 in v.supporting_evidence


def test_unknown_origin_missing_module_goes_external(make_repo, stdlib):
    root = make_repo({"main.py": "VALUE = 1\n"})
    env = build_env(scan_repository(root), stdlib)
    v = attribute(env.g_ext, env.g_int, [rec(EvidenceKind.MISSING_MODULE, "mystery")])
    assert v.source is Source.EXTERNAL


def test_graph_signals_alone_do_not_attribute(client, stdlib):
    env = build_env(scan_repository(client), stdlib)
    # the fixture has both a gap and an unresolved ref, yet no failures
    assert attribute(env.g_ext, env.g_int, []).source is Source.PASS
    assert external_satisfiable(env.g_ext, []) and internal_resolved(env.g_int, [])


def test_uncorroborated_gap_does_not_fire(make_repo, stdlib):
    root = make_repo({"main.py": "VALUE = 1\n", "extra.py": "import requests\n"})
    env = build_env(scan_repository(root), stdlib)
    failure = rec(EvidenceKind.TEST_ASSERTION_FAILURE, phase=Phase.TEST,
                  file="main.py", frames=[StackFrame("main.py", 1, "<module>", True)])
    assert attribute(env.g_ext, env.g_int, [failure]).source is Source.RESIDUAL
    touching = rec(EvidenceKind.RUNTIME_EXCEPTION_OTHER, "AttributeError", file="extra.py",
                   frames=[StackFrame("extra.py", 1, "<module>", True)])
    v = attribute(env.g_ext, env.g_int, [touching])
    assert v.source is Source.EXTERNAL and v.fired_rules == (R_GAP_CORROBORATED,)


def test_parse_failure_and_missing_symbol_are_internal(make_repo, stdlib):
    root = make_repo({"main.py": "from lib import f\n", "lib.py": "def g():\n    pass\n"})
    env = build_env(scan_repository(root), stdlib)
    for kind, subject in [(EvidenceKind.MISSING_SYMBOL, "lib.f"), (EvidenceKind.PARSE_FAILURE, "lib")]:
        assert attribute(env.g_ext, env.g_int, [rec(kind, subject, Origin.INTERNAL, file="lib.py")]).source \
            is Source.INTERNAL


def test_stale_frame_raises(make_repo, stdlib):
    root = make_repo({"main.py": "VALUE = 1\n"})
    env = build_env(scan_repository(root), stdlib)
    stale = rec(EvidenceKind.RUNTIME_EXCEPTION_OTHER, frames=[StackFrame("gone.py", 2, "f", True)])
    with pytest.raises(InconsistentInputs):
        attribute(env.g_ext, env.g_int, [stale])


def test_attribute_is_pure(client, stdlib):
    env, ev = pipeline(client, stdlib)
    assert attribute(env.g_ext, env.g_int, ev) == attribute(env.g_ext, env.g_int, list(ev))
