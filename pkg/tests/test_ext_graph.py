import json

from envalign.env import build_env
from envalign.ext_graph import (
    GapKind,
    ImportClass,
    find_dependency_gaps,
    resolve_import_target,
    suffix_similarity,
)
from envalign.graph import Graph
from envalign.repo_model import scan_repository

CLIENT_MODULES = {"main", "src", "src.client"}


def ext(root, stdlib):
    return build_env(scan_repository(root), stdlib).g_ext


def test_resolve_requests_external(stdlib):
    res = resolve_import_target("requests", CLIENT_MODULES, stdlib)
    assert res.kind is ImportClass.EXTERNAL and res.package == "requests"


def test_resolve_app_client_internal_by_suffix(stdlib):
    assert suffix_similarity("app.client", "src.client") == 0.5
    assert resolve_import_target("app.client", CLIENT_MODULES, stdlib).kind is ImportClass.INTERNAL


def test_resolve_stdlib(stdlib):
    assert resolve_import_target("os", CLIENT_MODULES, stdlib).kind is ImportClass.STDLIB


def test_resolve_first_segment_and_below_threshold(stdlib):
    assert resolve_import_target("src.nope", CLIENT_MODULES, stdlib).kind is ImportClass.INTERNAL
    # one shared segment out of three is below one half
    assert resolve_import_target("x.y.client", CLIENT_MODULES, stdlib).kind is ImportClass.EXTERNAL


def test_client_package_flags(client, stdlib):
    g = ext(client, stdlib)
    node = g.node("pkg:requests")
    assert node.attrs["used_in_code"] is True and node.attrs["declared"] is False
    assert [n.id for n in g.nodes_of("package")] == ["pkg:requests"]


def test_client_gap(client, stdlib):
    gaps = find_dependency_gaps(ext(client, stdlib))
    assert [(g.package, g.kind, g.using_files) for g in gaps] == [
        ("requests", GapKind.USED_NOT_DECLARED, ("src/client.py",))]


def test_repaired_fixture_has_no_gap(client, stdlib):
    (client / "requirements.txt").write_text("requests\n")
    g = ext(client, stdlib)
    node = g.node("pkg:requests")
    assert node.attrs["used_in_code"] and node.attrs["declared"]
    assert not [x for x in find_dependency_gaps(g) if x.kind is GapKind.USED_NOT_DECLARED]


def test_no_imports_no_manifests(make_repo, stdlib):
    g = ext(make_repo({"a.py": "x = 1\n", "b.py": ""}), stdlib)
    assert [n.kind for n in g.nodes].count("project") == 1
    assert len(g.nodes_of("file")) == 2 and g.nodes_of("package") == []


def test_declared_not_used(make_repo, stdlib):
    g = ext(make_repo({"requirements.txt": "numpy\n", "a.py": "import os\n"}), stdlib)
    assert [(x.package, x.kind) for x in find_dependency_gaps(g)] == [("numpy", GapKind.DECLARED_NOT_USED)]


def test_alias_and_stdlib_nodes(make_repo, stdlib):
    g = ext(make_repo({"a.py": "import yaml\nimport json\n", "requirements.txt": "PyYAML\n"}), stdlib)
    assert g.node("pkg:pyyaml").attrs["import_names"] == ["yaml"]
    assert g.node("pkg:json").attrs["origin"] == "stdlib"
    assert find_dependency_gaps(g) == []


def test_empty_dir_one_project_node(tmp_path, stdlib):
    g = ext(tmp_path, stdlib)
    assert [(n.id, n.kind) for n in g.nodes] == [("project", "project")] and g.edges == ()


def test_graph_invariants_and_roundtrip(client, stdlib):
    g = ext(client, stdlib)
    ids = [n.id for n in g.nodes]
    assert ids == sorted(ids) and len(set(ids)) == len(ids)
    assert all(e.src in ids and e.dst in ids for e in g.edges)
    again = Graph.from_dict(json.loads(g.to_json()))
    assert again.to_json() == g.to_json() and again.digest() == g.digest()
