import pytest

from envalign.manifests import (
    MalformedManifestLine,
    add_declaration_text,
    parse_manifest,
    parse_requirement,
)
from envalign.names import distribution_name, load_aliases, normalize_package_name
from envalign.repo_model import FileRole, RepoFile


def manifest(path, text):
    return RepoFile(path, FileRole.MANIFEST, len(text), text)


def deps(path, text):
    warnings = []
    return [(d.package, d.version_constraint) for d in parse_manifest(manifest(path, text), warnings)], warnings


def test_single_requirement():
    assert deps("requirements.txt", "requests\n")[0] == [("requests", None)]


def test_empty_manifest():
    assert deps("requirements.txt", "")[0] == []


def test_constraint_and_comment():
    assert deps("requirements.txt", "Flask>=2.0 # web\n")[0] == [("flask", ">=2.0")]


def test_options_comments_and_malformed_lines():
    out, warnings = deps("requirements.txt", "# hdr\n-r base.txt\n\nnumpy==1.26\nnot a req!\n")
    assert out == [("numpy", "==1.26")]
    assert len(warnings) == 1 and "requirements.txt:5" in warnings[0]


def test_pyproject_pep621_and_poetry():
    text = ('[project]\nname = "x"\ndependencies = ["Requests[socks]>=2", "PyYAML"]\n'
            '[tool.poetry.dependencies]\npython = "^3.10"\nrich = "^13"\n')
    assert sorted(deps("pyproject.toml", text)[0]) == [("pyyaml", None), ("requests", ">=2"), ("rich", "^13")]


def test_setup_cfg_and_setup_py():
    cfg = "[options]\ninstall_requires =\n    click>=8\n    attrs\n"
    assert deps("setup.cfg", cfg)[0] == [("click", ">=8"), ("attrs", None)]
    py = "from setuptools import setup\nsetup(name='x', install_requires=['numpy>=1', 'six'])\n"
    assert deps("setup.py", py)[0] == [("numpy", ">=1"), ("six", None)]


def test_parse_requirement_rejects_garbage():
    with pytest.raises(MalformedManifestLine):
        parse_requirement("foo bar")


def test_add_declaration_requirements():
    assert add_declaration_text("requirements.txt", "", "requests") == "requests\n"
    assert add_declaration_text("requirements.txt", "numpy", "requests") == "numpy\nrequests\n"


def test_add_declaration_pyproject_keeps_other_lines():
    text = '[project]\nname = "x"\ndependencies = [\n    "numpy",\n]\n'
    new = add_declaration_text("pyproject.toml", text, "requests")
    assert sorted(deps("pyproject.toml", new)[0]) == [("numpy", None), ("requests", None)]
    old_lines, new_lines = text.splitlines(), new.splitlines()
    assert len(new_lines) == len(old_lines) + 1
    assert [ln for ln in new_lines if ln not in old_lines] == ['    "requests",']


def test_add_declaration_setup_py_not_editable():
    assert add_declaration_text("setup.py", "setup()", "requests") is None


def test_names():
    assert normalize_package_name("Foo_Bar.baz") == "foo-bar-baz"
    assert distribution_name("yaml") == "pyyaml"
    assert distribution_name("requests") == "requests"


def test_alias_table_file(tmp_path):
    p = tmp_path / "aliases.json"
    p.write_text('{"mylib": "my-distribution"}')
    table = load_aliases(p)
    assert table["mylib"] == "my-distribution" and table["yaml"] == "pyyaml"
