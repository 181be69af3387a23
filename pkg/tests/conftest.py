import shutil
from pathlib import Path

import pytest

from envalign.corpus import copy_fixture, write_tree
from envalign.executor import ExecConfig, default_install_cmd
from envalign.names import load_stdlib

SCHEMAS = Path(__file__).resolve().parents[1] / "src" / "envalign" / "schemas"


@pytest.fixture
def client(tmp_path) -> Path:
    """A fresh copy of the bundled Client fixture."""
    return copy_fixture("client", tmp_path / "client")


@pytest.fixture
def make_repo(tmp_path):
    """Write a {rel_path: text} mapping to a new directory and return it."""
    counter = [0]

    def make(files: dict, name: str = None) -> Path:
        counter[0] += 1
        root = tmp_path / (name or f"repo{counter[0]}")
        if root.exists():
            shutil.rmtree(root)
        root.mkdir(parents=True)
        write_tree(files, root)
        return root

    return make


@pytest.fixture(scope="session")
def stdlib():
    return load_stdlib()


@pytest.fixture
def offline_exec() -> ExecConfig:
    """Offline validation setting: stub installs, launch main.py, unittest discovery."""
    return ExecConfig(install_cmd=default_install_cmd("bundled"), timeout=60)


def schema(name: str) -> dict:
    import json
    return json.loads((SCHEMAS / f"{name}.schema.json").read_text())


def validate(name: str, data) -> None:
    import jsonschema
    jsonschema.validate(data, schema(name), cls=jsonschema.Draft202012Validator)


# --- acceptance summary -------------------------------------------------------

_CRITERIA: dict = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with (number, title); add details via .note()."""

    class Line:
        def __init__(self):
            self.number, self.title, self.details = None, "", []

        def __call__(self, number, title):
            self.number, self.title = number, title
            return self

        def note(self, text):
            self.details.append(text)

    line = Line()
    yield line
    if line.number is not None:
        rep = getattr(request.node, "rep_call", None)
        ok = rep is not None and rep.passed
        _CRITERIA[line.number] = (ok, line.title, line.details)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, title, details = _CRITERIA[number]
        suffix = f" ({'; '.join(details)})" if details else ""
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {title}{suffix}")
