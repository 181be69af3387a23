"""Synthetic broken repositories with known ground truth, and attribution scoring.

Each case is a bundled passing template with exactly one injected fault. The
fault kind fixes the ground-truth label; a mutant that still passes the
validation setting is discarded and redrawn with a new sub-seed.
"""

from __future__ import annotations

import ast
import io
import json
import random
import re
import shutil
import tempfile
import tokenize
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional

from .attribution import InconsistentInputs, Source
from .executor import ExecConfig, default_install_cmd, pass_exec, run_all
from .graph import canonical_json
from .loop import LoopConfig, align, attribute_once, check_report_contract
from .manifests import MalformedManifestLine, parse_requirement
from .names import distribution_name, load_stdlib
from .revision import rewrite_import_line
from .source_parser import derive_module_name, extract_imports, is_package_initializer

MANIFEST_NAME = "manifest.json"
MAX_ATTEMPTS = 10
LABELS = (Source.EXTERNAL.value, Source.INTERNAL.value, Source.RESIDUAL.value)


class FaultKind(str, Enum):
    REMOVE_DECLARATION = "remove-declaration"
    RENAME_INTERNAL_MODULE = "rename-internal-module"
    BREAK_INTERNAL_IMPORT = "break-internal-import"
    DELETE_SYMBOL = "delete-symbol"
    INJECT_SYNTAX_ERROR = "inject-syntax-error"
    INJECT_LOGIC_FAULT = "inject-logic-fault"


GROUND_TRUTH = {
    FaultKind.REMOVE_DECLARATION: Source.EXTERNAL,
    FaultKind.RENAME_INTERNAL_MODULE: Source.INTERNAL,
    FaultKind.BREAK_INTERNAL_IMPORT: Source.INTERNAL,
    FaultKind.DELETE_SYMBOL: Source.INTERNAL,
    FaultKind.INJECT_SYNTAX_ERROR: Source.INTERNAL,
    FaultKind.INJECT_LOGIC_FAULT: Source.RESIDUAL,
}


class TemplateBroken(RuntimeError):
    pass


class CorpusError(RuntimeError):
    pass


class FaultNotApplicable(ValueError):
    pass


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind
    seed: int
    target: Optional[str] = None  # restrict injection to this file or name

    @property
    def ground_truth(self) -> Source:
        return GROUND_TRUTH[self.kind]


@dataclass
class CorpusCase:
    dir: str  # relative to the corpus root
    fault: FaultSpec
    ground_truth: Source
    base_template: str
    edit: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"dir": self.dir, "fault_kind": self.fault.kind.value, "seed": self.fault.seed,
                "ground_truth": self.ground_truth.value, "template": self.base_template,
                "edit": self.edit}

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusCase":
        kind = FaultKind(d["fault_kind"])
        return cls(d["dir"], FaultSpec(kind, int(d["seed"])), Source(d["ground_truth"]),
                   d.get("template", ""), d.get("edit", {}))


# --- templates ---------------------------------------------------------------


def templates_root() -> Path:
    return Path(str(resources.files("envalign").joinpath("data/templates")))


def template_names() -> list[str]:
    return sorted(p.name for p in templates_root().iterdir() if p.is_dir())


def load_template(name: str) -> dict[str, str]:
    root = templates_root() / name
    if not root.is_dir():
        raise CorpusError(f"unknown template {name!r}; available: {template_names()}")
    files = {}
    for path in sorted(root.rglob("*")):
        if path.is_file() and "__pycache__" not in path.parts:
            files[path.relative_to(root).as_posix()] = path.read_text(encoding="utf-8")
    return files


def fixture_names() -> list[str]:
    root = Path(str(resources.files("envalign").joinpath("data/fixtures")))
    return sorted(p.name for p in root.iterdir() if p.is_dir())


def copy_fixture(name: str, dest) -> Path:
    """Copy a bundled hand-written fixture (e.g. ``client``) to ``dest``."""
    src = Path(str(resources.files("envalign").joinpath(f"data/fixtures/{name}")))
    if not src.is_dir():
        raise CorpusError(f"unknown fixture {name!r}; available: {fixture_names()}")
    dest = Path(dest)
    shutil.copytree(src, dest, ignore=shutil.ignore_patterns("__pycache__", ".envalign"))
    return dest


def write_tree(files: dict[str, str], dest: Path) -> None:
    dest.mkdir(parents=True, exist_ok=True)
    for rel in sorted(files):
        p = dest / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(files[rel].encode("utf-8"))


def corpus_exec_config(timeout: float = 60.0) -> ExecConfig:
    """The bundled validation setting: offline stub installs, scratch-copy execution."""
    return ExecConfig(install_cmd=default_install_cmd("bundled"), timeout=timeout,
                      workspace_policy="copy-to-temp")


def corpus_loop_config(**kw) -> LoopConfig:
    return LoopConfig(exec=corpus_exec_config(), **kw)


def _passes(files: dict[str, str], config: ExecConfig) -> bool:
    with tempfile.TemporaryDirectory(prefix="envalign-case-") as tmp:
        root = Path(tmp) / "repo"
        write_tree(files, root)
        return pass_exec(run_all(root, config), config)


# --- fault injectors ---------------------------------------------------------
#
# Each injector takes the template files and an rng and returns the mutated
# files plus a description of the single edit site. Candidates are sorted
# before drawing so the choice depends only on the rng.


def _is_test(rel: str) -> bool:
    return rel.startswith("tests/") or rel.split("/")[-1].startswith("test_")


def _sources(files) -> list[str]:
    return sorted(rel for rel in files if rel.endswith(".py"))


def _module_map(files) -> dict[str, str]:
    return {derive_module_name(rel): rel for rel in _sources(files)}


def _imports(files):
    for rel in _sources(files):
        recs = extract_imports(files[rel], rel)
        if isinstance(recs, list):
            yield rel, recs


def _internal_import_targets(files) -> set[str]:
    modules = _module_map(files)
    return {r.target for _, recs in _imports(files) for r in recs
            if r.relative_level == 0 and r.target in modules}


def _replace_line(text: str, lineno: int, new_line: Optional[str]) -> str:
    lines = text.splitlines(keepends=True)
    if new_line is None:
        del lines[lineno - 1]
    else:
        lines[lineno - 1] = new_line
    return "".join(lines)


def _remove_declaration(files, rng, target):
    used = {distribution_name(r.target.split(".")[0])
            for _, recs in _imports(files) for r in recs}
    cands = []
    for rel in sorted(files):
        if rel.split("/")[-1] != "requirements.txt":
            continue
        for i, line in enumerate(files[rel].splitlines(), 1):
            if not line.strip() or line.lstrip().startswith(("#", "-")):
                continue
            try:
                name, _ = parse_requirement(line.strip())
            except MalformedManifestLine:
                continue
            if name in used and target in (None, name):
                cands.append((rel, i, name))
    if not cands:
        raise FaultNotApplicable("no declared package that is imported")
    rel, line, pkg = rng.choice(cands)
    out = dict(files)
    out[rel] = _replace_line(files[rel], line, None)
    return out, {"file": rel, "line": line, "package": pkg}


def _rename_internal_module(files, rng, target):
    imported = _internal_import_targets(files)
    modules = _module_map(files)
    cands = []
    for mod, rel in sorted(modules.items()):
        if "/" not in rel or is_package_initializer(rel) or _is_test(rel) or mod not in imported:
            continue
        if target in (None, rel, mod):
            cands.append((mod, rel))
    if not cands:
        raise FaultNotApplicable("no imported in-package module")
    mod, rel = rng.choice(cands)
    new_rel = rel[:-3] + rng.choice(("_mod", "_impl", "_old")) + ".py"
    out = dict(files)
    out[new_rel] = out.pop(rel)
    return out, {"file": rel, "renamed_to": new_rel, "module": mod}


def _break_internal_import(files, rng, target):
    modules = _module_map(files)
    tops = {m.split(".")[0] for m in modules}
    stdlib = load_stdlib()
    cands = []
    for rel, recs in _imports(files):
        for r in recs:
            if r.relative_level or r.target not in modules or target not in (None, rel, r.target):
                continue
            segs = r.target.split(".")
            variants = []
            if len(segs) >= 2:
                for head in ("app", "core", "lib"):
                    if head not in tops and head not in stdlib:
                        variants.append(".".join([head, *segs[1:]]))
            if len(segs[-1]) > 1:
                variants.append(".".join([*segs[:-1], segs[-1][:-1]]))
            for v in variants:
                if v not in modules and not any(m.startswith(v + ".") for m in modules):
                    cands.append((rel, r.line, r.target, v))
    if not cands:
        raise FaultNotApplicable("no absolute internal import")
    rel, line, old, new = rng.choice(cands)
    text_line = files[rel].splitlines(keepends=True)[line - 1]
    changed = rewrite_import_line(text_line, old, new)
    if changed == text_line:
        raise FaultNotApplicable(f"import of {old} not on one line in {rel}")
    out = dict(files)
    out[rel] = _replace_line(files[rel], line, changed)
    return out, {"file": rel, "line": line, "from": old, "to": new}


def _delete_symbol(files, rng, target):
    modules = _module_map(files)
    wanted = {(r.target, s) for _, recs in _imports(files) for r in recs
              if r.relative_level == 0 and r.target in modules for s in r.imported_symbols}
    cands = []
    for mod, name in sorted(wanted):
        rel = modules[mod]
        if _is_test(rel):
            continue
        tree = ast.parse(files[rel])
        for node in tree.body:
            if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)) \
                    and node.name == name and target in (None, rel, name):
                start = min([node.lineno] + [d.lineno for d in node.decorator_list])
                cands.append((rel, name, start, node.end_lineno))
    if not cands:
        raise FaultNotApplicable("no from-imported definition")
    rel, name, start, end = rng.choice(cands)
    lines = files[rel].splitlines(keepends=True)
    out = dict(files)
    out[rel] = "".join(lines[:start - 1] + lines[end:])
    return out, {"file": rel, "symbol": name, "lines": [start, end]}


DEF_LINE_RE = re.compile(r"^(\s*(?:async\s+)?(?:def|class)\s.*):(\s*(?:#.*)?)$")


def _inject_syntax_error(files, rng, target):
    cands = []
    for rel in _sources(files):
        if _is_test(rel) or target not in (None, rel):
            continue
        for i, line in enumerate(files[rel].splitlines(), 1):
            if DEF_LINE_RE.match(line):
                cands.append((rel, i))
    if not cands:
        raise FaultNotApplicable("no definition line")
    rel, line = rng.choice(cands)
    old = files[rel].splitlines(keepends=True)[line - 1]
    body = old.rstrip("\r\n")
    new = DEF_LINE_RE.sub(r"\1\2", body) + old[len(body):]
    out = dict(files)
    out[rel] = _replace_line(files[rel], line, new)
    return out, {"file": rel, "line": line}


NEGATED_OPS = {"<": ">=", ">=": "<", ">": "<=", "<=": ">", "==": "!=", "!=": "=="}


def _tested_functions(files) -> set[tuple[str, str]]:
    modules = _module_map(files)
    return {(r.target, s) for rel, recs in _imports(files) if _is_test(rel) for r in recs
            if r.target in modules for s in r.imported_symbols}


def _offsets(text: str) -> list[int]:
    starts, pos = [], 0
    for line in text.splitlines(keepends=True):
        starts.append(pos)
        pos += len(line)
    return starts


def _logic_sites(text: str, funcs: set[str]) -> list[tuple[int, int, str, str]]:
    """(start, end, old, new) character spans inside the named top-level functions."""
    tree = ast.parse(text)
    starts = _offsets(text)
    ranges = []
    for node in tree.body:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) and node.name in funcs:
            ranges.append((node.lineno, node.end_lineno))
        elif isinstance(node, ast.ClassDef) and node.name in funcs:
            ranges.append((node.lineno, node.end_lineno))
    sites = []
    toks = list(tokenize.generate_tokens(io.StringIO(text).readline))
    for tok in toks:
        (row, col), (erow, ecol) = tok.start, tok.end
        if not any(lo <= row <= hi for lo, hi in ranges):
            continue
        start, end = starts[row - 1] + col, starts[erow - 1] + ecol
        if tok.type == tokenize.OP and tok.string in NEGATED_OPS:
            sites.append((start, end, tok.string, NEGATED_OPS[tok.string]))
        elif tok.type == tokenize.NUMBER and tok.string.isdigit():
            sites.append((start, end, tok.string, str(int(tok.string) + 1)))
    return sites


def _inject_logic_fault(files, rng, target):
    modules = _module_map(files)
    by_module: dict[str, set[str]] = {}
    for mod, name in _tested_functions(files):
        by_module.setdefault(mod, set()).add(name)
    cands = []
    for mod in sorted(by_module):
        rel = modules[mod]
        if _is_test(rel) or target not in (None, rel):
            continue
        for start, end, old, new in _logic_sites(files[rel], by_module[mod]):
            cands.append((rel, start, end, old, new))
    if not cands:
        raise FaultNotApplicable("no operator or constant in a tested function")
    rel, start, end, old, new = rng.choice(cands)
    text = files[rel]
    out = dict(files)
    out[rel] = text[:start] + new + text[end:]
    return out, {"file": rel, "line": text.count("\n", 0, start) + 1, "from": old, "to": new}


INJECTORS = {
    FaultKind.REMOVE_DECLARATION: _remove_declaration,
    FaultKind.RENAME_INTERNAL_MODULE: _rename_internal_module,
    FaultKind.BREAK_INTERNAL_IMPORT: _break_internal_import,
    FaultKind.DELETE_SYMBOL: _delete_symbol,
    FaultKind.INJECT_SYNTAX_ERROR: _inject_syntax_error,
    FaultKind.INJECT_LOGIC_FAULT: _inject_logic_fault,
}


def inject_fault(files: dict[str, str], spec: FaultSpec) -> tuple[dict[str, str], dict]:
    """Apply one fault of ``spec.kind`` drawn with ``spec.seed``; raises FaultNotApplicable."""
    return INJECTORS[spec.kind](files, random.Random(spec.seed), spec.target)


# --- generation --------------------------------------------------------------


def _case_dir(i: int) -> str:
    return f"case-{i:04d}"


def _make_case(i, template, kind, case_seed, files, config) -> tuple[CorpusCase, dict[str, str]]:
    last = "no attempt"
    for attempt in range(MAX_ATTEMPTS):
        spec = FaultSpec(kind, case_seed * MAX_ATTEMPTS + attempt)
        try:
            mutant, edit = inject_fault(files, spec)
        except FaultNotApplicable as exc:
            raise CorpusError(f"template {template!r} admits no {kind.value} fault: {exc}") from exc
        if not _passes(mutant, config):
            return CorpusCase(_case_dir(i), spec, spec.ground_truth, template, edit), mutant
        last = f"attempt {attempt} passed"
    raise CorpusError(f"case {i}: every {kind.value} mutant of {template!r} passed ({last})")


def _clear(out: Path) -> None:
    if not out.exists():
        out.mkdir(parents=True)
        return
    for p in out.iterdir():
        if p.name == MANIFEST_NAME or (p.is_dir() and p.name.startswith("case-")):
            shutil.rmtree(p) if p.is_dir() else p.unlink()


def generate_corpus(out_dir, count: int, seed: int, templates: Optional[list[str]] = None,
                    config: Optional[ExecConfig] = None, workers: int = 8) -> list[CorpusCase]:
    """Write ``count`` single-fault cases plus a manifest under ``out_dir``.

    Fault kinds are balanced (each kind appears count/6 times, rounded) and
    shuffled; templates are drawn uniformly. Everything follows from ``seed``.
    """
    if count < 1:
        raise ValueError("count must be positive")
    templates = sorted(set(templates or template_names()))
    config = config or corpus_exec_config()
    sources = {t: load_template(t) for t in templates}

    def check(t):
        if not _passes(sources[t], config):
            raise TemplateBroken(f"template {t!r} fails validation before mutation")

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        list(pool.map(check, templates))

    rng = random.Random(seed)
    kinds = [list(FaultKind)[i % len(FaultKind)] for i in range(count)]
    rng.shuffle(kinds)
    draws = [(i, rng.choice(templates), kinds[i], rng.randrange(2**31)) for i in range(count)]

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        made = list(pool.map(lambda d: _make_case(*d, sources[d[1]], config), draws))

    out = Path(out_dir)
    _clear(out)
    for case, files in made:
        write_tree(files, out / case.dir)
    cases = [c for c, _ in made]
    (out / MANIFEST_NAME).write_text(canonical_json([c.to_dict() for c in cases]) + "\n",
                                     encoding="utf-8")
    return cases


def load_manifest(corpus_dir) -> list[CorpusCase]:
    path = Path(corpus_dir) / MANIFEST_NAME
    if not path.is_file():
        raise CorpusError(f"no {MANIFEST_NAME} in {corpus_dir}")
    return [CorpusCase.from_dict(d) for d in json.loads(path.read_text(encoding="utf-8"))]


# --- evaluation --------------------------------------------------------------


def _ratio(correct: int, total: int) -> dict:
    if total == 0:
        return {"correct": 0, "total": 0, "fraction": "not-applicable", "accuracy": None}
    return {"correct": correct, "total": total, "fraction": f"{correct}/{total}",
            "accuracy": round(correct / total, 6)}


@dataclass
class CaseResult:
    dir: str
    fault_kind: str
    ground_truth: str
    predicted: Optional[str]  # None on a per-case error
    fired_rules: tuple[str, ...] = ()
    error: Optional[str] = None

    @property
    def correct(self) -> bool:
        return self.predicted == self.ground_truth

    def to_dict(self) -> dict:
        return {"dir": self.dir, "fault_kind": self.fault_kind, "ground_truth": self.ground_truth,
                "predicted": self.predicted, "fired_rules": list(self.fired_rules),
                "correct": self.correct, "error": self.error}


@dataclass
class AccuracyReport:
    results: list[CaseResult]

    def per_label(self) -> dict[str, tuple[int, int]]:
        out = {}
        for label in LABELS:
            rs = [r for r in self.results if r.ground_truth == label]
            out[label] = (sum(r.correct for r in rs), len(rs))
        return out

    @property
    def overall(self) -> Optional[Fraction]:
        if not self.results:
            return None  # not applicable
        return Fraction(sum(r.correct for r in self.results), len(self.results))

    def per_kind(self) -> dict[str, tuple[int, int]]:
        out = {}
        for kind in FaultKind:
            rs = [r for r in self.results if r.fault_kind == kind.value]
            out[kind.value] = (sum(r.correct for r in rs), len(rs))
        return out

    def confusion(self) -> dict[str, dict[str, int]]:
        """Rows are ground truth, columns predicted labels (3x3)."""
        m = {t: {p: 0 for p in LABELS} for t in LABELS}
        for r in self.results:
            if r.predicted in LABELS:
                m[r.ground_truth][r.predicted] += 1
        return m

    def unattributed(self) -> dict[str, dict[str, int]]:
        """Cases whose prediction falls outside the label space (pass or error)."""
        m = {t: {"pass": 0, "error": 0} for t in LABELS}
        for r in self.results:
            if r.predicted is None:
                m[r.ground_truth]["error"] += 1
            elif r.predicted not in LABELS:
                m[r.ground_truth]["pass"] += 1
        return m

    def to_dict(self) -> dict:
        return {
            "labels": list(LABELS),
            "per_label": {k: _ratio(*v) for k, v in self.per_label().items()},
            "per_fault_kind": {k: _ratio(*v) for k, v in self.per_kind().items()},
            "overall": _ratio(sum(r.correct for r in self.results), len(self.results)),
            "confusion": self.confusion(),
            "unattributed": self.unattributed(),
            "cases": [r.to_dict() for r in self.results],
            "errors": [{"dir": r.dir, "error": r.error} for r in self.results if r.error],
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def confusion_table(self) -> str:
        short = {Source.EXTERNAL.value: "external", Source.INTERNAL.value: "internal",
                 Source.RESIDUAL.value: "residual"}
        m, u = self.confusion(), self.unattributed()
        lines = [f"{'truth/predicted':<18}" + "".join(f"{short[p]:>10}" for p in LABELS) + f"{'pass':>8}{'error':>8}"]
        for t in LABELS:
            lines.append(f"{short[t]:<18}" + "".join(f"{m[t][p]:>10}" for p in LABELS)
                         + f"{u[t]['pass']:>8}{u[t]['error']:>8}")
        return "\n".join(lines)


def _evaluate_case(root: Path, case: CorpusCase, config: LoopConfig) -> CaseResult:
    base = dict(dir=case.dir, fault_kind=case.fault.kind.value, ground_truth=case.ground_truth.value)
    try:
        verdict, _, _ = attribute_once(root / case.dir, config)
    except (InconsistentInputs, OSError, ValueError) as exc:
        return CaseResult(predicted=None, error=f"{type(exc).__name__}: {exc}", **base)
    return CaseResult(predicted=verdict.source.value, fired_rules=verdict.fired_rules, **base)


def evaluate_attribution(corpus_dir, config: Optional[LoopConfig] = None,
                         workers: int = 8) -> AccuracyReport:
    """Score single-iteration attribution against every case's ground truth.

    A directory without cases and without a manifest is an empty corpus.
    """
    root = Path(corpus_dir)
    config = config or corpus_loop_config()
    if not (root / MANIFEST_NAME).exists() and root.is_dir() and not any(root.iterdir()):
        return AccuracyReport([])
    cases = load_manifest(root)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda c: _evaluate_case(root, c, config), cases))
    return AccuracyReport(results)


def check_corpus_loop_contract(corpus_dir, config: Optional[LoopConfig] = None,
                               workers: int = 8) -> list[tuple[str, str, list[str]]]:
    """Run the full loop on a scratch copy of every case.

    Returns (case dir, outcome, contract violations) per case.
    """
    root = Path(corpus_dir)
    config = config or corpus_loop_config()

    def one(case: CorpusCase):
        with tempfile.TemporaryDirectory(prefix="envalign-loop-") as tmp:
            ws = Path(tmp) / "repo"
            shutil.copytree(root / case.dir, ws)
            report = align(ws, replace(config, report_path=None))
            return case.dir, report.outcome, check_report_contract(report)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(one, load_manifest(root)))
