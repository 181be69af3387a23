"""Command-line entrypoint.

Machine-readable JSON goes to standard output, human summaries to standard
error. Exit codes: 0 pass/success, 1 tool error, 2 budget exhausted, 3 a
non-pass attribution verdict.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .attribution import InconsistentInputs, Source
from .config import ConfigError, ToolConfig, load_config
from .corpus import (
    CorpusError,
    TemplateBroken,
    copy_fixture,
    evaluate_attribution,
    fixture_names,
    generate_corpus,
    template_names,
)
from .env import build_env
from .graph import canonical_json
from .loop import attribute_once, align, write_report
from .names import load_aliases, load_stdlib
from .repo_model import RootNotFound, scan_repository

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BUDGET = 2
EXIT_NON_PASS = 3


class ToolError(RuntimeError):
    pass


def _emit(text: str, out: Optional[str] = None) -> None:
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _tool_config(args) -> ToolConfig:
    cfg = load_config(getattr(args, "config", None))
    phases = getattr(args, "phases", None)
    return cfg.with_overrides(
        budget=getattr(args, "budget", None),
        timeout=getattr(args, "timeout", None),
        local_index=getattr(args, "local_index", None),
        phases=phases.split(",") if phases else None,
        reviser_cmd=getattr(args, "reviser", None),
        normalizer_cmd=getattr(args, "normalizer", None),
        report=getattr(args, "report", None),
        timestamps=True if getattr(args, "timestamps", False) else None,
    )


def _repo(path: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise ToolError(f"repository not found: {path}")
    return p


# --- commands ----------------------------------------------------------------


def cmd_graph(args) -> int:
    cfg = _tool_config(args)
    snapshot = scan_repository(_repo(args.repo), cfg.scan_config())
    stdlib = load_stdlib(cfg.stdlib_override) if cfg.stdlib_override else None
    env = build_env(snapshot, stdlib, load_aliases(cfg.alias_table))
    graph = env.g_ext if args.layer == "ext" else env.g_int
    _emit(graph.to_json(), args.out)
    _note(f"{args.layer} graph: {len(graph.nodes)} nodes, {len(graph.edges)} edges")
    return EXIT_OK


def cmd_attribute(args) -> int:
    cfg = _tool_config(args)
    verdict, evidence, env = attribute_once(_repo(args.repo), cfg.loop_config())
    _emit(canonical_json({"snapshot_digest": env.snapshot.digest,
                          "verdict": verdict.to_dict(),
                          "evidence": [r.to_dict() for r in evidence]}))
    _note(f"verdict: {verdict.source.value} ({', '.join(verdict.fired_rules) or 'no rules fired'})")
    return EXIT_OK if verdict.source is Source.PASS else EXIT_NON_PASS


def cmd_align(args) -> int:
    cfg = _tool_config(args)
    loop_cfg = cfg.loop_config()
    report_path, loop_cfg.report_path = loop_cfg.report_path, None
    report = align(_repo(args.repo), loop_cfg)
    if report_path:
        write_report(report, report_path, timestamps=cfg.timestamps)
    _emit(report.to_json(timings=cfg.timestamps))
    for it in report.iterations:
        subjects = sorted({r.subject for r in it.evidence if r.subject})
        _note(f"iteration {it.index}: {it.verdict.source.value}"
              + (f" [{', '.join(subjects)}]" if subjects else ""))
    _note(f"outcome: {report.outcome}" + (f" ({report.error})" if report.error else ""))
    return {"success": EXIT_OK, "budget-exhausted": EXIT_BUDGET}.get(report.outcome, EXIT_ERROR)


def cmd_corpus_gen(args) -> int:
    templates = args.templates.split(",") if args.templates else None
    cases = generate_corpus(args.out, args.count, args.seed, templates, workers=args.workers)
    _emit(canonical_json([c.to_dict() for c in cases]))
    _note(f"wrote {len(cases)} cases to {args.out}")
    return EXIT_OK


def cmd_corpus_eval(args) -> int:
    cfg = _tool_config(args)
    report = evaluate_attribution(_repo(args.dir), cfg.loop_config(), workers=args.workers)
    _emit(report.to_json(), args.out)
    _note(report.confusion_table())
    overall = report.to_dict()["overall"]
    _note(f"overall: {overall['fraction']}")
    return EXIT_OK


def cmd_fixture(args) -> int:
    dest = Path(args.dest)
    if dest.exists():
        raise ToolError(f"destination exists: {dest}")
    copy_fixture(args.name, dest)
    _note(f"copied fixture {args.name} to {dest}")
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, execution: bool = True) -> None:
    p.add_argument("--config", help="TOML config file (default: $ENVALIGN_CONFIG)")
    if execution:
        p.add_argument("--phases", help="comma-separated phases to run (install,launch,test)")
        p.add_argument("--timeout", type=float, help="per-phase timeout in seconds")
        p.add_argument("--local-index", dest="local_index",
                       help="offline package directory for installs ('bundled' = shipped stubs)")
        p.add_argument("--normalizer", help="external evidence normalizer command")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="envalign",
        description="Align a repository's dependencies and internal references with "
                    "its execution environment.",
        epilog="exit codes: 0 pass/success, 1 tool error, 2 budget exhausted, "
               "3 non-pass verdict")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = sub.add_parser("graph", help="print the external or internal graph as JSON",
                       description="Build one graph layer of a repository and print it as "
                                   "canonical JSON.")
    g.add_argument("layer", choices=("ext", "int"))
    g.add_argument("repo")
    g.add_argument("--out", help="write JSON here instead of standard output")
    _common(g, execution=False)
    g.set_defaults(func=cmd_graph)

    a = sub.add_parser("attribute", help="run the phases once and attribute the failure",
                       description="Build graphs, run the validation phases in a scratch copy, "
                                   "normalize evidence and print the verdict. Exit 0 on pass, "
                                   "3 on any other verdict.")
    a.add_argument("repo")
    _common(a)
    a.set_defaults(func=cmd_attribute)

    al = sub.add_parser("align", help="iteratively repair a repository in place",
                        description="Run the alignment loop on REPO, editing it in place. "
                                    "Exit 0 on success, 2 when the budget runs out.")
    al.add_argument("repo")
    al.add_argument("--budget", type=int, help="maximum iterations (default 4)")
    al.add_argument("--reviser", help="external reviser command for delegated directives")
    al.add_argument("--report", help="also write the run report to this path")
    al.add_argument("--timestamps", action="store_true",
                    help="include phase durations and the write time in the report")
    _common(al)
    al.set_defaults(func=cmd_align)

    c = sub.add_parser("corpus", help="generate or evaluate a fault-injection corpus",
                       description="Synthetic single-fault corpus tools.")
    csub = c.add_subparsers(dest="corpus_command", required=True, metavar="SUBCOMMAND")
    cg = csub.add_parser("gen", help="generate a corpus",
                         description="Write COUNT single-fault cases and manifest.json to OUT.")
    cg.add_argument("out")
    cg.add_argument("--count", type=int, default=50)
    cg.add_argument("--seed", type=int, default=0)
    cg.add_argument("--templates", help=f"comma-separated subset of {','.join(template_names())}")
    cg.add_argument("--workers", type=int, default=8)
    cg.set_defaults(func=cmd_corpus_gen)
    ce = csub.add_parser("eval", help="score attribution on a corpus",
                         description="Attribute every case once and print the accuracy report.")
    ce.add_argument("dir")
    ce.add_argument("--out", help="write JSON here instead of standard output")
    ce.add_argument("--workers", type=int, default=8)
    _common(ce)
    ce.set_defaults(func=cmd_corpus_eval)

    f = sub.add_parser("fixture", help="copy a bundled fixture repository",
                       description="Copy a bundled fixture repository to DEST.")
    f.add_argument("name", choices=fixture_names())
    f.add_argument("dest")
    f.set_defaults(func=cmd_fixture)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ToolError, ConfigError, RootNotFound, CorpusError, TemplateBroken,
            InconsistentInputs, OSError, ValueError) as exc:
        _note(f"envalign: error: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
