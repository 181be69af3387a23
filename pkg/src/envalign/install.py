"""Install a repository's declared dependencies into a private site directory.

Used as the install phase of the default validation setting::

    python -m envalign.install --target ROOT/.envalign/site ROOT
    python -m envalign.install --local-index DIR --target ... ROOT

With ``--local-index`` nothing touches the network: each declared package
must exist as ``DIR/<normalized-name>/`` and its contents are copied into the
target. Unknown packages fail with the same two lines pip prints.
"""

from __future__ import annotations

import argparse
import shutil
import subprocess
import sys
from importlib import resources
from pathlib import Path

from .manifests import parse_manifest
from .names import normalize_package_name
from .repo_model import scan_repository


def bundled_stub_index() -> Path:
    return Path(str(resources.files("envalign").joinpath("data/stub_index")))


def declared_requirements(root: Path) -> list[tuple[str, str]]:
    """(name, constraint) pairs across all manifests, first declaration wins."""
    snap = scan_repository(root)
    seen = {}
    warnings: list[str] = []
    for m in snap.manifests:
        for dep in parse_manifest(m, warnings):
            seen.setdefault(dep.package, dep.version_constraint or "")
    for w in warnings:
        print(f"WARNING: {w}", file=sys.stderr)
    return sorted(seen.items())


def install_from_index(reqs, index: Path, target: Path) -> int:
    missing = [name for name, _ in reqs if not (index / normalize_package_name(name)).is_dir()]
    if missing:
        for name in missing:
            print(f"ERROR: Could not find a version that satisfies the requirement {name} "
                  f"(from versions: none)", file=sys.stderr)
            print(f"ERROR: No matching distribution found for {name}", file=sys.stderr)
        return 1
    target.mkdir(parents=True, exist_ok=True)
    for name, _ in reqs:
        shutil.copytree(index / normalize_package_name(name), target, dirs_exist_ok=True)
        print(f"Installed {name}")
    return 0


def install_with_pip(reqs, target: Path) -> int:
    if not reqs:
        return 0
    specs = [name + constraint for name, constraint in reqs]
    cmd = [sys.executable, "-m", "pip", "install", "--quiet", "--target", str(target), *specs]
    return subprocess.call(cmd)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m envalign.install", description=__doc__.splitlines()[0])
    parser.add_argument("root", type=Path)
    parser.add_argument("--target", type=Path, required=True)
    parser.add_argument("--local-index", type=Path, default=None,
                        help="directory of offline packages ('bundled' for the shipped stubs)")
    args = parser.parse_args(argv)

    reqs = declared_requirements(args.root)
    if args.target.is_dir():
        shutil.rmtree(args.target)  # installed set mirrors current declarations
    if args.local_index is not None:
        index = bundled_stub_index() if str(args.local_index) == "bundled" else args.local_index
        return install_from_index(reqs, index, args.target)
    return install_with_pip(reqs, args.target)


if __name__ == "__main__":
    sys.exit(main())
