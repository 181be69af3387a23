"""Independent brute-force oracles and random inputs for the property tests.

Nothing here imports the graph builders: module names, import targets and
resolvability are recomputed directly from ``ast.walk`` over the files.
"""

import ast
import random
import re

# ---------------------------------------------------------------------------
# random repositories

PACKAGE_POOL = ["core", "pkg", "svc", "toolbox", "engine"]
LEAF_POOL = ["client", "utils", "models", "io_ops", "config", "helpers", "runner"]
TOPLEVEL_POOL = ["main", "cli", "helpers", "settings"]
STDLIB_IMPORTS = ["os", "json", "collections.abc", "os.path", "typing"]
# import name -> distribution
EXTERNAL_IMPORTS = {"requests": "requests", "numpy": "numpy", "yaml": "pyyaml",
                    "sklearn.linear_model": "scikit-learn", "PIL.Image": "pillow",
                    "flask_cors": "flask-cors", "tabulate": "tabulate"}


def random_repo(seed: int, max_files: int = 20) -> dict:
    """A small repository as {rel_path: text}; at most ``max_files`` files."""
    rng = random.Random(seed)
    paths = []
    for pkg in rng.sample(PACKAGE_POOL, rng.randint(0, 3)):
        if rng.random() < 0.8:
            paths.append(f"{pkg}/__init__.py")
        for leaf in rng.sample(LEAF_POOL, rng.randint(1, 3)):
            paths.append(f"{pkg}/{leaf}.py")
        if rng.random() < 0.4:
            sub = rng.choice(["sub", "inner", "api"])
            if rng.random() < 0.7:
                paths.append(f"{pkg}/{sub}/__init__.py")
            paths.append(f"{pkg}/{sub}/{rng.choice(LEAF_POOL)}.py")
    for top in rng.sample(TOPLEVEL_POOL, rng.randint(1, 2)):
        paths.append(f"{top}.py")
    paths = sorted(set(paths))[: max_files - 1]

    modules = [module_name(p) for p in paths]
    files = {}
    for p in paths:
        files[p] = _random_source(rng, p, modules)
    if rng.random() < 0.8:
        files["requirements.txt"] = _random_requirements(rng)
    elif rng.random() < 0.5:
        deps = rng.sample(sorted(set(EXTERNAL_IMPORTS.values())), rng.randint(0, 3))
        files["pyproject.toml"] = ("[project]\nname = \"demo\"\ndependencies = [\n"
                                   + "".join(f'    "{d}",\n' for d in deps) + "]\n")
    return files


def _random_requirements(rng) -> str:
    lines = ["# pinned"] if rng.random() < 0.3 else []
    for dist in rng.sample(sorted(set(EXTERNAL_IMPORTS.values())), rng.randint(0, 4)):
        spelled = dist.upper() if rng.random() < 0.2 else dist.replace("-", "_") if rng.random() < 0.2 else dist
        constraint = rng.choice(["", ">=1.0", "==2.3.1", "~=0.9"])
        comment = "  # needed" if rng.random() < 0.2 else ""
        lines.append(f"{spelled}{constraint}{comment}")
    return "\n".join(lines) + ("\n" if lines else "")


def _random_source(rng, path: str, modules: list) -> str:
    if rng.random() < 0.08:
        return "def broken(:\n    pass\n"
    in_package = "/" in path
    lines = []
    for _ in range(rng.randint(0, 5)):
        r = rng.random()
        if r < 0.25 and modules:
            target = rng.choice(modules)
            lines.append(f"import {target}" if rng.random() < 0.5 else f"from {target} import thing")
        elif r < 0.40:
            # a reference that may not exist
            lines.append(f"from {rng.choice(['app', 'lib', *PACKAGE_POOL])}.{rng.choice(LEAF_POOL)} import X")
        elif r < 0.55 and in_package:
            lines.append(f"from .{rng.choice(LEAF_POOL)} import y" if rng.random() < 0.7
                         else "from . import z")
        elif r < 0.70:
            lines.append(f"import {rng.choice(STDLIB_IMPORTS)}")
        elif r < 0.90:
            name = rng.choice(sorted(EXTERNAL_IMPORTS))
            lines.append(f"import {name}" if rng.random() < 0.6 else f"from {name} import w")
        else:
            lines.append(f"import {rng.choice(LEAF_POOL)}")
    if rng.random() < 0.3:
        lines.append("\n\ndef later():\n    import " + rng.choice(sorted(EXTERNAL_IMPORTS)) + "\n    return 1")
    lines.append("\n\nVALUE = 1")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# oracles


def module_name(path: str) -> str:
    stem = path[:-3]
    if stem.endswith("/__init__"):
        stem = stem[: -len("/__init__")]
    return stem.replace("/", ".")


def parses(text: str) -> bool:
    try:
        compile(text, "<oracle>", "exec", ast.PyCF_ONLY_AST)
    except SyntaxError:
        return False
    return True


def raw_imports(text: str):
    """(target, level, names) for every import statement, nested ones included."""
    out = []
    for node in ast.walk(ast.parse(text)):
        if isinstance(node, ast.Import):
            out += [(a.name, 0, ()) for a in node.names]
        elif isinstance(node, ast.ImportFrom):
            out.append((node.module or "", node.level, tuple(a.name for a in node.names)))
    return out


def suffix_score(target: str, module: str) -> float:
    t, m = target.split("."), module.split(".")
    k = 0
    while k < min(len(t), len(m)) and t[-1 - k] == m[-1 - k]:
        k += 1
    return k / len(t)


def classify(target: str, level: int, all_modules, stdlib) -> str:
    if level > 0:
        return "internal"
    first = target.split(".")[0]
    if first in {m.split(".")[0] for m in all_modules}:
        return "internal"
    if first in stdlib:
        return "stdlib"
    if any(suffix_score(target, m) >= 0.5 for m in all_modules):
        return "internal"
    return "external"


def norm(name: str) -> str:
    return re.sub(r"[-_.]+", "-", name).lower()


ALIASES = {"PIL": "pillow", "bs4": "beautifulsoup4", "cv2": "opencv-python",
           "dateutil": "python-dateutil", "dotenv": "python-dotenv", "jwt": "pyjwt",
           "sklearn": "scikit-learn", "yaml": "pyyaml"}


def declared_packages(files: dict) -> set:
    out = set()
    for line in files.get("requirements.txt", "").splitlines():
        line = line.split("#")[0].strip()
        if line:
            out.add(norm(re.match(r"[A-Za-z0-9._-]+", line).group(0)))
    text = files.get("pyproject.toml", "")
    for m in re.finditer(r'^\s+"([A-Za-z0-9._-]+)', text, re.M):
        out.add(norm(m.group(1)))
    return out


def oracle_used_not_declared(files: dict, stdlib) -> dict:
    """package -> sorted using files, for external packages imported but not declared."""
    sources = sorted(p for p in files if p.endswith(".py"))
    all_modules = {module_name(p) for p in sources}
    declared = declared_packages(files)
    used = {}
    for p in sources:
        if not parses(files[p]):
            continue
        for target, level, _ in raw_imports(files[p]):
            if classify(target, level, all_modules, stdlib) != "external":
                continue
            first = target.split(".")[0]
            used.setdefault(norm(ALIASES.get(first, first)), set()).add(p)
    return {pkg: sorted(users) for pkg, users in used.items() if pkg not in declared}


def _resolve(importer_path: str, target: str, level: int) -> str:
    if level == 0:
        return target
    parts = module_name(importer_path).split(".")
    if not importer_path.endswith("__init__.py"):
        parts = parts[:-1]
    parts = parts[: len(parts) - (level - 1)]
    base = ".".join(parts)
    return f"{base}.{target}" if base and target else base or target


def oracle_unresolved(files: dict, stdlib) -> dict:
    """unresolved internal target -> sorted importing modules."""
    sources = sorted(p for p in files if p.endswith(".py"))
    all_modules = {module_name(p) for p in sources}
    defined = {module_name(p) for p in sources if parses(files[p])}
    prefixes = {".".join(m.split(".")[:i]) for m in defined for i in range(1, len(m.split(".")))}
    out = {}
    for p in sources:
        if not parses(files[p]):
            continue
        for target, level, names in raw_imports(files[p]):
            if classify(target, level, all_modules, stdlib) != "internal":
                continue
            full = _resolve(p, target, level)
            refs = [full] if full else list(names)
            for ref in refs:
                if ref not in defined and ref not in prefixes:
                    out.setdefault(ref, set()).add(module_name(p))
    return {t: sorted(m) for t, m in out.items()}
