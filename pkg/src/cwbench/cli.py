"""Command-line front end: ``cwbench run <scene>`` and ``cwbench list``.

Exit status: 0 all checks pass, 1 a check failed, 2 usage or parse error,
3 internal error.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .report import render, run
from .scenario import ParseError, load_scenario

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit with status 2 (argparse default), keep it explicit
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def bundled_dir() -> Path:
    return Path(str(resources.files("cwbench") / "scenarios"))


def list_scenarios(custom_dir: str | Path | None = None) -> List[Tuple[str, str, Path]]:
    """``(name, description, path)`` of bundled (and custom) scenes, sorted by name.

    Duplicate scenario names raise :class:`ParseError`.
    """
    dirs = [bundled_dir()]
    if custom_dir is not None:
        dirs.append(Path(custom_dir))
    seen: Dict[str, Path] = {}
    out = []
    for d in dirs:
        if not d.is_dir():
            raise ParseError(f"scenario directory {d} does not exist")
        for path in sorted(d.glob("*.yaml")):
            sc = load_scenario(path)
            if sc.name in seen:
                raise ParseError(f"duplicate scenario name {sc.name!r} in {seen[sc.name]} and {path}", path=str(path))
            seen[sc.name] = path
            out.append((sc.name, sc.description, path))
    return sorted(out, key=lambda t: t[0])


def resolve(target: str, custom_dir: Optional[str]) -> Path:
    """A scene file path, or the name of a bundled/custom scenario."""
    p = Path(target)
    if p.is_file():
        return p
    for name, _, path in list_scenarios(custom_dir):
        if name == target:
            return path
    raise ParseError(f"no scene file or scenario named {target!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cwbench", description="Chern-Weil / transgression workbench scenarios")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scene file or a bundled scenario by name")
    r.add_argument("scene")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed (u64)")
    r.add_argument("--grid-scale", type=int, default=1, help="multiply every grid size by k")
    r.add_argument("--out", default=None, help="also write the report to this file")
    r.add_argument("--strict", action="store_true", help="treat warnings as failures")
    r.add_argument("--timing", action="store_true", help="include wall times (breaks byte-identical reruns)")
    r.add_argument("--dir", default=None, help="extra directory of scene files")
    ls = sub.add_parser("list", help="list bundled scenarios")
    ls.add_argument("--dir", default=None, help="extra directory of scene files")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for name, desc, _ in list_scenarios(args.dir):
                print(f"{name}  {desc}".rstrip())
            return EXIT_PASS
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ParseError("--seed must be an unsigned 64-bit integer")
        if args.grid_scale < 1:
            raise ParseError("--grid-scale must be a positive integer")
        scenario = load_scenario(resolve(args.scene, args.dir))
        report = run(scenario, args.seed, args.grid_scale, args.strict)
        text = render(report, timing=args.timing)
        sys.stdout.write(text)
        if args.out:
            Path(args.out).write_text(text)
        return EXIT_PASS if report.passed else EXIT_FAIL
    except ParseError as e:
        print(f"cwbench: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:  # anything else is a bug
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
