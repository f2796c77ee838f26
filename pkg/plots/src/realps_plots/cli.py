"""CLI: ``plots render --kind <k> --in <paths...> --out <file>``."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURE_KINDS, PlotSpec, SchemaError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="plots")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("render", help="render one figure with a JSON sidecar")
    r.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    r.add_argument("--in", dest="inputs", nargs="+", required=True)
    r.add_argument("--out", required=True)
    args = parser.parse_args(argv)

    spec = PlotSpec(kind=args.kind, inputs=tuple(args.inputs), output=args.out)
    try:
        sidecar = render(spec)
    except (SchemaError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} and {sidecar}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
