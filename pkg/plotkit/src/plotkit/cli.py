"""plot <kind> --in <csv...> --out <png> [--metric estimation|tracking]"""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, PlotSpec, render
from .schema import SchemaMismatch


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plot")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        help="input CSV files (harness schema)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--metric", default="estimation",
                        choices=("estimation", "tracking"),
                        help="error column for boxplots")
    args = parser.parse_args(argv)
    try:
        spec = PlotSpec(kind=args.kind, inputs=list(args.inputs), out=args.out,
                        options={"metric": args.metric})
        stats = render(spec)
    except (SchemaMismatch, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} ({len(stats)} series)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
