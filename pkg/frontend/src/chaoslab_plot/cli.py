"""chaoslab-plot: turn experiment tables into figures.

Usage::

    chaoslab-plot --kind survival   --input records.csv       --output survival.png
    chaoslab-plot --kind rate_vs_ap --input rate_fits.json    --output rates.png
    chaoslab-plot --kind kl_decay   --input entropy_sweep.csv --output kl.png

Exit codes: 0 success, 2 bad arguments / schema mismatch / empty data /
output collision.
"""

from __future__ import annotations

import argparse
import sys

from .figures import FIGURE_KINDS, FigureSpec, PlotDataError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="chaoslab-plot", description=__doc__)
    parser.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    parser.add_argument("--input", required=True, help="harness CSV/JSON artifact")
    parser.add_argument("--output", required=True, help="image file to create")
    parser.add_argument("--force", action="store_true",
                        help="overwrite the output file if it exists")
    args = parser.parse_args(argv)
    try:
        path = render(
            FigureSpec(
                input_path=args.input,
                kind=args.kind,
                output_path=args.output,
                force=args.force,
            )
        )
    except (PlotDataError, FileExistsError, FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
