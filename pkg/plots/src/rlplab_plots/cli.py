"""Render one figure from CSV artifacts:

    rlp-plot <figure-id> --data DIR --out FILE

Exit status: 0 on success, 2 for an unknown figure id, 1 when inputs are
missing or fail their schema (the message names the offending column).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .io import EmptyDataError, SchemaError
from .recipes import RECIPES


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="rlp-plot", description=__doc__)
    parser.add_argument("figure_id", help="one of: " + ", ".join(sorted(RECIPES)))
    parser.add_argument("--data", type=Path, required=True, help="artifact directory")
    parser.add_argument("--out", type=Path, required=True, help="output image path")
    args = parser.parse_args(argv)

    recipe = RECIPES.get(args.figure_id)
    if recipe is None:
        print(
            f"unknown figure id {args.figure_id!r}; known: {', '.join(sorted(RECIPES))}",
            file=sys.stderr,
        )
        return 2
    try:
        recipe.render(args.data, args.out)
    except (SchemaError, EmptyDataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
