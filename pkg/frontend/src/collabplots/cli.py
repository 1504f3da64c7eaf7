"""Command-line entry point: `plots fig1|fig2 --manifest <path> --out <path>`."""

from __future__ import annotations

import argparse
import sys

from .reader import EmptyDataError, IntegrityError, ManifestError, SchemaDriftError
from .render import PlotSpec, render

EXIT_OK = 0
EXIT_INPUT = 2

KINDS = {"fig1": "sufficient_cluster", "fig2": "convergence"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="plots",
        description="Render figures from experiment manifest outputs",
    )
    sub = p.add_subparsers(dest="figure", required=True)
    for name, help_text in (
        ("fig1", "cluster size vs target precision (log-x)"),
        ("fig2", "test-loss convergence race (log-y, seed shading)"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--manifest", required=True,
                         help="path to a manifest.json produced by a run")
        cmd.add_argument("--out", required=True, help="output image path")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = PlotSpec(kind=KINDS[args.figure], manifest=args.manifest,
                    out=args.out)
    try:
        labels = render(spec)
    except (ManifestError, SchemaDriftError, EmptyDataError,
            IntegrityError) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT
    print(f"wrote {args.out} ({len(labels)} series: {', '.join(labels)})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
