"""Command line entry point: `tsfm-bridge export`."""

from __future__ import annotations

import argparse
import sys

from .backbones import BACKBONES, BackboneLoadError
from .export import BridgeJob, export


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsfm-bridge",
        description="Export per-window embeddings and forecasts to the F2AE interchange format.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="run a backbone over CSV series and write one F2AE file")
    p.add_argument("--data", nargs="+", required=True, help="input CSV files (channel columns + Label)")
    p.add_argument("--out", required=True, help="output .f2ae path")
    p.add_argument("--backbone", required=True, choices=sorted(BACKBONES), help="backbone name")
    p.add_argument("-L", type=int, required=True, help="context length")
    p.add_argument("-H", type=int, required=True, dest="horizon", help="horizon length")
    p.add_argument("-C", type=int, required=True, help="channel count the consumer expects")
    p.add_argument("-D", type=int, required=True, help="embedding dimension per channel")
    p.add_argument("--stride", type=int, default=0, help="window stride (default: H)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        job = BridgeJob(
            inputs=args.data,
            out_path=args.out,
            backbone=args.backbone,
            l_ctx=args.L,
            h_horizon=args.horizon,
            c=args.C,
            d=args.D,
            stride=args.stride,
        )
        report = export(job)
    except (ValueError, BackboneLoadError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out} ({report.records} records from {len(args.data)} series)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
