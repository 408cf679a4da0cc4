"""Command line: parse-prep prepare --raw <file> --out <dir> [--limit N]."""

from __future__ import annotations

import argparse
import sys

from .backends import ParseFailure, make_backend
from .prepare import prepare


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="parse-prep",
        description="emit pre-parsed corpus files from a raw DocRED-style corpus")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("prepare")
    p.add_argument("--raw", required=True, help="raw JSON corpus file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--split", default="train", help="output split name")
    p.add_argument("--limit", type=int, help="process only the first N documents")
    p.add_argument("--backend", default="chain",
                   help="parser backend: chain (built-in) or stanza")
    args = parser.parse_args(argv)

    try:
        backend = make_backend(args.backend)
        result = prepare(args.raw, args.out, backend, split=args.split,
                         limit=args.limit)
    except (ParseFailure, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(result.summary())
    return 0


if __name__ == "__main__":
    sys.exit(main())
