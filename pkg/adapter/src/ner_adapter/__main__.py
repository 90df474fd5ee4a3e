"""Entry point: `python -m ner_adapter --pipeline rulebased [--tcp PORT]`."""

from __future__ import annotations

import argparse
import sys

from .pipelines import PipelineUnavailable
from .server import build_session, serve_stdio, serve_tcp


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ner-adapter",
        description="Serve an NER tagger over the JSON-lines protocol.",
    )
    parser.add_argument(
        "--pipeline",
        default="rulebased",
        help="'rulebased' (no dependencies) or 'spacy:<model-name>'",
    )
    parser.add_argument("--tcp", type=int, metavar="PORT",
                        help="serve on this TCP port instead of stdin/stdout")
    args = parser.parse_args(argv)
    try:
        session = build_session(args.pipeline)
    except PipelineUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.tcp is not None:
        serve_tcp(session, args.tcp)
    else:
        serve_stdio(session)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
