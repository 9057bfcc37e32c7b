"""Command line entry point: sentences in, dump file out.

The output file appears only on full success (written to a temp file and
renamed), so a crash never leaves a silently truncated dump behind.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

from .extract import ExtractionConfig, ExtractionError, extract_sentences, write_dump


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oddball-extract",
        description="Run a language model over sentences and emit a "
        "per-token probability dump.",
    )
    parser.add_argument("--model", required=True, help="model name or local path")
    parser.add_argument("--mode", choices=["causal", "masked"], default="causal")
    parser.add_argument("--k", type=int, default=512, help="top-K truncation depth")
    parser.add_argument("--prompt", default=None,
                        help="prefix text that conditions the model but is not emitted")
    parser.add_argument("--in", dest="infile", required=True,
                        help="input file, one sentence per line (UTF-8)")
    parser.add_argument("--out", required=True, help="dump file to write (JSONL)")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--device", default=None, help="torch device hint, e.g. cpu or cuda")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sentences = Path(args.infile).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        print(f"error: cannot read {args.infile}: {exc}", file=sys.stderr)
        return 2

    try:
        config = ExtractionConfig(
            model=args.model,
            mode=args.mode,
            k=args.k,
            prompt=args.prompt,
            batch_size=args.batch_size,
            device=args.device,
        )
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out_path = Path(args.out)
    tmp_fd, tmp_name = tempfile.mkstemp(
        dir=str(out_path.parent or Path(".")), suffix=".part"
    )
    try:
        with os.fdopen(tmp_fd, "w", encoding="utf-8") as stream:
            count = write_dump(extract_sentences(sentences, config), stream)
        os.replace(tmp_name, out_path)
    except ExtractionError as exc:
        os.unlink(tmp_name)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        print(f"error: {exc}", file=sys.stderr)
        return 2

    print(f"wrote {count} sentences -> {out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
