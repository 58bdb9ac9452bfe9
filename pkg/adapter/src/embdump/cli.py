"""Command-line front end: one command, `extract`.

Exit codes follow the engine's convention: 0 on success, 1 for usage errors,
2 when data or the checkpoint cannot be used. Diagnostics go to stderr; the
only product is the dump file itself.
"""

import argparse
import sys
from pathlib import Path

from .extract import AdapterConfig, AdapterError, extract


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _layer(text: str) -> int | str:
    if text == "last":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"layer must be 'last' or an integer, got {text!r}"
        ) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="extract",
        description="Run an encoder checkpoint over a tokenized corpus and "
        "write per-token hidden states as an EMBD dump.",
    )
    parser.add_argument("--checkpoint", required=True, help="encoder checkpoint name or path")
    parser.add_argument("--corpus", required=True, type=Path,
                        help="tokenized corpus, one sequence per line")
    parser.add_argument("--vocab", required=True, type=Path,
                        help="vocabulary file; line numbers are encoder token ids")
    parser.add_argument("--layer", type=_layer, default="last",
                        help="hidden layer to dump: 'last' or an index, 0 = embeddings")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--out", required=True, type=Path, help="output dump path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        import transformers.utils.logging as hf_logging

        hf_logging.set_verbosity_error()
        hf_logging.disable_progress_bar()
    except Exception:
        pass
    config = AdapterConfig(
        checkpoint=args.checkpoint,
        corpus=args.corpus,
        vocab=args.vocab,
        out=args.out,
        layer=args.layer,
        batch_size=args.batch_size,
        device=args.device,
    )
    try:
        report = extract(config)
    except (AdapterError, OSError) as exc:
        print(f"extract: {exc}", file=sys.stderr)
        return 2
    print(
        f"wrote {report.out}: d={report.d}, {report.num_sequences} sequences",
        file=sys.stderr,
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
