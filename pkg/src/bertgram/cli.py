"""Command-line front end.

Exit codes: 0 on success, 1 for usage errors, 2 for unreadable or
malformed data. Results go to stdout or -o; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, rl
from .corpus import Corpus, Vocabulary, load_corpus, save_corpus
from .embeddings import read_dump, synthetic_embed
from .errors import DataError
from .index import build_index, read_index, write_index
from .ngram import build_max_count_table, read_ngram_table, shaped_increments, write_ngram_table
from .reward import RewardBreakdown, indexed_reward, mixed_reward


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; this front end reserves 2 for data errors."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _unit_float(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _out_stream(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


def _emit(path: str | None, lines: list[str]) -> None:
    stream, close = _out_stream(path)
    try:
        for line in lines:
            stream.write(line + "\n")
    finally:
        if close:
            stream.close()


def fuse_subwords(tokens: list[str]) -> str:
    """Join tokens with spaces, folding ##-continuations into the previous word."""
    words: list[str] = []
    for tok in tokens:
        if tok.startswith("##") and words:
            words[-1] += tok[2:]
        else:
            words.append(tok)
    return " ".join(words)


def build_parser() -> _Parser:
    parser = _Parser(prog="bertgram", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("compile-ngrams", help="compile a max-count n-gram table")
    p.add_argument("--corpus", required=True, help="reference corpus, one sequence per line")
    p.add_argument("--vocab", required=True, help="vocabulary file, one token per line")
    p.add_argument("--n-max", type=_positive_int, default=4, help="highest n-gram order")
    p.add_argument("-o", "--output", required=True, help="output table path")

    p = sub.add_parser("compile-index", help="cluster an embedding dump into per-type codebooks")
    p.add_argument("--embeddings", required=True, help="embedding dump of the reference corpus")
    p.add_argument("--k", type=_positive_int, default=100, help="centroid budget per token type")
    p.add_argument("--seed", type=int, required=True, help="clustering seed")
    p.add_argument("--threads", type=_positive_int, default=None, help="worker threads (default: all cores)")
    p.add_argument("-o", "--output", required=True, help="output index path")

    p = sub.add_parser("score", help="score candidate sequences against compiled artifacts")
    p.add_argument("--candidates", required=True, help="embedding dump of the candidates")
    p.add_argument("--index", help="centroid index for the embedding reward")
    p.add_argument("--ngrams", help="n-gram table for the shaped increments")
    p.add_argument("--gamma", type=_positive_float, default=0.06, help="kernel width")
    p.add_argument("--mix", type=_unit_float, default=0.25, help="embedding weight in the mixture")
    p.add_argument("--per-token", action="store_true", help="append per-position rewards")
    p.add_argument("--threads", type=_positive_int, default=None, help="worker threads")
    p.add_argument("-o", "--output", help="output path (default stdout)")

    p = sub.add_parser("train", help="pretrain, then run REINFORCE against the mixed reward")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--ngrams", required=True, help="compiled n-gram table")
    p.add_argument("--index", required=True, help="compiled centroid index")
    p.add_argument("--config", required=True, help="key = value training config")
    p.add_argument("--embed-window", type=int, default=1, help="synthetic embedder window")
    p.add_argument("--embed-seed", type=int, required=True, help="synthetic embedder seed")
    p.add_argument("--embed-scale", type=_positive_float, default=1.0, help="synthetic embedder norm")
    p.add_argument("-o", "--output", required=True, help="trace output path")

    p = sub.add_parser("inspect-centroid", help="show the exemplar behind each centroid of a type")
    p.add_argument("--index", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--token", required=True, help="token string (or numeric id)")
    p.add_argument("--centroid", type=int, default=None, help="restrict to one centroid")
    p.add_argument("-o", "--output")

    an = sub.add_parser("analyze", help="diagnostics over dumps and score files")
    an_sub = an.add_subparsers(dest="analysis", parser_class=_Parser)

    p = an_sub.add_parser("neighbors", help="nearest corpus positions to one query position")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--seq", type=int, required=True, help="query sequence id")
    p.add_argument("--pos", type=int, required=True, help="query position")
    p.add_argument("--k", type=_positive_int, default=10)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--token", help="restrict hits to this token")
    group.add_argument("--exclude-token", help="drop hits of this token")
    p.add_argument("--vocab", help="vocabulary for readable output")
    p.add_argument("-o", "--output")

    p = an_sub.add_parser("perturb", help="plan one random edit per sequence")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--apply-to", help="also write the edited corpus text here")
    p.add_argument("-o", "--output")

    p = an_sub.add_parser("sensitivity", help="position-by-position edit sensitivity matrix")
    p.add_argument("--original", required=True, help="embedding dump of the originals")
    p.add_argument("--perturbed", required=True, help="embedding dump of the edited sequences")
    p.add_argument("--plan", required=True, help="edit plan from `analyze perturb`")
    p.add_argument("--gamma", type=_positive_float, default=0.06)
    p.add_argument("-o", "--output")

    p = an_sub.add_parser("align", help="anchor-aligned reward comparison with t-tests")
    p.add_argument("--real", required=True, help="aligned reward file for the real group")
    p.add_argument("--fake", required=True, help="aligned reward file for the fake group")
    p.add_argument("-o", "--output")

    p = an_sub.add_parser("diversity", help="distinct-sequence and distinct-n-gram ratios")
    p.add_argument("--batch", required=True, help="generated batch, one sequence per line")
    p.add_argument("--vocab", required=True)
    p.add_argument("--per-sequence", action="store_true", help="average within-sequence ratios")
    p.add_argument("-o", "--output")

    return parser


# ---------------------------------------------------------------------------
# command bodies
# ---------------------------------------------------------------------------


def _load_text_corpus(corpus_path: str, vocab_path: str) -> Corpus:
    return load_corpus(corpus_path, Vocabulary.from_file(vocab_path))


def _cmd_compile_ngrams(args) -> int:
    corpus = _load_text_corpus(args.corpus, args.vocab)
    table = build_max_count_table(corpus.sequences, args.n_max)
    write_ngram_table(table, args.output)
    entries = sum(len(m) for m in table.counts)
    print(f"wrote {args.output}: n_max={table.n_max}, {entries} entries", file=sys.stderr)
    return 0


def _cmd_compile_index(args) -> int:
    dump = read_dump(args.embeddings)
    index = build_index(dump, args.k, args.seed, threads=args.threads)
    write_index(index, args.output)
    print(
        f"wrote {args.output}: {len(index.types)} types, d={index.d}, K={index.k_max}",
        file=sys.stderr,
    )
    return 0


def _score_one(seq, index, table, gamma, mix) -> RewardBreakdown:
    if index is None:
        return RewardBreakdown.from_positions(np.asarray(shaped_increments(seq.ids, table)))
    bert = indexed_reward(seq, index, gamma)
    if table is None:
        return bert
    return mixed_reward(bert, shaped_increments(seq.ids, table), mix)


def _cmd_score(args, parser: _Parser) -> int:
    if args.index is None and args.ngrams is None:
        parser.error("need --index and/or --ngrams")
    candidates = read_dump(args.candidates)
    index = read_index(args.index) if args.index else None
    table = read_ngram_table(args.ngrams) if args.ngrams else None
    if index is not None and candidates.d != index.d:
        raise DataError(
            f"candidate width {candidates.d} does not match index width {index.d}"
        )
    workers = args.threads if args.threads else (os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(
            pool.map(
                lambda seq: _score_one(seq, index, table, args.gamma, args.mix),
                candidates.sequences,
            )
        )
    lines = []
    for seq, breakdown in zip(candidates.sequences, results):
        fields = [str(seq.seq_id), f"{breakdown.total:.6f}"]
        if args.per_token:
            fields.append(",".join(f"{r:.6f}" for r in breakdown.per_position))
        lines.append("\t".join(fields))
    _emit(args.output, lines)
    return 0


def _parse_train_config(path: str, seed_default: int | None = None) -> rl.TrainConfig:
    fields = {f.name for f in rl.TrainConfig.__dataclass_fields__.values()}
    values: dict[str, float | int | bool] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise DataError(f"{path}:{lineno}: expected key = value")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in fields:
            raise DataError(f"{path}:{lineno}: unknown key {key!r}")
        if key in ("seed", "batch_size", "steps", "pretrain_epochs", "order", "trace_every"):
            values[key] = int(raw)
        elif key == "reward_to_go":
            values[key] = raw.lower() in ("1", "true", "yes")
        else:
            values[key] = float(raw)
    if "seed" not in values:
        raise DataError(f"{path}: config must set seed")
    try:
        return rl.TrainConfig(**values)  # type: ignore[arg-type]
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def _cmd_train(args) -> int:
    corpus = _load_text_corpus(args.corpus, args.vocab)
    table = read_ngram_table(args.ngrams)
    index = read_index(args.index)
    config = _parse_train_config(args.config)

    def embed(ids: list[int]) -> np.ndarray:
        return synthetic_embed(ids, args.embed_window, index.d, args.embed_seed, args.embed_scale)

    _, trace = rl.train(config, corpus, table, index, embed)
    rl.write_trace(trace, args.output)
    final = trace[-1]
    print(
        f"trained {config.steps} steps: reward {trace[0].reward:.4f} -> {final.reward:.4f}, "
        f"entropy {final.entropy:.4f} nats/step",
        file=sys.stderr,
    )
    return 0


def _cmd_inspect_centroid(args) -> int:
    index = read_index(args.index)
    vocab = Vocabulary.from_file(args.vocab)
    corpus = load_corpus(args.corpus, vocab)
    if args.token.isdigit():
        token_id = int(args.token)
    else:
        token_id = vocab.id_of(args.token)
    entry = index.types.get(token_id)
    if entry is None:
        raise DataError(f"token {args.token!r} (id {token_id}) is not in the index")
    lines = []
    for j, (centroid, (seq_id, pos)) in enumerate(zip(entry.centroids, entry.exemplars)):
        if args.centroid is not None and j != args.centroid:
            continue
        if not 0 <= seq_id < len(corpus.sequences):
            raise DataError(f"exemplar sequence {seq_id} outside corpus")
        tokens = [vocab.token_of(w) for w in corpus.sequences[seq_id]]
        tokens[pos] = f"[{tokens[pos]}]"
        lines.append(f"{vocab.token_of(token_id)}\t{j}\t{seq_id}:{pos}\t{fuse_subwords(tokens)}")
    _emit(args.output, lines)
    return 0


def _resolve_token(text: str | None, vocab: Vocabulary | None, parser: _Parser) -> int | None:
    if text is None:
        return None
    if text.isdigit():
        return int(text)
    if vocab is None:
        parser.error("token strings need --vocab; pass a numeric id otherwise")
    return vocab.id_of(text)


def _cmd_neighbors(args, parser: _Parser) -> int:
    dump = read_dump(args.embeddings)
    vocab = Vocabulary.from_file(args.vocab) if args.vocab else None
    by_id = {seq.seq_id: seq for seq in dump.sequences}
    if args.seq not in by_id:
        raise DataError(f"sequence {args.seq} not in dump")
    seq = by_id[args.seq]
    if not 0 <= args.pos < len(seq):
        raise DataError(f"position {args.pos} outside sequence {args.seq}")
    token_filter = _resolve_token(args.token or args.exclude_token, vocab, parser)
    hits = analysis.nearest_neighbors(
        dump,
        seq.vectors[args.pos],
        k=args.k,
        token_filter=token_filter,
        exclude=args.exclude_token is not None,
    )
    lines = []
    for rank, hit in enumerate(hits):
        name = vocab.token_of(hit.token_id) if vocab else str(hit.token_id)
        lines.append(f"{rank}\t{name}\t{hit.seq_id}:{hit.position}\t{hit.sq_dist:.6f}")
    _emit(args.output, lines)
    return 0


def _cmd_perturb(args) -> int:
    corpus = _load_text_corpus(args.corpus, args.vocab)
    plan = analysis.perturb_plan(corpus, args.seed)
    if args.apply_to:
        save_corpus(analysis.apply_perturbations(corpus, plan), args.apply_to)
    _emit(
        args.output,
        [f"{p.seq_id}\t{p.position}\t{p.replacement}" for p in plan],
    )
    return 0


def _read_plan(path: str) -> dict[int, int]:
    plan: dict[int, int] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read plan {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected seq_id<TAB>position<TAB>replacement")
        plan[int(parts[0])] = int(parts[1])
    return plan


def _cmd_sensitivity(args) -> int:
    originals = read_dump(args.original)
    edited = read_dump(args.perturbed)
    plan = _read_plan(args.plan)
    edited_by_id = {seq.seq_id: seq for seq in edited.sequences}

    def pairs():
        for orig in originals.sequences:
            if orig.seq_id not in edited_by_id:
                raise DataError(f"sequence {orig.seq_id} missing from {args.perturbed}")
            if orig.seq_id not in plan:
                raise DataError(f"sequence {orig.seq_id} missing from the plan")
            yield orig, edited_by_id[orig.seq_id], plan[orig.seq_id]

    matrix = analysis.sensitivity_matrix(pairs(), args.gamma)
    T = matrix.values.shape[0]
    lines = [str(T)]
    lines.extend(" ".join(f"{v:.6f}" for v in row) for row in matrix.values)
    _emit(args.output, lines)
    return 0


def _read_aligned(path: str) -> list[analysis.AlignedItem]:
    items = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise DataError(
                f"{path}:{lineno}: expected seq_id<TAB>anchor_start<TAB>anchor_len<TAB>rewards"
            )
        try:
            rewards = [float(x) for x in parts[3].split(",")]
            items.append(analysis.AlignedItem(rewards, int(parts[1]), int(parts[2])))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    if not items:
        raise DataError(f"{path}: no aligned items")
    return items


def _cmd_align(args) -> int:
    rows = analysis.aligned_comparison(_read_aligned(args.real), _read_aligned(args.fake))
    lines = ["offset\tn_real\tmean_real\tn_fake\tmean_fake\tt\tp"]
    for row in rows:
        mean_real = f"{row.mean_real:.6f}" if row.mean_real is not None else "-"
        mean_fake = f"{row.mean_fake:.6f}" if row.mean_fake is not None else "-"
        if row.test is None:
            t_text = p_text = "-"
        else:
            t_text, p_text = f"{row.test.t:.6f}", f"{row.test.p:.6f}"
        lines.append(
            f"{row.offset}\t{row.n_real}\t{mean_real}\t{row.n_fake}\t{mean_fake}\t{t_text}\t{p_text}"
        )
    _emit(args.output, lines)
    return 0


def _cmd_diversity(args) -> int:
    corpus = _load_text_corpus(args.batch, args.vocab)
    metrics = analysis.diversity_metrics(
        corpus.sequences,
        pad_id=corpus.vocabulary.pad_id,
        per_sequence=args.per_sequence,
    )
    lines = [
        f"rho\t{metrics.rho:.6f}",
        f"rho_2\t{metrics.rho_n[2]:.6f}",
        f"rho_4\t{metrics.rho_n[4]:.6f}",
        f"mean_length\t{metrics.mean_length:.6f}",
    ]
    _emit(args.output, lines)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.error("a command is required")
    if args.command == "analyze" and args.analysis is None:
        parser.error("an analysis is required")
    try:
        if args.command == "compile-ngrams":
            return _cmd_compile_ngrams(args)
        if args.command == "compile-index":
            return _cmd_compile_index(args)
        if args.command == "score":
            return _cmd_score(args, parser)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "inspect-centroid":
            return _cmd_inspect_centroid(args)
        if args.command == "analyze":
            if args.analysis == "neighbors":
                return _cmd_neighbors(args, parser)
            if args.analysis == "perturb":
                return _cmd_perturb(args)
            if args.analysis == "sensitivity":
                return _cmd_sensitivity(args)
            if args.analysis == "align":
                return _cmd_align(args)
            if args.analysis == "diversity":
                return _cmd_diversity(args)
        raise AssertionError(f"unhandled command {args.command}")
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
