"""Command line: ``projlang generate|index|project|eval``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager

from .chunker import load_lexicon
from .dataset import DatasetError, read_dataset, write_dataset
from .embedding import EmbeddingError, parse_provider_spec
from .grammar import GrammarError, enumerate_sentences, load_grammar
from .lsh import IndexFormatError, build_index, load_index, save_index
from .projection import Artifacts, default_lexicon, ProjectionConfig, ProjectionError, interpret

log = logging.getLogger("projlang")

USER_ERRORS = (GrammarError, EmbeddingError, IndexFormatError, DatasetError, ProjectionError,
               OSError, ValueError)


class UsageError(Exception):
    pass


@contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def cmd_generate(args) -> int:
    g = load_grammar(args.grammar)
    sentences = enumerate_sentences(g, args.max_depth)
    write_dataset(args.out, sentences)
    print(f"generated {len(sentences)} sentences", file=sys.stderr)
    return 0


def _load_sentences(args, grammar=None):
    if args.synth:
        return read_dataset(args.synth, grammar)
    if grammar is not None:
        return enumerate_sentences(grammar, args.max_depth)
    raise UsageError("need --synth or --grammar")


def cmd_index(args) -> int:
    grammar = load_grammar(args.grammar) if args.grammar else None
    sentences = _load_sentences(args, grammar)
    provider = parse_provider_spec(args.embeddings, args.seed).build()
    index = build_index(sentences, provider, bits=args.bits, seed=args.seed)
    checksum = save_index(index, args.out)
    print(f"indexed {len(index)} entries into {len(index.buckets)} buckets "
          f"(bits={index.bits}, checksum={checksum[:16]})", file=sys.stderr)
    return 0


def _read_queries(path):
    if path in (None, "-"):
        lines = sys.stdin.read().splitlines()
    else:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    return [ln for ln in lines if ln.strip()]


def cmd_project(args) -> int:
    if args.mode == "lsh" and not args.index:
        raise UsageError("--mode lsh requires --index")
    if args.mode == "hier" and not args.grammar:
        raise UsageError("--mode hier requires --grammar")
    if args.mode == "flat" and not (args.grammar or args.synth):
        raise UsageError("--mode flat requires --grammar or --synth")
    grammar = load_grammar(args.grammar) if args.grammar else None
    provider = parse_provider_spec(args.embeddings, args.seed).build()
    lexicon = None
    if args.lexicon:
        lexicon = load_lexicon(args.lexicon)
        if grammar is not None and grammar.np_nonterminals:
            lexicon = default_lexicon(grammar, provider, args.max_depth).merged(lexicon)
    artifacts = Artifacts(provider, grammar=grammar, lexicon=lexicon, max_depth=args.max_depth)
    if args.synth:
        artifacts.sentences = read_dataset(args.synth, grammar)
    if args.index:
        artifacts.index = load_index(args.index)
    config = ProjectionConfig(mode=args.mode, beam_width=args.beam, alpha=args.alpha,
                              lsh_radius=args.radius, np_pruning=not args.no_prune,
                              chunk_alignment=not args.no_align,
                              rescore_with_matching=args.alpha > 0, max_depth=args.max_depth)
    status = 0
    with _open_out(args.out) as out:
        for line in _read_queries(args.input):
            try:
                _, res = interpret(line, artifacts, config)
                rec = res.to_record(line, config)
            except ProjectionError as e:
                # one record per input line, even on failure
                rec = {"input": line, "error": str(e), "mode": config.mode,
                       "diagnostics": e.diagnostics}
                status = 1
            out.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return status


def _programs(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError:
                rec = None
            if isinstance(rec, dict):
                if "version" in rec and "program" not in rec:
                    continue  # dataset header
                out.append(rec.get("program"))
            else:
                out.append(line.strip())
    return out


def cmd_eval(args) -> int:
    pred, gold = _programs(args.pred), _programs(args.gold)
    if len(pred) != len(gold):
        raise UsageError(f"{len(pred)} predictions but {len(gold)} gold programs")
    if not gold:
        raise UsageError("nothing to evaluate")
    hits = sum(p is not None and p == g for p, g in zip(pred, gold))
    print(f"accuracy: {hits / len(gold)} ({hits}/{len(gold)})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="projlang", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0, help="seed for every random choice")
        sp.add_argument("--embeddings", default="reference:dim=64",
                        help="reference[:dim=D,seed=S,synonyms=PATH] | file:PATH | service:HOST:PORT")
        sp.add_argument("--max-depth", type=int, default=None)

    g = sub.add_parser("generate", help="enumerate a grammar into a synthetic dataset")
    g.add_argument("--grammar", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--max-depth", type=int, default=None)
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("index", help="build a SimHash index over synthetic sentences")
    common(i)
    i.add_argument("--synth")
    i.add_argument("--grammar")
    i.add_argument("--bits", type=int, default=16)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_index)

    pr = sub.add_parser("project", help="project queries (one per line) onto synthetic sentences")
    common(pr)
    pr.add_argument("--input", default="-")
    pr.add_argument("--grammar")
    pr.add_argument("--synth")
    pr.add_argument("--index")
    pr.add_argument("--mode", choices=["flat", "lsh", "hier"], default="flat")
    pr.add_argument("--beam", type=int, default=4)
    pr.add_argument("--alpha", type=float, default=0.0,
                    help="weight of the chunk matching cost; > 0 enables re-ranking")
    pr.add_argument("--radius", type=int, default=2)
    pr.add_argument("--lexicon")
    pr.add_argument("--no-prune", action="store_true", help="disable noun-phrase count pruning")
    pr.add_argument("--no-align", action="store_true", help="disable noun chunk alignment")
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_project)

    e = sub.add_parser("eval", help="exact-match program accuracy")
    e.add_argument("--pred", required=True)
    e.add_argument("--gold", required=True)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"projlang: error: {e}", file=sys.stderr)
        return 2
    except USER_ERRORS as e:
        print(f"projlang: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
