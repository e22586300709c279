"""Lexicon-driven noun chunking for natural inputs and synthetic derivations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .grammar import Grammar, Hole, SyntheticSentence, is_nonterminal, linearize

DEFAULT_DETERMINERS = frozenset({"the", "a", "an", "this", "that", "these", "those", "some", "any"})


@dataclass(frozen=True)
class ChunkLexicon:
    determiners: frozenset = DEFAULT_DETERMINERS
    adjectives: frozenset = frozenset()
    nouns: frozenset = frozenset()

    def merged(self, other: "ChunkLexicon") -> "ChunkLexicon":
        return ChunkLexicon(self.determiners | other.determiners,
                            self.adjectives | other.adjectives,
                            self.nouns | other.nouns)


@dataclass(frozen=True)
class Chunk:
    tokens: tuple[str, ...]
    span: tuple[int, int]  # [start, end)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


# pattern: det? adj* noun+   run as a tiny NFA so overlapping word classes
# still give the longest match
_START, _MOD, _NOUN = 0, 1, 2


def _step(states: set[int], word: str, lex: ChunkLexicon) -> set[int]:
    out = set()
    if _START in states:
        if word in lex.determiners or word in lex.adjectives:
            out.add(_MOD)
        if word in lex.nouns:
            out.add(_NOUN)
    if _MOD in states:
        if word in lex.adjectives:
            out.add(_MOD)
        if word in lex.nouns:
            out.add(_NOUN)
    if _NOUN in states and word in lex.nouns:
        out.add(_NOUN)
    return out


def _longest_match(tokens: Sequence[str], start: int, lex: ChunkLexicon) -> Optional[int]:
    states, end = {_START}, None
    for i in range(start, len(tokens)):
        states = _step(states, tokens[i].lower(), lex)
        if not states:
            break
        if _NOUN in states:
            end = i + 1
    return end


def extract_chunks(tokens: Sequence[str], lexicon: ChunkLexicon) -> list[Chunk]:
    """Non-overlapping longest matches of ``det? adj* noun+``, left to right."""
    chunks, i = [], 0
    tokens = list(tokens)
    while i < len(tokens):
        end = _longest_match(tokens, i, lexicon)
        if end is None:
            i += 1
        else:
            chunks.append(Chunk(tuple(tokens[i:end]), (i, end)))
            i = end
    return chunks


def synth_chunks(s: SyntheticSentence, g: Grammar) -> list[Chunk]:
    """Yields of the outermost np-flagged subtrees of ``s``'s derivation."""
    if s.derivation is None:
        raise ValueError(f"sentence {s.text!r} has no derivation")
    chunks: list[Chunk] = []

    def walk(t, pos: int) -> int:
        if isinstance(t, Hole):
            return pos + 1
        if t.rule.lhs in g.np_nonterminals:
            toks = tuple(linearize(t))
            if toks:
                chunks.append(Chunk(toks, (pos, pos + len(toks))))
            return pos + len(toks)
        kids = iter(t.children)
        for item in t.rule.rhs:
            pos = walk(next(kids), pos) if is_nonterminal(item) else pos + 1
        return pos

    walk(s.derivation.root, 0)
    return chunks


def lexicon_from_grammar(g: Grammar, max_depth: Optional[int] = None,
                         determiners: Iterable[str] = DEFAULT_DETERMINERS) -> ChunkLexicon:
    """Seed a lexicon from the yields of np-flagged nonterminals.

    The last token of each yield is a noun, a leading determiner stays a
    determiner, and everything in between is an adjective.
    """
    dets = frozenset(determiners)
    adjs, nouns = set(), set()
    for sym in sorted(g.np_nonterminals):
        for tree in g.complete_subtrees(sym, max_depth):
            toks = linearize(tree)
            if not toks:
                continue
            nouns.add(toks[-1])
            body = toks[1:-1] if toks[0] in dets and len(toks) > 1 else toks[:-1]
            adjs.update(t for t in body if t not in dets)
    return ChunkLexicon(dets, frozenset(adjs), frozenset(nouns))


def load_lexicon(path) -> ChunkLexicon:
    """Read ``[det]`` / ``[adj]`` / ``[noun]`` sections, one word per line."""
    sections: dict[str, set[str]] = {"det": set(), "adj": set(), "noun": set()}
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                if current not in sections:
                    raise ValueError(f"{path}:{lineno}: unknown section [{current}]")
                continue
            if current is None:
                raise ValueError(f"{path}:{lineno}: word outside of a section")
            sections[current].update(w.lower() for w in line.split())
    return ChunkLexicon(frozenset(sections["det"]), frozenset(sections["adj"]),
                        frozenset(sections["noun"]))
