"""Projection of natural utterances onto their nearest synthetic paraphrase.

Three search strategies share one result type:

* :func:`project_flat` scores every synthetic sentence.
* :func:`project_lsh` scores only the sentences in nearby SimHash buckets.
* :func:`project_hier` runs a beam search over partial derivations, scoring
  masked partial sentences against the input.

Any of them can re-rank its final candidates with the chunk-matching
distance (:func:`rescore_delta_prime`).  :func:`interpret` maps an utterance
straight to a program.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .chunker import ChunkLexicon, extract_chunks, lexicon_from_grammar, synth_chunks
from .embedding import Provider, cosine_distance_flagged, cosine_distances, embed_all
from .grammar import (Derivation, Grammar, SyntheticSentence, enumerate_sentences, expansions,
                      linearize, np_group_count, semantics, tokenize)
from .lsh import LshIndex
from .matching import UNMATCHED_PENALTY, chunk_match_cost

logger = logging.getLogger(__name__)

MODES = ("flat", "lsh", "hier")


class ProjectionError(RuntimeError):
    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class ProjectionConfig:
    mode: str = "flat"
    beam_width: int = 4
    alpha: float = 0.0
    lsh_radius: int = 2
    np_pruning: bool = True
    chunk_alignment: bool = True
    rescore_with_matching: bool = False
    max_depth: Optional[int] = None
    n_best: int = 5
    unmatched_penalty: float = UNMATCHED_PENALTY

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.lsh_radius < 0:
            raise ValueError("lsh_radius must be >= 0")


@dataclass
class ProjectionResult:
    chosen: SyntheticSentence
    distance: float
    runner_ups: list[tuple[str, float]] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def program(self) -> str:
        return self.chosen.program

    def to_record(self, x: str, config: ProjectionConfig) -> dict:
        return {"input": x, "chosen_text": self.chosen.text, "program": self.chosen.program,
                "distance": self.distance, "mode": config.mode, "alpha": config.alpha,
                "diagnostics": self.diagnostics}


def _tokens(x: Union[str, Sequence[str]]) -> list[str]:
    toks = tokenize(x) if isinstance(x, str) else [t.lower() for t in x]
    if not toks:
        raise ProjectionError("empty utterance")
    return toks


class _Embedder:
    """Per-call memo around a provider that counts real embed calls."""

    def __init__(self, provider: Provider):
        self.provider = provider
        self.calls = 0
        self._memo: dict[tuple[str, ...], np.ndarray] = {}

    def __call__(self, tokens) -> np.ndarray:
        key = tuple(tokens)
        vec = self._memo.get(key)
        if vec is None:
            self.calls += 1
            vec = self._memo[key] = self.provider.embed(key)
        return vec


def _rank(dist: np.ndarray, texts, n: int) -> list[int]:
    """Indices of the ``n`` best entries by (distance, text).

    ``texts`` is a sequence or a callable mapping an index to its text.
    """
    text = texts if callable(texts) else texts.__getitem__
    if len(dist) > n:
        kth = np.partition(dist, n - 1)[n - 1]
        idx = np.nonzero(dist <= kth)[0]
    else:
        idx = np.arange(len(dist))
    return sorted(idx.tolist(), key=lambda i: (dist[i], text(i)))[:n]


def default_lexicon(g: Grammar, provider: Provider,
                    max_depth: Optional[int] = None) -> ChunkLexicon:
    """Grammar-derived lexicon plus any provider synonyms of its words."""
    lex = lexicon_from_grammar(g, max_depth)
    synonyms = getattr(provider, "synonym_lexicon", None) or {}
    if not synonyms:
        return lex
    adjs = {w for w, c in synonyms.items() if c in lex.adjectives}
    nouns = {w for w, c in synonyms.items() if c in lex.nouns}
    return lex.merged(ChunkLexicon(frozenset(), frozenset(adjs), frozenset(nouns)))


def rescore_delta_prime(x, candidates: Sequence[SyntheticSentence], provider: Provider,
                        alpha: float, lexicon: ChunkLexicon, g: Grammar,
                        penalty: float = UNMATCHED_PENALTY) -> list[tuple[SyntheticSentence, float]]:
    """Score candidates by sentence distance plus ``alpha`` times the chunk matching cost.

    Returns ``(candidate, score)`` pairs, best first, ties broken by text.
    """
    if not candidates:
        raise ValueError("no candidates to rescore")
    tokens = _tokens(x)
    qv = provider.embed(tokens)
    x_chunks = extract_chunks(tokens, lexicon)
    scored = []
    for cand in candidates:
        base, _ = cosine_distance_flagged(qv, provider.embed(cand.tokens))
        if alpha:
            cost, _ = chunk_match_cost(x_chunks, synth_chunks(cand, g), provider, penalty)
            base += alpha * cost
        scored.append((cand, base))
    scored.sort(key=lambda cs: (cs[1], cs[0].text))
    return scored


def _finish(tokens, pool: list[tuple[SyntheticSentence, float]], provider, config: ProjectionConfig,
            grammar: Optional[Grammar], lexicon: Optional[ChunkLexicon], diag: dict) -> ProjectionResult:
    """Pick the winner from ``pool`` (already sorted by plain distance)."""
    if config.rescore_with_matching:
        if grammar is None:
            raise ProjectionError("rescoring with matching needs a grammar", diag)
        if lexicon is None:
            lexicon = default_lexicon(grammar, provider, config.max_depth)
        cands = [s for s, _ in pool]
        missing = [s.text for s in cands if s.derivation is None]
        if missing:
            raise ProjectionError(f"no derivation for candidate {missing[0]!r}", diag)
        pool = rescore_delta_prime(tokens, cands, provider, config.alpha, lexicon, grammar,
                                   config.unmatched_penalty)
        diag["rescored"] = len(pool)
    chosen, dist = pool[0]
    runner = [(s.text, float(d)) for s, d in pool[1:config.n_best + 1]]
    return ProjectionResult(chosen, float(dist), runner, diag)


def project_flat(x, synth: Sequence[SyntheticSentence], provider: Provider, *,
                 vectors: Optional[np.ndarray] = None, config: Optional[ProjectionConfig] = None,
                 grammar: Optional[Grammar] = None, lexicon: Optional[ChunkLexicon] = None
                 ) -> ProjectionResult:
    """Exhaustive nearest synthetic sentence.

    ``vectors`` may hold precomputed embeddings of ``synth`` (row per
    sentence); they are then not counted as embed calls.
    """
    config = config or ProjectionConfig(mode="flat")
    tokens = _tokens(x)
    if not synth:
        raise ProjectionError("empty synthetic set")
    calls = 1
    qv = provider.embed(tokens)
    if vectors is None:
        vectors = embed_all(provider, synth)
        calls += len(synth)
    dist = cosine_distances(qv, vectors)
    pool_size = max(config.n_best + 1, config.beam_width if config.rescore_with_matching else 1)
    order = _rank(dist, lambda i: synth[i].text, pool_size)
    diag = {"embed_calls": calls, "candidates_scored": len(synth), "pruned_hypotheses": 0}
    pool = [(synth[i], float(dist[i])) for i in order]
    return _finish(tokens, pool, provider, config, grammar, lexicon, diag)


def project_lsh(x, index: LshIndex, provider: Provider, radius: Optional[int] = None, *,
                config: Optional[ProjectionConfig] = None,
                sentences: Optional[dict[str, SyntheticSentence]] = None,
                grammar: Optional[Grammar] = None, lexicon: Optional[ChunkLexicon] = None
                ) -> ProjectionResult:
    """Nearest sentence among the buckets within ``radius`` of the query fingerprint.

    An empty candidate set widens the radius one bit at a time.
    ``sentences`` maps texts back to derivations when rescoring.
    """
    config = config or ProjectionConfig(mode="lsh")
    radius = config.lsh_radius if radius is None else radius
    tokens = _tokens(x)
    qv = provider.embed(tokens)
    if qv.shape != (index.dim,):
        raise ProjectionError(f"dimension mismatch: index d={index.dim}, provider d={qv.shape[0]}")
    used = min(radius, index.bits)
    ids = index.query(qv, used)
    while len(ids) == 0 and used < index.bits:
        used += 1
        ids = index.query(qv, used)
    if len(ids) == 0:
        raise ProjectionError("index is empty")
    if used != radius:
        logger.debug("lsh radius escalated from %d to %d", radius, used)
    dist = cosine_distances(qv, index.vectors, index.norms, rows=ids)
    pool_size = max(config.n_best + 1, config.beam_width if config.rescore_with_matching else 1)
    order = _rank(dist, lambda j: index.texts[ids[j]], pool_size)
    pool = []
    for j in order:
        i = int(ids[j])
        s = (sentences or {}).get(index.texts[i])
        if s is None:
            s = SyntheticSentence(tuple(index.texts[i].split()), index.programs[i])
        pool.append((s, float(dist[j])))
    diag = {"embed_calls": 1, "candidates_scored": int(len(ids)), "pruned_hypotheses": 0,
            "radius_requested": int(radius), "radius_used": int(used)}
    return _finish(tokens, pool, provider, config, grammar, lexicon, diag)


def step_candidate_bound(g: Grammar, n_chunks: int, max_depth: Optional[int] = None) -> int:
    """Static bound on embeddings computed per hypothesis per search step.

    Covers the widest rule set, plus the one-off cost of embedding every
    noun-phrase yield and every input chunk when alignment first fires.
    """
    widest = max(len(g.rules_for(nt)) for nt in g.nonterminals)
    np_yields = max((len(g.complete_subtrees(nt, max_depth)) for nt in g.np_nonterminals), default=0)
    return widest + np_yields + n_chunks + 1


@dataclass(frozen=True)
class _Hyp:
    deriv: Derivation
    consumed: frozenset = frozenset()


def project_hier(x, g: Grammar, provider: Provider, config: Optional[ProjectionConfig] = None,
                 lexicon: Optional[ChunkLexicon] = None) -> ProjectionResult:
    """Beam search over partial derivations, leftmost nonterminal first.

    Each step expands the leftmost open nonterminal of every hypothesis and
    keeps the ``beam_width`` children whose masked yields are closest to
    the input.  Noun-phrase nonterminals are instead filled in one move with
    the complete yield closest to a not-yet-used input noun chunk.  With
    ``np_pruning`` the first-step templates must have as many noun-phrase
    groups as the input has chunks.
    """
    config = config or ProjectionConfig(mode="hier")
    if config.max_depth is None and g.is_cyclic:
        raise ProjectionError("grammar is cyclic; set max_depth")
    tokens = _tokens(x)
    emb = _Embedder(provider)
    qv = emb(tokens)
    if (config.np_pruning or config.chunk_alignment) and lexicon is None:
        lexicon = default_lexicon(g, provider, config.max_depth)
    x_chunks = extract_chunks(tokens, lexicon) if lexicon is not None else []
    chunk_vecs = [None] * len(x_chunks)
    yield_cache: dict[tuple[str, Optional[int]], tuple[list, np.ndarray]] = {}
    diag = {"embed_calls": 0, "candidates_scored": 0, "pruned_hypotheses": 0, "steps": 0,
            "alignments": 0, "max_step_candidates": 0, "zero_norm": 0}
    mask = provider.mask_token

    def yields_for(symbol: str, budget: Optional[int]):
        key = (symbol, budget)
        if key not in yield_cache:
            trees = g.complete_subtrees(symbol, budget)
            vecs = np.stack([emb(linearize(t, mask)) for t in trees]) if trees else np.zeros((0, provider.dim))
            yield_cache[key] = (trees, vecs)
        return yield_cache[key]

    def align(hyp: _Hyp, symbol: str) -> Optional[_Hyp]:
        free = [i for i in range(len(x_chunks)) if i not in hyp.consumed]
        budget = None if config.max_depth is None else config.max_depth - len(hyp.deriv.frontier[0])
        trees, vecs = yields_for(symbol, budget)
        if not free or not trees:
            return None
        texts = [" ".join(linearize(t, mask)) for t in trees]
        best = None
        for i in free:
            if chunk_vecs[i] is None:
                chunk_vecs[i] = emb(x_chunks[i].tokens)
            dist = cosine_distances(chunk_vecs[i], vecs)
            j = _rank(dist, texts, 1)[0]
            cand = (float(dist[j]), i, texts[j], j)
            if best is None or cand[:3] < best[:3]:
                best = cand
        step_stats["scored"] += len(free) * len(trees)
        _, i, _, j = best
        diag["alignments"] += 1
        return _Hyp(hyp.deriv.substitute(0, trees[j]), hyp.consumed | {i})

    beam = [_Hyp(Derivation.start(g))]
    finished: dict[str, tuple[float, Derivation]] = {}
    step = 0
    while beam:
        step += 1
        step_stats = {"scored": 0}
        children: list[_Hyp] = []
        for hyp in beam:
            symbol = hyp.deriv.frontier_symbols[0]
            if config.chunk_alignment and symbol in g.np_nonterminals:
                aligned = align(hyp, symbol)
                if aligned is not None:
                    children.append(aligned)
                    continue
            for d in expansions(g, hyp.deriv, 0):
                if config.max_depth is not None and d.depth > config.max_depth:
                    continue
                children.append(_Hyp(d, hyp.consumed))

        if step == 1 and config.np_pruning:
            kept = [h for h in children if np_group_count(h.deriv, g) == len(x_chunks)]
            diag["pruned_hypotheses"] += len(children) - len(kept)
            if children and not kept:
                diag["embed_calls"] = emb.calls
                raise ProjectionError("no derivation matches chunk count", diag)
            children = kept

        scored = {}
        for h in children:
            lin = tuple(linearize(h.deriv, mask))
            key = (lin, h.deriv.frontier_symbols)
            if key in scored:
                continue
            dist, zero = cosine_distance_flagged(qv, emb(lin))
            diag["zero_norm"] += zero
            scored[key] = (dist, " ".join(lin), h.deriv.frontier_symbols, h)
        step_stats["scored"] += len(scored)
        diag["candidates_scored"] += step_stats["scored"]
        diag["max_step_candidates"] = max(diag["max_step_candidates"], step_stats["scored"])

        ranked = sorted(scored.values(), key=lambda t: t[:3])[:config.beam_width]
        beam = []
        for dist, text, _, h in ranked:
            if h.deriv.complete:
                finished.setdefault(text, (dist, h.deriv))
            else:
                beam.append(h)
    diag["steps"] = step
    diag["embed_calls"] = emb.calls
    if not finished:
        raise ProjectionError("search finished without a complete derivation", diag)
    pool = sorted(((SyntheticSentence(tuple(text.split()), semantics(d), d), dist)
                   for text, (dist, d) in finished.items()), key=lambda sd: (sd[1], sd[0].text))
    result = _finish(tokens, pool, provider, config, g, lexicon, diag)
    diag["embed_calls"] = emb.calls
    return result


# ---------------------------------------------------------------------------


@dataclass
class Artifacts:
    """What :func:`interpret` may draw on: a provider plus grammar and/or index."""

    provider: Provider
    grammar: Optional[Grammar] = None
    sentences: Optional[list[SyntheticSentence]] = None
    index: Optional[LshIndex] = None
    lexicon: Optional[ChunkLexicon] = None
    max_depth: Optional[int] = None
    _vectors: Optional[np.ndarray] = field(default=None, repr=False)
    _by_text: Optional[dict] = field(default=None, repr=False)

    def synthetic(self) -> list[SyntheticSentence]:
        if self.sentences is None:
            if self.grammar is None:
                raise ProjectionError("flat projection needs a grammar or a synthetic dataset")
            self.sentences = enumerate_sentences(self.grammar, self.max_depth)
        return self.sentences

    def vectors(self) -> np.ndarray:
        if self._vectors is None:
            self._vectors = embed_all(self.provider, self.synthetic())
        return self._vectors

    def by_text(self) -> Optional[dict]:
        if self._by_text is None and (self.sentences is not None or self.grammar is not None):
            self._by_text = {s.text: s for s in self.synthetic()}
        return self._by_text


def interpret(x, artifacts: Artifacts, config: Optional[ProjectionConfig] = None
              ) -> tuple[str, ProjectionResult]:
    """Program of the projected synthetic paraphrase of ``x``."""
    config = config or ProjectionConfig()
    if config.max_depth is None and artifacts.max_depth is not None:
        config.max_depth = artifacts.max_depth
    tokens = _tokens(x)
    if config.mode == "flat":
        res = project_flat(tokens, artifacts.synthetic(), artifacts.provider,
                           vectors=artifacts.vectors(), config=config,
                           grammar=artifacts.grammar, lexicon=artifacts.lexicon)
    elif config.mode == "lsh":
        if artifacts.index is None:
            raise ProjectionError("lsh mode needs an index")
        res = project_lsh(tokens, artifacts.index, artifacts.provider, config.lsh_radius,
                          config=config,
                          sentences=artifacts.by_text() if config.rescore_with_matching else None,
                          grammar=artifacts.grammar, lexicon=artifacts.lexicon)
    else:
        if artifacts.grammar is None:
            raise ProjectionError("hier mode needs a grammar")
        res = project_hier(tokens, artifacts.grammar, artifacts.provider, config, artifacts.lexicon)
    return res.chosen.program, res
