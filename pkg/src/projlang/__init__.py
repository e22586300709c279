"""Interpret natural utterances by projecting them onto grammar-generated paraphrases."""

from .chunker import Chunk, ChunkLexicon, extract_chunks, lexicon_from_grammar, load_lexicon, synth_chunks
from .embedding import (EmbeddingError, EmbeddingProviderConfig, EmbeddingServer, FileProvider,
                        ReferenceProvider, ServiceProvider, cosine_distance, load_file_provider)
from .grammar import (MASK, AmbiguityError, Derivation, DerivationError, Grammar, GrammarError, Rule,
                      SyntheticSentence, enumerate_sentences, expansions, linearize, load_grammar,
                      np_group_count, parse_grammar, semantics, tokenize)
from .lsh import IndexFormatError, LshIndex, build_index, load_index, save_index
from .matching import Matching, chunk_match_cost, hungarian
from .projection import (Artifacts, ProjectionConfig, ProjectionError, ProjectionResult, interpret,
                         project_flat, project_hier, project_lsh, rescore_delta_prime)

__version__ = "0.1.0"

__all__ = [
    "Artifacts", "AmbiguityError", "Chunk", "ChunkLexicon", "Derivation", "DerivationError",
    "EmbeddingError", "EmbeddingProviderConfig", "EmbeddingServer", "FileProvider", "Grammar",
    "GrammarError", "IndexFormatError", "LshIndex", "MASK", "Matching", "ProjectionConfig",
    "ProjectionError", "ProjectionResult", "ReferenceProvider", "Rule", "ServiceProvider",
    "SyntheticSentence", "build_index", "chunk_match_cost", "cosine_distance", "enumerate_sentences",
    "expansions", "extract_chunks", "hungarian", "interpret", "lexicon_from_grammar", "linearize",
    "load_file_provider", "load_grammar", "load_index", "load_lexicon", "np_group_count",
    "parse_grammar", "project_flat", "project_hier", "project_lsh", "rescore_delta_prime",
    "save_index", "semantics", "synth_chunks", "tokenize",
]
