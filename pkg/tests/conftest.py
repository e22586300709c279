import sys
import random

import pytest

from projlang import ReferenceProvider, enumerate_sentences, parse_grammar
from projlang.resources import bundled_grammar, bundled_synonyms

G1_TEXT = """\
$root -> go to the $obj : (go-to $1)
$root -> pick up the $obj : (pick-up $1)
$obj -> $color ball : (ball $1)
$obj -> $color door : (door $1)
$color -> red : red
$color -> yellow : yellow
@np $obj
"""


@pytest.fixture
def g1():
    return parse_grammar(G1_TEXT)


@pytest.fixture
def g1_sentences(g1):
    return enumerate_sentences(g1)


@pytest.fixture
def synonyms():
    return bundled_synonyms()


@pytest.fixture
def provider(synonyms):
    return ReferenceProvider(dim=64, seed=0, synonym_lexicon=synonyms)


@pytest.fixture(scope="session")
def babyai_small():
    return bundled_grammar("babyai_small")


def random_acyclic_grammar(rng: random.Random, n_layers=3, width=3, max_rules=3, max_rhs_nt=2):
    """Layered random grammar; every rule carries a unique terminal so texts never collide."""
    layers = [[f"$n{l}_{i}" for i in range(width if l else 1)] for l in range(n_layers)]
    layers[0] = ["$root"]
    lines, tag = [], 0
    for depth, layer in enumerate(layers):
        for nt in layer:
            for _ in range(rng.randint(1, max_rules)):
                tag += 1
                below = [s for lay in layers[depth + 1:] for s in lay]
                kids = rng.sample(below, k=min(len(below), rng.randint(0, max_rhs_nt))) if below else []
                items = [f"w{tag}"] + kids
                rng.shuffle(items)
                sem = f"(r{tag} " + " ".join(f"${k + 1}" for k in range(len(kids))) + ")"
                lines.append(f"{nt} -> {' '.join(items)} : {sem}")
    return "\n".join(lines) + "\n"


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, title, detail = results[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} [{n}] {title}: {detail}")
