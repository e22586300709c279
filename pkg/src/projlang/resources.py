"""Bundled grammars, synonym lists and lexicons."""

from importlib import resources

from .grammar import Grammar, parse_grammar

GRAMMARS = ("g1", "babyai_small", "calendar", "babyai_stress")


def data_path(name: str):
    return resources.files(__package__).joinpath("data", name)


def bundled_grammar(name: str) -> Grammar:
    return parse_grammar(data_path(f"{name}.grammar").read_text(encoding="utf-8"))


def bundled_synonyms() -> dict[str, str]:
    out = {}
    for line in data_path("g1.synonyms").read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].split()
        if line:
            out[line[0]] = line[1]
    return out
