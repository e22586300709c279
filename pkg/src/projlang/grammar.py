"""Context-free grammars with semantic attachments.

A grammar file holds one rule per line::

    $root -> go to the $obj : (go-to $1)
    $obj -> $color ball : (ball $1)
    @start $root
    @np $obj

Right-hand-side items starting with ``$`` are nonterminals, everything else
is a terminal.  The semantics template after the first free-standing ``:``
may reference the programs of the right-hand-side nonterminals as ``$1``,
``$2``, ... in left-to-right order.

Derivations are immutable trees.  Unexpanded nonterminals are :class:`Hole`
leaves; the ordered list of holes is the derivation's *frontier*.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Union

MASK = "[MASK]"

_NONTERMINAL = re.compile(r"\$[A-Za-z_][\w\-]*\Z")
_PLACEHOLDER = re.compile(r"\$(\d+)")
_SEMANTICS_SEP = re.compile(r"(?<!\S):(?!\S)")
_TOKEN = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and split punctuation into tokens."""
    return _TOKEN.findall(text.lower())


class GrammarError(ValueError):
    """Raised for malformed or invalid grammars."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column or 1}: {message}"
        super().__init__(message)


class AmbiguityError(GrammarError):
    """The same sentence text is produced with different programs."""

    def __init__(self, conflicts: dict[str, list[str]]):
        self.conflicts = conflicts
        lines = [f"{text!r} -> {' | '.join(progs)}" for text, progs in conflicts.items()]
        super().__init__("ambiguous grammar: " + "; ".join(lines))


class DerivationError(ValueError):
    pass


@dataclass(frozen=True)
class Rule:
    index: int
    lhs: str
    rhs: tuple[str, ...]
    semantics: str

    @property
    def nonterminals(self) -> tuple[str, ...]:
        return tuple(item for item in self.rhs if is_nonterminal(item))

    def instantiate(self, child_programs: Sequence[str]) -> str:
        return _PLACEHOLDER.sub(lambda m: child_programs[int(m.group(1)) - 1], self.semantics)

    def __str__(self) -> str:
        return f"{self.lhs} -> {' '.join(self.rhs)} : {self.semantics}"


def is_nonterminal(item: str) -> bool:
    return item.startswith("$")


class Grammar:
    """A validated grammar.  Treat instances as immutable."""

    def __init__(self, rules: Sequence[Rule], start_symbol: str = "$root",
                 np_nonterminals: Iterable[str] = ()):
        self.rules = tuple(rules)
        self.start_symbol = start_symbol
        self.np_nonterminals = frozenset(np_nonterminals)
        self.nonterminals = frozenset(r.lhs for r in self.rules)
        self._by_lhs: dict[str, tuple[Rule, ...]] = {}
        for rule in self.rules:
            self._by_lhs[rule.lhs] = self._by_lhs.get(rule.lhs, ()) + (rule,)
        self._cyclic: Optional[bool] = None
        # (symbol, max_depth) -> list of complete subtrees; filled lazily
        self._subtree_cache: dict[tuple[str, Optional[int]], list[Node]] = {}
        self._validate()

    def _validate(self) -> None:
        if not self.rules:
            raise GrammarError("no rules")
        if self.start_symbol not in self.nonterminals:
            raise GrammarError(f"undefined nonterminal {self.start_symbol} (start symbol)")
        for sym in sorted(self.np_nonterminals - self.nonterminals):
            raise GrammarError(f"undefined nonterminal {sym} (@np)")
        for rule in self.rules:
            for sym in rule.nonterminals:
                if sym not in self.nonterminals:
                    raise GrammarError(f"undefined nonterminal {sym} in rule {rule.index}: {rule}")
            _check_placeholders(rule.semantics, len(rule.nonterminals))

    def rules_for(self, symbol: str) -> tuple[Rule, ...]:
        return self._by_lhs.get(symbol, ())

    @property
    def size(self) -> int:
        return len(self.rules)

    @property
    def is_cyclic(self) -> bool:
        if self._cyclic is None:
            self._cyclic = _has_cycle(self)
        return self._cyclic

    def complete_subtrees(self, symbol: str, max_depth: Optional[int] = None) -> list["Node"]:
        """All complete derivation subtrees rooted at ``symbol``, cached."""
        key = (symbol, max_depth)
        if key not in self._subtree_cache:
            if max_depth is None and self.is_cyclic:
                raise GrammarError("grammar is cyclic; a max_depth bound is required")
            self._subtree_cache[key] = list(_subtrees(self, symbol, max_depth, {}))
        return self._subtree_cache[key]

    def __repr__(self) -> str:
        return (f"Grammar(start={self.start_symbol}, nonterminals={len(self.nonterminals)}, "
                f"rules={len(self.rules)})")


def _check_placeholders(template: str, n_nonterminals: int) -> None:
    for m in _PLACEHOLDER.finditer(template):
        k = int(m.group(1))
        if k < 1 or k > n_nonterminals:
            raise GrammarError(f"placeholder ${k} exceeds nonterminal count {n_nonterminals}")


def _has_cycle(g: Grammar) -> bool:
    edges = {nt: {s for r in g.rules_for(nt) for s in r.nonterminals} for nt in g.nonterminals}
    state: dict[str, int] = {}  # 1 = on stack, 2 = done

    def visit(nt: str) -> bool:
        state[nt] = 1
        for nxt in sorted(edges[nt]):
            s = state.get(nxt, 0)
            if s == 1 or (s == 0 and visit(nxt)):
                return True
        state[nt] = 2
        return False

    return any(state.get(nt, 0) == 0 and visit(nt) for nt in sorted(g.nonterminals))


# ---------------------------------------------------------------------------
# parsing


def parse_grammar(source: str) -> Grammar:
    rules: list[Rule] = []
    start: Optional[str] = None
    nps: list[str] = []
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        col = raw.index(line[0]) + 1
        if line.startswith("@"):
            parts = line.split()
            directive, args = parts[0], parts[1:]
            for a in args:
                if not _NONTERMINAL.match(a):
                    raise GrammarError(f"expected nonterminal, got {a!r}", lineno, col)
            if directive == "@start":
                if len(args) != 1:
                    raise GrammarError("@start takes exactly one nonterminal", lineno, col)
                if start is not None:
                    raise GrammarError("duplicate start symbol declaration", lineno, col)
                start = args[0]
            elif directive == "@np":
                if not args:
                    raise GrammarError("@np takes at least one nonterminal", lineno, col)
                nps.extend(args)
            else:
                raise GrammarError(f"unknown directive {directive}", lineno, col)
            continue
        lhs, arrow, rest = line.partition("->")
        if not arrow:
            raise GrammarError("expected '->'", lineno, col)
        lhs = lhs.strip()
        if not _NONTERMINAL.match(lhs):
            raise GrammarError(f"left-hand side must be a nonterminal, got {lhs!r}", lineno, col)
        m = _SEMANTICS_SEP.search(rest)
        if m is None:
            raise GrammarError("expected ':' before semantics", lineno, col + line.index("->") + 2)
        rhs_text, semantics = rest[: m.start()], rest[m.end():].strip()
        rhs: list[str] = []
        for item in rhs_text.split():
            if is_nonterminal(item):
                if not _NONTERMINAL.match(item):
                    raise GrammarError(f"bad nonterminal {item!r}", lineno, col + raw.strip().find(item))
                rhs.append(item)
            else:
                rhs.extend(tokenize(item))
        try:
            _check_placeholders(semantics, sum(1 for i in rhs if is_nonterminal(i)))
        except GrammarError as e:
            raise GrammarError(str(e), lineno, col + line.index(semantics) if semantics else col) from None
        rules.append(Rule(len(rules), lhs, tuple(rhs), semantics))
    if not rules:
        raise GrammarError("no rules")
    if start is None:
        start = "$root"
    return Grammar(rules, start, dict.fromkeys(nps))


def load_grammar(path) -> Grammar:
    with open(path, encoding="utf-8") as fh:
        return parse_grammar(fh.read())


# ---------------------------------------------------------------------------
# derivations


@dataclass(frozen=True)
class Hole:
    """An unexpanded nonterminal."""

    symbol: str


@dataclass(frozen=True)
class Node:
    rule: Rule
    children: tuple[Union["Node", Hole], ...]

    @property
    def depth(self) -> int:
        return 1 + max((c.depth for c in self.children if isinstance(c, Node)), default=0)


Tree = Union[Node, Hole]


@dataclass(frozen=True)
class Derivation:
    root: Tree
    # path from root to each hole, as child indices
    frontier: tuple[tuple[int, ...], ...] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "frontier", tuple(_hole_paths(self.root, ())))

    @classmethod
    def start(cls, g: Grammar) -> "Derivation":
        return cls(Hole(g.start_symbol))

    @property
    def complete(self) -> bool:
        return not self.frontier

    @property
    def frontier_symbols(self) -> tuple[str, ...]:
        return tuple(_at(self.root, p).symbol for p in self.frontier)

    @property
    def depth(self) -> int:
        return self.root.depth if isinstance(self.root, Node) else 0

    def substitute(self, site: int, subtree: Tree) -> "Derivation":
        if not 0 <= site < len(self.frontier):
            raise DerivationError(f"site {site} out of range for frontier of size {len(self.frontier)}")
        hole = _at(self.root, self.frontier[site])
        lhs = subtree.symbol if isinstance(subtree, Hole) else subtree.rule.lhs
        if lhs != hole.symbol:
            raise DerivationError(f"cannot place {lhs} at {hole.symbol} site")
        return Derivation(_replace(self.root, self.frontier[site], subtree))

    def to_indices(self):
        """Nested rule indices ``[rule, child, ...]``; holes serialize as their symbol."""
        return _to_indices(self.root)

    @classmethod
    def from_indices(cls, g: Grammar, data) -> "Derivation":
        return cls(_from_indices(g, data))


def _hole_paths(t: Tree, prefix: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
    if isinstance(t, Hole):
        yield prefix
        return
    for i, c in enumerate(t.children):
        yield from _hole_paths(c, prefix + (i,))


def _at(t: Tree, path: tuple[int, ...]) -> Tree:
    for i in path:
        t = t.children[i]
    return t


def _replace(t: Tree, path: tuple[int, ...], new: Tree) -> Tree:
    if not path:
        return new
    children = list(t.children)
    children[path[0]] = _replace(children[path[0]], path[1:], new)
    return Node(t.rule, tuple(children))


def _to_indices(t: Tree):
    if isinstance(t, Hole):
        return t.symbol
    return [t.rule.index, *(_to_indices(c) for c in t.children)]


def _from_indices(g: Grammar, data) -> Tree:
    if isinstance(data, str):
        return Hole(data)
    idx, *kids = data
    if not isinstance(idx, int) or not 0 <= idx < len(g.rules):
        raise DerivationError(f"bad rule index {idx!r}")
    rule = g.rules[idx]
    if len(kids) != len(rule.nonterminals):
        raise DerivationError(f"rule {idx} expects {len(rule.nonterminals)} children, got {len(kids)}")
    children = tuple(_from_indices(g, k) for k in kids)
    for sym, c in zip(rule.nonterminals, children):
        got = c.symbol if isinstance(c, Hole) else c.rule.lhs
        if got != sym:
            raise DerivationError(f"rule {idx} child expected {sym}, got {got}")
    return Node(rule, children)


def _yield_items(t: Tree) -> Iterator[Union[str, Hole]]:
    if isinstance(t, Hole):
        yield t
        return
    kids = iter(t.children)
    for item in t.rule.rhs:
        if is_nonterminal(item):
            yield from _yield_items(next(kids))
        else:
            yield item


def linearize(p: Union[Derivation, Tree], mask_token: str = MASK) -> list[str]:
    """Yield of ``p`` with each frontier nonterminal rendered as ``mask_token``."""
    root = p.root if isinstance(p, Derivation) else p
    return [mask_token if isinstance(i, Hole) else i for i in _yield_items(root)]


def semantics(d: Union[Derivation, Tree]) -> str:
    root = d.root if isinstance(d, Derivation) else d
    if isinstance(d, Derivation) and not d.complete:
        raise DerivationError("cannot compute semantics of an incomplete derivation")
    return _program(root)


def _program(t: Tree) -> str:
    if isinstance(t, Hole):
        raise DerivationError("cannot compute semantics of an incomplete derivation")
    return t.rule.instantiate([_program(c) for c in t.children])


def expansions(g: Grammar, p: Derivation, site: int) -> list[Derivation]:
    if not 0 <= site < len(p.frontier):
        raise DerivationError(f"site {site} out of range for frontier of size {len(p.frontier)}")
    symbol = p.frontier_symbols[site]
    return [p.substitute(site, Node(r, tuple(Hole(s) for s in r.nonterminals)))
            for r in g.rules_for(symbol)]


def np_group_count(p: Derivation, g: Grammar) -> int:
    """Number of maximal runs of adjacent np-flagged holes in the yield of ``p``."""
    groups, in_run = 0, False
    for item in _yield_items(p.root):
        flagged = isinstance(item, Hole) and item.symbol in g.np_nonterminals
        if flagged and not in_run:
            groups += 1
        in_run = flagged
    return groups


# ---------------------------------------------------------------------------
# enumeration


@dataclass(frozen=True)
class SyntheticSentence:
    tokens: tuple[str, ...]
    program: str
    derivation: Optional[Derivation] = field(default=None, compare=False)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def _subtrees(g: Grammar, symbol: str, budget: Optional[int], memo) -> Iterator[Node]:
    if budget is not None and budget <= 0:
        return
    key = (symbol, budget)
    if key in memo:
        yield from memo[key]
        return
    out: list[Node] = []
    nxt = None if budget is None else budget - 1
    for rule in g.rules_for(symbol):
        options = [list(_subtrees(g, s, nxt, memo)) for s in rule.nonterminals]
        for combo in itertools.product(*options):
            out.append(Node(rule, combo))
    memo[key] = out
    yield from out


def enumerate_sentences(g: Grammar, max_depth: Optional[int] = None) -> list[SyntheticSentence]:
    """Every complete derivation from the start symbol, depth-first in rule order.

    Identical (text, program) pairs are collapsed; the same text with two
    programs raises :class:`AmbiguityError`.
    """
    if max_depth is not None and max_depth < 1:
        raise ValueError("max_depth must be a positive integer")
    if max_depth is None and g.is_cyclic:
        raise GrammarError("grammar is cyclic; a max_depth bound is required")
    seen: dict[tuple[str, ...], str] = {}
    conflicts: dict[str, list[str]] = {}
    out: list[SyntheticSentence] = []
    for tree in _subtrees(g, g.start_symbol, max_depth, {}):
        tokens = tuple(linearize(tree))
        program = _program(tree)
        prev = seen.get(tokens)
        if prev is None:
            seen[tokens] = program
            out.append(SyntheticSentence(tokens, program, Derivation(tree)))
        elif prev != program:
            progs = conflicts.setdefault(" ".join(tokens), [prev])
            if program not in progs:
                progs.append(program)
    if conflicts:
        raise AmbiguityError(conflicts)
    return out
