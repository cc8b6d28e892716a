"""GP genotype: Boolean expression trees over variables and seed functions.

Leaves are either additional variables ``v_j`` or seed terminals ``f_i``.
With concrete seeds of ``n`` variables a tree evaluates to an ``(n + k)``
variable function: seeds occupy the low ``n`` index bits and the additional
variables sit above them with ``v_0`` most significant, i.e. ``v_j`` is index
bit ``n + k - 1 - j``.  With abstract seeds every terminal is a free input, ordered
``v_0 .. v_{k-1}, f_0 .. f_{s-1}``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .boolfun import TruthTable, lift_words, variable_words

ARITY = {"OR": 2, "XOR": 2, "AND": 2, "AND2": 2, "XNOR": 2, "NOT": 1, "IF": 3}
FUNCTIONS = tuple(ARITY)
BINARY = tuple(op for op, a in ARITY.items() if a == 2)
LEAVES = ("VAR", "SEED", "CONST")

CROSSOVER_KINDS = ("SimpleTree", "Uniform", "SizeFair", "OnePoint", "ContextPreserving")
DEFAULT_MAX_DEPTH = 5
CROSSOVER_RETRIES = 3


class GpError(ValueError):
    pass


class ParseError(GpError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} at position {pos}")
        self.pos = pos


@dataclass(frozen=True, slots=True)
class Node:
    op: str
    children: tuple = ()
    index: int = 0

    @property
    def is_leaf(self) -> bool:
        return not self.children


def var(j: int) -> Node:
    return Node("VAR", index=j)


def seed(i: int) -> Node:
    return Node("SEED", index=i)


def const(b: int) -> Node:
    return Node("CONST", index=int(bool(b)))


def op(name: str, *children: Node) -> Node:
    if ARITY.get(name) != len(children):
        raise GpError(f"{name} takes {ARITY.get(name)} arguments, got {len(children)}")
    return Node(name, tuple(children))


def node_depth(node: Node) -> int:
    if not node.children:
        return 0
    return 1 + max(node_depth(c) for c in node.children)


def node_size(node: Node) -> int:
    return 1 + sum(node_size(c) for c in node.children)


class GpTree:
    """Immutable tree with cached depth (root at depth 0) and node count."""

    __slots__ = ("root", "depth", "size")

    def __init__(self, root: Node):
        self.root = root
        self.depth = node_depth(root)
        self.size = node_size(root)

    def __eq__(self, other) -> bool:
        return isinstance(other, GpTree) and self.root == other.root

    def __hash__(self) -> int:
        return hash(self.root)

    def __repr__(self) -> str:
        return f"GpTree({serialize_tree(self)!r})"

    def __str__(self) -> str:
        return serialize_tree(self)

    def walk(self) -> list[tuple[tuple, Node, int]]:
        """Preorder list of ``(path, node, depth)``."""
        out = []
        stack = [((), self.root, 0)]
        while stack:
            path, node, d = stack.pop()
            out.append((path, node, d))
            for i in range(len(node.children) - 1, -1, -1):
                stack.append((path + (i,), node.children[i], d + 1))
        return out

    def leaves(self) -> Iterator[Node]:
        for _, node, _ in self.walk():
            if node.is_leaf:
                yield node


def subtree_at(root: Node, path: Sequence[int]) -> Node:
    for i in path:
        root = root.children[i]
    return root


def replace_at(root: Node, path: Sequence[int], new: Node) -> Node:
    if not path:
        return new
    i = path[0]
    kids = list(root.children)
    kids[i] = replace_at(kids[i], path[1:], new)
    return Node(root.op, tuple(kids), root.index)


# --- terminal context & evaluation ------------------------------------------


@dataclass
class TerminalContext:
    """Terminal set: ``k`` additional variables and ``s`` seed terminals.

    ``seeds=None`` selects abstract evaluation.
    """

    k: int
    s: int
    seeds: tuple | None = None
    _leaf_cache: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.k < 0 or self.s < 0 or self.k + self.s == 0:
            raise GpError(f"need at least one terminal, got k={self.k}, s={self.s}")
        if self.seeds is not None:
            self.seeds = tuple(self.seeds)
            if len(self.seeds) != self.s:
                raise GpError(f"expected {self.s} seed tables, got {len(self.seeds)}")
            sizes = {f.n for f in self.seeds}
            if len(sizes) > 1:
                raise GpError(f"mixed seed sizes {sorted(sizes)}")

    @property
    def abstract(self) -> bool:
        return self.seeds is None

    @property
    def seed_vars(self) -> int:
        if self.seeds is None or not self.seeds:
            return 0
        return self.seeds[0].n

    @property
    def n_vars(self) -> int:
        """Variable count of the evaluated table."""
        if self.abstract:
            return self.k + self.s
        return self.seed_vars + self.k

    def terminals(self) -> list[Node]:
        return [var(j) for j in range(self.k)] + [seed(i) for i in range(self.s)]

    def with_seeds(self, seeds) -> TerminalContext:
        return TerminalContext(self.k, self.s, tuple(seeds))

    def leaf_values(self):
        if self._leaf_cache is None:
            self._leaf_cache = self._build_leaves()
        return self._leaf_cache

    def _build_leaves(self):
        m = self.n_vars
        if self.abstract:
            vs = [variable_words(m, j) for j in range(self.k)]
            fs = [variable_words(m, self.k + i) for i in range(self.s)]
        else:
            n = self.seed_vars
            vs = [variable_words(m, n + self.k - 1 - j) for j in range(self.k)]
            fs = [lift_words(f.words, n, self.k) for f in self.seeds]
        if m <= 6:
            # single word: plain ints are much cheaper than 1-element arrays
            mask = (1 << (1 << m)) - 1
            return [int(w[0]) for w in vs], [int(w[0]) for w in fs], mask
        return vs, fs, np.uint64(0xFFFFFFFFFFFFFFFF)


def check_tree(tree: GpTree | Node, k: int, s: int) -> None:
    root = tree.root if isinstance(tree, GpTree) else tree
    stack = [root]
    while stack:
        node = stack.pop()
        if node.op == "VAR":
            if not 0 <= node.index < k:
                raise GpError(f"terminal v{node.index} out of range (k={k})")
        elif node.op == "SEED":
            if not 0 <= node.index < s:
                raise GpError(f"terminal f{node.index} out of range (s={s})")
        elif node.op == "CONST":
            pass
        elif ARITY.get(node.op) != len(node.children):
            raise GpError(f"bad node {node.op} with {len(node.children)} children")
        stack.extend(node.children)


def _eval(node: Node, vs, fs, mask):
    o = node.op
    if o == "VAR":
        return vs[node.index]
    if o == "SEED":
        return fs[node.index]
    c = node.children
    if o == "XOR":
        return _eval(c[0], vs, fs, mask) ^ _eval(c[1], vs, fs, mask)
    if o == "AND":
        return _eval(c[0], vs, fs, mask) & _eval(c[1], vs, fs, mask)
    if o == "OR":
        return _eval(c[0], vs, fs, mask) | _eval(c[1], vs, fs, mask)
    if o == "NOT":
        return _eval(c[0], vs, fs, mask) ^ mask
    if o == "AND2":
        return _eval(c[0], vs, fs, mask) & (_eval(c[1], vs, fs, mask) ^ mask)
    if o == "XNOR":
        return _eval(c[0], vs, fs, mask) ^ _eval(c[1], vs, fs, mask) ^ mask
    if o == "IF":
        a = _eval(c[0], vs, fs, mask)
        return (a & _eval(c[1], vs, fs, mask)) | ((a ^ mask) & _eval(c[2], vs, fs, mask))
    if o == "CONST":
        return mask if node.index else mask ^ mask
    raise GpError(f"unknown node {o}")


def eval_tree(tree: GpTree | Node, ctx: TerminalContext) -> TruthTable:
    check_tree(tree, ctx.k, ctx.s)
    return eval_unchecked(tree, ctx)


def eval_unchecked(tree: GpTree | Node, ctx: TerminalContext) -> TruthTable:
    root = tree.root if isinstance(tree, GpTree) else tree
    vs, fs, mask = ctx.leaf_values()
    value = _eval(root, vs, fs, mask)
    m = ctx.n_vars
    if isinstance(mask, int):
        return TruthTable(m, np.array([value & mask], dtype=np.uint64))
    nw = max(1, (1 << m) // 64)
    return TruthTable(m, np.broadcast_to(np.asarray(value, dtype=np.uint64), (nw,)).copy())


def substitute(abstract: TruthTable, seeds: Sequence[TruthTable], k: int) -> TruthTable:
    """Plug concrete seeds into an abstract table by Shannon expansion.

    ``abstract`` has inputs ordered ``v_0..v_{k-1}, f_0..f_{s-1}``; the result
    equals ``eval_tree`` of any tree with that abstract table.
    """
    s = len(seeds)
    if abstract.n != k + s:
        raise GpError(f"abstract table has {abstract.n} inputs, expected {k + s}")
    ctx = TerminalContext(k, s, tuple(seeds))
    vs, fs, mask = ctx.leaf_values()
    inputs = list(vs) + list(fs)
    bits = abstract.bits()

    def expand(var_idx: int, offset: int):
        # mux over input var_idx, highest abstract input first
        if var_idx < 0:
            return mask if bits[offset] else mask ^ mask
        lo = expand(var_idx - 1, offset)
        hi = expand(var_idx - 1, offset + (1 << var_idx))
        x = inputs[var_idx]
        return (x & hi) | ((x ^ mask) & lo)

    value = expand(k + s - 1, 0)
    m = ctx.n_vars
    if isinstance(mask, int):
        return TruthTable(m, np.array([value & mask], dtype=np.uint64))
    nw = max(1, (1 << m) // 64)
    return TruthTable(m, np.broadcast_to(np.asarray(value, dtype=np.uint64), (nw,)).copy())


# --- random generation -----------------------------------------------------


def _full(ctx_terms, d, rng) -> Node:
    if d <= 0:
        return rng.choice(ctx_terms)
    f = rng.choice(FUNCTIONS)
    return Node(f, tuple(_full(ctx_terms, d - 1, rng) for _ in range(ARITY[f])))


def _grow(ctx_terms, d, rng) -> Node:
    if d <= 0:
        return rng.choice(ctx_terms)
    pick = rng.randrange(len(ctx_terms) + len(FUNCTIONS))
    if pick < len(ctx_terms):
        return ctx_terms[pick]
    f = FUNCTIONS[pick - len(ctx_terms)]
    return Node(f, tuple(_grow(ctx_terms, d - 1, rng) for _ in range(ARITY[f])))


def random_node(ctx: TerminalContext, max_depth: int, rng) -> Node:
    """Ramped half-and-half: depth drawn from ``min(2, max_depth)..max_depth``."""
    terms = ctx.terminals()
    if max_depth <= 0:
        return rng.choice(terms)
    d = rng.randint(min(2, max_depth), max_depth)
    if rng.random() < 0.5:
        return _full(terms, d, rng)
    return _grow(terms, d, rng)


def random_tree(ctx: TerminalContext, max_depth: int, rng) -> GpTree:
    if max_depth < 1:
        raise GpError("max_depth must be at least 1")
    return GpTree(random_node(ctx, max_depth, rng))


# --- variation -------------------------------------------------------------


def _node_sizes(tree: GpTree) -> list[tuple[tuple, Node, int, int]]:
    return [(p, nd, d, node_size(nd)) for p, nd, d in tree.walk()]


def _simple_tree(a: GpTree, b: GpTree, rng) -> Node:
    pa, _, _ = rng.choice(a.walk())
    _, sub, _ = rng.choice(b.walk())
    return replace_at(a.root, pa, sub)


def _uniform(x: Node, y: Node, rng) -> Node:
    # common-region nodes of equal arity swap labels; boundary nodes swap subtrees
    if x.children and len(x.children) == len(y.children):
        label = y if rng.random() < 0.5 else x
        kids = tuple(_uniform(cx, cy, rng) for cx, cy in zip(x.children, y.children))
        return Node(label.op, kids, label.index)
    return y if rng.random() < 0.5 else x


def _size_fair(a: GpTree, b: GpTree, rng) -> Node:
    pa, removed, _ = rng.choice(a.walk())
    size = node_size(removed)
    smaller, equal, larger = [], [], []
    for _, nd, _, sz in _node_sizes(b):
        if sz < size:
            smaller.append(nd)
        elif sz == size:
            equal.append(nd)
        elif sz <= 2 * size + 1:
            larger.append(nd)
    # zero expected size change: p(equal)=1/size, rest split by mean distance
    p_equal = 1.0 / size if equal else 0.0
    if smaller and larger:
        d_minus = size - sum(node_size(n) for n in smaller) / len(smaller)
        d_plus = sum(node_size(n) for n in larger) / len(larger) - size
        rest = 1.0 - p_equal
        p_larger = rest * d_minus / (d_minus + d_plus)
        p_smaller = rest - p_larger
    elif smaller:
        p_smaller, p_larger = 1.0 - p_equal, 0.0
    elif larger:
        p_smaller, p_larger = 0.0, 1.0 - p_equal
    else:
        p_equal, p_smaller, p_larger = 1.0, 0.0, 0.0
    r = rng.random() * (p_equal + p_smaller + p_larger)
    if r < p_equal:
        donor = rng.choice(equal)
    elif r < p_equal + p_smaller:
        donor = rng.choice(smaller)
    else:
        donor = rng.choice(larger)
    return replace_at(a.root, pa, donor)


def _common_region(x: Node, y: Node, path=()) -> list[tuple]:
    out = [path]
    if x.children and len(x.children) == len(y.children):
        for i, (cx, cy) in enumerate(zip(x.children, y.children)):
            out.extend(_common_region(cx, cy, path + (i,)))
    return out


def _shared_coordinates(x: Node, y: Node, path=()) -> list[tuple]:
    out = [path]
    for i in range(min(len(x.children), len(y.children))):
        out.extend(_shared_coordinates(x.children[i], y.children[i], path + (i,)))
    return out


def _one_point(a: GpTree, b: GpTree, rng) -> Node:
    path = rng.choice(_common_region(a.root, b.root))
    return replace_at(a.root, path, subtree_at(b.root, path))


def _context_preserving(a: GpTree, b: GpTree, rng) -> Node:
    path = rng.choice(_shared_coordinates(a.root, b.root))
    return replace_at(a.root, path, subtree_at(b.root, path))


_CROSSOVERS = {
    "SimpleTree": _simple_tree,
    "Uniform": lambda a, b, rng: _uniform(a.root, b.root, rng),
    "SizeFair": _size_fair,
    "OnePoint": _one_point,
    "ContextPreserving": _context_preserving,
}


def crossover(a: GpTree, b: GpTree, kind: str, rng,
              max_depth: int = DEFAULT_MAX_DEPTH) -> GpTree:
    """One offspring of ``a`` (receiver) and ``b`` (donor).

    SimpleTree swaps in a random subtree of ``b`` at a random point of ``a``.
    Uniform walks the common region, exchanging node labels with probability
    1/2 and whole subtrees at its boundary.  SizeFair restricts the donor to
    at most ``2 * removed + 1`` nodes, weighted to keep the expected size.
    OnePoint picks one point of the common region (equal-arity ancestry);
    ContextPreserving picks a position whose coordinates exist in both trees.
    Offspring deeper than ``max_depth`` are retried, then ``a`` is returned.
    """
    fn = _CROSSOVERS[kind]
    for _ in range(CROSSOVER_RETRIES):
        child = fn(a, b, rng)
        if node_depth(child) <= max_depth:
            return GpTree(child)
    return a


def subtree_mutation(t: GpTree, ctx: TerminalContext, max_depth: int, rng) -> GpTree:
    path, _, d = rng.choice(t.walk())
    new = random_node(ctx, max_depth - d, rng)
    return GpTree(replace_at(t.root, path, new))


# --- text format -----------------------------------------------------------


def _render(node: Node) -> str:
    o = node.op
    if o == "VAR":
        return f"v{node.index}"
    if o == "SEED":
        return f"f{node.index}"
    if o == "CONST":
        return str(node.index)
    if o == "NOT":
        return f"NOT({_render(node.children[0])})"
    if o == "IF":
        return "IF(" + ", ".join(_render(c) for c in node.children) + ")"
    return f"({_render(node.children[0])} {o} {_render(node.children[1])})"


def serialize_tree(t: GpTree | Node) -> str:
    return _render(t.root if isinstance(t, GpTree) else t)


_TOKEN = re.compile(r"\s*(?:([A-Za-z][A-Za-z0-9_]*|[01])|([(),]))")
_TERMINAL = re.compile(r"([vf])_?(\d+)$")


def _tokenize(text: str) -> list[tuple[str, int]]:
    text = text.replace("$", " ")
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        tok = m.group(1) or m.group(2)
        tokens.append((tok, m.start(1) if m.group(1) else m.start(2)))
        pos = m.end()
    tokens.append(("", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, int]:
        return self.tokens[self.i]

    def take(self, expected: str | None = None) -> tuple[str, int]:
        tok, pos = self.tokens[self.i]
        if expected is not None and tok != expected:
            raise ParseError(f"expected {expected!r}, found {tok or 'end of input'!r}", pos)
        self.i += 1
        return tok, pos

    def expr(self) -> Node:
        tok, pos = self.peek()
        if tok == "(":
            self.take()
            left = self.expr()
            name, npos = self.take()
            if ARITY.get(name.upper()) != 2:
                raise ParseError(f"expected binary operator, found {name!r}", npos)
            right = self.expr()
            self.take(")")
            return Node(name.upper(), (left, right))
        if tok.upper() in ARITY:
            name = tok.upper()
            self.take()
            self.take("(")
            args = [self.expr()]
            while self.peek()[0] == ",":
                self.take()
                args.append(self.expr())
            self.take(")")
            if len(args) != ARITY[name]:
                raise ParseError(f"{name} takes {ARITY[name]} arguments, got {len(args)}", pos)
            return Node(name, tuple(args))
        if tok in ("0", "1"):
            self.take()
            return const(int(tok))
        m = _TERMINAL.match(tok)
        if m:
            self.take()
            idx = int(m.group(2))
            return var(idx) if m.group(1) == "v" else seed(idx)
        raise ParseError(f"unknown token {tok or 'end of input'!r}", pos)


def parse_tree(text: str, ctx: TerminalContext | None = None) -> GpTree:
    p = _Parser(text)
    root = p.expr()
    tok, pos = p.peek()
    if tok:
        raise ParseError(f"trailing input {tok!r}", pos)
    if ctx is not None:
        check_tree(root, ctx.k, ctx.s)
    return GpTree(root)


def write_trees(path, trees) -> None:
    with open(path, "w") as fh:
        for t in trees:
            fh.write(serialize_tree(t) + "\n")


def read_trees(path, ctx: TerminalContext | None = None) -> list[GpTree]:
    with open(path) as fh:
        return [parse_tree(line, ctx) for line in fh if line.strip()]
