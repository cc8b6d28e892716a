"""Post-hoc analysis of evolved constructions.

Equivalence is decided exactly on abstract truth tables (every terminal a free
input) by brute force over the allowed input permutations, optionally with
output and input negation.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .boolfun import TruthTable
from .gp import (GpTree, Node, TerminalContext, const, eval_tree, node_size, op)

MAX_ABSTRACT_INPUTS = 16
MAX_BRUTE_FORCE_INPUTS = 8


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class AbstractFunction:
    inputs: tuple  # terminal names, v's first then f's
    table: TruthTable

    @property
    def k(self) -> int:
        return sum(1 for name in self.inputs if name.startswith("v"))

    @property
    def s(self) -> int:
        return len(self.inputs) - self.k


@dataclass(frozen=True)
class EquivRelation:
    joint: bool = False  # permute v's and f's together
    input_negation: bool = False
    output_negation: bool = True


WITHIN_KIND = EquivRelation()
JOINT = EquivRelation(joint=True)
EXTENDED = EquivRelation(joint=True, input_negation=True)


def tree_shape(t: GpTree) -> tuple[int, int]:
    """``(k, s)`` implied by the largest terminal indices in the tree."""
    k = s = 0
    for leaf in t.leaves():
        if leaf.op == "VAR":
            k = max(k, leaf.index + 1)
        elif leaf.op == "SEED":
            s = max(s, leaf.index + 1)
    return k, s


def abstractize(t: GpTree, s: int, k: int = 2) -> AbstractFunction:
    if s + k > MAX_ABSTRACT_INPUTS:
        raise AnalysisError(f"{s + k} abstract inputs exceed the bound {MAX_ABSTRACT_INPUTS}")
    table = eval_tree(t, TerminalContext(k, s))
    names = tuple(f"v{j}" for j in range(k)) + tuple(f"f{i}" for i in range(s))
    return AbstractFunction(names, table)


def _depends_on(bits: np.ndarray, u: int) -> bool:
    b = bits.reshape(-1, 2, 1 << u)
    return bool(np.any(b[:, 0, :] != b[:, 1, :]))


def essential_terminals(a: AbstractFunction) -> set[str]:
    bits = a.table.bits()
    return {name for u, name in enumerate(a.inputs) if _depends_on(bits, u)}


def seeds_used(a: AbstractFunction) -> int:
    return sum(1 for name in essential_terminals(a) if name.startswith("f"))


def restrict_to_essential(a: AbstractFunction) -> AbstractFunction:
    """Project onto the essential inputs, renumbered within each kind."""
    ess = essential_terminals(a)
    keep = [u for u, name in enumerate(a.inputs) if name in ess]
    m = len(keep)
    xs = np.arange(1 << m)
    idx = np.zeros(1 << m, dtype=np.int64)
    for new, old in enumerate(keep):
        idx |= ((xs >> new) & 1) << old
    bits = a.table.bits()[idx] if m else a.table.bits()[:1]
    kv = sum(1 for u in keep if a.inputs[u].startswith("v"))
    names = tuple(f"v{j}" for j in range(kv)) + tuple(f"f{i}" for i in range(m - kv))
    return AbstractFunction(names, TruthTable.from_bits(bits))


@functools.lru_cache(maxsize=64)
def _transform_indices(m: int, k: int, joint: bool, input_negation: bool) -> np.ndarray:
    if joint:
        perms = list(itertools.permutations(range(m)))
    else:
        perms = [pv + pf for pv in itertools.permutations(range(k))
                 for pf in itertools.permutations(range(k, m))]
    xs = np.arange(1 << m, dtype=np.int64)
    xbits = (xs[:, None] >> np.arange(m)) & 1
    weights = np.array([[1 << p for p in perm] for perm in perms], dtype=np.int64)
    ys = xbits @ weights.T  # (2**m, perms)
    ys = ys.T
    if input_negation:
        masks = np.arange(1 << m, dtype=np.int64)
        ys = (ys[:, None, :] ^ masks[None, :, None]).reshape(-1, 1 << m)
    return ys


def equivalent(a: AbstractFunction, b: AbstractFunction,
               relation: EquivRelation = WITHIN_KIND) -> bool:
    m = len(a.inputs)
    if len(b.inputs) != m or (not relation.joint and a.k != b.k):
        raise AnalysisError(f"shape mismatch: {a.inputs} vs {b.inputs}")
    if m > MAX_BRUTE_FORCE_INPUTS:
        raise AnalysisError(f"brute-force equivalence limited to {MAX_BRUTE_FORCE_INPUTS} inputs")
    ab, bb = a.table.bits(), b.table.bits()
    if ab.sum() not in (bb.sum(), bb.size - bb.sum()):
        return False
    images = ab[_transform_indices(m, a.k, relation.joint, relation.input_negation)]
    if np.any(np.all(images == bb, axis=1)):
        return True
    return relation.output_negation and bool(np.any(np.all(images != bb, axis=1)))


def _comparable(a: AbstractFunction, b: AbstractFunction, relation: EquivRelation) -> bool:
    return len(a.inputs) == len(b.inputs) and (relation.joint or a.k == b.k)


@dataclass
class EquivalenceGraph:
    adjacency: np.ndarray
    classes: list

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def max_size(self) -> int:
        return max((len(c) for c in self.classes), default=0)

    def grid(self) -> str:
        return "\n".join("".join("1" if x else "0" for x in row) for row in self.adjacency)


def equivalence_graph(items, relation: EquivRelation = WITHIN_KIND, s: int | None = None,
                      k: int = 2, restrict: bool = False) -> EquivalenceGraph:
    """Pairwise equivalence over trees (or abstract functions) and its classes."""
    funcs = []
    for it in items:
        if isinstance(it, AbstractFunction):
            a = it
        else:
            a = abstractize(it, s if s is not None else max(tree_shape(it)[1], 1), k)
        funcs.append(restrict_to_essential(a) if restrict else a)
    count = len(funcs)
    adj = np.eye(count, dtype=bool)
    for i in range(count):
        for j in range(i + 1, count):
            if _comparable(funcs[i], funcs[j], relation):
                adj[i, j] = adj[j, i] = equivalent(funcs[i], funcs[j], relation)
    ncomp, labels = connected_components(adj, directed=False)
    classes = [sorted(int(i) for i in np.flatnonzero(labels == c)) for c in range(ncomp)]
    classes.sort(key=lambda c: c[0])
    return EquivalenceGraph(adj, classes)


def size_stats(trees) -> dict:
    sizes = np.array([t.size for t in trees], dtype=float)
    if not sizes.size:
        raise AnalysisError("no trees")
    q1, med, q3 = np.percentile(sizes, [25, 50, 75])
    return {"min": int(sizes.min()), "q1": float(q1), "median": float(med),
            "q3": float(q3), "max": int(sizes.max()),
            "values": [int(x) for x in sizes]}


# --- simplification --------------------------------------------------------


def _is_const(n: Node, b: int | None = None) -> bool:
    return n.op == "CONST" and (b is None or n.index == b)


def _complementary(a: Node, b: Node) -> bool:
    return (a.op == "NOT" and a.children[0] == b) or (b.op == "NOT" and b.children[0] == a)


def _substitute(node: Node, target: Node, value: int) -> Node:
    if node == target:
        return const(value)
    if not node.children:
        return node
    return Node(node.op, tuple(_substitute(c, target, value) for c in node.children), node.index)


def _rewrite(node: Node) -> Node:
    if not node.children:
        return node
    kids = tuple(_rewrite(c) for c in node.children)
    o = node.op
    if o == "NOT":
        (x,) = kids
        if _is_const(x):
            return const(1 - x.index)
        if x.op == "NOT":
            return x.children[0]
        if x.op == "XOR":
            return op("XNOR", *x.children)
        if x.op == "XNOR":
            return op("XOR", *x.children)
        return op("NOT", x)
    if o in ("XOR", "XNOR"):
        a, b = kids
        flip = o == "XNOR"
        for x, y in ((a, b), (b, a)):
            if _is_const(x):
                return _rewrite(op("NOT", y)) if x.index ^ flip else y
        if a == b:
            return const(flip)
        if _complementary(a, b):
            return const(1 - flip)
        negs = (a.op == "NOT") + (b.op == "NOT")
        if negs:
            a = a.children[0] if a.op == "NOT" else a
            b = b.children[0] if b.op == "NOT" else b
            flip ^= negs & 1
        return op("XNOR" if flip else "XOR", a, b)
    if o in ("AND", "OR"):
        a, b = kids
        absorbing = int(o == "OR")
        for x, y in ((a, b), (b, a)):
            if _is_const(x):
                return const(absorbing) if x.index == absorbing else y
        if a == b:
            return a
        if _complementary(a, b):
            return const(absorbing)
        return op(o, a, b)
    if o == "AND2":
        a, b = kids
        if _is_const(b):
            return a if b.index == 0 else const(0)
        if _is_const(a):
            return const(0) if a.index == 0 else _rewrite(op("NOT", b))
        if a == b:
            return const(0)
        if b.op == "NOT":
            return _rewrite(op("AND", a, b.children[0]))
        if _complementary(a, b):
            return a
        return op("AND2", a, b)
    if o == "IF":
        c, a, b = kids
        if _is_const(c):
            return a if c.index else b
        if c.op == "NOT":
            return _rewrite(op("IF", c.children[0], b, a))
        a = _rewrite(_substitute(a, c, 1))
        b = _rewrite(_substitute(b, c, 0))
        if a == b:
            return a
        if _is_const(a) and _is_const(b):
            return c if a.index else _rewrite(op("NOT", c))
        if _is_const(a, 1):
            return _rewrite(op("OR", c, b))
        if _is_const(b, 0):
            return _rewrite(op("AND", c, a))
        if _is_const(a, 0):
            return _rewrite(op("AND2", b, c))
        return op("IF", c, a, b)
    return Node(o, kids, node.index)


def _fold_semantic(node: Node, ctx: TerminalContext, literals: dict) -> Node:
    if node.children:
        node = Node(node.op, tuple(_fold_semantic(c, ctx, literals) for c in node.children),
                    node.index)
    if node.op == "CONST":
        return node
    key = eval_tree(node, ctx).to_int()
    hit = literals.get(key)
    if hit is not None and node_size(hit) < node_size(node):
        return hit
    return node


def _literal_table(ctx: TerminalContext) -> dict:
    lits = {}
    full = (1 << (1 << ctx.n_vars)) - 1
    lits[0] = const(0)
    lits[full] = const(1)
    for term in ctx.terminals():
        v = eval_tree(term, ctx).to_int()
        lits.setdefault(v, term)
        lits.setdefault(v ^ full, op("NOT", term))
    return lits


def simplify(t: GpTree) -> GpTree:
    """Semantics-preserving shrink of a construction tree.

    Folds constants, specializes IF branches on their condition, removes
    double negations and identity operands, folds subtrees that equal a
    literal, and replaces inessential terminals by 0.
    """
    k, s = tree_shape(t)
    if k + s == 0:
        return GpTree(_rewrite(t.root))
    ctx = TerminalContext(k, s)
    before = abstractize(t, s, k)
    lits = _literal_table(ctx)

    root = t.root
    for _ in range(8):
        new = _rewrite(root)
        new = _fold_semantic(new, ctx, lits)
        ess = essential_terminals(AbstractFunction(before.inputs, eval_tree(new, ctx)))
        for term in ctx.terminals():
            name = f"{'v' if term.op == 'VAR' else 'f'}{term.index}"
            if name not in ess:
                new = _substitute(new, term, 0)
        new = _rewrite(new)
        if new == root:
            break
        root = new
    if node_size(root) > t.size:
        root = t.root
    out = GpTree(root)
    assert eval_tree(out, ctx) == before.table, "simplify changed semantics"
    return out


def is_simple_candidate(t: GpTree) -> bool:
    """IF at the root with a single-literal condition."""
    return t.root.op == "IF" and not t.root.children[0].children


def select_simplest(trees) -> int | None:
    """Index of the smallest candidate within the lower size quartile."""
    if not trees:
        return None
    q1 = np.percentile([t.size for t in trees], 25)
    ok = [(t.size, i) for i, t in enumerate(trees) if is_simple_candidate(t) and t.size <= q1]
    return min(ok)[1] if ok else None
