"""Objective values of Boolean functions and fitness of candidate constructions."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .boolfun import TruthTable, balancedness_penalty, walsh_transform
from .gp import GpTree, TerminalContext, check_tree, eval_tree, eval_unchecked

NL_ONLY = "NL_ONLY"
NL_WITH_SPECTRUM = "NL_WITH_SPECTRUM"
OBJECTIVES = (NL_ONLY, NL_WITH_SPECTRUM)

FIRST_GROUP = "FIRST_GROUP"
SUM_ALL = "SUM_ALL"
MIN_ALL = "MIN_ALL"
FITNESS_KINDS = (FIRST_GROUP, SUM_ALL, MIN_ALL)
# experiment labels A/B/C
EV_LABELS = {"A": FIRST_GROUP, "B": SUM_ALL, "C": MIN_ALL}


class FitnessError(ValueError):
    pass


@dataclass(frozen=True)
class FitnessKind:
    variant: str = SUM_ALL
    target_val: int | None = None
    exact_trigger: bool = False  # require val_1 == target instead of >=
    recount_first: bool = True  # sum over all groups, group 1 included again

    def __post_init__(self):
        if self.variant not in FITNESS_KINDS:
            raise FitnessError(f"unknown fitness kind {self.variant!r}")
        if self.variant == FIRST_GROUP and (self.target_val is None or self.target_val <= 0):
            raise FitnessError("FIRST_GROUP needs a positive target_val")


@dataclass(frozen=True)
class FitnessValue:
    value: Fraction
    per_group: tuple = ()
    missing_terminals: int = 0

    def __float__(self) -> float:
        return float(self.value)


def spectrum_stats(f: TruthTable) -> tuple[int, int, int]:
    """``(BAL, Nl, #max_values)`` from one transform."""
    w = np.abs(walsh_transform(f))
    peak = int(w.max())
    nl = (1 << (f.n - 1)) - peak // 2 if f.n else 0
    return balancedness_penalty(f), nl, int(np.count_nonzero(w == peak))


def objective(f: TruthTable, kind: str = NL_WITH_SPECTRUM) -> Fraction:
    bal, nl, count = spectrum_stats(f)
    if bal:
        return Fraction(-bal)
    if kind == NL_ONLY:
        return Fraction(nl)
    if kind == NL_WITH_SPECTRUM:
        return nl + 1 - Fraction(count, f.size)
    raise FitnessError(f"unknown objective {kind!r}")


def missing_terminals(t: GpTree, k: int, s: int) -> int:
    present = {(leaf.op, leaf.index) for leaf in t.leaves()}
    wanted = [("VAR", j) for j in range(k)] + [("SEED", i) for i in range(s)]
    return sum(1 for w in wanted if w not in present)


def combine(vals: Sequence[Fraction], fit: FitnessKind, first_only: bool = False) -> Fraction:
    if fit.variant == SUM_ALL:
        return sum(vals, Fraction(0))
    if fit.variant == MIN_ALL:
        return min(vals)
    v1 = vals[0]
    if first_only:
        return v1
    rest = vals if fit.recount_first else vals[1:]
    return v1 + sum(rest, Fraction(0))


def triggered(v1: Fraction, fit: FitnessKind) -> bool:
    if fit.exact_trigger:
        return v1 == fit.target_val
    return v1 >= fit.target_val


def _check_groups(groups, s: int) -> int:
    if not groups:
        raise FitnessError("at least one seed group is required")
    sizes = set()
    for g in groups:
        seeds = getattr(g, "seeds", g)
        if len(seeds) != s:
            raise FitnessError(f"group has {len(seeds)} seeds, tree context needs {s}")
        sizes.update(f.n for f in seeds)
    if len(sizes) != 1:
        raise FitnessError(f"seed groups mix sizes {sorted(sizes)}")
    return sizes.pop()


def construction_fitness(t: GpTree, groups, obj: str, fit: FitnessKind,
                         k: int = 2) -> FitnessValue:
    """Fitness of a construction tree over seed groups, with missing-terminal penalty.

    ``groups`` holds SeedGroups or plain sequences of seed tables.  Under
    FIRST_GROUP the other groups are only evaluated once group 1 triggers.
    """
    first = groups[0] if groups else None
    s = len(getattr(first, "seeds", first) or ())
    _check_groups(groups, s)
    check_tree(t, k, s)
    contexts = [TerminalContext(k, s, tuple(getattr(g, "seeds", g))) for g in groups]

    def val(i):
        return objective(eval_unchecked(t, contexts[i]), obj)

    vals = [val(0)]
    if fit.variant != FIRST_GROUP or triggered(vals[0], fit):
        vals.extend(val(i) for i in range(1, len(groups)))
        raw = combine(vals, fit)
    else:
        raw = combine(vals, fit, first_only=True)
    missing = missing_terminals(t, k, s)
    return FitnessValue(raw / (1 + missing), tuple(vals), missing)


class ConstructionEvaluator:
    """Picklable fitness callback with a semantic cache.

    Resulting functions depend on the tree only through its abstract table, so
    per-group objectives are memoized on it; the syntactic missing-terminal
    penalty is applied per tree.
    """

    def __init__(self, groups, obj: str, fit: FitnessKind, k: int = 2,
                 cache_limit: int = 200_000):
        self.groups = [tuple(getattr(g, "seeds", g)) for g in groups]
        self.s = len(self.groups[0]) if self.groups else 0
        _check_groups(self.groups, self.s)
        self.k = k
        self.obj = obj
        self.fit = fit
        self.cache_limit = cache_limit
        self._abstract = TerminalContext(k, self.s)
        self._contexts = [TerminalContext(k, self.s, g) for g in self.groups]
        self._cache: dict = {}

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state

    def group_values(self, t: GpTree) -> tuple:
        key = eval_unchecked(t, self._abstract).to_int()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        vals = [objective(eval_unchecked(t, self._contexts[0]), self.obj)]
        if self.fit.variant != FIRST_GROUP or triggered(vals[0], self.fit):
            vals.extend(objective(eval_unchecked(t, c), self.obj) for c in self._contexts[1:])
        vals = tuple(vals)
        if len(self._cache) >= self.cache_limit:
            self._cache.clear()
        self._cache[key] = vals
        return vals

    def __call__(self, t: GpTree) -> FitnessValue:
        check_tree(t, self.k, self.s)
        vals = self.group_values(t)
        raw = combine(vals, self.fit, first_only=len(vals) < len(self.groups))
        missing = missing_terminals(t, self.k, self.s)
        return FitnessValue(raw / (1 + missing), vals, missing)


@dataclass
class FunctionEvaluator:
    """Fitness of a plain GP tree on ``n`` variables: the objective of its table."""

    n: int
    obj: str = NL_WITH_SPECTRUM
    _ctx: TerminalContext | None = field(default=None, repr=False)

    def __call__(self, t: GpTree) -> FitnessValue:
        if self._ctx is None:
            self._ctx = TerminalContext(self.n, 0, ())
        v = objective(eval_tree(t, self._ctx), self.obj)
        return FitnessValue(v, (v,), 0)

    def table(self, t: GpTree) -> TruthTable:
        return eval_tree(t, TerminalContext(self.n, 0, ()))
