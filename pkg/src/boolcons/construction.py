"""Seed groups, generality testing of constructions, and bootstrapping."""
from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boolfun import (TruthTable, balancedness_penalty, is_balanced, nonlinearity,
                      random_bent, read_table, write_table)
from .evolver import EvolverConfig, derive_seed, run
from .fitness import NL_WITH_SPECTRUM, FunctionEvaluator
from .gp import GpTree, TerminalContext, eval_tree

log = logging.getLogger(__name__)

EVOLVED, BENT, FILE, BOOTSTRAPPED = "EVOLVED", "BENT", "FILE", "BOOTSTRAPPED"
PROVENANCES = (EVOLVED, BENT, FILE, BOOTSTRAPPED)

# best known nonlinearity of balanced functions, by variable count
BEST_KNOWN_NL = {4: 4, 5: 12, 6: 26, 7: 56, 8: 116, 9: 240, 10: 492, 11: 992,
                 12: 2012, 13: 4036, 14: 8120, 15: 16272, 16: 32638}
# nonlinearity reached by the evolved general constructions, by resulting size;
# 6 -> 24 follows from 4-variable seeds of nonlinearity 4
CONSTRUCTION_NL = {6: 24, 7: 56, 8: 116, 9: 240, 10: 488, 11: 992, 12: 2000,
                   13: 4032, 14: 8096, 15: 16256, 16: 32576, 17: 65280, 18: 130688}
# seed nonlinearity feeding those constructions, by seed size
SEED_NL = {4: 4, 5: 12, 6: 26, 7: 56, 8: 116, 9: 240, 10: 488, 11: 992, 12: 2000,
           13: 4032, 14: 8096, 15: 16256, 16: 32576}


class SeedError(ValueError):
    pass


def default_target(n: int, seed_nl: int, k: int = 2) -> int | None:
    """Nonlinearity a general construction is expected to reach at size ``n + k``.

    With two extra variables this is the concatenation value ``2*nl + 2^n``;
    with one it falls back to the best known value for ``n + 1`` variables.
    """
    if k == 2:
        return 2 * seed_nl + (1 << n)
    return BEST_KNOWN_NL.get(n + k)


@dataclass(frozen=True)
class SeedGroup:
    seeds: tuple
    provenance: str = EVOLVED
    declared_nl: int = 0
    balanced: bool = True

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if not self.seeds:
            raise SeedError("a seed group needs at least one seed")
        if self.provenance not in PROVENANCES:
            raise SeedError(f"unknown provenance {self.provenance!r}")
        if len({f.n for f in self.seeds}) != 1:
            raise SeedError("seeds in a group must share the variable count")
        for i, f in enumerate(self.seeds):
            nl = nonlinearity(f)
            if nl != self.declared_nl:
                raise SeedError(f"seed f{i} has nonlinearity {nl}, declared {self.declared_nl}")
            if self.balanced and balancedness_penalty(f):
                raise SeedError(f"seed f{i} is not balanced")

    @property
    def n(self) -> int:
        return self.seeds[0].n

    @property
    def s(self) -> int:
        return len(self.seeds)


# --- seed sourcing ---------------------------------------------------------


def evolve_function(n: int, nl: int, seed: int, budget: int = 20_000,
                    population_size: int = 100, max_depth: int = 5,
                    obj: str = NL_WITH_SPECTRUM) -> TruthTable | None:
    """Plain GP for a balanced ``n``-variable function of nonlinearity ``nl``."""
    cfg = EvolverConfig(population_size=population_size, max_depth=max_depth,
                        budget=max(budget, population_size), rng_seed=seed, stop_at=nl)
    ev = FunctionEvaluator(n, obj)
    res = run(cfg, TerminalContext(n, 0, ()), ev, seed)
    f = ev.table(res.best_tree)
    if is_balanced(f) and nonlinearity(f) == nl:
        return f
    return None


def _evolved_groups(s, n, nl, count, seed, budget, max_attempts):
    found: list[TruthTable] = []
    seen = set()
    attempt = 0
    while len(found) < s * count:
        if attempt >= max_attempts:
            raise SeedError(
                f"could only evolve {len(found)} of {s * count} balanced "
                f"{n}-variable seeds with nonlinearity {nl}")
        f = evolve_function(n, nl, derive_seed(seed, attempt), budget)
        attempt += 1
        if f is not None and f not in seen:
            seen.add(f)
            found.append(f)
    return [SeedGroup(found[g * s:(g + 1) * s], EVOLVED, nl)
            for g in range(count)]


def _bent_groups(s, n, count, seed):
    if n % 2:
        raise SeedError(f"bent seeds need even n, got {n}")
    rng = np.random.default_rng(seed)
    seen = set()
    found = []
    while len(found) < s * count:
        f = random_bent(n, rng)
        if f not in seen:
            seen.add(f)
            found.append(f)
    nl = (1 << (n - 1)) - (1 << (n // 2 - 1))
    return [SeedGroup(found[g * s:(g + 1) * s], BENT, nl, balanced=False)
            for g in range(count)]


def make_seed_groups(s: int, n: int, nl: int | None = None, count: int = 4,
                     source: str = "evolved", seed: int = 0, seed_dir=None,
                     budget: int = 20_000, max_attempts: int | None = None) -> list[SeedGroup]:
    """``count`` pairwise distinct seed groups of ``s`` seeds on ``n`` variables.

    Evolved seeds come from repeated plain-GP runs; bent seeds are random
    affine variants of the inner-product function; file seeds are read from
    ``seed_dir``.  No seed table repeats across the returned groups.
    """
    source = source.lower()
    if source == "file":
        groups = load_seed_groups(seed_dir)
        if any(g.s != s or g.n != n for g in groups):
            raise SeedError(f"{seed_dir}: groups do not match s={s}, n={n}")
        return groups[:count] if count else groups
    if source == "bent":
        return _bent_groups(s, n, count, seed)
    if source != "evolved":
        raise SeedError(f"unknown seed source {source!r}")
    if nl is None:
        nl = SEED_NL[n]
    if max_attempts is None:
        max_attempts = 10 * s * count
    return _evolved_groups(s, n, nl, count, seed, budget, max_attempts)


def save_seed_groups(directory, groups: list[SeedGroup]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for gi, g in enumerate(groups):
        names = []
        for i, f in enumerate(g.seeds):
            name = f"g{gi:02d}_f{i}.tt"
            write_table(d / name, f)
            names.append(name)
        files.append(names)
    first = groups[0]
    manifest = {"s": first.s, "n": first.n, "declared_nl": first.declared_nl,
                "provenance": first.provenance, "balanced": first.balanced,
                "groups": files}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_seed_groups(directory) -> list[SeedGroup]:
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise SeedError(f"{d}: no manifest.json")
    m = json.loads(mpath.read_text())
    if not m.get("groups"):
        raise SeedError(f"{d}: manifest lists no seed groups")
    groups = []
    for names in m["groups"]:
        seeds = [read_table(d / name) for name in names]
        if len(seeds) != m["s"] or any(f.n != m["n"] for f in seeds):
            raise SeedError(f"{d}: group {names} does not match s={m['s']}, n={m['n']}")
        groups.append(SeedGroup(seeds, m.get("provenance", FILE), m["declared_nl"],
                                m.get("balanced", True)))
    return groups


# --- generality ------------------------------------------------------------


@dataclass
class SizeReport:
    size: int
    seed_nl: int
    resulting_nl: int  # minimum over groups
    balanced: bool
    groups_passed: int
    groups_total: int
    group_nl: list = field(default_factory=list)
    target: int | None = None


@dataclass
class GeneralityReport:
    per_size: dict
    general: bool
    first_failure: tuple | None = None  # (size, group index)

    def rows(self) -> list[tuple]:
        """``(size, seed NL, resulting NL)`` rows, ascending size."""
        return [(r.size, r.seed_nl, r.resulting_nl) for _, r in sorted(self.per_size.items())]

    def to_dict(self) -> dict:
        return {
            "general": self.general,
            "first_failure": list(self.first_failure) if self.first_failure else None,
            "sizes": [vars(r) for _, r in sorted(self.per_size.items())],
        }

    def format(self) -> str:
        rows = self.rows()
        lines = ["size         " + " ".join(f"{r[0]:>8}" for r in rows),
                 "seed NL      " + " ".join(f"{r[1]:>8}" for r in rows),
                 "resulting NL " + " ".join(f"{r[2]:>8}" for r in rows)]
        verdict = "general" if self.general else f"not general (first failure at size {self.first_failure[0]}, group {self.first_failure[1]})"
        lines.append(f"verdict: {verdict}")
        return "\n".join(lines)


def apply_construction(t: GpTree, group, k: int = 2) -> TruthTable:
    seeds = tuple(getattr(group, "seeds", group))
    return eval_tree(t, TerminalContext(k, len(seeds), seeds))


def test_generality(t: GpTree, test_sets: dict, targets: dict, k: int = 2) -> GeneralityReport:
    """Apply one unchanged tree at every tested size and group.

    ``test_sets`` maps resulting size to seed groups; sizes without a target
    are skipped with a warning.
    """
    per_size = {}
    general = True
    first_failure = None
    for size in sorted(test_sets):
        groups = test_sets[size]
        if size not in targets:
            log.warning("no target for size %d; skipped", size)
            continue
        if not groups:
            raise SeedError(f"no seed groups for size {size}")
        target = targets[size]
        nls, passed, all_bal = [], 0, True
        for gi, g in enumerate(groups):
            if g.n + k != size:
                raise SeedError(f"group {gi} has {g.n}-variable seeds, size {size} needs {size - k}")
            f = apply_construction(t, g, k)
            bal = is_balanced(f)
            nl = nonlinearity(f)
            nls.append(nl)
            all_bal &= bal
            if bal and nl >= target:
                passed += 1
            elif first_failure is None:
                first_failure = (size, gi)
                general = False
        per_size[size] = SizeReport(size, groups[0].declared_nl, min(nls), all_bal,
                                    passed, len(groups), nls, target)
    if not per_size:
        general = False
    return GeneralityReport(per_size, general, first_failure)


# --- bootstrap -------------------------------------------------------------


class BootstrapError(RuntimeError):
    def __init__(self, message: str, chain: list):
        super().__init__(message)
        self.chain = chain  # valid levels, base included


def _orderings(seeds: tuple) -> list[tuple]:
    return [seeds[i:] + seeds[:i] for i in range(len(seeds))]


def bootstrap_chain(t: GpTree, base_groups: list[SeedGroup], levels: int,
                    k: int = 2) -> list[list[SeedGroup]]:
    """Feed construction outputs back as seeds; level 0 is ``base_groups``.

    Seed ``i`` of a new group is the tree applied to the ``i``-th rotation of
    the corresponding input group.
    """
    chain = [list(base_groups)]
    for level in range(1, levels + 1):
        new = []
        for gi, g in enumerate(chain[-1]):
            outs = [apply_construction(t, order, k) for order in _orderings(g.seeds)]
            for i, f in enumerate(outs):
                if not is_balanced(f):
                    raise BootstrapError(
                        f"level {level}, group {gi}, seed {i}: output is not balanced "
                        f"(BAL={balancedness_penalty(f)})", chain)
            nls = {nonlinearity(f) for f in outs}
            if len(nls) != 1:
                raise BootstrapError(
                    f"level {level}, group {gi}: outputs differ in nonlinearity {sorted(nls)}",
                    chain)
            new.append(SeedGroup(outs, BOOTSTRAPPED, nls.pop()))
        chain.append(new)
    return chain


def bootstrap(t: GpTree, base_groups: list[SeedGroup], levels: int, k: int = 2) -> list[SeedGroup]:
    return bootstrap_chain(t, base_groups, levels, k)[-1]


def shuffled_groups(groups: list[SeedGroup], rng: random.Random) -> list[SeedGroup]:
    return [SeedGroup(rng.sample(g.seeds, len(g.seeds)), g.provenance, g.declared_nl,
                      g.balanced) for g in groups]


test_generality.__test__ = False  # keep pytest from collecting it on import
