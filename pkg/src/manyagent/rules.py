"""Configuration-keyed compact functions as first-match rule lists.

A rule fires when all of its count predicates hold.  A predicate compares a
weighted sum of configuration counts against a fraction of the number of
agents the configuration covers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ValidationError
from .hypergraph import Neighborhood

PHI = "phi"
_EPS = 1e-9


@dataclass(frozen=True)
class Predicate:
    # each term is ((frame, action_index), weight) or (PHI, weight)
    terms: tuple
    op: str
    threshold: float

    def __post_init__(self):
        if self.op not in ("lt", "ge"):
            raise ValidationError(f"predicate op must be 'lt' or 'ge', got {self.op!r}")

    def statistic(self, nu: Neighborhood, counts: np.ndarray) -> np.ndarray:
        stat = np.zeros(counts.shape[0])
        for slot, w in self.terms:
            if slot == PHI:
                col = nu.phi
            else:
                col = nu._slots.get(tuple(slot))
                if col is None:
                    raise ValidationError(f"predicate references {slot} outside neighborhood {nu.pairs}")
            stat += w * counts[:, col]
        return stat

    def holds(self, nu: Neighborhood, counts: np.ndarray) -> np.ndarray:
        stat = self.statistic(nu, counts)
        bound = self.threshold * counts.sum(axis=1)
        if self.op == "ge":
            return stat >= bound - _EPS
        return stat < bound - _EPS


@dataclass(frozen=True)
class Rule:
    when: tuple  # of Predicate
    value: float


@dataclass(frozen=True)
class RuleSet:
    rules: tuple

    def __post_init__(self):
        if not self.rules:
            raise ValidationError("rule set is empty")

    def evaluate(self, nu: Neighborhood, counts: np.ndarray) -> np.ndarray:
        counts = np.atleast_2d(np.asarray(counts))
        out = np.full(counts.shape[0], np.nan)
        open_ = np.ones(counts.shape[0], dtype=bool)
        for rule in self.rules:
            hit = open_.copy()
            for pred in rule.when:
                hit &= pred.holds(nu, counts)
            out[hit] = rule.value
            open_ &= ~hit
            if not open_.any():
                break
        if open_.any():
            raise ValidationError(f"no rule matches configuration {counts[np.argmax(open_)].tolist()}")
        return out

    def referenced_pairs(self) -> set:
        return {tuple(slot) for r in self.rules for p in r.when for slot, _ in p.terms if slot != PHI}

    @property
    def constant(self) -> bool:
        return not self.rules[0].when


def constant(value: float) -> RuleSet:
    return RuleSet((Rule((), float(value)),))


def bucketed(terms, thresholds, values) -> RuleSet:
    """Piecewise-constant rule set over a weighted count statistic.

    ``values[i]`` applies to the i-th bucket delimited by ascending
    ``thresholds``; the last value covers statistic >= thresholds[-1].
    """
    if len(values) != len(thresholds) + 1:
        raise ValidationError("need one more value than thresholds")
    rules = []
    for i in range(len(thresholds), 0, -1):
        rules.append(Rule((Predicate(tuple(terms), "ge", thresholds[i - 1]),), float(values[i])))
    rules.append(Rule((), float(values[0])))
    return RuleSet(tuple(rules))


class RuleBook:
    """Context-keyed rule sets with identical sets interned, so expectations
    can be shared across contexts."""

    def __init__(self, kind: str, table: Mapping[tuple, RuleSet]):
        self.kind = kind
        interned: dict[RuleSet, RuleSet] = {}
        self.table = {}
        for ctx, rs in table.items():
            self.table[tuple(ctx)] = interned.setdefault(rs, rs)

    def __getitem__(self, ctx) -> RuleSet:
        try:
            return self.table[tuple(ctx)]
        except KeyError:
            raise ValidationError(f"no {self.kind} rules for context {tuple(ctx)}") from None

    def __contains__(self, ctx):
        return tuple(ctx) in self.table

    def __len__(self):
        return len(self.table)

    def items(self):
        return self.table.items()

    def __eq__(self, other):
        return isinstance(other, RuleBook) and self.kind == other.kind and self.table == other.table
