"""Frame-action configurations: projection of joint actions, enumeration, and
the exact distribution over configurations induced by independent agents."""
from __future__ import annotations

import itertools
from collections import OrderedDict
from dataclasses import dataclass
from math import comb
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import GuardExceeded, ValidationError
from .hypergraph import Neighborhood
from .population import FSC

NORM_TOL = 1e-9
DENSE_LIMIT = 50_000_000


def project(joint_action: Sequence[int], frames: Sequence[str], nu: Neighborhood,
            action_counts: Mapping[str, int] | None = None) -> tuple[int, ...]:
    """Configuration of a joint action over ``nu`` (dummy count last)."""
    if len(joint_action) != len(frames):
        raise ValidationError("need exactly one action per agent")
    counts = [0] * (len(nu) + 1)
    for a, f in zip(joint_action, frames):
        if action_counts is not None and not 0 <= a < action_counts[f]:
            raise ValidationError(f"action {a} is not available to frame {f!r}")
        counts[nu.slot(f, a)] += 1
    return tuple(counts)


def enumerate_configs(nu: Neighborhood | int, n_agents: int) -> list[tuple[int, ...]]:
    """All weak compositions of ``n_agents`` into len(nu) + 1 parts, in
    lexicographic order."""
    parts = (nu if isinstance(nu, int) else len(nu)) + 1
    out = []
    for bars in itertools.combinations(range(n_agents + parts - 1), parts - 1):
        prev = -1
        comp = []
        for b in bars:
            comp.append(b - prev - 1)
            prev = b
        comp.append(n_agents + parts - 2 - prev)
        out.append(tuple(comp))
    return sorted(out)


def config_count(n_agents: int, nu_size: int) -> int:
    return comb(n_agents + nu_size, nu_size)


def joint_profiles(sizes: Sequence[int]) -> np.ndarray:
    """(prod(sizes), len(sizes)) array of all joint index profiles."""
    if not sizes:
        return np.zeros((1, 0), dtype=np.int64)
    grid = np.indices(tuple(sizes)).reshape(len(sizes), -1)
    return grid.T.astype(np.int64)


def project_profiles(profiles: np.ndarray, frames: Sequence[str], nu: Neighborhood) -> np.ndarray:
    """Vectorized ``project`` over many joint actions."""
    counts = np.zeros((profiles.shape[0], len(nu) + 1), dtype=np.int64)
    for j, f in enumerate(frames):
        slots = np.array([nu.slot(f, a) for a in range(int(profiles[:, j].max(initial=0)) + 1)])
        np.add.at(counts, (np.arange(profiles.shape[0]), slots[profiles[:, j]]), 1)
    return counts


# -- distributions -------------------------------------------------------------


class ConfigTrie:
    """Trie from count vectors to probabilities, keyed one count per level
    (neighborhood slots first, dummy last)."""

    def __init__(self, width: int):
        self.width = width
        self._root: dict = {}
        self._size = 0

    def add(self, key: Sequence[int], p: float) -> None:
        if len(key) != self.width:
            raise ValidationError(f"key {tuple(key)} must have {self.width} counts")
        node = self._root
        for c in key[:-1]:
            node = node.setdefault(int(c), {})
        last = int(key[-1])
        if last not in node:
            node[last] = 0.0
            self._size += 1
        node[last] += p

    def get(self, key: Sequence[int], default: float = 0.0) -> float:
        node = self._root
        for c in key[:-1]:
            node = node.get(int(c))
            if node is None:
                return default
        return node.get(int(key[-1]), default)

    __getitem__ = get

    def __contains__(self, key) -> bool:
        node = self._root
        for c in key[:-1]:
            node = node.get(int(c))
            if node is None:
                return False
        return int(key[-1]) in node

    def __len__(self):
        return self._size

    def items(self) -> Iterator[tuple[tuple[int, ...], float]]:
        def walk(node, prefix, depth):
            for c in sorted(node):
                if depth == self.width - 1:
                    yield prefix + (c,), node[c]
                else:
                    yield from walk(node[c], prefix + (c,), depth + 1)

        if self.width == 0:
            return iter(())
        return walk(self._root, (), 0)

    def total(self) -> float:
        return sum(p for _, p in self.items())

    def as_dict(self) -> dict:
        return dict(self.items())

    def dump(self) -> str:
        return "\n".join(f"{' '.join(map(str, k))} -> {p:.17g}" for k, p in self.items())


@dataclass(frozen=True, eq=False)
class ConfigDist:
    """Array-backed configuration distribution: ``counts[i]`` (dummy last)
    has probability ``probs[i]``; rows in lexicographic key order."""

    nu: Neighborhood
    counts: np.ndarray
    probs: np.ndarray

    def __len__(self):
        return len(self.probs)

    @property
    def n_agents(self) -> int:
        return int(self.counts[0].sum()) if len(self.probs) else 0

    def total(self) -> float:
        return float(self.probs.sum())

    def as_dict(self) -> dict:
        return {tuple(int(v) for v in c): float(p) for c, p in zip(self.counts, self.probs)}

    def to_trie(self) -> ConfigTrie:
        trie = ConfigTrie(len(self.nu) + 1)
        for c, p in zip(self.counts, self.probs):
            trie.add(c, float(p))
        return trie

    def project_counts(self, sub: Neighborhood) -> np.ndarray:
        """Counts re-expressed over a sub-neighborhood (dummy absorbs the rest)."""
        cols = sub.columns_in(self.nu)
        out = np.empty((len(self.probs), len(sub) + 1), dtype=np.int64)
        out[:, : len(sub)] = self.counts[:, cols]
        out[:, len(sub)] = self.counts.sum(axis=1) - out[:, : len(sub)].sum(axis=1)
        return out

    def expect(self, values: np.ndarray) -> float:
        return float(self.probs @ values)

    def dump(self) -> str:
        return "\n".join(f"{' '.join(map(str, c))} -> {p:.17g}" for c, p in zip(self.counts, self.probs))


def slot_matrix(nu: Neighborhood, frame: str, n_actions: int) -> np.ndarray:
    """(n_actions, len(nu)+1) 0/1 matrix mapping actions of ``frame`` to slots."""
    m = np.zeros((n_actions, len(nu) + 1))
    for a in range(n_actions):
        m[a, nu.slot(frame, a)] = 1.0
    return m


def _check_probs(p: np.ndarray, who: str) -> None:
    if np.any(p < 0) or abs(p.sum() - 1.0) > NORM_TOL:
        raise ValidationError(f"{who}: distribution sums to {float(p.sum())!r}")


def config_distribution(nu: Neighborhood, frames: Sequence[str], action_probs: Sequence[np.ndarray],
                        *, prune: float = 0.0, extra: tuple[str, int] | None = None) -> ConfigDist:
    """Exact distribution over configurations of independent agents.

    Agent j draws its action from ``action_probs[j]`` (already marginalized
    over its models).  ``extra`` adds one agent with a known action (used to
    append agent 0 when another agent's observation depends on it).
    ``prune`` drops entries below the threshold after each agent.
    """
    L = len(nu)
    rows = []
    for j, (f, p) in enumerate(zip(frames, action_probs)):
        p = np.asarray(p, dtype=float)
        _check_probs(p, f"agent {j}")
        rows.append(p @ slot_matrix(nu, f, len(p)))
    n = len(rows)
    if (n + 1) ** L > DENSE_LIMIT:
        raise GuardExceeded(
            f"configuration tensor for {n} agents over {L} pairs has {(n + 1) ** L:.3g} cells",
            float((n + 1) ** L))
    dense = kernels.accumulate(np.array(rows).reshape(n, L + 1), L, prune)
    return _extract(nu, dense, n, extra)


def _extract(nu: Neighborhood, dense: np.ndarray, n: int, extra) -> ConfigDist:
    L = len(nu)
    flat = dense.ravel()
    nz = np.flatnonzero(flat)
    counts = np.empty((len(nz), L + 1), dtype=np.int64)
    if L:
        counts[:, :L] = np.stack(np.unravel_index(nz, dense.shape), axis=1)
    counts[:, L] = n - counts[:, :L].sum(axis=1)
    if extra is not None:
        counts[:, nu.slot(*extra)] += 1
    return ConfigDist(nu, counts, flat[nz].copy())


def config_distribution_for_agent(nu: Neighborhood, frames: Sequence[str], action_probs: Sequence[np.ndarray],
                                  a0: int, frame0: str, *, prune: float = 0.0) -> ConfigDist:
    """Distribution seen from one other agent: the remaining agents' draws
    plus agent 0's known action ``a0`` counted in its slot (or the dummy)."""
    return config_distribution(nu, frames, action_probs, prune=prune, extra=(frame0, a0))


def config_trie(nu: Neighborhood, frames: Sequence[str], node_beliefs: Sequence[np.ndarray],
                fscs: Sequence[FSC]) -> ConfigTrie:
    """Trie-based accumulation over agents, models and actions, one agent at
    a time: each stored configuration spawns one successor per (model,
    action) with positive probability."""
    width = len(nu) + 1
    trie = ConfigTrie(width)
    trie.add((0,) * width, 1.0)
    for j, (f, b, fsc) in enumerate(zip(frames, node_beliefs, fscs)):
        b = np.asarray(b, dtype=float)
        _check_probs(b, f"agent {j} model belief")
        nxt = ConfigTrie(width)
        for key, p in trie.items():
            for m, bm in enumerate(b):
                for a, pa in enumerate(fsc.action_dist[m]):
                    if pa <= 0:
                        continue
                    c = list(key)
                    c[nu.slot(f, a)] += 1
                    nxt.add(c, p * pa * bm)
        trie = nxt
    return trie


def brute_force_distribution(nu: Neighborhood, frames: Sequence[str], node_beliefs: Sequence[np.ndarray],
                             fscs: Sequence[FSC], extra: tuple[str, int] | None = None) -> dict:
    """Exhaustive sum over every joint (model, action) assignment."""
    out: dict = {}
    per_agent = []
    for b, fsc in zip(node_beliefs, fscs):
        per_agent.append([(m, a, b[m] * fsc.action_dist[m, a])
                          for m in range(len(b)) for a in range(fsc.action_dist.shape[1])])
    for combo in itertools.product(*per_agent):
        p = 1.0
        for _, _, w in combo:
            p *= w
        if p == 0.0:
            continue
        key = project([a for _, a, _ in combo], frames, nu)
        if extra is not None:
            key = list(key)
            key[nu.slot(*extra)] += 1
            key = tuple(key)
        out[key] = out.get(key, 0.0) + p
    return out


# -- memoized distributions ------------------------------------------------------


class DistCache:
    """LRU memo of configuration distributions keyed by the neighborhood and
    the multiset of (frame, action-marginal) agent classes.

    Classes are folded in a canonical order, so any agent ordering with the
    same multiset yields the same distribution object.
    """

    def __init__(self, prune: float = 0.0, max_cells: int = 20_000_000):
        self.prune = prune
        self.max_cells = max_cells
        self._store: OrderedDict = OrderedDict()
        self._cells = 0
        self.peak_support = 0
        self.builds = 0
        self._expect: dict = {}
        self._values: dict = {}

    def get(self, nu: Neighborhood, classes: tuple, extra=None) -> ConfigDist:
        key = (nu.pairs, classes, extra)
        hit = self._store.get(key)
        if hit is not None:
            self._store.move_to_end(key)
            return hit
        frames, probs = [], []
        for frame, marg, count in classes:
            p = np.frombuffer(marg, dtype=np.float64)
            frames.extend([frame] * count)
            probs.extend([p] * count)
        dist = config_distribution(nu, frames, probs, prune=self.prune, extra=extra)
        self.builds += 1
        self.peak_support = max(self.peak_support, len(dist))
        self._store[key] = dist
        self._cells += len(dist)
        while self._cells > self.max_cells and len(self._store) > 1:
            _, old = self._store.popitem(last=False)
            self._cells -= len(old)
        return dist

    def values(self, dist: ConfigDist, sub: Neighborhood, rules) -> np.ndarray:
        """rules(C) for every stored configuration C of ``dist`` projected onto ``sub``."""
        key = (id(dist), sub.pairs, rules)
        hit = self._values.get(key)
        if hit is not None:
            return hit[0]
        counts = dist.counts if sub.pairs == dist.nu.pairs else dist.project_counts(sub)
        vals = rules.evaluate(sub, counts)
        if len(self._values) > 20_000:
            self._values.clear()
        # holding the dist keeps its id from being reused while the entry lives
        self._values[key] = (vals, dist)
        return vals

    def expectation(self, dist: ConfigDist, sub: Neighborhood, rules) -> float:
        """E[rules(C)] under ``dist`` with C projected onto ``sub``."""
        key = (id(dist), sub.pairs, rules)
        hit = self._expect.get(key)
        if hit is not None:
            return hit[0]
        counts = dist.counts if sub.pairs == dist.nu.pairs else dist.project_counts(sub)
        val = dist.expect(rules.evaluate(sub, counts))
        if len(self._expect) > 2_000_000:
            self._expect.clear()
        self._expect[key] = (val, dist)
        return val
