"""Frame-action hypergraphs: which (action, frame) pairs of the other agents
can influence a transition, observation or reward entry."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import ValidationError

KINDS = ("transition", "observation", "reward", "frame_observation")

# payload layouts, all integer indices:
#   transition         (k, x_k, a0, x_k')
#   observation        (k, x_k', a0, o_k)     agent 0's component for factor k
#   reward             (k, x_k, a0)
#   frame_observation  (k, x_k', a_j, o_k)    one graph per other-agent frame
PAYLOAD_LEN = {"transition": 4, "observation": 4, "reward": 3, "frame_observation": 4}

Pair = tuple[str, int]  # (frame id, action index within that frame)


@dataclass(frozen=True)
class Neighborhood:
    """Canonically ordered (frame, action) pairs; the dummy slot is implicit
    and always comes last in configuration vectors."""

    pairs: tuple[Pair, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(set(self.pairs)))
        object.__setattr__(self, "pairs", ordered)

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def phi(self) -> int:
        return len(self.pairs)

    def slot(self, frame: str, action: int) -> int:
        """Configuration slot of an agent of ``frame`` doing ``action``."""
        try:
            return self._slots[(frame, action)]
        except KeyError:
            return len(self.pairs)

    @property
    def _slots(self) -> dict:
        cache = self.__dict__.get("_slot_cache")
        if cache is None:
            cache = {p: i for i, p in enumerate(self.pairs)}
            object.__setattr__(self, "_slot_cache", cache)
        return cache

    def union(self, *others: "Neighborhood") -> "Neighborhood":
        pairs = set(self.pairs)
        for o in others:
            pairs.update(o.pairs)
        return Neighborhood(tuple(pairs))

    def columns_in(self, sup: "Neighborhood") -> np.ndarray:
        """Indices of this neighborhood's pairs inside ``sup`` (a superset)."""
        idx = [sup._slots.get(p, -1) for p in self.pairs]
        if any(i < 0 for i in idx):
            raise ValidationError(f"{self} is not contained in {sup}")
        return np.asarray(idx, dtype=np.int64)


EMPTY = Neighborhood()


@dataclass(frozen=True, eq=False)
class FrameActionHypergraph:
    """3-uniform hypergraph of (context, action, frame) hyperedges for one
    function kind.

    ``context_shape`` bounds every payload component; ``action_counts`` maps
    each frame that may appear on an edge to its number of actions.
    """

    kind: str
    context_shape: tuple
    action_counts: Mapping[str, int]
    edges: frozenset = frozenset()
    owner: str | None = None
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown hypergraph kind {self.kind!r}")
        edges = frozenset((tuple(c), int(a), str(f)) for c, a, f in self.edges)
        object.__setattr__(self, "edges", edges)
        grouped: dict[tuple, set] = defaultdict(set)
        for ctx, a, f in edges:
            self.check_context(ctx)
            if f not in self.action_counts:
                raise ValidationError(f"{self.kind} edge {ctx}: unknown frame {f!r}")
            if not 0 <= a < self.action_counts[f]:
                raise ValidationError(f"{self.kind} edge {ctx}: action {a} not in frame {f!r}")
            grouped[ctx].add((f, a))
        object.__setattr__(self, "index", {c: Neighborhood(tuple(p)) for c, p in grouped.items()})

    def check_context(self, ctx) -> tuple:
        ctx = tuple(ctx)
        if len(ctx) != PAYLOAD_LEN[self.kind]:
            raise ValidationError(f"{self.kind} context {ctx} must have {PAYLOAD_LEN[self.kind]} components")
        k = ctx[0]
        if not 0 <= k < len(self.context_shape):
            raise ValidationError(f"{self.kind} context {ctx}: factor {k} out of range")
        for v, bound in zip(ctx[1:], self.context_shape[k]):
            if not (isinstance(v, (int, np.integer)) and 0 <= v < bound):
                raise ValidationError(f"{self.kind} context {ctx}: component {v} out of range {bound}")
        return ctx

    def neighborhood(self, ctx) -> Neighborhood:
        return self.index.get(self.check_context(ctx), EMPTY)

    def contexts(self) -> Iterable[tuple]:
        """All well-formed contexts in lexicographic order."""
        for k, bounds in enumerate(self.context_shape):
            for rest in np.ndindex(*bounds):
                yield (k,) + tuple(int(v) for v in rest)

    def max_degree(self) -> int:
        return max((len(n) for n in self.index.values()), default=0)


def neighborhood(g: FrameActionHypergraph, psi) -> Neighborhood:
    return g.neighborhood(psi)


@dataclass
class AnonymityReport:
    ok: bool
    checked: int
    counterexamples: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def validate_anonymity(joint_fn, graph: FrameActionHypergraph, conf_fn, frames_of, actions_per_frame,
                       extra_slot=None, tol=1e-12, max_profiles=4 ** 6) -> AnonymityReport:
    """Check that a joint-action function only depends on projected configurations.

    ``joint_fn(ctx, profile)`` gives the function value for a joint action
    profile (one action index per agent); ``conf_fn(ctx, counts)`` gives the
    configuration-keyed value.  For every context, profiles with equal
    projection must agree with each other and with ``conf_fn``.
    ``extra_slot(ctx)`` optionally returns a fixed (frame, action) pair to add
    to every configuration (agent 0 in frame observation graphs).
    """
    from .configurations import joint_profiles, project_profiles

    frames_of = list(frames_of)
    if not frames_of:
        return AnonymityReport(True, 0)
    sizes = [actions_per_frame[f] for f in frames_of]
    if int(np.prod(sizes)) > max_profiles:
        raise ValidationError(f"{int(np.prod(sizes))} joint actions exceed the enumeration limit {max_profiles}")
    profiles = joint_profiles(sizes)
    bad = []
    checked = 0
    for ctx in graph.contexts():
        nu = graph.neighborhood(ctx)
        counts = project_profiles(profiles, frames_of, nu)
        if extra_slot is not None:
            f0, a0 = extra_slot(ctx)
            counts[:, nu.slot(f0, a0)] += 1
        keys, inverse = np.unique(counts, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        joint = np.array([joint_fn(ctx, tuple(int(v) for v in p)) for p in profiles])
        conf = np.asarray(conf_fn(ctx, keys), dtype=float)
        checked += len(profiles)
        for c in range(len(keys)):
            members = np.flatnonzero(inverse == c)
            vals = joint[members]
            off = np.flatnonzero(np.abs(vals - conf[c]) > tol)
            for i in off:
                bad.append({
                    "kind": graph.kind,
                    "context": ctx,
                    "profile": tuple(int(v) for v in profiles[members[i]]),
                    "configuration": tuple(int(v) for v in keys[c]),
                    "joint_value": float(vals[i]),
                    "config_value": float(conf[c]),
                })
    return AnonymityReport(not bad, checked, bad)
