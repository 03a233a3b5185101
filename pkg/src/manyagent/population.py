"""State spaces, frames, finite-state controllers and the agent population."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError

PROB_TOL = 1e-12


@dataclass(frozen=True)
class ProductSpace:
    """Cartesian product of named finite factors, enumerated row-major.

    Used for the physical state space and for factored observation spaces
    (one observation component per state factor).
    """

    names: tuple[str, ...]
    domains: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(self.names) == 0:
            raise ValidationError("a product space needs at least one factor")
        if len(self.names) != len(self.domains):
            raise ValidationError("factor names and domains differ in length")
        for name, dom in zip(self.names, self.domains):
            if len(dom) == 0:
                raise ValidationError(f"factor {name!r} has an empty domain")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, Sequence[str]]]) -> "ProductSpace":
        return cls(tuple(p[0] for p in pairs), tuple(tuple(p[1]) for p in pairs))

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(d) for d in self.domains)

    @property
    def n_factors(self) -> int:
        return len(self.names)

    @property
    def size(self) -> int:
        return int(np.prod(self.sizes))

    def state_of(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.size:
            raise IndexError(f"joint index {index} out of range [0, {self.size})")
        return tuple(int(v) for v in np.unravel_index(index, self.sizes))

    def index_of(self, values: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(values), self.sizes))

    def table(self) -> np.ndarray:
        """(size, K) array of value indices, row i = state_of(i)."""
        grids = np.indices(self.sizes).reshape(self.n_factors, -1)
        return grids.T.copy()

    def label(self, index: int) -> str:
        vals = self.state_of(index)
        return ".".join(self.domains[k][v] for k, v in enumerate(vals))

    def labels(self) -> list[str]:
        return [self.label(i) for i in range(self.size)]

    def lookup(self, label: str) -> int:
        parts = label.split(".")
        if len(parts) != self.n_factors:
            raise KeyError(label)
        return self.index_of([self.domains[k].index(p) for k, p in enumerate(parts)])


@dataclass(frozen=True)
class Frame:
    id: str
    actions: tuple[str, ...]
    observations: ProductSpace
    fsc_pool: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.actions:
            raise ValidationError(f"frame {self.id!r} has no actions")

    def action_index(self, name: str) -> int:
        return self.actions.index(name)


@dataclass(frozen=True, eq=False)
class FSC:
    """Finite-state controller modelling one other agent.

    ``action_dist[n, a]`` is Pr(a | n); ``node_transition[n, a, o, n2]`` is
    Pr(n2 | n, a, o) with ``o`` a joint observation index of the frame.
    """

    id: str
    frame: str
    action_dist: np.ndarray
    node_transition: np.ndarray
    node_names: tuple[str, ...] = ()

    def __post_init__(self):
        ad = np.asarray(self.action_dist, dtype=float)
        nt = np.asarray(self.node_transition, dtype=float)
        object.__setattr__(self, "action_dist", ad)
        object.__setattr__(self, "node_transition", nt)
        if not self.node_names:
            object.__setattr__(self, "node_names", tuple(f"n{i}" for i in range(ad.shape[0])))
        ad.setflags(write=False)
        nt.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.action_dist.shape[0]

    def problems(self, frame: Frame | None = None) -> list[str]:
        """Invariant violations as human-readable strings (empty when valid)."""
        out = []
        ad, nt = self.action_dist, self.node_transition
        if ad.ndim != 2 or ad.shape[0] == 0:
            return [f"fsc {self.id}: action_dist must be a non-empty (nodes, actions) array"]
        n, na = ad.shape
        if frame is not None:
            if na != len(frame.actions):
                out.append(f"fsc {self.id}: {na} action columns but frame {frame.id} has {len(frame.actions)} actions")
            no = frame.observations.size
            if nt.shape != (n, na, no, n):
                out.append(f"fsc {self.id}: node_transition shape {nt.shape}, expected {(n, na, no, n)}")
                return out
        for i in range(n):
            s = ad[i].sum()
            if np.any(ad[i] < 0) or abs(s - 1.0) > PROB_TOL:
                out.append(f"fsc {self.id} node {self.node_names[i]}: action_dist sums to {float(s)!r}")
        if nt.ndim == 4:
            sums = nt.sum(axis=-1)
            bad = np.argwhere((np.abs(sums - 1.0) > PROB_TOL) | np.any(nt < 0, axis=-1))
            for i, a, o in bad:
                out.append(
                    f"fsc {self.id} node {self.node_names[i]}: node_transition[action {a}, obs {o}] "
                    f"sums to {float(sums[i, a, o])!r}"
                )
        return out


def fsc_action_dist(fsc: FSC, node: int | str) -> np.ndarray:
    return fsc.action_dist[_node_index(fsc, node)]


def fsc_step_dist(fsc: FSC, node: int | str, action: int, obs: int) -> np.ndarray:
    i = _node_index(fsc, node)
    na, no = fsc.node_transition.shape[1:3]
    if not (0 <= action < na and 0 <= obs < no):
        raise KeyError(f"fsc {fsc.id}: invalid (node, action, obs) = ({node}, {action}, {obs})")
    return fsc.node_transition[i, action, obs]


def _node_index(fsc: FSC, node: int | str) -> int:
    if isinstance(node, str):
        try:
            return fsc.node_names.index(node)
        except ValueError:
            raise KeyError(f"fsc {fsc.id} has no node {node!r}") from None
    if not 0 <= node < fsc.n_nodes:
        raise KeyError(f"fsc {fsc.id} has no node {node}")
    return node


@dataclass(frozen=True)
class AgentPopulation:
    """N other agents, each assigned a frame and an FSC.

    Agents sharing (frame, fsc) form a group; beliefs are stored per group.
    """

    assignments: tuple[tuple[str, str], ...]
    groups: tuple[tuple[str, str], ...] = field(init=False)
    group_of: np.ndarray = field(init=False, repr=False)
    members: tuple[np.ndarray, ...] = field(init=False, repr=False)
    position: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        assignments = tuple((str(f), str(c)) for f, c in self.assignments)
        object.__setattr__(self, "assignments", assignments)
        groups = tuple(dict.fromkeys(assignments))
        gidx = {g: i for i, g in enumerate(groups)}
        group_of = np.array([gidx[a] for a in assignments], dtype=np.int64)
        members = tuple(np.flatnonzero(group_of == g) for g in range(len(groups)))
        position = np.zeros(len(assignments), dtype=np.int64)
        for m in members:
            position[m] = np.arange(len(m))
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "group_of", group_of)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "position", position)

    @property
    def N(self) -> int:
        return len(self.assignments)

    def frame_of(self, j: int) -> str:
        return self.assignments[j][0]

    def fsc_of(self, j: int) -> str:
        return self.assignments[j][1]


@dataclass
class Violation:
    location: str
    message: str

    def __str__(self):
        return f"{self.location}: {self.message}"


def validate_population(
    pop: AgentPopulation, frames: Mapping[str, Frame], fscs: Mapping[str, FSC]
) -> list[Violation]:
    """Every invariant violation of the population, frames and controllers."""
    report: list[Violation] = []
    for fid, fsc in fscs.items():
        frame = frames.get(fsc.frame)
        if frame is None:
            report.append(Violation(f"fscs.{fid}", f"unknown frame {fsc.frame!r}"))
            continue
        for msg in fsc.problems(frame):
            report.append(Violation(f"fscs.{fid}", msg))
    for j, (frame_id, fsc_id) in enumerate(pop.assignments):
        loc = f"population.agent[{j}]"
        if frame_id not in frames:
            report.append(Violation(loc, f"unknown frame {frame_id!r}"))
            continue
        if fsc_id not in fscs:
            report.append(Violation(loc, f"unknown fsc {fsc_id!r}"))
        elif fscs[fsc_id].frame != frame_id:
            report.append(Violation(loc, f"fsc {fsc_id!r} belongs to frame {fscs[fsc_id].frame!r}, not {frame_id!r}"))
        elif frame_id in frames and frames[frame_id].fsc_pool and fsc_id not in frames[frame_id].fsc_pool:
            report.append(Violation(loc, f"fsc {fsc_id!r} is not in the pool of frame {frame_id!r}"))
    return report


# -- conditional plans -------------------------------------------------------


@dataclass
class PlanNode:
    """Node of a finite-horizon conditional plan: an action and, unless a
    leaf, one child per observation of the frame."""

    action: str
    children: dict[str, "PlanNode"] = field(default_factory=dict)


def policy_to_fsc(plan: PlanNode, frame: Frame, fsc_id: str = "plan") -> FSC:
    """Compile a conditional plan into a deterministic controller.

    Nodes are numbered breadth-first; leaves loop on themselves.
    """
    obs_labels = frame.observations.labels()
    nodes: list[PlanNode] = []
    queue = [plan]
    while queue:
        node = queue.pop(0)
        nodes.append(node)
        if node.action not in frame.actions:
            raise ValidationError(f"plan action {node.action!r} not in frame {frame.id}")
        if node.children:
            missing = [o for o in obs_labels if o not in node.children]
            extra = [o for o in node.children if o not in obs_labels]
            if missing or extra:
                raise ValidationError(
                    f"plan node {len(nodes) - 1} has incomplete observation branching "
                    f"(missing {missing}, unknown {extra})"
                )
            queue.extend(node.children[o] for o in obs_labels)
    ids = {id(n): i for i, n in enumerate(nodes)}
    n, na, no = len(nodes), len(frame.actions), len(obs_labels)
    ad = np.zeros((n, na))
    nt = np.zeros((n, na, no, n))
    for i, node in enumerate(nodes):
        ad[i, frame.action_index(node.action)] = 1.0
        for o, label in enumerate(obs_labels):
            nxt = ids[id(node.children[label])] if node.children else i
            # off-plan actions never fire; they keep the node so rows stay stochastic
            nt[i, :, o, i] = 1.0
            nt[i, frame.action_index(node.action), o, i] = 0.0
            nt[i, frame.action_index(node.action), o, nxt] = 1.0
    return FSC(fsc_id, frame.id, ad, nt)
