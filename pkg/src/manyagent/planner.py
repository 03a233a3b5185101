"""Finite-horizon value iteration on the reachability tree of beliefs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .belief import FactoredBelief, StructuredEngine, NaiveEngine, _Engine, initial_belief
from .domain import Domain
from .errors import GuardExceeded, ValidationError

NODE_LIMIT = 10_000_000
TIE_TOL = 1e-12
SEP = "/"


class ContractError(RuntimeError):
    """A backup was attempted before its children were valued."""


@dataclass(eq=False)
class ReachabilityNode:
    belief: FactoredBelief
    depth: int
    horizon: int  # steps to go
    er: np.ndarray | None = None
    children: dict = field(default_factory=dict)    # (a0, obs) -> node
    obs_weight: dict = field(default_factory=dict)  # (a0, obs) -> weight
    value: float | None = None
    best_action: int | None = None
    q: np.ndarray | None = None


def backup(node: ReachabilityNode, gamma: float, tie_tol: float = TIE_TOL) -> float:
    """V = max_a [ER(b, a) + gamma * sum_w weight * V(child)], lowest index on ties."""
    if node.horizon <= 0:
        node.value = 0.0
        return 0.0
    if node.er is None:
        raise ContractError("node has no expected rewards")
    q = np.array(node.er, dtype=float)
    if node.horizon > 1 and gamma != 0.0:
        for (a, w), child in node.children.items():
            if child.value is None:
                raise ContractError(f"child ({a}, {w}) of a depth-{node.depth} node is unvalued")
            q[a] += gamma * node.obs_weight[(a, w)] * child.value
    best = _argmax(q, tie_tol)
    node.q, node.best_action, node.value = q, best, float(q[best])
    return node.value


def _argmax(q: np.ndarray, tol: float) -> int:
    top = q.max()
    return int(np.flatnonzero(q >= top - tol)[0])


# -- policies ------------------------------------------------------------------------


@dataclass
class Policy:
    """Conditional plan from observation-history strings to actions.

    ``plan`` keys are histories "o1/o2/..." (empty string at the root);
    ``defaults[d]`` answers histories of length d that the plan lacks.
    """

    horizon: int
    actions: tuple
    observations: tuple
    plan: dict = field(default_factory=dict)
    defaults: dict = field(default_factory=dict)

    def action(self, history=()) -> str:
        if isinstance(history, str):
            history = tuple(h for h in history.split(SEP) if h)
        if len(history) >= self.horizon:
            raise ValidationError(f"history of length {len(history)} is past the horizon {self.horizon}")
        key = SEP.join(history)
        if key in self.plan:
            return self.plan[key]
        return self.defaults[len(history)]

    def dumps(self) -> str:
        lines = [f"horizon {self.horizon}"]
        lines += [f"default {d} {a}" for d, a in sorted(self.defaults.items())]
        lines += [f"plan {h or '-'} {a}" for h, a in sorted(self.plan.items(), key=lambda kv: (kv[0].count(SEP) + bool(kv[0]), kv[0]))]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, actions=(), observations=()) -> "Policy":
        pol = cls(0, tuple(actions), tuple(observations))
        for lineno, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "horizon":
                    pol.horizon = int(parts[1])
                elif parts[0] == "default":
                    pol.defaults[int(parts[1])] = parts[2]
                elif parts[0] == "plan":
                    pol.plan["" if parts[1] == "-" else parts[1]] = parts[2]
                else:
                    raise ValueError(f"unknown record {parts[0]!r}")
            except (IndexError, ValueError) as exc:
                raise ValidationError(f"policy line {lineno}: {exc}") from None
        return pol

    def __eq__(self, other):
        return (isinstance(other, Policy) and self.horizon == other.horizon
                and self.plan == other.plan and self.defaults == other.defaults)


@dataclass
class SolveResult:
    value: float
    policy: Policy
    nodes: int = 0
    trie_peak: int = 0

    def __iter__(self):
        yield self.value
        yield self.policy


# -- solver ---------------------------------------------------------------------------


class _Solver:
    def __init__(self, domain: Domain, eng: _Engine, horizon: int, gamma: float,
                 samples: int = 0, seed: int = 0, exhaustive: bool = True):
        if horizon < 0:
            raise ValidationError("horizon must be >= 0")
        if not 0.0 <= gamma <= 1.0:
            raise ValidationError("gamma must lie in [0, 1]")
        if not exhaustive and samples < 1:
            raise ValidationError("k_samples must be >= 1")
        self.domain = domain
        self.eng = eng
        self.H = horizon
        self.gamma = gamma
        self.k = samples
        self.seed = seed
        self.exhaustive = exhaustive
        self.nA = len(domain.actions0)
        self.nO = domain.obs0.size
        self.nodes = 0

    def solve(self, b0: FactoredBelief) -> SolveResult:
        obs_labels = tuple(self.domain.obs0.labels())
        policy = Policy(self.H, tuple(self.domain.actions0), obs_labels)
        if self.H == 0:
            return SolveResult(0.0, policy)
        if self.exhaustive:
            branch = self.nA * self.nO
            estimate = sum(branch ** d for d in range(self.H))
            if estimate > NODE_LIMIT:
                raise GuardExceeded(f"exact tree has {estimate:.3g} expanded nodes (limit {NODE_LIMIT:.3g})",
                                    float(estimate))
        root = ReachabilityNode(b0, 0, self.H)
        entries = self._visit(root, ())
        # entries: (history, depth, weight, er, action)
        for hist, depth, weight, er, a in entries:
            policy.plan[SEP.join(obs_labels[o] for o in hist)] = self.domain.actions0[a]
        for d in range(self.H):
            at_d = [(w, er) for h, dd, w, er, a in entries if dd == d]
            if at_d:
                score = sum(w * er for w, er in at_d)
            else:
                score = root.er
            policy.defaults[d] = self.domain.actions0[_argmax(np.asarray(score), TIE_TOL)]
        peak = getattr(getattr(self.eng, "cache", None), "peak_support", 0)
        return SolveResult(root.value, policy, self.nodes, peak)

    def _visit(self, node: ReachabilityNode, path: tuple) -> list:
        """Expand, value and back up ``node`` depth-first; return the plan
        entries of the subtree under its best action."""
        self.nodes += 1
        b = node.belief
        node.er = self.eng.expected_rewards(b)
        sub: dict = {}
        if node.horizon > 1 and self.gamma != 0.0:
            for a in range(self.nA):
                sub[a] = []
                for o, w in self._branches(b, a, path):
                    child = ReachabilityNode(self.eng.posterior(b, a, o), node.depth + 1, node.horizon - 1)
                    node.children[(a, o)] = child
                    node.obs_weight[(a, o)] = w
                    for h, d, cw, er, ca in self._visit(child, path + (a, o)):
                        sub[a].append(((o,) + h, d, w * cw, er, ca))
        self.eng.release(b)
        backup(node, self.gamma)
        entries = [((), node.depth, 1.0, node.er, node.best_action)]
        entries += sub.get(node.best_action, [])
        # children are released once backed up
        node.children.clear()
        return entries

    def _branches(self, b, a, path):
        lik = self.eng.likelihoods(b, a)
        if self.exhaustive:
            return [(o, float(p)) for o, p in enumerate(lik) if p > 0]
        p = np.clip(lik, 0.0, None)
        p = p / p.sum()
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=path + (a,)))
        draws = rng.choice(len(p), size=self.k, p=p)
        counts = np.bincount(draws, minlength=len(p))
        return [(int(o), counts[o] / self.k) for o in np.flatnonzero(counts)]


def solve_exact(b0: FactoredBelief | None, horizon: int, gamma: float, domain: Domain,
                coupling: str = "factored", prune: float = 0.0) -> SolveResult:
    b0 = b0 if b0 is not None else initial_belief(domain)
    eng = StructuredEngine(domain, coupling, prune=prune)
    return _Solver(domain, eng, horizon, gamma).solve(b0)


def solve_sampled(b0: FactoredBelief | None, horizon: int, gamma: float, k_samples: int, seed: int,
                  domain: Domain, exhaustive: bool = False, coupling: str = "factored",
                  prune: float = 0.0) -> SolveResult:
    """Observation-sampled tree: ``k_samples`` i.i.d. draws per (node, action),
    children weighted by empirical frequency.  ``exhaustive`` replaces the
    draws by full enumeration with exact weights."""
    b0 = b0 if b0 is not None else initial_belief(domain)
    eng = StructuredEngine(domain, coupling, prune=prune)
    return _Solver(domain, eng, horizon, gamma, k_samples, seed, exhaustive).solve(b0)


def naive_solve(b0: FactoredBelief | None, horizon: int, gamma: float, domain: Domain,
                coupling: str = "factored") -> SolveResult:
    b0 = b0 if b0 is not None else initial_belief(domain)
    eng = NaiveEngine(domain, coupling)
    return _Solver(domain, eng, horizon, gamma).solve(b0)
