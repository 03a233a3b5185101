"""Policing-protest benchmark: police (agent 0) place two troops over three
protest sites while peaceful and disruptive protestors choose where to go.

All numeric dynamics below are authored defaults; only the sizes
(|S| = 27, |A0| = 9, |A_j| = 4, |Omega| = 8) are fixed.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .domain import Domain
from .errors import ValidationError
from .hypergraph import FrameActionHypergraph
from .population import FSC, AgentPopulation, Frame, ProductSpace
from .rules import Predicate, Rule, RuleBook, RuleSet, bucketed, constant

SITES = 3
LEVELS = ("low", "med", "high")
PROTESTOR_ACTIONS = ("go-site-0", "go-site-1", "go-site-2", "stay-home")
PEACEFUL, DISRUPTIVE, POLICE = "peaceful", "disruptive", "police"
POLICE_ACTIONS = tuple((i, j) for i in range(SITES) for j in range(SITES))

# (de-escalate, stay, escalate) per troops-at-site, per pressure bucket (low, mid, high)
DEFAULT_TRANSITIONS = {
    2: ((0.9, 0.1, 0.0), (0.9, 0.1, 0.0), (0.9, 0.1, 0.0)),
    1: ((0.5, 0.5, 0.0), (0.1, 0.8, 0.1), (0.0, 0.4, 0.6)),
    0: ((0.2, 0.8, 0.0), (0.0, 0.5, 0.5), (0.0, 0.1, 0.9)),
}


@dataclass(frozen=True)
class ProtestParams:
    n: int = 2
    frame_mix: float = 0.5          # fraction of peaceful protestors
    theta_lo: float = 0.25
    theta_hi: float = 0.5
    transitions: dict = field(default_factory=lambda: dict(DEFAULT_TRANSITIONS))
    obs_base: tuple = (0.05, 0.3, 0.85)   # Pr(flag | x') in the low disruptive bucket
    obs_shift: float = 0.1
    obs_cap: float = 0.95
    police_obs_shift: float = 0.05        # protestors see flags better where troops stand
    base_reward: tuple = (10.0, 0.0, -10.0)
    penalty: tuple = (0.0, 2.0, 5.0)
    troop_cost: float = 1.0
    controller: str = "blind"             # or "reactive"
    peaceful_probs: tuple = (0.25, 0.25, 0.25, 0.25)
    disruptive_probs: tuple = (0.3, 0.3, 0.3, 0.1)
    reactive_peaceful: tuple = ((0.4, 0.2, 0.2, 0.2), (0.2, 0.2, 0.4, 0.2))
    reactive_disruptive: tuple = ((0.6, 0.15, 0.15, 0.1), (0.15, 0.15, 0.6, 0.1))
    initial_state: tuple | None = None    # defaults to uniform

    def problems(self) -> list[str]:
        out = []
        if self.n < 1:
            out.append("n must be >= 1")
        if not 0.0 <= self.frame_mix <= 1.0:
            out.append("frame_mix must lie in [0, 1]")
        if not 0.0 <= self.theta_lo < self.theta_hi <= 1.0:
            out.append("need 0 <= theta_lo < theta_hi <= 1")
        if self.controller not in ("blind", "reactive"):
            out.append("controller must be 'blind' or 'reactive'")
        for troops in (0, 1, 2):
            rows = self.transitions.get(troops)
            if rows is None or len(rows) != 3:
                out.append(f"transition table for {troops} troops needs three buckets")
                continue
            for r in rows:
                if len(r) != 3 or min(r) < 0 or abs(sum(r) - 1.0) > 1e-12:
                    out.append(f"transition row {r} for {troops} troops is not a distribution")
        for name in ("peaceful_probs", "disruptive_probs"):
            p = getattr(self, name)
            if len(p) != 4 or min(p) < 0 or abs(sum(p) - 1) > 1e-12:
                out.append(f"{name} is not a distribution over 4 actions")
        for name in ("reactive_peaceful", "reactive_disruptive"):
            for p in getattr(self, name):
                if len(p) != 4 or min(p) < 0 or abs(sum(p) - 1) > 1e-12:
                    out.append(f"{name} row {p} is not a distribution over 4 actions")
        for p in self.obs_base:
            if not 0.0 <= p <= 1.0:
                out.append("obs_base entries must be probabilities")
        if not 0.0 <= self.obs_cap <= 1.0:
            out.append("obs_cap must be a probability")
        return out

    def with_n(self, n: int) -> "ProtestParams":
        return replace(self, n=n)


def troops_at(a0: int, site: int) -> int:
    return sum(1 for t in POLICE_ACTIONS[a0] if t == site)


def _step(x: int, x2: int, probs) -> float:
    """Pr(x -> x2) for (de-escalate, stay, escalate) with boundary mass on stay."""
    down, stay, up = probs
    out = {x: stay}
    out[max(x - 1, 0)] = out.get(max(x - 1, 0), 0.0) + down
    out[min(x + 1, 2)] = out.get(min(x + 1, 2), 0.0) + up
    return out.get(x2, 0.0)


def _flag_prob(p: ProtestParams, x2: int, bucket: int) -> float:
    return min(p.obs_base[x2] + (p.obs_shift if bucket > 0 else 0.0), p.obs_cap)


def _pressure_terms(site):
    return (((PEACEFUL, site), 1.0), ((DISRUPTIVE, site), 2.0))


def _disruptive_terms(site):
    return (((DISRUPTIVE, site), 1.0),)


def build_domain(params: ProtestParams | None = None, **overrides) -> Domain:
    p = replace(params or ProtestParams(), **overrides)
    problems = p.problems()
    if problems:
        raise ValidationError("; ".join(problems))
    thresholds = [p.theta_lo, p.theta_hi]

    states = ProductSpace(tuple(f"site{k}" for k in range(SITES)), (LEVELS,) * SITES)
    flags = ProductSpace(tuple(f"flag{k}" for k in range(SITES)), (("0", "1"),) * SITES)
    a0_names = tuple(f"t{i}{j}" for i, j in POLICE_ACTIONS)

    n_peaceful = int(round(p.frame_mix * p.n))
    frames, fscs = {}, {}
    for fid, blind, reactive in ((PEACEFUL, p.peaceful_probs, p.reactive_peaceful),
                                 (DISRUPTIVE, p.disruptive_probs, p.reactive_disruptive)):
        cid = f"{fid}-{p.controller}"
        frames[fid] = Frame(fid, PROTESTOR_ACTIONS, flags, (cid,))
        fscs[cid] = _controller(cid, fid, blind, reactive, p.controller, flags)
    assignments = [(PEACEFUL, f"{PEACEFUL}-{p.controller}")] * n_peaceful
    assignments += [(DISRUPTIVE, f"{DISRUPTIVE}-{p.controller}")] * (p.n - n_peaceful)
    population = AgentPopulation(tuple(assignments))

    counts = {PEACEFUL: 4, DISRUPTIVE: 4, POLICE: len(POLICE_ACTIONS)}
    t_edges, o_edges, r_edges, t_rules, o_rules, r_rules = [], [], [], {}, {}, {}
    for k in range(SITES):
        for a0 in range(len(POLICE_ACTIONS)):
            tr = troops_at(a0, k)
            table = p.transitions[tr]
            for x in range(3):
                for x2 in range(3):
                    ctx = (k, x, a0, x2)
                    vals = [_step(x, x2, table[b]) for b in range(3)]
                    if tr == 2:
                        t_rules[ctx] = constant(vals[0])
                    else:
                        t_edges += [(ctx, k, PEACEFUL), (ctx, k, DISRUPTIVE)]
                        t_rules[ctx] = bucketed(_pressure_terms(k), thresholds, vals)
            for x2 in range(3):
                for o in range(2):
                    ctx = (k, x2, a0, o)
                    vals = [_flag_prob(p, x2, b) for b in range(3)]
                    vals = vals if o == 1 else [1.0 - v for v in vals]
                    if tr == 2:
                        o_rules[ctx] = constant(vals[0])
                    else:
                        o_edges.append((ctx, k, DISRUPTIVE))
                        o_rules[ctx] = bucketed(_disruptive_terms(k), thresholds, vals)
            for x in range(3):
                ctx = (k, x, a0)
                cost = p.troop_cost * tr
                if tr == 2:
                    r_rules[ctx] = constant(p.base_reward[x] - cost)
                else:
                    r_edges.append((ctx, k, DISRUPTIVE))
                    vals = [p.base_reward[x] - pen - cost for pen in p.penalty]
                    r_rules[ctx] = bucketed(_disruptive_terms(k), thresholds, vals)

    graphs = {
        "transition": FrameActionHypergraph("transition", ((3, 9, 3),) * SITES, counts, t_edges, POLICE),
        "observation": FrameActionHypergraph("observation", ((3, 9, 2),) * SITES, counts, o_edges, POLICE),
        "reward": FrameActionHypergraph("reward", ((3, 9),) * SITES, counts, r_edges, POLICE),
    }
    frame_books = {}
    for fid in frames:
        edges, rules = [], {}
        for k in range(SITES):
            present = [a0 for a0 in range(len(POLICE_ACTIONS)) if troops_at(a0, k) > 0]
            for aj in range(4):
                for x2 in range(3):
                    for o in range(2):
                        ctx = (k, x2, aj, o)
                        base = p.obs_base[x2]
                        guarded = min(base + p.police_obs_shift, p.obs_cap)
                        lo, hi = (base, guarded) if o == 1 else (1 - base, 1 - guarded)
                        edges += [(ctx, a0, POLICE) for a0 in present]
                        # the police slots sum to at most one, so >= 1 agent means a troop is there
                        rules[ctx] = RuleSet((
                            Rule((Predicate(tuple(((POLICE, a0), 1.0) for a0 in present), "ge", 1.0 / p.n),), hi),
                            Rule((), lo),
                        ))
        graphs[f"frame_observation:{fid}"] = FrameActionHypergraph(
            "frame_observation", ((3, 4, 2),) * SITES, counts, edges, fid)
        frame_books[fid] = RuleBook("frame_observation", rules)

    S = states.size
    init = np.full(S, 1.0 / S) if p.initial_state is None else np.asarray(p.initial_state, float)
    init_models = {c: np.full(f.n_nodes, 1.0 / f.n_nodes) for c, f in fscs.items()}
    dom = Domain(
        states=states, actions0=a0_names, obs0=flags, frames=frames, fscs=fscs,
        population=population, graphs=graphs,
        transition=RuleBook("transition", t_rules), observation=RuleBook("observation", o_rules),
        reward=RuleBook("reward", r_rules), frame_observation=frame_books,
        initial_state=init, initial_models=init_models, frame0=POLICE,
        name=f"protest-n{p.n}", meta={"params": p},
    )
    return dom


def _controller(cid, frame, blind, reactive, kind, flags: ProductSpace) -> FSC:
    n_obs = flags.size
    if kind == "blind":
        return FSC(cid, frame, np.array([blind]), np.ones((1, 4, n_obs, 1)), ("n0",))
    # switch preference after seeing a flag at the site just visited
    table = flags.table()
    nt = np.zeros((2, 4, n_obs, 2))
    for n in range(2):
        for a in range(4):
            for o in range(n_obs):
                flip = a < SITES and table[o, a] == 1
                nt[n, a, o, 1 - n if flip else n] = 1.0
    return FSC(cid, frame, np.array(reactive), nt, ("n0", "n1"))


# -- direct evaluators -------------------------------------------------------------------


def _evaluate(domain: Domain, kind: str, ctx, config) -> float:
    g = domain.graphs[kind]
    nu = g.neighborhood(ctx)
    config = np.asarray(config, dtype=np.int64)
    if config.shape != (len(nu) + 1,):
        raise ValidationError(f"configuration {config.tolist()} does not fit neighborhood {nu.pairs} (+phi)")
    if np.any(config < 0):
        raise ValidationError("configuration counts must be non-negative")
    return float(getattr(domain, kind)[ctx].evaluate(nu, config[None, :])[0])


def evaluate_transition(domain: Domain, k: int, x: int, a0: int, config, x2: int) -> float:
    return _evaluate(domain, "transition", (k, x, a0, x2), config)


def evaluate_observation(domain: Domain, k: int, x2: int, a0: int, config, flag: int) -> float:
    return _evaluate(domain, "observation", (k, x2, a0, flag), config)


def evaluate_reward(domain: Domain, k: int, x: int, a0: int, config) -> float:
    return _evaluate(domain, "reward", (k, x, a0), config)
