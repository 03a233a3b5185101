"""Random small domains for oracle comparisons.

Every row of T, O and the frame observation functions is built from one
shared count statistic, so rows normalize for every configuration while the
per-context neighborhoods still differ (constant entries get no edges).
"""
from __future__ import annotations

import numpy as np

from manyagent.domain import Domain
from manyagent.hypergraph import FrameActionHypergraph
from manyagent.population import FSC, AgentPopulation, Frame, ProductSpace
from manyagent.rules import Predicate, Rule, RuleBook, RuleSet, constant

AGENT0 = "zero"


def _dist(rng, n, sparse=0.0):
    p = rng.dirichlet(np.ones(n))
    if sparse and n > 1:
        mask = rng.random(n) < sparse
        if mask.all():
            mask[rng.integers(n)] = False
        p = np.where(mask, 0.0, p)
        p /= p.sum()
    return p


def _statistic(rng, nu_row):
    terms = tuple((pair, float(rng.choice([1.0, 2.0]))) for pair in nu_row)
    n_th = int(rng.integers(1, 3))
    ths = sorted(float(t) for t in rng.choice([0.2, 0.34, 0.5, 0.67, 0.9, 1.0], n_th, replace=False))
    return terms, ths


def _bucketed(terms, ths, values):
    rules = [Rule((Predicate(terms, "ge", ths[i - 1]),), float(values[i])) for i in range(len(ths), 0, -1)]
    rules.append(Rule((), float(values[0])))
    return RuleSet(tuple(rules))


def _pick_nu(rng, pool, mode=None):
    mode = mode or rng.choice(["empty", "full", "some", "some"])
    if mode == "empty" or not pool:
        return []
    if mode == "full":
        return list(pool)
    k = int(rng.integers(1, len(pool) + 1))
    return [pool[i] for i in sorted(rng.choice(len(pool), k, replace=False))]


def _row(rng, ctxs, pool, sparse, mode=None):
    """Rule sets and edges for contexts whose values must sum to one."""
    n = len(ctxs)
    nu_row = _pick_nu(rng, pool, mode)
    rules, edges = {}, []
    if not nu_row:
        p = _dist(rng, n, sparse)
        for c, v in zip(ctxs, p):
            rules[c] = constant(v)
        # sometimes attach edges that the rules ignore
        if pool and rng.random() < 0.3:
            f, a = pool[int(rng.integers(len(pool)))]
            edges.append((ctxs[0], a, f))
        return rules, edges
    terms, ths = _statistic(rng, nu_row)
    n_buckets = len(ths) + 1
    fixed = rng.random(n) < 0.3
    if fixed.all():
        fixed[rng.integers(n)] = False
    base = _dist(rng, n, sparse)
    table = np.empty((n_buckets, n))
    free = np.flatnonzero(~fixed)
    for bkt in range(n_buckets):
        table[bkt, fixed] = base[fixed]
        table[bkt, free] = max(0.0, 1.0 - base[fixed].sum()) * _dist(rng, len(free), sparse)
    for i, c in enumerate(ctxs):
        if fixed[i]:
            rules[c] = constant(table[0, i])
        else:
            rules[c] = _bucketed(terms, ths, table[:, i])
            edges += [(c, a, f) for f, a in nu_row]
    return rules, edges


def random_domain(seed: int, n_agents=None, zero_obs: bool = False, force_agent0_edges: bool = False,
                  sparse: float = 0.15, nu_mode: str | None = None) -> Domain:
    """A small random many-agent domain.

    ``zero_obs`` makes the last observation of factor 0 impossible;
    ``force_agent0_edges`` puts agent 0's actions into every frame
    observation row; ``nu_mode`` ("empty", "full", "some") fixes how
    neighborhoods are drawn.
    """
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 3))
    X = [int(rng.integers(2, 4)) for _ in range(K)]
    states = ProductSpace(tuple(f"x{k}" for k in range(K)), tuple(tuple(f"v{i}" for i in range(x)) for x in X))
    A0 = int(rng.integers(2, 4))
    obs0 = ProductSpace(tuple(f"o{k}" for k in range(K)), tuple(("n", "y") for _ in range(K)))
    n_frames = int(rng.integers(1, 3))
    N = int(n_agents or rng.integers(1, 4))

    frames, fscs = {}, {}
    for fi in range(n_frames):
        fid = f"f{fi}"
        na = int(rng.integers(1, 4)) if N < 3 else int(rng.integers(1, 3))
        fobs = ProductSpace(tuple(f"w{k}" for k in range(K)), tuple(("n", "y") for _ in range(K)))
        pool = []
        for ci in range(int(rng.integers(1, 3))):
            cid = f"{fid}c{ci}"
            nodes = int(rng.integers(1, 3))
            ad = np.array([_dist(rng, na, sparse) for _ in range(nodes)])
            nt = np.array([[[_dist(rng, nodes) for _ in range(fobs.size)] for _ in range(na)] for _ in range(nodes)])
            fscs[cid] = FSC(cid, fid, ad, nt)
            pool.append(cid)
        frames[fid] = Frame(fid, tuple(f"b{a}" for a in range(na)), fobs, tuple(pool))
    assignments = []
    for _ in range(N):
        fid = f"f{int(rng.integers(n_frames))}"
        pool = frames[fid].fsc_pool
        assignments.append((fid, pool[int(rng.integers(len(pool)))]))
    population = AgentPopulation(tuple(assignments))

    counts = {f: len(fr.actions) for f, fr in frames.items()}
    counts[AGENT0] = A0
    pairs = [(f, a) for f in sorted(frames) for a in range(counts[f])]

    t_rules, t_edges, o_rules, o_edges, r_rules, r_edges = {}, [], {}, [], {}, []
    for k, x_k in enumerate(X):
        for a0 in range(A0):
            for x in range(x_k):
                rs, es = _row(rng, [(k, x, a0, x2) for x2 in range(x_k)], pairs, sparse, nu_mode)
                t_rules.update(rs)
                t_edges += es
            for x2 in range(x_k):
                ctxs = [(k, x2, a0, o) for o in range(2)]
                if zero_obs and k == 0:
                    o_rules[ctxs[0]], o_rules[ctxs[1]] = constant(1.0), constant(0.0)
                    continue
                rs, es = _row(rng, ctxs, pairs, sparse, nu_mode)
                o_rules.update(rs)
                o_edges += es
            for x in range(x_k):
                ctx = (k, x, a0)
                nu = _pick_nu(rng, pairs, nu_mode)
                if nu:
                    terms, ths = _statistic(rng, nu)
                    r_rules[ctx] = _bucketed(terms, ths, rng.normal(0, 5, len(ths) + 1).round(3))
                    r_edges += [(ctx, a, f) for f, a in nu]
                else:
                    r_rules[ctx] = constant(round(float(rng.normal(0, 5)), 3))

    graphs = {
        "transition": FrameActionHypergraph("transition", tuple((x, A0, x) for x in X), counts, t_edges, AGENT0),
        "observation": FrameActionHypergraph("observation", tuple((x, A0, 2) for x in X), counts, o_edges, AGENT0),
        "reward": FrameActionHypergraph("reward", tuple((x, A0) for x in X), counts, r_edges, AGENT0),
    }
    fbooks = {}
    a0_pairs = [(AGENT0, a) for a in range(A0)]
    for fid, fr in frames.items():
        rules, edges = {}, []
        for k, x_k in enumerate(X):
            for aj in range(len(fr.actions)):
                for x2 in range(x_k):
                    ctxs = [(k, x2, aj, o) for o in range(2)]
                    pool = pairs + a0_pairs
                    for _ in range(20 if force_agent0_edges else 1):
                        rs, es = _row(rng, ctxs, pool, sparse, nu_mode)
                        if not force_agent0_edges or any(f == AGENT0 for _, _, f in es):
                            break
                    rules.update(rs)
                    edges += es
        graphs[f"frame_observation:{fid}"] = FrameActionHypergraph(
            "frame_observation", tuple((x, len(fr.actions), 2) for x in X), counts, edges, fid)
        fbooks[fid] = RuleBook("frame_observation", rules)

    S = states.size
    return Domain(
        states=states, actions0=tuple(f"a{i}" for i in range(A0)), obs0=obs0, frames=frames, fscs=fscs,
        population=population, graphs=graphs,
        transition=RuleBook("transition", t_rules), observation=RuleBook("observation", o_rules),
        reward=RuleBook("reward", r_rules), frame_observation=fbooks,
        initial_state=_dist(rng, S, 0.2), initial_models={c: _dist(rng, f.n_nodes) for c, f in fscs.items()},
        frame0=AGENT0, name=f"random-{seed}",
    )


def uses_agent0(domain: Domain) -> bool:
    return any(f == domain.frame0 for fid in domain.frames for _, _, f in domain.frame_graph(fid).edges)


def isolated_domain(T, O, R, n_agents=1, fsc=None, frame_obs=None):
    """One state factor, no hypergraph edges: a plain POMDP for agent 0 with
    ``n_agents`` bystanders.  ``T[x, a, x2]``, ``O[x2, a, o]``, ``R[x, a]``.

    ``fsc`` replaces the bystanders' 1-node controller (2 actions, frame
    observations ``frame_obs[x2, aj, w]``, uniform by default).
    """
    T, O, R = (np.asarray(v, float) for v in (T, O, R))
    X, A0, n_obs = T.shape[0], T.shape[1], O.shape[2]
    states = ProductSpace(("x",), (tuple(f"v{i}" for i in range(X)),))
    obs0 = ProductSpace(("o",), (tuple(f"o{i}" for i in range(n_obs)),))
    fobs = ProductSpace(("w",), (("n", "y"),))
    fsc = fsc or FSC("c", "t", np.array([[0.5, 0.5]]), np.ones((1, 2, 2, 1)))
    frame = Frame("t", ("b0", "b1"), fobs, (fsc.id,))
    counts = {"t": 2, AGENT0: A0}
    fo = np.full((X, 2, 2), 0.5) if frame_obs is None else np.asarray(frame_obs, float)
    graphs = {
        "transition": FrameActionHypergraph("transition", ((X, A0, X),), counts, (), AGENT0),
        "observation": FrameActionHypergraph("observation", ((X, A0, n_obs),), counts, (), AGENT0),
        "reward": FrameActionHypergraph("reward", ((X, A0),), counts, (), AGENT0),
        "frame_observation:t": FrameActionHypergraph("frame_observation", ((X, 2, 2),), counts, (), "t"),
    }
    grid = lambda *shape: np.ndindex(*shape)  # noqa: E731
    return Domain(
        states=states, actions0=tuple(f"a{i}" for i in range(A0)), obs0=obs0, frames={"t": frame},
        fscs={fsc.id: fsc}, population=AgentPopulation((("t", fsc.id),) * n_agents), graphs=graphs,
        transition=RuleBook("transition", {(0, x, a, y): constant(T[x, a, y]) for x, a, y in grid(X, A0, X)}),
        observation=RuleBook("observation", {(0, y, a, o): constant(O[y, a, o]) for y, a, o in grid(X, A0, n_obs)}),
        reward=RuleBook("reward", {(0, x, a): constant(R[x, a]) for x, a in grid(X, A0)}),
        frame_observation={"t": RuleBook("frame_observation",
                                         {(0, y, a, w): constant(fo[y, a, w]) for y, a, w in grid(X, 2, 2)})},
        initial_state=np.full(X, 1.0 / X), initial_models={fsc.id: np.full(fsc.n_nodes, 1.0 / fsc.n_nodes)},
        frame0=AGENT0, name="isolated",
    )
