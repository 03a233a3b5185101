"""Factored beliefs over (state, other agents' FSC nodes) and their updates.

Two engines share one interface:

* :class:`StructuredEngine` sums over frame-action configurations whose
  distributions come from the configuration engine;
* :class:`NaiveEngine` sums over every joint model and joint action of the
  other agents and serves as the oracle.

Each engine runs in one of two couplings.  ``"factored"`` multiplies the
per-factor expectations over configurations (each state factor and each
observation component averages over its own configuration draw).
``"joint"`` draws one configuration per step over the union neighborhood
and shares it across factors, which is the unfactored I-POMDP semantics.
The two coincide whenever at most one factor depends on the others.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .configurations import DistCache, joint_profiles, project_profiles
from .domain import Domain
from .errors import GuardExceeded, ValidationError, ZeroProbabilityEvidence
from .hypergraph import Neighborhood

COUPLINGS = ("factored", "joint")
NAIVE_LIMIT = 1_000_000
_TINY = 1e-300


@dataclass(eq=False)
class FactoredBelief:
    """Pr(s) and, per population group, Pr(m_j | s) for each member agent.

    ``models[g]`` has shape (n_g, |S|, |M_g|); member order follows
    ``population.members[g]``.  Rows for states flagged in ``placeholder``
    hold uniform distributions and carry no information.
    """

    state: np.ndarray
    models: tuple
    placeholder: np.ndarray | None = None
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=float)
        if self.placeholder is None:
            self.placeholder = np.zeros(self.state.shape, dtype=bool)

    def structural_size(self) -> int:
        """Stored probability count: |S| + sum_j |S| |M_j|."""
        return int(self.state.size + sum(m.size for m in self.models))

    def model_dist(self, population, j: int) -> np.ndarray:
        """(|S|, |M_j|) conditional node distribution of agent j."""
        return self.models[population.group_of[j]][population.position[j]]

    def check(self, tol: float = 1e-9) -> None:
        if np.any(self.state < 0) or abs(self.state.sum() - 1.0) > tol:
            raise ValidationError(f"state distribution sums to {float(self.state.sum())!r}")
        live = self.state > 0
        for g, m in enumerate(self.models):
            sums = m[:, live, :].sum(axis=2)
            if np.any(np.abs(sums - 1.0) > tol):
                raise ValidationError(f"group {g}: model rows off by {np.abs(sums - 1).max():.3g}")


def initial_belief(domain: Domain) -> FactoredBelief:
    S = domain.states.size
    models = []
    for (frame, fsc_id), members in zip(domain.population.groups, domain.population.members):
        row = domain.initial_models[fsc_id]
        models.append(np.broadcast_to(row, (len(members), S, len(row))).copy())
    return FactoredBelief(domain.initial_state.copy(), tuple(models))


@dataclass(frozen=True)
class Prediction:
    """Unnormalized Pr(s', omega | b, a0) = joint * exp(log_scale)."""

    joint: np.ndarray
    log_scale: float = 0.0

    def likelihoods(self) -> np.ndarray:
        return self.joint.sum(axis=0) * math.exp(self.log_scale)


def _product_tables(tables, rows, cols):
    """Product over factors of ``tables[k][rows[:, k]][:, cols[:, k]]``,
    in log space when a product of nonzero entries could underflow.  Returns (array, is_log)."""
    # smallest possible nonzero product across factors
    floor = sum(math.log(t[t > 0].min()) for t in tables if np.any(t > 0))
    tiny = floor < math.log(_TINY)
    if tiny:
        with np.errstate(divide="ignore"):
            out = sum(np.log(t)[rows[:, k]][:, cols[:, k]] for k, t in enumerate(tables))
        return out, True
    out = tables[0][rows[:, 0]][:, cols[:, 0]]
    for k in range(1, len(tables)):
        out = out * tables[k][rows[:, k]][:, cols[:, k]]
    return out, False


class _Engine:
    """Shared plumbing: posterior assembly and per-belief memo of predictions."""

    structured = True

    def __init__(self, domain: Domain, coupling: str = "factored"):
        if coupling not in COUPLINGS:
            raise ValidationError(f"coupling must be one of {COUPLINGS}")
        self.domain = domain
        self.coupling = coupling
        self._tau_by_group = [domain.fscs[c].node_transition for _, c in domain.population.groups]
        self._pi_by_group = [domain.fscs[c].action_dist for _, c in domain.population.groups]

    # subclasses provide these
    def predict(self, b: FactoredBelief, a0: int) -> Prediction:
        raise NotImplementedError

    def expected_reward(self, b: FactoredBelief, a0: int) -> float:
        raise NotImplementedError

    def update_models(self, b: FactoredBelief, a0: int, support: np.ndarray) -> tuple:
        raise NotImplementedError

    def expected_rewards(self, b: FactoredBelief) -> np.ndarray:
        """ER(b, a0) for every action of agent 0."""
        return np.array([self.expected_reward(b, a) for a in range(len(self.domain.actions0))])

    # -- composition -------------------------------------------------------------

    def prediction(self, b: FactoredBelief, a0: int) -> Prediction:
        key = (self, "pred", a0)
        hit = b._memo.get(key)
        if hit is None:
            hit = b._memo[key] = self.predict(b, a0)
        return hit

    def likelihoods(self, b: FactoredBelief, a0: int) -> np.ndarray:
        return self.prediction(b, a0).likelihoods()

    def next_models(self, b: FactoredBelief, a0: int) -> tuple:
        """Updated model rows for every successor state with positive mass
        under some observation (the update does not depend on omega)."""
        key = (self, "models", a0)
        hit = b._memo.get(key)
        if hit is None:
            support = self.prediction(b, a0).joint.sum(axis=1) > 0
            hit = b._memo[key] = self.update_models(b, a0, support)
        return hit

    def state_posterior(self, b: FactoredBelief, a0: int, obs: int) -> np.ndarray:
        col = self.prediction(b, a0).joint[:, obs]
        total = col.sum()
        if not total > 0:
            raise ZeroProbabilityEvidence(f"observation {obs} has zero probability under action {a0}")
        return col / total

    def posterior(self, b: FactoredBelief, a0: int, obs: int) -> FactoredBelief:
        state = self.state_posterior(b, a0, obs)
        dead = state <= 0
        models = []
        for m in self.next_models(b, a0):
            m = m.copy()
            m[:, dead, :] = 1.0 / m.shape[2]
            models.append(m)
        return FactoredBelief(state, tuple(models), dead)

    def release(self, b: FactoredBelief) -> None:
        b._memo.clear()


# -- structured engine ---------------------------------------------------------------


def _signatures(domain: Domain, b: FactoredBelief):
    """Per live state: the multiset of (frame, action-marginal) agent classes.

    Also returns, per group, the unique member beliefs (as an index into
    members), their counts and action marginals (u, |S|, |A|).
    """
    hit = b._memo.get("sig")
    if hit is not None:
        return hit
    live = np.flatnonzero(b.state > 0)
    uniq = []
    per_state = [dict() for _ in range(b.state.size)]
    for g, ((frame, fsc_id), m) in enumerate(zip(domain.population.groups, b.models)):
        n_g = m.shape[0]
        flat = m.reshape(n_g, -1)
        if n_g == 0 or np.array_equal(flat, np.broadcast_to(flat[0], flat.shape)):
            # common case: every member holds the same belief
            rows, first = flat[:1], np.zeros(min(n_g, 1), dtype=np.int64)
            inv, cnt = np.zeros(n_g, dtype=np.int64), np.array([n_g])[: len(rows)]
        else:
            rows, first, inv, cnt = np.unique(flat, axis=0, return_index=True,
                                              return_inverse=True, return_counts=True)
        marg = rows.reshape(len(rows), m.shape[1], m.shape[2]) @ domain.fscs[fsc_id].action_dist
        marg = np.ascontiguousarray(marg)
        uniq.append((first, inv.ravel(), cnt, marg))
        for s in live:
            d = per_state[s]
            for u in range(len(rows)):
                key = (frame, marg[u, s].tobytes())
                d[key] = d.get(key, 0) + int(cnt[u])
    sigs = {int(s): tuple(sorted((f, mb, c) for (f, mb), c in per_state[s].items())) for s in live}
    out = (sigs, uniq)
    b._memo["sig"] = out
    return out


def _without(sig: tuple, cls: tuple) -> tuple:
    out = []
    for f, mb, c in sig:
        if (f, mb) == cls:
            c -= 1
        if c:
            out.append((f, mb, c))
    return tuple(out)


class StructuredEngine(_Engine):
    """Belief update and expected reward over configuration distributions."""

    def __init__(self, domain: Domain, coupling: str = "factored", prune: float = 0.0,
                 cache: DistCache | None = None):
        super().__init__(domain, coupling)
        self.cache = cache or DistCache(prune=prune)
        self._tables: dict = {}

    # per-signature expectation tables ------------------------------------------------

    def _expect_table(self, sig, kind, a0, k, shape, extra=None, frame=None):
        """E[rules] over configurations for every (x, y) context of factor k."""
        key = ("E", sig, kind, a0, k, extra, frame)
        hit = self._tables.get(key)
        if hit is not None:
            return hit
        d = self.domain
        if kind == "frame_observation":
            g, book = d.frame_graph(frame), d.frame_observation[frame]
        else:
            g, book = d.graphs[kind], getattr(d, kind)
        out = np.empty(shape)
        for x in range(shape[0]):
            for y in range(shape[1]):
                ctx = (k, x, a0, y)
                nu = g.neighborhood(ctx)
                dist = self.cache.get(nu, sig, extra)
                out[x, y] = self.cache.expectation(dist, nu, book[ctx])
        self._tables[key] = out
        return out

    def _value_table(self, dist, kind, a0, k, shape, frame=None):
        """rules(C) over the stored configurations of a union-neighborhood dist."""
        d = self.domain
        if kind == "frame_observation":
            g, book = d.frame_graph(frame), d.frame_observation[frame]
        else:
            g, book = d.graphs[kind], getattr(d, kind)
        out = np.empty(shape + (len(dist),))
        for x in range(shape[0]):
            for y in range(shape[1]):
                ctx = (k, x, a0, y)
                out[x, y] = self.cache.values(dist, g.neighborhood(ctx), book[ctx])
        return out

    def _groups_by_sig(self, b):
        hit = b._memo.get("sig_groups")
        if hit is None:
            sigs, _ = _signatures(self.domain, b)
            groups: dict = {}
            for s, sig in sigs.items():
                groups.setdefault(sig, []).append(s)
            hit = b._memo["sig_groups"] = [(sig, np.array(idx)) for sig, idx in groups.items()]
        return hit

    # state update ---------------------------------------------------------------------------

    def predict(self, b: FactoredBelief, a0: int) -> Prediction:
        d = self.domain
        st, ot = d.state_table, d.obs_table
        S, W = d.states.size, d.obs0.size
        sizes, osizes = d.states.sizes, d.obs0.sizes
        if len(self._tables) > 200_000:
            self._tables.clear()
        if self.coupling == "joint":
            return self._predict_joint(b, a0)
        terms = []
        any_log = False
        for sig, idx in self._groups_by_sig(b):
            taus = [self._expect_table(sig, "transition", a0, k, (X, X)) for k, X in enumerate(sizes)]
            obs = [self._expect_table(sig, "observation", a0, k, (X, osizes[k])) for k, X in enumerate(sizes)]
            T, t_log = _product_tables(taus, st[idx], st)
            O, o_log = _product_tables(obs, st, ot)
            terms.append((idx, T, t_log, O, o_log))
            any_log |= t_log or o_log
        if not any_log:
            P = np.zeros((S, W))
            for idx, T, _, O, _ in terms:
                P += (b.state[idx] @ T)[:, None] * O
            return Prediction(P)
        logP = np.full((S, W), -np.inf)
        with np.errstate(divide="ignore"):
            for idx, T, t_log, O, o_log in terms:
                lt = T if t_log else np.log(T)
                lo = O if o_log else np.log(O)
                inner = np.logaddexp.reduce(np.log(b.state[idx])[:, None] + lt, axis=0)
                logP = np.logaddexp(logP, inner[:, None] + lo)
        scale = float(logP.max())
        if not np.isfinite(scale):
            return Prediction(np.zeros((S, W)))
        return Prediction(np.exp(logP - scale), scale)

    def _predict_joint(self, b, a0):
        d = self.domain
        st, ot = d.state_table, d.obs_table
        S, W = d.states.size, d.obs0.size
        sizes, osizes = d.states.sizes, d.obs0.sizes
        nu = d.union_nu(a0)
        P = np.zeros((S, W))
        for sig, idx in self._groups_by_sig(b):
            dist = self.cache.get(nu, sig)
            T = np.ones((len(idx), S, len(dist)))
            O = np.ones((S, W, len(dist)))
            for k, X in enumerate(sizes):
                TV = self._value_table(dist, "transition", a0, k, (X, X))
                T *= TV[st[idx, k]][:, st[:, k]]
                OV = self._value_table(dist, "observation", a0, k, (X, osizes[k]))
                O *= OV[st[:, k]][:, ot[:, k]]
            P += np.einsum("i,isc,swc,c->sw", b.state[idx], T, O, dist.probs, optimize=True)
        return Prediction(P)

    # expected reward ---------------------------------------------------------------------------

    def expected_reward(self, b: FactoredBelief, a0: int) -> float:
        d = self.domain
        st = d.state_table
        total = 0.0
        for sig, idx in self._groups_by_sig(b):
            per_state = np.zeros(len(idx))
            for k, X in enumerate(d.states.sizes):
                r = self._reward_vector(sig, a0, k, X)
                per_state += r[st[idx, k]]
            total += float(b.state[idx] @ per_state)
        return total

    def _reward_vector(self, sig, a0, k, X):
        key = ("R", sig, a0, k)
        hit = self._tables.get(key)
        if hit is None:
            g, book = self.domain.graphs["reward"], self.domain.reward
            hit = np.empty(X)
            for x in range(X):
                ctx = (k, x, a0)
                nu = g.neighborhood(ctx)
                hit[x] = self.cache.expectation(self.cache.get(nu, sig), nu, book[ctx])
            self._tables[key] = hit
        return hit

    # model update ---------------------------------------------------------------------------

    def _obs_kernel(self, sig_minus, frame, aj, a0):
        """Y[s', omega_j]: probability of j's observation at s' after j did
        ``aj``, given the other agents' classes and agent 0's ``a0``."""
        key = ("Y", sig_minus, frame, aj, a0)
        hit = self._tables.get(key)
        if hit is not None:
            return hit
        d = self.domain
        st = d.state_table
        fot = d.frame_obs_tables[frame]
        fsizes = d.frames[frame].observations.sizes
        extra = (d.frame0, a0)
        if self.coupling == "factored":
            tabs = [self._expect_table(sig_minus, "frame_observation", aj, k, (X, fsizes[k]), extra, frame)
                    for k, X in enumerate(d.states.sizes)]
            Y = np.ones((st.shape[0], fot.shape[0]))
            for k, t in enumerate(tabs):
                Y = Y * t[st[:, k]][:, fot[:, k]]
        else:
            dist = self.cache.get(d.frame_union_nu(frame, aj), sig_minus, extra)
            Yc = np.ones((st.shape[0], fot.shape[0], len(dist)))
            for k, X in enumerate(d.states.sizes):
                V = self._value_table(dist, "frame_observation", aj, k, (X, fsizes[k]), frame)
                Yc *= V[st[:, k]][:, fot[:, k]]
            Y = Yc @ dist.probs
        self._tables[key] = Y
        return Y

    def update_models(self, b: FactoredBelief, a0: int, support: np.ndarray) -> tuple:
        d = self.domain
        sigs, uniq = _signatures(d, b)
        live = list(sigs)
        out = []
        for g, ((frame, fsc_id), m) in enumerate(zip(d.population.groups, b.models)):
            n_g, S, M = m.shape
            if M == 1:
                out.append(np.ones((n_g, S, 1)))
                continue
            pi = self._pi_by_group[g]
            tau = self._tau_by_group[g]
            first, inv, cnt, marg = uniq[g]
            new_u = np.empty((len(first), S, M))
            for u, rep in enumerate(first):
                acc = np.zeros((S, M))
                bu = m[rep]
                for s in live:
                    sig_minus = _without(sigs[s], (frame, marg[u, s].tobytes()))
                    for aj in range(pi.shape[1]):
                        A = bu[s] * pi[:, aj]
                        if not A.any():
                            continue
                        Y = self._obs_kernel(sig_minus, frame, aj, a0)
                        acc += b.state[s] * np.einsum("m,tw,mwn->tn", A, Y, tau[:, aj], optimize=True)
                new_u[u] = _normalize_rows(acc, support, g)
            out.append(new_u[inv])
        return tuple(out)



def _normalize_rows(acc, support, g):
    M = acc.shape[1]
    out = np.full_like(acc, 1.0 / M)
    rows = acc[support]
    z = rows.sum(axis=1)
    if np.any(z <= 0):
        raise ZeroProbabilityEvidence(f"group {g}: no model mass at a reachable successor state")
    out[support] = rows / z[:, None]
    return out


# -- naive engine ----------------------------------------------------------------------


class NaiveEngine(_Engine):
    """Direct sums over joint models and joint actions of all other agents."""

    structured = False

    def __init__(self, domain: Domain, coupling: str = "factored", limit: int = NAIVE_LIMIT):
        super().__init__(domain, coupling)
        pop = domain.population
        self.frames = [f for f, _ in pop.assignments]
        self.fscs = [domain.fscs[c] for _, c in pop.assignments]
        self.n_actions = [f.action_dist.shape[1] for f in self.fscs]
        self.n_nodes = [f.n_nodes for f in self.fscs]
        estimate = float(np.prod(self.n_actions, dtype=float) * np.prod(self.n_nodes, dtype=float))
        if estimate > limit:
            raise GuardExceeded(
                f"naive sums over {estimate:.3g} joint model-action terms (limit {limit:.3g})", estimate)
        self.profiles = joint_profiles(self.n_actions)
        self._tables: dict = {}
        self.compiled = kernels.USE_NUMBA
        N = pop.N
        self._pi = np.zeros((N, max(self.n_nodes, default=1), max(self.n_actions, default=1)))
        for j, f in enumerate(self.fscs):
            self._pi[j, : f.n_nodes, : self.n_actions[j]] = f.action_dist

    # joint weights ------------------------------------------------------------------------

    def _agent_rows(self, b: FactoredBelief):
        pop = self.domain.population
        return [b.model_dist(pop, j) for j in range(pop.N)]

    def _weights(self, rows, agents, live):
        """W[s, profile] = sum over joint models of prod_j b(m_j|s) Pr(a_j|m_j)
        for the listed agents, by explicit enumeration."""
        profiles = joint_profiles([self.n_actions[j] for j in agents])
        if self.compiled:
            S = rows[0].shape[0] if rows else 0
            pad = np.zeros((len(agents), S, self._pi.shape[1]))
            for c, j in enumerate(agents):
                pad[c, :, : rows[j].shape[1]] = rows[j]
            mprof = joint_profiles([self.n_nodes[j] for j in agents])
            W = kernels.naive_weights(pad, self._pi[agents], mprof, profiles, live.astype(np.int64))
            return W, profiles
        W = np.zeros((len(live), len(profiles)))
        for mprof in itertools.product(*[range(self.n_nodes[j]) for j in agents]):
            w = np.ones((len(live), len(profiles)))
            for col, (j, m) in enumerate(zip(agents, mprof)):
                w *= rows[j][live, m][:, None] * self.fscs[j].action_dist[m][profiles[:, col]][None, :]
            W += w
        return W, profiles

    def _joint_weights(self, b):
        hit = b._memo.get((self, "W"))
        if hit is None:
            live = np.flatnonzero(b.state > 0)
            W, _ = self._weights(self._agent_rows(b), list(range(self.domain.population.N)), live)
            hit = b._memo[(self, "W")] = (live, W)
        return hit

    # joint-action tables ------------------------------------------------------------------

    def _evaluated(self, rules, nu, who, profiles, frames):
        """``rules`` over every profile; contexts sharing a neighborhood share
        the projected counts, and interned rule sets share their values."""
        key = ("eval", rules, nu.pairs, who)
        hit = self._tables.get(key)
        if hit is None:
            pkey = ("proj", nu.pairs, who)
            counts = self._tables.get(pkey)
            if counts is None:
                counts = self._tables[pkey] = project_profiles(profiles, frames, nu)
            hit = self._tables[key] = rules.evaluate(nu, counts)
        return hit

    def _table(self, kind, a0, k, shape):
        """V[x, y, profile] for agent 0's functions over all joint actions."""
        key = (kind, a0, k)
        hit = self._tables.get(key)
        if hit is None:
            d = self.domain
            g, book = d.graphs[kind], getattr(d, kind)
            hit = np.empty(shape + (len(self.profiles),))
            for idx in np.ndindex(*shape):
                ctx = (k,) + ((idx[0], a0, idx[1]) if len(idx) == 2 else (idx[0], a0))
                nu = g.neighborhood(ctx)
                hit[idx] = self._evaluated(book[ctx], nu, None, self.profiles, self.frames)
            self._tables[key] = hit
        return hit

    def _frame_table(self, j, a0, k, shape):
        """V[aj, x', o, profile of others] for agent j's observation function."""
        key = ("fo", j, a0, k)
        hit = self._tables.get(key)
        if hit is None:
            d = self.domain
            others = [i for i in range(d.population.N) if i != j]
            frame = self.frames[j]
            g, book = d.frame_graph(frame), d.frame_observation[frame]
            prof = joint_profiles([self.n_actions[i] for i in others])
            prof = np.concatenate([prof, np.full((len(prof), 1), a0, dtype=np.int64)], axis=1)
            frames = [self.frames[i] for i in others] + [d.frame0]
            hit = np.empty((self.n_actions[j],) + shape + (len(prof),))
            for aj in range(self.n_actions[j]):
                for x, o in np.ndindex(*shape):
                    ctx = (k, x, aj, o)
                    nu = g.neighborhood(ctx)
                    hit[aj, x, o] = self._evaluated(book[ctx], nu, (j, a0), prof, frames)
            self._tables[key] = hit
        return hit

    # state update -------------------------------------------------------------------------------

    def _stacked(self, a0):
        """Per-factor joint-action tables padded into (K, X, Y, profiles) arrays."""
        key = ("stack", a0)
        hit = self._tables.get(key)
        if hit is None:
            d = self.domain
            K, X = d.K, max(d.states.sizes)
            O = max(d.obs0.sizes)
            Tt = np.zeros((K, X, X, len(self.profiles)))
            Ot = np.zeros((K, X, O, len(self.profiles)))
            for k, Xk in enumerate(d.states.sizes):
                Tt[k, :Xk, :Xk] = self._table("transition", a0, k, (Xk, Xk))
                Ot[k, :Xk, : d.obs0.sizes[k]] = self._table("observation", a0, k, (Xk, d.obs0.sizes[k]))
            hit = self._tables[key] = (Tt, Ot)
        return hit

    def _stacked_frame(self, j, a0):
        key = ("fstack", j, a0)
        hit = self._tables.get(key)
        if hit is None:
            d = self.domain
            fs = d.frames[self.frames[j]].observations.sizes
            parts = [self._frame_table(j, a0, k, (Xk, fs[k])) for k, Xk in enumerate(d.states.sizes)]
            X, O = max(d.states.sizes), max(fs)
            hit = np.zeros((d.K, self.n_actions[j], X, O, parts[0].shape[-1]))
            for k, v in enumerate(parts):
                hit[k, :, : v.shape[1], : v.shape[2]] = v
            self._tables[key] = hit
        return hit

    def predict(self, b: FactoredBelief, a0: int) -> Prediction:
        d = self.domain
        st, ot = d.state_table, d.obs_table
        live, W = self._joint_weights(b)
        bl = b.state[live]
        Tt, Ot = self._stacked(a0)
        if self.compiled:
            return Prediction(kernels.naive_predict(bl, W, Tt, Ot, st[live], st, ot, self.coupling == "joint"))
        sl = st[live]
        ks = np.arange(d.K)
        # gathered per atomic (s, s') and (s', omega) entry: (live, S, K, P) and (S, W, K, P)
        TG = Tt[ks[None, None, :], sl[:, None, :], st[None, :, :]]
        OG = Ot[ks[None, None, :], st[:, None, :], ot[None, :, :]]
        if self.coupling == "joint":
            P = np.einsum("i,ip,isp,swp->sw", bl, W, TG.prod(axis=2), OG.prod(axis=2), optimize=True)
            return Prediction(P)
        ET = np.einsum("ip,iskp->isk", W, TG).prod(axis=2)            # (live, S)
        EO = np.einsum("ip,swkp->iswk", W, OG).prod(axis=3)           # (live, S, W)
        P = np.einsum("i,is,isw->sw", bl, ET, EO)
        return Prediction(P)

    def expected_reward(self, b: FactoredBelief, a0: int) -> float:
        d = self.domain
        st = d.state_table
        live, W = self._joint_weights(b)
        R = self._tables.get(("R", a0))
        if R is None:
            R = np.zeros((st.shape[0], len(self.profiles)))
            for k, X in enumerate(d.states.sizes):
                R += self._table("reward", a0, k, (X,))[st[:, k]]
            self._tables[("R", a0)] = R
        return float(b.state[live] @ np.einsum("ia,ia->i", W, R[live]))

    def expected_rewards(self, b: FactoredBelief) -> np.ndarray:
        nA = len(self.domain.actions0)
        R = self._tables.get("R*")
        if R is None:
            for a in range(nA):
                self.expected_reward(b, a)
            R = self._tables["R*"] = np.stack([self._tables[("R", a)] for a in range(nA)])
        live, W = self._joint_weights(b)
        return np.einsum("ia,cia->c", b.state[live][:, None] * W, R[:, live])

    # model update -------------------------------------------------------------------------------

    def update_models(self, b: FactoredBelief, a0: int, support: np.ndarray) -> tuple:
        d = self.domain
        pop = d.population
        st = d.state_table
        live = np.flatnonzero(b.state > 0)
        rows = self._agent_rows(b)
        per_agent = []
        for j in range(pop.N):
            fsc = self.fscs[j]
            frame = self.frames[j]
            fot = d.frame_obs_tables[frame]
            others = [i for i in range(pop.N) if i != j]
            Wm, _ = self._weights(rows, others, live)                     # (live, A_-j)
            if self.compiled:
                acc = kernels.naive_model_update(
                    b.state[live], rows[j][live], fsc.action_dist, Wm, self._stacked_frame(j, a0),
                    fsc.node_transition, st, fot, support, self.coupling == "joint")
                per_agent.append(_normalize_rows(acc, support, j))
                continue
            OJt = self._stacked_frame(j, a0)                               # (K, A_j, X, O, A_-j)
            ks = np.arange(d.K)
            OG = OJt[ks[None, None, :], :, st[:, None, :], fot[None, :, :]]  # (S', Om_j, K, A_j, A_-j)
            if self.coupling == "joint":
                Y = np.einsum("ip,twap->iatw", Wm, OG.prod(axis=2))
            else:
                Y = np.einsum("ip,twkap->iatwk", Wm, OG).prod(axis=4)
            A = (b.state[live][:, None] * rows[j][live])[:, :, None] * fsc.action_dist[None]   # (live, M, A_j)
            G = np.einsum("ima,iatw->matw", A, Y)
            acc = np.einsum("matw,mawn->tn", G, fsc.node_transition)
            per_agent.append(_normalize_rows(acc, support, j))
        out = []
        for members in pop.members:
            out.append(np.stack([per_agent[j] for j in members]))
        return tuple(out)


# -- functional API ---------------------------------------------------------------------


def engine(domain: Domain, kind: str = "structured", coupling: str = "factored", **kw) -> _Engine:
    """Engine cached on the domain object (one per kind/coupling)."""
    store = domain.__dict__.setdefault("_engines", {})
    key = (kind, coupling, tuple(sorted(kw.items())))
    if key not in store:
        cls = StructuredEngine if kind == "structured" else NaiveEngine
        store[key] = cls(domain, coupling, **kw)
    return store[key]


def update_state(b, a0, obs, domain, coupling="factored") -> np.ndarray:
    return engine(domain, "structured", coupling).state_posterior(b, a0, obs)


def update_models(b, a0, domain, coupling="factored") -> tuple:
    """Next-step model rows for every reachable successor state."""
    return engine(domain, "structured", coupling).next_models(b, a0)


def belief_update(b, a0, obs, domain, coupling="factored") -> FactoredBelief:
    return engine(domain, "structured", coupling).posterior(b, a0, obs)


def obs_likelihood(b, a0, obs, domain, coupling="factored") -> float:
    return float(engine(domain, "structured", coupling).likelihoods(b, a0)[obs])


def expected_reward(b, a0, domain) -> float:
    return engine(domain, "structured").expected_reward(b, a0)


def naive_update_state(b, a0, obs, domain, coupling="factored") -> np.ndarray:
    return engine(domain, "naive", coupling).state_posterior(b, a0, obs)


def naive_update_model(b, a0, obs, j, domain, coupling="factored") -> np.ndarray:
    """(|S|, |M_j|) posterior node distribution of agent j."""
    post = engine(domain, "naive", coupling).posterior(b, a0, obs)
    return post.model_dist(domain.population, j)


def naive_expected_reward(b, a0, domain) -> float:
    return engine(domain, "naive").expected_reward(b, a0)


# -- text dump ----------------------------------------------------------------------------


def dump_belief(b: FactoredBelief, population) -> str:
    """``state-index probability`` lines, then ``j state-index node probability``."""
    lines = [f"{s} {p:.17g}" for s, p in enumerate(b.state)]
    for j in range(population.N):
        rows = b.model_dist(population, j)
        for s in range(rows.shape[0]):
            for m, p in enumerate(rows[s]):
                lines.append(f"{j} {s} {m} {p:.17g}")
    return "\n".join(lines) + "\n"


def load_belief(text: str, population, n_states: int, n_nodes: Sequence[int]) -> FactoredBelief:
    """Inverse of :func:`dump_belief` (``n_nodes`` per group)."""
    state = np.zeros(n_states)
    models = [np.zeros((len(m), n_states, n_nodes[g])) for g, m in enumerate(population.members)]
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        try:
            if len(parts) == 2:
                state[int(parts[0])] = float(parts[1])
            elif len(parts) == 4:
                j, s, m = map(int, parts[:3])
                g = population.group_of[j]
                models[g][population.position[j], s, m] = float(parts[3])
            elif parts:
                raise ValueError("expected 2 or 4 fields")
        except (ValueError, IndexError) as exc:
            raise ValidationError(f"belief dump line {lineno}: {exc}") from None
    return FactoredBelief(state, tuple(models))
