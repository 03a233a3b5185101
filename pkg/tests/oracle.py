"""Brute-force reference computations by explicit joint enumeration.

Nothing here touches the engines: every function value comes from
``Domain.joint_value`` on a full joint action, and every sum is a Python
loop over joint models and joint actions.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


class Oracle:
    def __init__(self, domain, coupling="factored"):
        self.d = domain
        self.coupling = coupling
        pop = domain.population
        self.N = pop.N
        self.fscs = [domain.fscs[c] for _, c in pop.assignments]
        self.st = domain.state_table
        self.ot = domain.obs_table
        self.jv = lru_cache(maxsize=None)(self._jv)

    def _jv(self, kind, ctx, profile, agent=None):
        return self.d.joint_value(kind, ctx, profile, agent)

    def joint(self, b, s, agents):
        """{profile: Pr(profile | s)} over the listed agents' models and actions."""
        out = {}
        per = []
        for j in agents:
            rows = b.model_dist(self.d.population, j)[s]
            ad = self.fscs[j].action_dist
            per.append([(a, rows[m] * ad[m, a]) for m in range(len(rows)) for a in range(ad.shape[1])])
        for combo in itertools.product(*per):
            p = 1.0
            for _, w in combo:
                p *= w
            prof = tuple(a for a, _ in combo)
            out[prof] = out.get(prof, 0.0) + p
        return out

    def _to(self, s, s2, w, a0, prof):
        v = 1.0
        for k in range(self.d.K):
            x, x2, o = self.st[s, k], self.st[s2, k], self.ot[w, k]
            v *= self.jv("transition", (k, int(x), a0, int(x2)), prof)
            v *= self.jv("observation", (k, int(x2), a0, int(o)), prof)
        return v

    def predict(self, b, a0):
        """Unnormalized Pr(s', omega | b, a0)."""
        S, W = self.d.states.size, self.d.obs0.size
        P = np.zeros((S, W))
        everyone = list(range(self.N))
        for s in range(S):
            if b.state[s] == 0:
                continue
            jd = self.joint(b, s, everyone)
            for s2 in range(S):
                for w in range(W):
                    if self.coupling == "joint":
                        v = sum(p * self._to(s, s2, w, a0, prof) for prof, p in jd.items())
                    else:
                        # separate expectations per factor for T and for O, one shared s sum
                        v = 1.0
                        for k in range(self.d.K):
                            x, x2, o = (int(self.st[s, k]), int(self.st[s2, k]), int(self.ot[w, k]))
                            v *= sum(p * self.jv("transition", (k, x, a0, x2), prof) for prof, p in jd.items())
                            v *= sum(p * self.jv("observation", (k, x2, a0, o), prof) for prof, p in jd.items())
                    P[s2, w] += b.state[s] * v
        return P

    def state_update(self, b, a0, w):
        col = self.predict(b, a0)[:, w]
        return col / col.sum()

    def model_update(self, b, a0, j, support):
        """(S', M_j) posterior node rows of agent j on ``support``."""
        d = self.d
        S = d.states.size
        fsc = self.fscs[j]
        frame = d.population.frame_of(j)
        fot = d.frame_obs_tables[frame]
        others = [i for i in range(self.N) if i != j]
        M, A = fsc.action_dist.shape
        acc = np.zeros((S, M))
        for s in range(S):
            if b.state[s] == 0:
                continue
            jd = self.joint(b, s, others)
            rows = b.model_dist(d.population, j)[s]
            for m, a in itertools.product(range(M), range(A)):
                wgt = b.state[s] * rows[m] * fsc.action_dist[m, a]
                if wgt == 0:
                    continue
                for s2 in range(S):
                    if not support[s2]:
                        continue
                    for w in range(fot.shape[0]):
                        def o_j(prof, k):
                            ctx = (k, int(self.st[s2, k]), a, int(fot[w, k]))
                            return self.jv("frame_observation", ctx, prof + (a0,), j)
                        if self.coupling == "joint":
                            y = sum(p * np.prod([o_j(prof, k) for k in range(d.K)]) for prof, p in jd.items())
                        else:
                            y = np.prod([sum(p * o_j(prof, k) for prof, p in jd.items()) for k in range(d.K)])
                        acc[s2] += wgt * y * fsc.node_transition[m, a, w]
        out = np.full((S, M), np.nan)
        out[support] = acc[support] / acc[support].sum(axis=1, keepdims=True)
        return out

    def expected_reward(self, b, a0):
        total = 0.0
        for s in range(self.d.states.size):
            if b.state[s] == 0:
                continue
            for prof, p in self.joint(b, s, list(range(self.N))).items():
                r = sum(self.jv("reward", (k, int(self.st[s, k]), a0), prof) for k in range(self.d.K))
                total += b.state[s] * p * r
        return total

    def posterior(self, b, a0, w):
        from manyagent.belief import FactoredBelief

        P = self.predict(b, a0)
        state = P[:, w] / P[:, w].sum()
        support = P.sum(axis=1) > 0
        pop = self.d.population
        models = []
        for g, members in enumerate(pop.members):
            rows = np.stack([self.model_update(b, a0, j, support) for j in members])
            rows[:, state <= 0, :] = 1.0 / rows.shape[2]
            models.append(rows)
        return FactoredBelief(state, tuple(models), state <= 0)

    def value(self, b, horizon, gamma):
        """(V, Q) by plain recursion over every action and observation."""
        nA = len(self.d.actions0)
        if horizon == 0:
            return 0.0, np.zeros(nA)
        q = np.array([self.expected_reward(b, a) for a in range(nA)])
        if horizon > 1 and gamma:
            for a in range(nA):
                lik = self.predict(b, a).sum(axis=0)
                for w, p in enumerate(lik):
                    if p > 0:
                        q[a] += gamma * p * self.value(self.posterior(b, a, w), horizon - 1, gamma)[0]
        return float(q.max()), q
