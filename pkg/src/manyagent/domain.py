"""The planning problem of agent 0: spaces, population, hypergraphs and the
configuration-keyed transition, observation and reward rules."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .configurations import config_count, enumerate_configs, project_profiles
from .errors import ValidationError
from .hypergraph import FrameActionHypergraph, Neighborhood, validate_anonymity
from .population import FSC, AgentPopulation, Frame, ProductSpace, Violation, validate_population
from .rules import RuleBook

ROW_TOL = 1e-12


@dataclass(eq=False)
class Domain:
    """Agent 0's many-agent planning problem.

    Observations of agent 0 and of every frame are factored into one
    component per state factor.  Rule books are keyed by integer payloads:
    ``transition[(k, x, a0, x2)]``, ``observation[(k, x2, a0, o)]``,
    ``reward[(k, x, a0)]`` and ``frame_observation[f][(k, x2, aj, o)]``.
    """

    states: ProductSpace
    actions0: tuple[str, ...]
    obs0: ProductSpace
    frames: dict[str, Frame]
    fscs: dict[str, FSC]
    population: AgentPopulation
    graphs: dict[str, FrameActionHypergraph]
    transition: RuleBook
    observation: RuleBook
    reward: RuleBook
    frame_observation: dict[str, RuleBook]
    initial_state: np.ndarray
    initial_models: dict[str, np.ndarray]
    frame0: str = "agent0"
    name: str = "domain"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.initial_state = np.asarray(self.initial_state, dtype=float)
        self.initial_models = {k: np.asarray(v, dtype=float) for k, v in self.initial_models.items()}
        if self.obs0.n_factors != self.states.n_factors:
            raise ValidationError("agent 0 needs one observation component per state factor")
        for f in self.frames.values():
            if f.observations.n_factors != self.states.n_factors:
                raise ValidationError(f"frame {f.id} needs one observation component per state factor")
        if self.frame0 in self.frames:
            raise ValidationError(f"agent 0 frame id {self.frame0!r} clashes with another frame")

    # -- sizes and lookup tables ------------------------------------------------

    @property
    def N(self) -> int:
        return self.population.N

    @property
    def K(self) -> int:
        return self.states.n_factors

    @cached_property
    def state_table(self) -> np.ndarray:
        return self.states.table()

    @cached_property
    def obs_table(self) -> np.ndarray:
        return self.obs0.table()

    @cached_property
    def frame_obs_tables(self) -> dict[str, np.ndarray]:
        return {f: fr.observations.table() for f, fr in self.frames.items()}

    @property
    def agent_frames(self) -> list[str]:
        return [f for f, _ in self.population.assignments]

    @cached_property
    def action_counts(self) -> dict[str, int]:
        counts = {f: len(fr.actions) for f, fr in self.frames.items()}
        counts[self.frame0] = len(self.actions0)
        return counts

    def frame_graph(self, frame: str) -> FrameActionHypergraph:
        return self.graphs[f"frame_observation:{frame}"]

    def nu_transition(self, k, x, a0, x2) -> Neighborhood:
        return self.graphs["transition"].neighborhood((k, x, a0, x2))

    def nu_observation(self, k, x2, a0, o) -> Neighborhood:
        return self.graphs["observation"].neighborhood((k, x2, a0, o))

    def nu_reward(self, k, x, a0) -> Neighborhood:
        return self.graphs["reward"].neighborhood((k, x, a0))

    @cached_property
    def _union_by_action(self) -> dict:
        out = {}
        for a0 in range(len(self.actions0)):
            nus = [n for c, n in self.graphs["transition"].index.items() if c[2] == a0]
            nus += [n for c, n in self.graphs["observation"].index.items() if c[2] == a0]
            out[a0] = Neighborhood().union(*nus)
        return out

    def union_nu(self, a0: int) -> Neighborhood:
        """Every pair any transition or observation context under ``a0`` uses."""
        return self._union_by_action[a0]

    @cached_property
    def _frame_union(self) -> dict:
        out = {}
        for f, fr in self.frames.items():
            g = self.frame_graph(f)
            for aj in range(len(fr.actions)):
                nus = [n for c, n in g.index.items() if c[2] == aj]
                out[(f, aj)] = Neighborhood().union(*nus)
        return out

    def frame_union_nu(self, frame: str, aj: int) -> Neighborhood:
        return self._frame_union[(frame, aj)]

    def max_nu(self) -> int:
        return max(g.max_degree() for g in self.graphs.values())

    # -- validation -------------------------------------------------------------

    def validate(self, row_check_limit: int = 200_000) -> list[Violation]:
        """Population, hypergraph coverage and rule-row normalization problems."""
        report = validate_population(self.population, self.frames, self.fscs)
        S = self.states.size
        if self.initial_state.shape != (S,) or abs(self.initial_state.sum() - 1) > 1e-9 or np.any(self.initial_state < 0):
            report.append(Violation("initial_belief.state", "must be a distribution over all joint states"))
        for fsc_id in {c for _, c in self.population.assignments}:
            b = self.initial_models.get(fsc_id)
            fsc = self.fscs.get(fsc_id)
            if fsc is None:
                continue
            if b is None or b.shape != (fsc.n_nodes,) or abs(b.sum() - 1) > 1e-9 or np.any(b < 0):
                report.append(Violation(f"initial_belief.models.{fsc_id}", "must be a distribution over the fsc nodes"))
        for kind in ("transition", "observation", "reward"):
            book = getattr(self, kind)
            for ctx in self.graphs[kind].contexts():
                if ctx not in book:
                    report.append(Violation(f"dynamics.{kind}", f"no rules for context {ctx}"))
                    break
        for f in self.frames:
            book = self.frame_observation.get(f)
            if book is None:
                report.append(Violation(f"dynamics.frame_observation.{f}", "missing"))
                continue
            for ctx in self.frame_graph(f).contexts():
                if ctx not in book:
                    report.append(Violation(f"dynamics.frame_observation.{f}", f"no rules for context {ctx}"))
                    break
        if report:
            return report
        for kind, book in self._rule_books():
            g = self.graphs[kind if kind in self.graphs else f"frame_observation:{kind.split(':')[1]}"]
            for ctx, rs in book.items():
                missing = rs.referenced_pairs() - set(g.neighborhood(ctx).pairs)
                if missing:
                    report.append(Violation(f"dynamics.{kind}", f"context {ctx} rules reference {sorted(missing)} outside its neighborhood"))
        if not report:
            report.extend(self._row_sums(row_check_limit))
        return report

    def _rule_books(self):
        yield "transition", self.transition
        yield "observation", self.observation
        yield "reward", self.reward
        for f, book in self.frame_observation.items():
            yield f"frame_observation:{f}", book

    def _row_sums(self, limit: int) -> list[Violation]:
        """Rows must sum to one for every configuration of the union
        neighborhood of the row (skipped when that enumeration is too big)."""
        out = []
        N = self.N
        for k, X in enumerate(self.states.sizes):
            for a0 in range(len(self.actions0)):
                for x in range(X):
                    ctxs = [(k, x, a0, x2) for x2 in range(X)]
                    out += self._check_row("transition", self.graphs["transition"], self.transition, ctxs, N, limit)
                for x2 in range(X):
                    ctxs = [(k, x2, a0, o) for o in range(self.obs0.sizes[k])]
                    out += self._check_row("observation", self.graphs["observation"], self.observation, ctxs, N, limit)
        for f, fr in self.frames.items():
            g = self.frame_graph(f)
            for k, X in enumerate(self.states.sizes):
                for aj in range(len(fr.actions)):
                    for x2 in range(X):
                        ctxs = [(k, x2, aj, o) for o in range(fr.observations.sizes[k])]
                        out += self._check_row(f"frame_observation:{f}", g, self.frame_observation[f], ctxs, N, limit)
        return out

    @staticmethod
    def _check_row(kind, graph, book, ctxs, n_agents, limit):
        nus = [graph.neighborhood(c) for c in ctxs]
        union = Neighborhood().union(*nus)
        if config_count(n_agents, len(union)) > limit:
            return []
        configs = np.array(enumerate_configs(union, n_agents), dtype=np.int64)
        total = np.zeros(len(configs))
        for c, nu in zip(ctxs, nus):
            sub = np.empty((len(configs), len(nu) + 1), dtype=np.int64)
            cols = nu.columns_in(union)
            sub[:, : len(nu)] = configs[:, cols]
            sub[:, len(nu)] = n_agents - sub[:, : len(nu)].sum(axis=1)
            vals = book[c].evaluate(nu, sub)
            if np.any(vals < 0):
                return [Violation(f"dynamics.{kind}", f"negative probability in context {c}")]
            total += vals
        bad = np.flatnonzero(np.abs(total - 1.0) > ROW_TOL)
        if len(bad):
            return [Violation(f"dynamics.{kind}", f"row {ctxs[0][:3]} sums to {float(total[bad[0]])!r} at configuration {configs[bad[0]].tolist()}")]
        return []

    def check(self) -> "Domain":
        problems = self.validate()
        if problems:
            raise ValidationError("; ".join(str(p) for p in problems[:10]))
        return self

    # -- joint-action views (small populations only) -------------------------------

    def joint_value(self, kind: str, ctx, profile, agent: int | None = None) -> float:
        """Function value under a full joint action of the other agents.

        For ``frame_observation`` pass the observing ``agent``; the profile
        then lists the actions of every other agent in index order,
        followed by agent 0's action.
        """
        if kind == "frame_observation":
            if agent is None:
                raise ValidationError("frame_observation values need the observing agent")
            frame = self.agent_frames[agent]
            g, book = self.frame_graph(frame), self.frame_observation[frame]
            frames = [f for i, f in enumerate(self.agent_frames) if i != agent] + [self.frame0]
        else:
            g, book = self.graphs[kind], getattr(self, kind)
            frames = self.agent_frames
        nu = g.neighborhood(ctx)
        counts = project_profiles(np.asarray([profile], dtype=np.int64).reshape(1, -1), frames, nu)
        return float(book[ctx].evaluate(nu, counts)[0])

    def anonymity_report(self, kinds=("transition", "observation", "reward", "frame_observation"),
                         joint_fn=None):
        """Exhaustive frame-action anonymity check of the rule books against a
        joint-action oracle ``joint_fn(kind, ctx, profile, agent)`` (by
        default the rules themselves expanded to joint actions).

        Frame observation functions are checked once per frame, from the
        first agent holding it, with agent 0's action as the last profile
        entry.
        """
        from .hypergraph import AnonymityReport

        joint_fn = joint_fn or self.joint_value
        total = AnonymityReport(True, 0)
        jobs = []
        for kind in kinds:
            if kind == "frame_observation":
                for f in self.frames:
                    if f not in self.agent_frames:
                        continue
                    j = self.agent_frames.index(f)
                    others = [g for i, g in enumerate(self.agent_frames) if i != j] + [self.frame0]
                    jobs.append((kind, self.frame_graph(f), self.frame_observation[f], others, j))
            else:
                jobs.append((kind, self.graphs[kind], getattr(self, kind), self.agent_frames, None))
        for kind, g, book, frames_of, j in jobs:
            rep = validate_anonymity(
                lambda ctx, prof, _k=kind, _j=j: joint_fn(_k, ctx, prof, _j),
                g,
                lambda ctx, counts, _g=g, _b=book: _b[ctx].evaluate(_g.neighborhood(ctx), counts),
                frames_of,
                self.action_counts,
            )
            total.ok &= rep.ok
            total.checked += rep.checked
            total.counterexamples += rep.counterexamples
        return total
