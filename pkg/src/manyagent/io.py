"""JSON domain files.

Layout (all indices are zero-based integers)::

    state_factors   [{"name", "values"}]
    agent0          {"frame", "actions", "observations": [{"name", "values"}]}
    frames          {id: {"actions", "observations", "fsc_pool",
                          "fscs": {id: {"nodes", "action_dist", "node_transition"}}}}
    population      {"N", "assignments": [[frame, fsc, count], ...]}   # run-length
    hypergraphs     {"transition" | "observation" | "reward": [[context, action, frame]],
                     "frame_observation": {frame: [[context, action, frame]]}}
    dynamics        {"transition" | "observation": [{"context", "rules"}],
                     "frame_observation": {frame: [{"context", "rules"}]}}
    reward          [{"context", "rules"}]
    initial_belief  {"state": [...], "models": {fsc: [...]}}

A rule is ``{"when": [predicate], "value": v}``; a predicate is
``{"terms": [{"slot": [frame, action] | "phi", "weight": w}], "op": "lt" | "ge",
"threshold": fraction}``.
"""
from __future__ import annotations

import itertools
import json
from pathlib import Path

import numpy as np

from .domain import Domain
from .errors import ValidationError
from .hypergraph import FrameActionHypergraph
from .population import FSC, AgentPopulation, Frame, ProductSpace
from .rules import PHI, Predicate, Rule, RuleBook, RuleSet

FORMAT = "manyagent-domain/1"
TOP_KEYS = ("state_factors", "agent0", "frames", "population", "hypergraphs", "dynamics", "reward",
            "initial_belief")
GRAPH_KINDS = ("transition", "observation", "reward", "frame_observation")


# -- writing ------------------------------------------------------------------------


def _space(ps: ProductSpace) -> list:
    return [{"name": n, "values": list(d)} for n, d in zip(ps.names, ps.domains)]


def _ruleset(rs: RuleSet) -> list:
    out = []
    for r in rs.rules:
        when = [{"terms": [{"slot": PHI if s == PHI else [s[0], int(s[1])], "weight": w} for s, w in p.terms],
                 "op": p.op, "threshold": p.threshold} for p in r.when]
        out.append({"when": when, "value": r.value})
    return out


def _book(book: RuleBook) -> list:
    return [{"context": list(ctx), "rules": _ruleset(rs)} for ctx, rs in sorted(book.items())]


def _edges(g: FrameActionHypergraph) -> list:
    return [[list(c), a, f] for c, a, f in sorted(g.edges)]


def domain_to_dict(d: Domain) -> dict:
    runs = [[f, c, len(list(grp))] for (f, c), grp in itertools.groupby(d.population.assignments)]
    frames = {}
    for fid, fr in d.frames.items():
        own = {cid: f for cid, f in d.fscs.items() if f.frame == fid}
        frames[fid] = {
            "actions": list(fr.actions),
            "observations": _space(fr.observations),
            "fsc_pool": list(fr.fsc_pool),
            "fscs": {cid: {"nodes": list(f.node_names), "action_dist": f.action_dist.tolist(),
                           "node_transition": f.node_transition.tolist()} for cid, f in own.items()},
        }
    return {
        "format": FORMAT,
        "name": d.name,
        "state_factors": _space(d.states),
        "agent0": {"frame": d.frame0, "actions": list(d.actions0), "observations": _space(d.obs0)},
        "frames": frames,
        "population": {"N": d.N, "assignments": runs},
        "hypergraphs": {
            **{k: _edges(d.graphs[k]) for k in ("transition", "observation", "reward")},
            "frame_observation": {f: _edges(d.frame_graph(f)) for f in d.frames},
        },
        "dynamics": {
            "transition": _book(d.transition),
            "observation": _book(d.observation),
            "frame_observation": {f: _book(b) for f, b in d.frame_observation.items()},
        },
        "reward": _book(d.reward),
        "initial_belief": {"state": d.initial_state.tolist(),
                           "models": {c: v.tolist() for c, v in d.initial_models.items()}},
    }


def save_domain(d: Domain, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(domain_to_dict(d), indent=1), encoding="utf-8")
    return path


# -- reading ------------------------------------------------------------------------


class _Reader:
    """Field access that reports dotted locations on failure."""

    def need(self, obj, key, where, kind=None):
        if not isinstance(obj, dict):
            raise ValidationError(f"{where}: expected an object")
        if key not in obj:
            raise ValidationError(f"{where}: missing field {key!r}")
        val = obj[key]
        if kind is not None and not isinstance(val, kind):
            raise ValidationError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
        return val

    def space(self, raw, where) -> ProductSpace:
        if not isinstance(raw, list) or not raw:
            raise ValidationError(f"{where}: expected a non-empty list of factors")
        try:
            return ProductSpace(tuple(str(self.need(f, "name", f"{where}[{i}]")) for i, f in enumerate(raw)),
                                tuple(tuple(str(v) for v in self.need(f, "values", f"{where}[{i}]", list))
                                      for i, f in enumerate(raw)))
        except ValidationError as exc:
            if str(exc).startswith(where):
                raise
            raise ValidationError(f"{where}: {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{where}: {exc}") from None

    def ruleset(self, raw, where) -> RuleSet:
        if not isinstance(raw, list) or not raw:
            raise ValidationError(f"{where}: expected a non-empty rule list")
        rules = []
        for i, r in enumerate(raw):
            w = f"{where}[{i}]"
            preds = []
            for j, p in enumerate(self.need(r, "when", w, list)):
                pw = f"{w}.when[{j}]"
                terms = []
                for t in self.need(p, "terms", pw, list):
                    slot = self.need(t, "slot", pw)
                    slot = PHI if slot == PHI else (str(slot[0]), int(slot[1]))
                    terms.append((slot, float(self.need(t, "weight", pw))))
                try:
                    preds.append(Predicate(tuple(terms), self.need(p, "op", pw),
                                           float(self.need(p, "threshold", pw))))
                except ValidationError as exc:
                    raise ValidationError(f"{pw}: {exc}") from None
            rules.append(Rule(tuple(preds), float(self.need(r, "value", w))))
        return RuleSet(tuple(rules))

    def book(self, kind, raw, where) -> RuleBook:
        if not isinstance(raw, list):
            raise ValidationError(f"{where}: expected a list of context entries")
        table = {}
        for i, e in enumerate(raw):
            w = f"{where}[{i}]"
            ctx = tuple(int(v) for v in self.need(e, "context", w, list))
            if ctx in table:
                raise ValidationError(f"{w}: duplicate context {ctx}")
            table[ctx] = self.ruleset(self.need(e, "rules", w), f"{w}.rules")
        return RuleBook(kind, table)

    def graph(self, kind, raw, where, shape, counts, owner) -> FrameActionHypergraph:
        if not isinstance(raw, list):
            raise ValidationError(f"{where}: expected a list of [context, action, frame] edges")
        edges = []
        for i, e in enumerate(raw):
            if not (isinstance(e, list) and len(e) == 3 and isinstance(e[0], list)):
                raise ValidationError(f"{where}[{i}]: expected [context, action, frame]")
            edges.append((tuple(int(v) for v in e[0]), int(e[1]), str(e[2])))
        try:
            return FrameActionHypergraph(kind, shape, counts, frozenset(edges), owner)
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None


def domain_from_dict(raw: dict, validate: bool = True) -> Domain:
    r = _Reader()
    if not isinstance(raw, dict):
        raise ValidationError("domain file: top level must be an object")
    for key in TOP_KEYS:
        if key not in raw:
            raise ValidationError(f"domain file: missing section {key!r}")
    if raw.get("format", FORMAT) != FORMAT:
        raise ValidationError(f"domain file: format {raw['format']!r} is not {FORMAT!r}")
    states = r.space(raw["state_factors"], "state_factors")
    a0 = raw["agent0"]
    frame0 = str(a0.get("frame", "agent0")) if isinstance(a0, dict) else "agent0"
    actions0 = tuple(str(v) for v in r.need(a0, "actions", "agent0", list))
    obs0 = r.space(r.need(a0, "observations", "agent0"), "agent0.observations")

    frames, fscs = {}, {}
    for fid, fr in r.need(raw, "frames", "domain", dict).items():
        w = f"frames.{fid}"
        frames[fid] = Frame(fid, tuple(str(v) for v in r.need(fr, "actions", w, list)),
                            r.space(r.need(fr, "observations", w), f"{w}.observations"),
                            tuple(fr.get("fsc_pool", ())))
        for cid, c in r.need(fr, "fscs", w, dict).items():
            cw = f"{w}.fscs.{cid}"
            try:
                ad = np.asarray(r.need(c, "action_dist", cw), dtype=float)
                nt = np.asarray(r.need(c, "node_transition", cw), dtype=float)
            except ValueError as exc:
                raise ValidationError(f"{cw}: ragged or non-numeric array ({exc})") from None
            if cid in fscs:
                raise ValidationError(f"{cw}: fsc id already used by frame {fscs[cid].frame!r}")
            fscs[cid] = FSC(cid, fid, ad, nt, tuple(c.get("nodes", ())))

    pop_raw = raw["population"]
    assignments = []
    for i, run in enumerate(r.need(pop_raw, "assignments", "population", list)):
        if not (isinstance(run, list) and len(run) in (2, 3)):
            raise ValidationError(f"population.assignments[{i}]: expected [frame, fsc] or [frame, fsc, count]")
        assignments += [(str(run[0]), str(run[1]))] * (int(run[2]) if len(run) == 3 else 1)
    if "N" in pop_raw and int(pop_raw["N"]) != len(assignments):
        raise ValidationError(f"population.N is {pop_raw['N']} but the assignments list {len(assignments)} agents")
    population = AgentPopulation(tuple(assignments))

    # name the agents behind every malformed controller
    for cid, fsc in fscs.items():
        frame = frames.get(fsc.frame)
        problems = fsc.problems(frame)
        if problems:
            users = [j for j, (_, c) in enumerate(assignments) if c == cid]
            who = f"agents {users}" if users else "no agent"
            raise ValidationError(f"frames.{fsc.frame}.fscs.{cid} (used by {who}): {problems[0]}")

    counts = {f: len(fr.actions) for f, fr in frames.items()}
    counts[frame0] = len(actions0)
    X, A0 = states.sizes, len(actions0)
    shapes = {
        "transition": tuple((x, A0, x) for x in X),
        "observation": tuple((x, A0, o) for x, o in zip(X, obs0.sizes)),
        "reward": tuple((x, A0) for x in X),
    }
    hg = r.need(raw, "hypergraphs", "domain", dict)
    for kind in GRAPH_KINDS:
        if kind not in hg:
            raise ValidationError(f"hypergraphs: missing {kind!r} section")
    graphs = {k: r.graph(k, hg[k], f"hypergraphs.{k}", shapes[k], counts, frame0) for k in shapes}
    fo = hg["frame_observation"]
    for fid, fr in frames.items():
        if fid not in fo:
            raise ValidationError(f"hypergraphs.frame_observation: missing frame {fid!r}")
        shape = tuple((x, len(fr.actions), o) for x, o in zip(X, fr.observations.sizes))
        graphs[f"frame_observation:{fid}"] = r.graph("frame_observation", fo[fid],
                                                     f"hypergraphs.frame_observation.{fid}", shape, counts, fid)

    dyn = r.need(raw, "dynamics", "domain", dict)
    for kind in ("transition", "observation", "frame_observation"):
        if kind not in dyn:
            raise ValidationError(f"dynamics: missing {kind!r} section")
    fbooks = {}
    for fid in frames:
        if fid not in dyn["frame_observation"]:
            raise ValidationError(f"dynamics.frame_observation: missing frame {fid!r}")
        fbooks[fid] = r.book("frame_observation", dyn["frame_observation"][fid], f"dynamics.frame_observation.{fid}")

    init = raw["initial_belief"]
    d = Domain(
        states=states, actions0=actions0, obs0=obs0, frames=frames, fscs=fscs, population=population,
        graphs=graphs,
        transition=r.book("transition", dyn["transition"], "dynamics.transition"),
        observation=r.book("observation", dyn["observation"], "dynamics.observation"),
        reward=r.book("reward", raw["reward"], "reward"),
        frame_observation=fbooks,
        initial_state=np.asarray(r.need(init, "state", "initial_belief", list), dtype=float),
        initial_models={c: np.asarray(v, dtype=float)
                        for c, v in r.need(init, "models", "initial_belief", dict).items()},
        frame0=frame0, name=str(raw.get("name", "domain")),
    )
    return d.check() if validate else d


def load_domain(path, validate: bool = True) -> Domain:
    """Parse and fully validate a domain file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return domain_from_dict(raw, validate)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    except (TypeError, KeyError, AttributeError, IndexError) as exc:
        raise ValidationError(f"{path}: malformed field ({type(exc).__name__}: {exc})") from None


def structurally_equal(a: Domain, b: Domain) -> bool:
    """Same spaces, population, hypergraphs, rules and initial belief."""
    if a.states != b.states or a.obs0 != b.obs0 or a.actions0 != b.actions0 or a.frame0 != b.frame0:
        return False
    if a.frames != b.frames or a.population.assignments != b.population.assignments:
        return False
    if a.fscs.keys() != b.fscs.keys():
        return False
    for c in a.fscs:
        fa, fb = a.fscs[c], b.fscs[c]
        if (fa.frame, fa.node_names) != (fb.frame, fb.node_names) or not (
                np.array_equal(fa.action_dist, fb.action_dist) and np.array_equal(fa.node_transition, fb.node_transition)):
            return False
    if a.graphs.keys() != b.graphs.keys() or any(a.graphs[k].edges != b.graphs[k].edges for k in a.graphs):
        return False
    if (a.transition, a.observation, a.reward) != (b.transition, b.observation, b.reward):
        return False
    if a.frame_observation != b.frame_observation:
        return False
    if not np.array_equal(a.initial_state, b.initial_state):
        return False
    return a.initial_models.keys() == b.initial_models.keys() and all(
        np.array_equal(a.initial_models[c], b.initial_models[c]) for c in a.initial_models)
