import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from instances import isolated_domain, random_domain
from manyagent import (GuardExceeded, Policy, ReachabilityNode, ValidationError, backup, build_domain,
                       initial_belief, naive_solve, solve_exact, solve_sampled)
from manyagent.planner import ContractError
from oracle import Oracle

T2 = np.array([[[0.7, 0.3], [0.1, 0.9]], [[0.4, 0.6], [0.5, 0.5]]])
O2 = np.array([[[0.8, 0.2], [0.6, 0.4]], [[0.3, 0.7], [0.25, 0.75]]])
R2 = np.array([[1.0, -2.0], [0.5, 3.0]])


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 2))
def test_matches_recursive_oracle(seed, horizon):
    d = random_domain(seed, n_agents=int(seed % 2) + 1)
    v, q = Oracle(d).value(initial_belief(d), horizon, 0.9)
    res = solve_exact(None, horizon, 0.9, d)
    assert res.value == pytest.approx(v, abs=1e-9)
    # root action is the lowest index among the maximisers
    best = int(np.flatnonzero(q >= q.max() - 1e-12)[0])
    assert res.policy.action(()) == d.actions0[best]


def test_horizon_zero():
    res = solve_exact(None, 0, 0.9, build_domain(n=2))
    assert res.value == 0.0 and res.policy.plan == {}


def test_horizon_one_is_max_reward():
    d = isolated_domain(T2, O2, R2, n_agents=2)
    res = solve_exact(None, 1, 0.9, d)
    assert res.value == pytest.approx(max(0.5 * (1.0 + 0.5), 0.5 * (-2.0 + 3.0)))
    assert res.policy.action(()) == "a0"


def test_gamma_zero_is_myopic():
    d = random_domain(11, n_agents=2)
    assert solve_exact(None, 3, 0.0, d).value == pytest.approx(solve_exact(None, 1, 0.9, d).value, abs=1e-12)


def test_ties_go_to_lowest_index():
    d = isolated_domain(T2, O2, np.full((2, 2), 1.0))
    res = solve_exact(None, 2, 0.5, d)
    assert set(res.policy.plan.values()) == {"a0"}
    assert res.value == pytest.approx(1.5)


def test_backup_contract():
    b = initial_belief(isolated_domain(T2, O2, R2))
    node = ReachabilityNode(b, 0, 2)
    with pytest.raises(ContractError):
        backup(node, 0.9)
    node.er = np.array([1.0, 2.0])
    node.children[(0, 0)] = ReachabilityNode(b, 1, 1)
    node.obs_weight[(0, 0)] = 1.0
    with pytest.raises(ContractError):
        backup(node, 0.9)
    node.children[(0, 0)].value = 5.0
    assert backup(node, 0.9) == pytest.approx(5.5)
    assert node.best_action == 0
    assert backup(ReachabilityNode(b, 0, 0), 0.9) == 0.0


def test_bad_arguments():
    d = build_domain(n=2)
    with pytest.raises(ValidationError):
        solve_exact(None, -1, 0.9, d)
    with pytest.raises(ValidationError):
        solve_exact(None, 2, 1.5, d)
    with pytest.raises(ValidationError):
        solve_sampled(None, 2, 0.9, 0, 0, d)


def test_node_guard():
    with pytest.raises(GuardExceeded):
        solve_exact(None, 9, 0.9, build_domain(n=2))


def test_policy_text_round_trip():
    d = random_domain(5, n_agents=2)
    pol = solve_exact(None, 3, 0.9, d).policy
    back = Policy.loads(pol.dumps(), pol.actions, pol.observations)
    assert back == pol
    for hist in pol.plan:
        assert back.action(hist) == pol.action(hist)
    with pytest.raises(ValidationError, match="line 2"):
        Policy.loads("horizon 2\nbogus 1\n")
    with pytest.raises(ValidationError):
        pol.action(("x",) * 3)


def test_policy_defaults_cover_missing_histories():
    d = build_domain(n=2)
    pol = solve_sampled(None, 3, 0.9, 1, 0, d).policy
    labels = d.obs0.labels()
    missing = next(f"{a}/{b}" for a in labels for b in labels if f"{a}/{b}" not in pol.plan)
    assert pol.action(missing) == pol.defaults[2]


def test_naive_and_structured_agree():
    for seed in range(5):
        d = random_domain(seed, n_agents=3)
        s, n = solve_exact(None, 2, 0.9, d), naive_solve(None, 2, 0.9, d)
        assert abs(s.value - n.value) <= 1e-9
        assert s.policy == n.policy


class TestSampling:
    def test_deterministic_per_seed(self):
        d = build_domain(n=3)
        a, b = solve_sampled(None, 3, 0.9, 3, 42, d), solve_sampled(None, 3, 0.9, 3, 42, d)
        assert a.value == b.value and a.policy == b.policy
        others = {solve_sampled(None, 3, 0.9, 3, s, d).value for s in range(5)}
        assert len(others) > 1

    @pytest.mark.parametrize("seed", range(4))
    def test_exhaustive_is_exact(self, seed):
        d = random_domain(seed, n_agents=2)
        a = solve_sampled(None, 2, 0.9, 1, 0, d, exhaustive=True)
        b = solve_exact(None, 2, 0.9, d)
        assert a.value == b.value and a.policy == b.policy

    def test_error_shrinks_with_samples(self):
        d = build_domain(n=3)
        exact = solve_exact(None, 2, 0.9, d).value
        err = {k: np.mean([abs(solve_sampled(None, 2, 0.9, k, s, d).value - exact) for s in range(20)])
               for k in (1, 16, 256)}
        assert err[256] < err[16] < err[1]
