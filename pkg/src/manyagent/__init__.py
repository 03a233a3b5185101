"""Many-agent interactive POMDP planning with frame-action configurations."""
from .belief import (FactoredBelief, NaiveEngine, StructuredEngine, belief_update, dump_belief,
                     expected_reward, initial_belief, naive_expected_reward, naive_update_model,
                     naive_update_state, obs_likelihood, update_models, update_state)
from .configurations import (ConfigDist, ConfigTrie, config_count, config_distribution,
                             config_distribution_for_agent, config_trie, enumerate_configs, project)
from .domain import Domain
from .errors import GuardExceeded, ValidationError, ZeroProbabilityEvidence
from .io import load_domain, save_domain, structurally_equal
from .hypergraph import FrameActionHypergraph, Neighborhood, neighborhood, validate_anonymity
from .planner import Policy, ReachabilityNode, backup, naive_solve, solve_exact, solve_sampled
from .population import (FSC, AgentPopulation, Frame, PlanNode, ProductSpace, fsc_action_dist,
                         fsc_step_dist, policy_to_fsc, validate_population)
from .protest import ProtestParams, build_domain

__version__ = "0.1.0"
