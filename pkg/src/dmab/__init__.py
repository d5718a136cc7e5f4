"""Multi-armed bandits with computation and communication costs.

Single-player UCB4 and UCB1-L, the decentralized dUCB4 protocol with an
auction-based matching, i.i.d. and rested Markov arms, and evaluators for the
matching regret upper bounds.
"""

from .arms import IidArm, MarkovArm, chain_stats, sample_iid, step_markov, markov_grid_chains
from .bounds import (
    GapStats,
    MarkovConstants,
    UndefinedBound,
    bound_t1,
    bound_t2,
    bound_t3,
    bound_t4,
    bound_t5,
    bound_t6,
    bound_t7,
    gap_stats,
    markov_constants,
)
from .harness import SimConfig, emit_csv, load_config, parse_config, run_batch
from .matching import brute_force_matching, compute_bid, run_auction
from .policy import CostModel, IndexSpec, Schedule, compute_index, epsilon_argmax, run_ucb1_L, run_ucb4, schedule_value
from .protocol import DUCB4Params, initialization_rotation, interrupt_phase, negotiate, run_ducb4
from .trace import RegretTrace

__version__ = "0.1.0"
