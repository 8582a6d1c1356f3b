from ..arms import BaseArm, SuperArm
from .loop import (
    BILearner,
    GPLearner,
    Policy,
    RoundError,
    RoundResult,
    SVGPLearner,
    make_learner,
    run_episode,
    run_round,
)
from .navigation import EnvTruth, KernelConfig, NavigationEnv, edge_arms, navigation_kernel, sample_truth
from .network import (
    Edge,
    EnergyParams,
    RoadNetwork,
    build_line_graph,
    deterministic_energy,
    format_network,
    grid_network,
    largest_scc,
    load_network,
    parse_network,
    standardize_contexts,
)
from .routing import (
    bellman_ford_optimum,
    dijkstra_path,
    find_negative_cycle,
    is_legal_simple_path,
    topk_oracle,
)
from .synthetic import SyntheticEnv
