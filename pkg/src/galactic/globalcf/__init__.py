"""Global summaries: MDL accounting, candidate generation and subset selection."""

from .candidates import generate_candidates
from .mdl import (
    CandidatePool,
    MdlProblem,
    Perturbation,
    SummarySet,
    bits_universal,
    coverage,
    data_length,
    elias_gamma_decode,
    elias_gamma_encode,
    flip_matrix,
    log2p1,
    mdl_total,
    model_length,
    problem_from_pool,
)
from .mmd import mmd_critic
from .selection import (
    ALGORITHMS,
    get_perm,
    greedy_subset,
    group_budget,
    hierarchical_subset,
    optimal_subset,
    select_greedy,
    select_hierarchical,
    select_optimal,
)
