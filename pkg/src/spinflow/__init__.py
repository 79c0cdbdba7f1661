"""Spin-chain Hamiltonians as graphs: banded random ensembles, equilibration
times via sparse time evolution, and max-flow proxies for those times."""

__version__ = "0.1.0"

from .errors import (
    CapExceededError,
    ConstructionError,
    ConvergenceError,
    InfeasibleGraphError,
    SpinflowError,
    ValidationError,
)
from .spin_model import (
    CouplingSample,
    DiagonalObservable,
    LocalitySpec,
    SparseHermitian,
    build_hamiltonian,
    build_observable,
    exact_hamiltonian,
    normalize,
    sample_couplings,
    spectral_norm,
)
from .graph_analysis import (
    AdjacencyGraph,
    BandwidthProfile,
    adjacency_of,
    block_bandwidth,
    degree_formula,
    degrees,
    delta_o,
    distance_to_equilibrium,
    empirical_bandwidth,
    functional_bandwidth,
    observable_reach,
    structural_adjacency,
)
from .ensembles import (
    EnsembleSpec,
    ScalingFits,
    WeightModel,
    assign_weights,
    build_banded_constant,
    build_banded_regular,
    build_banded_variable,
    build_regular,
    fit_scalings,
    fit_weight_model,
    reach_bandwidth,
    sample,
)
from .dynamics import (
    EquilibrationResult,
    EvolutionSeries,
    coupling_chain_terms,
    diagonal_average,
    equilibration_time,
    evolve_series,
    influence_measure,
    long_time_average,
    propagate,
)
from .flow import (
    CapacityGraph,
    FlowFit,
    capacity_graph,
    correlate,
    extrapolate_teq,
    fit_teq_vs_fmax,
    max_flow,
)
