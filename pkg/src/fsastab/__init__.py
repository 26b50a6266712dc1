"""Stability analysis of frame slotted Aloha under single- and multi-packet reception."""

from .arrivals import ArrivalModel, FrameArrivalPmf, frame_arrival_pmf, poisson_tail_bound, sample_frame_arrivals
from .chain import (
    FramePolicy,
    TransitionRow,
    TruncatedChain,
    build_truncated_chain,
    downward_drift,
    drift,
    drift_from_row,
    stationary_distribution,
    transition_row,
)
from .errors import FsaError, NumericalOverflowError, StateSpaceTooLarge, TruncationError
from .occupancy import (
    SuccessDistribution,
    SuccessLaw,
    brute_force_xi,
    expected_successes,
    occupancy_pmf,
    poisson_occupancy,
    xi,
    xi_mpr,
    xi_spr,
    xi_upper_bound,
)
from .sim import SimConfig, empirical_xi, replicate, simulate, trace_stats
from .stability import (
    RegimeSpec,
    alpha_star,
    classify,
    k2_sup_xi_test,
    mpr_gain_at_unit_alpha,
    phi,
    spr_boundary,
    transience_sequence_test,
)

__version__ = "0.1.0"
