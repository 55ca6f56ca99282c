"""Delayed-CSIT transmission schemes for relay-aided MIMO broadcast networks.

Equations are tracked symbolically (coefficients over message ids) and
numerically side by side, so every claim about who knows what can be
checked by span membership.
"""

from .analysis import (
    DofValue,
    cascade_dof,
    convergence_table,
    harmonic_bound,
    measured_dof,
    scheme_asymptote,
    theorem2_bounds,
)
from .eqspace import (
    Basis,
    CoeffVec,
    Equation,
    MessageId,
    eliminate_known,
    in_span,
    row_reduce,
    solve_messages,
)
from .errors import CsitAccessError, FormabilityViolation, NotEliminable, RelayDofError, Singular
from .network import (
    ChannelAccessor,
    ChannelRealization,
    CsitLedger,
    FeedbackMode,
    NetworkConfig,
    NodeState,
    check_formable,
    csit_visible,
    draw_channels,
    propagate_equation_slot,
    propagate_slot,
)
from .schemes import (
    SCHEMES,
    SimReport,
    af_gains,
    build_round_schedule_33,
    build_round_schedule_k2,
    equivalent_channel,
    run_global_range_k2,
    run_one_hop_33,
    run_one_hop_k2,
    run_one_hop_kgt3,
    run_scheme,
)

__version__ = "0.1.0"
