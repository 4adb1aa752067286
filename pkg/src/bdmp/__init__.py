"""Boolean-logic Driven Markov Process modeling and quantification toolkit."""

from .model import (
    AggregationError,
    And,
    Diagnostic,
    GateDef,
    GateKind,
    LeafDef,
    LeafKind,
    Model,
    Not,
    Or,
    OrderConstraintDef,
    RepairGroupDef,
    TriggerDef,
    Var,
    apply_approx_or,
    models_equal,
    parse_target,
    validate_model,
)
from .semantics import (
    CascadeDivergenceError,
    InstantEvent,
    LeafState,
    StabilizationResult,
    StabilizedBranch,
    SystemState,
    TimedTransition,
    TransitionNotEnabledError,
    apply_timed,
    compute_modes,
    enabled_timed,
    evaluate_structure,
    initial_state,
    render_state,
    stabilize,
)

__version__ = "0.1.0"
