"""Delay-system reachability toolbox.

Adaptive method-of-steps integration for discrete-delay systems, closed-form
2x2 Lyapunov certificates, exact piecewise signal classes, a switched planar
vector field with finite-time escape under sampled switching, its
delay-cascade and input-driven companions, and probes that certify
exponential decay and uniform attractivity while falsifying any uniform
reachability bound.
"""

from .integrator import (
    BadHistoryDomain,
    DiscreteDelaySystem,
    HistoryFn,
    IntegratorOptions,
    SimOutcome,
    SpanTooShort,
    StepSizeCollapse,
    Trajectory,
    extract_history,
    integrate,
    residual_audit,
)
from .lyap import (
    A_MODE1,
    A_MODE2,
    Certificate,
    Mat2,
    NoFeasibleLambda,
    NotHurwitz,
    SingularSystem,
    StabilityConstants,
    SymPosDef2,
    blend,
    default_certificate,
    find_capital_lambda,
    is_hurwitz,
    lyapunov_residual,
    solve_lyapunov,
    stability_constants,
)
from .probes import (
    EnvelopeFit,
    HorizonTooShort,
    ReachEstimate,
    RfcSweepResult,
    UgaCell,
    UnexpectedEscape,
    WindowInvalid,
    constant_input_descent,
    decay_audit,
    es_check,
    escape_schedule,
    estimate_R,
    rfc_sweep,
    theoretical_reach_time,
    uga_table,
)
from .signals import (
    Concatenation,
    Constant,
    DwellTooSmall,
    ExponentialTail,
    OutOfDomain,
    PiecewiseConstant,
    PiecewiseLinear,
    Signal,
    TimeShift,
    Window,
    concat,
    from_json,
    smooth_square,
    sup_norm,
)
from .systems import (
    DEFAULT_PLANAR,
    PlanarParams,
    SwitchedRun,
    SwitchingPolicy,
    WindowOverlap,
    associated_system,
    cascade_system,
    default_cascade_delay,
    embed_history_as_inputs,
    greedy_worst_switch,
    history_from_inputs,
    planar_rhs,
    planar_system,
    recorded_escape,
    run_switched,
    saturation_stop_times,
    unit_saturation,
)

__version__ = "0.1.0"
