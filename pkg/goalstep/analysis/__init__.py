from goalstep.analysis.convergence import (
    SweepResult,
    compare_methods,
    estimate_scheme_order,
    fit_observed_order,
    reference_qoi,
    steps_for_error,
    sweep,
)
from goalstep.analysis.diagnostics import cusp_diagnostic
from goalstep.analysis.seminorms import (
    FlowMapTransport,
    WeightVector,
    flow_map_transport,
    lipschitz_seminorm,
    seminorm,
)
