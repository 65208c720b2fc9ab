from goalstep.qoi.density import (
    ConstantDensity,
    DensityFunction,
    LinearDensity,
    TimeWeightedLinearDensity,
    get_density,
    window_mean_density,
)
from goalstep.qoi.quadrature import (
    SIMPSON,
    TRAPEZOID,
    QoiAccumulator,
    QuadratureRule,
    accumulate,
    get_quadrature,
    simpson_reference_qoi,
    step_increment,
)
