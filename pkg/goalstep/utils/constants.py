import numpy as np

# custom tqdm progress bar format
bar_format = '{l_bar}{bar}|[{elapsed}<{remaining}]'

# tolerance for tableau consistency checks (row sums, weight sums)
TABLEAU_TOL = 1e-14

# pass threshold of an order-condition residual
ORDER_CONDITION_TOL = 1e-13

# default limiter bounds on the step ratio
F_MIN = 0.01
F_MAX = 3.

# max steps before an adaptive run is aborted
MAX_STEPS = 10**7

# errors below ZERO_ERROR_FACTOR * eps * |J| are treated as exact
ZERO_ERROR_FACTOR = 1e2
MACHINE_EPS = float(np.finfo(float).eps)

# CLI exit codes
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NON_CONVERGENCE = 3
EXIT_BLOW_UP = 4
