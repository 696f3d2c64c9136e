"""
Survival EE Defaults and Constants

Contains numeric defaults, supported time forms, simulation settings and
output layouts used throughout the survival estimating-equation engine
"""

#solver defaults
DEFAULT_TOLERANCE = 1e-9
DEFAULT_MAX_ITERATIONS = 5000
DEFAULT_STEP_DAMPING = 1e-3
MAX_DAMPING = 1e12

#numerical derivatives
JACOBIAN_STEP_SCALE = 2.220446049250313e-16 ** (1.0 / 3.0)

#disjoint intervals without events get pinned at the floor (hazard ~ 0),
#intervals where every unit at risk fails at minus the floor (hazard ~ 1)
DISJOINT_FLOOR = -500.0

#logits are bounded so expit stays strictly inside (0, 1) in double precision
LOGIT_BOUND = 35.0

#hazards clamped away from {0, 1} only inside the cumulative product
HAZARD_CLAMP = 1e-12

#inference
DEFAULT_CI_LEVEL = 0.95
CONDITION_WARNING = 1e12

#memory model
BYTES_PER_ELEMENT = 8
DEFAULT_MEMORY_BUDGET = 2 * 1024 ** 3

#kernel modes
KERNEL_MODES = ('vectorized', 'loop', 'auto')
ELEMENT_MODES = ('standard', 'vectorized', 'vectorized_disjoint', 'loop')

#time forms (CLI spelling -> canonical)
TIME_FORMS = {
    'intercept': 'intercept_only',
    'intercept_only': 'intercept_only',
    'linear': 'linear',
    'loglinear': 'log_linear',
    'log_linear': 'log_linear',
    'spline': 'spline',
    'disjoint': 'disjoint',
}
MIN_SPLINE_KNOTS = 3

#arm strategies
SEPARATE_MODELS = 'separate_models_per_arm'
SINGLE_MODEL = 'single_model_with_treatment_term'
ARM_STRATEGIES = (SEPARATE_MODELS, SINGLE_MODEL)
NATURAL_COURSE = 'natural'

#bootstrap
MAX_BOOTSTRAP_FAILURE_RATE = 0.10

#simulation data generating mechanism
SIM_TREATMENT_SLOPE = -1.5
SIM_SCALE_TREATED = 65.0
SIM_SHAPE_TREATED = 0.75
SIM_SCALE_UNTREATED = 50.0
SIM_SHAPE_UNTREATED = 1.5
SIM_CONFOUNDER_SCALE = 5.0
SIM_CENSOR_MEAN = 38.0
SIM_TRUTH_DRAWS = 10_000_000
SIM_TRUTH_CHUNK = 1_000_000
SIM_TRUTH_SEED = 20240101

#simulation study settings
SIM_TARGET_TIMES = (10, 20, 30)
SIM_TIME_MODELS = ('intercept_only', 'linear', 'log_linear', 'spline', 'disjoint')
SIM_TIME_KNOTS = (5, 10, 15, 20, 25)
SIM_CONFOUNDER_KNOTS = (-0.8, 0.0, 0.8)
SIM_FAILURE_WARNING = 0.05

#output layouts
RISK_CURVE_COLUMNS = [
    'time',
    'risk1', 'se1', 'lcl1', 'ucl1',
    'risk0', 'se0', 'lcl0', 'ucl0',
    'rd', 'se_rd', 'lcl_rd', 'ucl_rd',
]
METRICS_COLUMNS = ['n', 'time_model', 't', 'bias', 'ese', 'ase', 'ser', 'coverage', 'iterations', 'failures']
