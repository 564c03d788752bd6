import math

from core.config import settings

TOOL_VERSION = "0.1.0"

# SETTINGS
SWITCHES = {
    "RIDGE_RETRY": True,  # Retry the input recovery with a ridge term when the input matrix loses rank
    "RECORD_LIFTED_STATE": True,  # Store z and U columns in lifted-model trajectory CSVs
    "PARALLEL_BATCH": True,  # Run batch pairs through joblib workers
    # Set PARALLEL_BATCH = False when debugging a single failing run
}

OMEGA_NOMINAL = 2 * math.pi * 50  # rad/s, 50 Hz system
VIRTUAL_RESISTANCE = settings.VIRTUAL_RESISTANCE

# Control experiment defaults
DEFAULT_V_SET = 380.0  # V, droop setpoint before the controller takes over
DEFAULT_Y_REF = 380.0  # V, voltage reference after engagement
DEFAULT_ENGAGE_TIME = 1.0  # s
DEFAULT_T_END = 5.0  # s
DEFAULT_RECORD_STRIDE = 1e-3  # s between stored samples
INTEGRATOR_WEIGHT = 1e3  # Q weight multiplier on the output-error integrator states

# Numerical tolerances
LYAPUNOV_RTOL = 1e-10
CARE_MAX_ITER = 100
CARE_TOL = 1e-12  # relative Riccati residual that ends the Newton iteration
CARE_ACCEPT_RTOL = 1e-8  # largest relative residual returned as a solution
CARE_STALL_STEPS = 3  # Newton steps without halving the residual before giving up
PBH_RTOL = 1e-10  # smallest singular value of [A - lambda*I, B] counted as rank loss
CARE_SHIFT_MARGIN = 1e-2  # relative margin of the Bass shift over max |Re(eig)|
RIDGE_SCALE = 1e-8  # ridge = RIDGE_SCALE * trace(B'B) / m
STEADY_STATE_RTOL = 1e-9
EQUILIBRIUM_XTOL = 1e-13  # relative step that ends the operating-point search
EQUILIBRIUM_ATOL = 1e-3  # largest max |dx/dt| accepted as an operating point
PERTURB_FLOOR = 1e-12  # entries below this magnitude count as zero for perturbation

# Exit codes
EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

# Names of the per-DER state slots, in state-vector order
DER_STATE_NAMES = (
    "delta",
    "P",
    "Q",
    "phid",
    "phiq",
    "gammad",
    "gammaq",
    "ild",
    "ilq",
    "vod",
    "voq",
    "iod",
    "ioq",
)
LINE_STATE_NAMES = ("iD", "iQ")
LOAD_STATE_NAMES = ("iD", "iQ")

# Typical magnitudes per state class, used when perturbing zero-valued entries
STATE_SCALES = {
    "delta": 0.01,  # rad
    "P": 1000.0,  # W
    "Q": 500.0,  # var
    "phid": 0.1,
    "phiq": 0.1,
    "gammad": 0.1,
    "gammaq": 0.1,
    "ild": 10.0,  # A
    "ilq": 5.0,  # A
    "vod": 380.0,  # V
    "voq": 10.0,  # V
    "iod": 10.0,  # A
    "ioq": 1.0,  # A
    "iD": 5.0,  # A
    "iQ": 1.0,  # A
}
