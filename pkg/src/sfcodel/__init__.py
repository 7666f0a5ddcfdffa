"""Storage-backend bufferbloat simulator with CoDel-style admission control."""

from .admission import QbaCodel, StaticBudget, Unlimited, cost_of
from .backend import Backend, BackendConfig
from .config import ConfigError, ScenarioConfig, load_config, load_text
from .engine import Engine, EventKind, rng_stream
from .estimation import CurveFit, eval_slope, fit_log_curve, lognormal_mode_sample
from .metrics import MetricsStore, compare, export
from .simulation import RunResult, Simulation, run_scenario
from .target_adjust import SfCodel, SlowLoop

__version__ = "0.1.0"
