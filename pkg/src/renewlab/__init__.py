"""Numerical experiments on renewal theorems for intermittent semiflows with
infinite-measure suspensions."""

from .config import ExperimentConfig, parse_config, parse_config_text
from .dynamics import (IIDSystem, InducedSystem, IntermittentMapSpec, RoofSpec,
                       invariant_measure_Y, periodic_orbit_periods, tail_fit)
from .errors import (ConfigError, DomainError, FitError, NumericalAccuracyError, RenewLabError,
                     ResolventError, SpectralError, TruncationError)
from .renewal import RenewalSampler, TargetSets, d_n, deterministic_sampler, iid_baseline
from .specfun import TailModel, renewal_constants, stable_density, stable_sampler
from .transfer import UlamTransferOperator, build_ulam

__version__ = "0.1.0"
