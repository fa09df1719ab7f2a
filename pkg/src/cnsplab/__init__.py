"""cnsplab: a pseudo-spectral laboratory for the compressible
Navier-Stokes-Poisson system.

Subpackages: grid (lattice/transforms), lpaley (Littlewood-Paley/Besov),
semigroup (exact linearized Green matrix and kernel probes), solver
(exponential-integrator nonlinear evolution), decay (rate measurement),
cli/experiments (orchestration).
"""

__version__ = "0.1.0"

from .grid import Grid, make_grid
from .lpaley import BesovSpec, DyadicPartition, besov_norm, build_partition
from .semigroup import ModelParams, apply_semigroup, green_symbol, matexp_oracle
from .solver import CnspState, StepperConfig

__all__ = [
    "__version__", "Grid", "make_grid", "BesovSpec", "DyadicPartition",
    "besov_norm", "build_partition", "ModelParams", "apply_semigroup",
    "green_symbol", "matexp_oracle", "CnspState", "StepperConfig",
]
