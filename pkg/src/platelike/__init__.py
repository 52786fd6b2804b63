"""Plane-like minimizers of a nonlocal Ginzburg-Landau energy in a periodic
medium: discretization, constrained minimization and structural verification."""

__version__ = "0.1.0"

from .energy import EnergyModel, EnergyReport, PeriodicField, set_threads
from .errors import (ConfigError, GridMismatchError, InvalidDirectionError,
                     PreconditionError, SeedError, SingularityError)
from .geometry import (Direction, Grid, Strip, build_grid, enumerate_cosets,
                       orthogonal_lattice_basis, reduce_to_fundamental,
                       strip_classify)
from .media import (CoeffField, KernelSpec, PotentialSpec, kernel_eval,
                    kernel_truncate, kernel_validate, potential_eval,
                    potential_validate)
from .minimize import (ADMISSIBLE_THETA, MinimizeOptions, MinimizerResult,
                       combine_max, combine_min, default_seeds, descend,
                       doubling_test, linear_seed, minimal_minimizer,
                       project_admissible, step_seed, translate)
from .verify import (birkhoff_check, divergence_probe, ef_relation_check,
                     energy_growth_profile, halfspace_check, interface_center,
                     interface_width, local_minimality_test, oscillation_decay,
                     rational_sweep)

__all__ = [name for name in dir() if not name.startswith("_")]
