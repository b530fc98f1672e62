"""Eigenvalues of the mixed local/nonlocal p-Laplacian on Cartesian grids."""
from .eigen1 import (EigenResult, SolverParams, check_domain_monotonicity, check_simplicity,
                     dense_oracle_p2, require_converged, solve_lambda1)
from .eigen2 import (minimax_lambda2, nodal_analysis, paper_paths, solve_lambda2,
                     two_ball_upper_bound)
from .energy import (EnergyContext, apply_operator, energy_gradient, local_energy,
                     nonlocal_energy, pairing, rayleigh, residual, total_energy)
from .errors import *  # noqa: F401,F403
from .grid import DomainSpec, Field, Grid, build_domain, lp_norm, normalize
from .kernel import Kernel, fractional_kernel
from .rearrange import polya_szego_check, schwarz_symmetrize

__version__ = "0.1.0"
