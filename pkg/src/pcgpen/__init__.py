"""Single-loop proximal conditional-gradient penalty method.

Solves ``min f1(x)+f2(x)+g1(y)+g2(y) s.t. Ax+By=c`` where f2 is
prox-friendly, g2 admits a linear minimization oracle, and the smooth
parts have Hölder-continuous gradients on bounded domains.  Ships with
complexity certificates, duality-gap machinery for l1 recovery with a
p-norm residual cap, a seeded instance generator, and brute-force
reference oracles for verification.
"""

from .linmap import LinearMap, lambda_max_sq
from .blocks import (LOBlock, ProblemSpec, ProxBlock, SmoothBlock,
                     box_prox_block, l1_box_prox_block, lo_lp_ball,
                     lp_ball_lo_block, lp_norm, power_smooth_block,
                     prox_l1_box, quadratic_smooth_block, soft_threshold,
                     zero_smooth_block)
from .solver import (IterTrace, SolverAbort, SolverConfig, SolverState,
                     StepInfo, run, schedules, step, step_with_info,
                     terminate_small_steps)
from .bounds import (BoundInputs, BoundReport, choose_delta, compute_constants,
                     feasibility_bound, objective_bound, tau)
from .duality import CsDualContext, dual_value, feasible_dual_point, relative_gap
from .csgen import (CsInstance, generate_instance, load_instance,
                    min_norm_solution, reformulate, sample_ggd, save_instance)
from .harness import (ReferenceSolution, SweepPlan, jacobi_eigenvalues,
                      lo_bruteforce, prox_l1_box_bruteforce,
                      quartiles_nearest_rank, reference_solve_tiny, run_cs,
                      run_sweep, slope_fit)

__version__ = "0.1.0"
