"""Numerical core: staggered grids, immersed-boundary coupling, multigrid and Krylov solvers.

Nothing in this subpackage depends on Django.
"""
from ibmg.solver.grid import BlockVector, GridHierarchy, StaggeredLevel, build_hierarchy  # noqa: F401
from ibmg.solver.krylov import SolveReport, StepResult, StepState, semi_implicit_step, solve  # noqa: F401
from ibmg.solver.operators import CavityBC, FluidParams  # noqa: F401
from ibmg.solver.smoothers import SCSmootherConfig, SmootherWrap  # noqa: F401
