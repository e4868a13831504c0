"""Geometric multigrid solvers for semi-implicit immersed boundary Stokes systems."""

# PEP 440 - version number format
VERSION = (0, 1, 0)

# PEP 396 - module version variable
__version__ = ".".join(map(str, VERSION))

default_app_config = "ibmg.apps.IBMGConfig"
