"""Simultaneous learning of a system state, its adjoint, and an open-loop
optimal control with a physics-informed network, plus classical validators.

Submodules are imported explicitly (``ctrlpinn.trainer`` etc.); the package
root stays import-light so the CLI can cap BLAS threads before numpy loads.
"""

__version__ = "0.1.0"
