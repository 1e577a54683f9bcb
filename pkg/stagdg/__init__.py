"""
stagdg: staggered semi-implicit discontinuous Galerkin solver

Solves the incompressible Navier-Stokes equations in 2D and 3D on
cell-by-cell adaptive Cartesian meshes. Pressure lives on the main mesh,
velocity on face-based dual meshes; the pressure system is symmetric
positive semi-definite and solved matrix-free with conjugate gradients.
"""

__version__ = "0.1.0"
__license__ = "MIT"
