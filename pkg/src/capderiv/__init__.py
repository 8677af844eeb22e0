"""Capacities of lattice sets and the derivative formula for their unions.

Subpackages: ``lattice`` (finite sets), ``green`` (lattice kernels),
``numerics`` (simplex solvers), ``newtonian`` and ``riesz`` (kernel
capacities), ``branching`` (branching capacity by simulation), ``cli``.
"""
__version__ = "0.1.0"
