"""Numerical tools for linear cocycles over geometric Lorenz attractors.

Modules: ``lorenz_model`` (maps, flow, section), ``inducing`` (full-branch
return map and coding), ``measure`` (invariant densities, product structure),
``cocycle`` (generators, bunching, suspension), ``lyapunov`` (spectra), and
``experiment`` / ``cli`` (end-to-end runs).
"""
__version__ = "0.1.0"
