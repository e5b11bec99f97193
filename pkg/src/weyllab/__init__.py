"""weyllab: numerical experiments on semiclassical eigenvalue counting.

Modules
-------
symbols    phase-space symbol models, critical points, registry
mollify    vanishing-moment mollifiers and coefficient regularization
phasevol   sublevel volumes, remainder functionals, sublevel-set lemmas
operators  grid discretization, inertia counting, smoothed counters
dynamics   Hamiltonian flow bounds and oscillatory integrals
harness    h-sweeps, exponent fits, verdict reports
cli        config parsing and the batch experiment registry
"""

from .symbols import MODEL_REGISTRY, SymbolModel, make_model

__version__ = "0.1.0"

__all__ = ["MODEL_REGISTRY", "SymbolModel", "make_model", "__version__"]
