"""Adaptive P1 finite elements with contractive iterative solvers.

Thin wrapper over the compiled core: mesh refinement by newest-vertex
bisection, residual error estimation, bulk marking, and the adaptive loop
for the linear and quasilinear model problems.
"""

from ._core import (
    InputError,
    Mesh,
    NumericalError,
    estimate,
    load_mesh,
    make_initial_mesh,
    mark,
    overlay,
    refine,
    run_adaptive,
    run_axioms,
    save_mesh,
    solve,
    verify_constants,
)

__all__ = [
    "InputError",
    "Mesh",
    "NumericalError",
    "estimate",
    "load_mesh",
    "make_initial_mesh",
    "mark",
    "overlay",
    "refine",
    "run_adaptive",
    "run_axioms",
    "save_mesh",
    "solve",
    "verify_constants",
]
