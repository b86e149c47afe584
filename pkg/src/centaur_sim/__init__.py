"""Desk-scale laboratory for uncertainty-driven test-time training of trajectory-scoring planners.

Modules: ``geometry`` (trajectories, vocabularies, anchors), ``worldsim``
(synthetic scenes and the rule-based expert scorer), ``scorer`` (the
differentiable planner), ``uncertainty``, ``deploy`` (TTT and the fallback
layer), ``evalharness`` (benchmarks and reports) and ``cli``.
"""

from .errors import SimError

__version__ = "0.1.0"

__all__ = ["SimError", "__version__"]
