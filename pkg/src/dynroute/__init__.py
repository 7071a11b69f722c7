"""Dynamic VRPTW workbench.

A prize-collecting VRPTW metaheuristic, an epoch simulator with must-dispatch
semantics, hindsight imitation datasets, perturbed-loss structured learning of
per-request prizes, and the benchmark policy zoo built on top of them.
"""

from . import dataset, encode, instance, learning, pchgs, policies, simulator

__all__ = ["dataset", "encode", "instance", "learning", "pchgs", "policies", "simulator"]
__version__ = "0.1.0"
