"""CDPA: compressed differentially private aggregation for federated learning.

Thin wrapper over the C++ extension module.
"""

try:
    from ._cdpa import *  # noqa: F401,F403  (installed wheel layout)
except ImportError:  # pragma: no cover - build-tree layout
    from _cdpa import *  # noqa: F401,F403
