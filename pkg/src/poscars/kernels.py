"""Select the compiled kernels when available, else the pure-Python twin.

Set ``POSCARS_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels as python

if os.environ.get("POSCARS_PURE_PYTHON"):
    compiled = None
else:
    try:
        from . import _kernels as compiled
    except ImportError:  # extension not built
        compiled = None

impl = compiled if compiled is not None else python
BACKEND = "compiled" if compiled is not None else "python"

InstanceQueues = impl.InstanceQueues
chain_targets = impl.chain_targets
allocate = impl.allocate
ERR_NO_SUCCESSOR = python.ERR_NO_SUCCESSOR
POSCARS, POD, BATCH_SAMPLING, BATCH_FILLING, RANDOM, JSQ, ONEHOP = range(7)


def get(backend: str):
    """Kernel module by name: ``"python"`` or ``"compiled"``."""
    if backend == "python":
        return python
    if backend == "compiled":
        if compiled is None:
            raise ImportError("compiled kernels are not built")
        return compiled
    if backend in ("auto", None):
        return impl
    raise ValueError(f"unknown backend {backend!r}")
