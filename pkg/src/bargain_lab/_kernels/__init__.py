"""Hot loops, compiled when available.

``BACKEND`` is ``"cython"`` or ``"numpy"``. Set ``BARGAIN_LAB_PURE=1`` to force
the numpy fallback.
"""

import os

from . import _pykernels as pykernels

ckernels = None
if not os.environ.get("BARGAIN_LAB_PURE"):
    try:
        from . import _ckernels as ckernels
    except ImportError:
        ckernels = None

if ckernels is not None:
    household_loglik = ckernels.household_loglik
    local_moments = ckernels.local_moments
    BACKEND = "cython"
else:
    household_loglik = pykernels.household_loglik
    local_moments = pykernels.local_moments
    BACKEND = "numpy"

__all__ = ["household_loglik", "local_moments", "BACKEND", "pykernels", "ckernels"]
