"""Dense reference implementations for the test/verify surface ONLY.

Nothing in the production run path may import this module: the O(d)
complexity guarantee of the server step is structural, and the quadratic-cost
dense preconditioner here exists solely so tests can cross-check the
matrix-free implementation.  The CLI imports it lazily inside the ``verify``
subcommand and nowhere else; tests assert this module is absent from
``sys.modules`` after a production run.
"""

from __future__ import annotations

import numpy as np

_DENSE_DIM_GUARD = 256


def dense_preconditioner(m: np.ndarray, rho: float) -> np.ndarray:
    """Explicitly form and invert (rho I + m m') by a dense direct method."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    m = np.asarray(m, dtype=np.float64)
    d = m.shape[0]
    if d > _DENSE_DIM_GUARD:
        raise ValueError(f"dense preconditioner guarded to d <= {_DENSE_DIM_GUARD}, got {d}")
    return np.linalg.inv(rho * np.eye(d) + np.outer(m, m))
