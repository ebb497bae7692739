"""Numeric kernels for the branch-and-bound inner loop.

Both backends expose the same two functions over sparse-polynomial buffers
(exponent matrix, coefficient vector):

    point_eval(exps, coeffs, point)          -> float
    interval_eval(exps, coeffs, lo, hi)      -> (float, float)

interval_eval assumes 0 <= lo <= hi componentwise (parameter boxes live in
[0,1]) and widens its result outward by a relative 1e-12 so that float
rounding cannot make it claim a tighter range than the exact one.

The Cython build is preferred; set PMCVERIFY_PURE=1 to force the numpy
fallback (used by the benchmark and by installs without a C compiler).
"""

import os

if os.environ.get("PMCVERIFY_PURE") == "1":
    from . import _pykernel as _impl

    BACKEND = "pure"
else:
    try:
        from . import _ckernel as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _pykernel as _impl

        BACKEND = "pure"

interval_eval = _impl.interval_eval
point_eval = _impl.point_eval

__all__ = ["interval_eval", "point_eval", "BACKEND"]
