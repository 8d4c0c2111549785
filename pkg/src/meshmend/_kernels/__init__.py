"""Backend selection for the hot kernels.

Set MESHMEND_BACKEND=numpy to force the pure-numpy fallback; the
default is the numba backend when numba imports cleanly. Both expose
the same functions with the same semantics (see numpy_backend for the
reference definitions); ``benchmarks/bench_backends.py`` compares them.
"""

import os

_requested = os.environ.get("MESHMEND_BACKEND", "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"MESHMEND_BACKEND={_requested!r} not recognized (use 'numba' or 'numpy')"
    )

if _requested == "numpy":
    from . import numpy_backend as _impl
else:
    try:
        from . import numba_backend as _impl
    except ImportError:
        if _requested == "numba":
            raise
        from . import numpy_backend as _impl

BACKEND_NAME = _impl.BACKEND_NAME
rasterize = _impl.rasterize
coverage_bbox = _impl.coverage_bbox
resample_bilinear = _impl.resample_bilinear
laplacian_edge = _impl.laplacian_edge
ncc = _impl.ncc
patch_ssim = _impl.patch_ssim
ratio_similarity = _impl.ratio_similarity
score_views = _impl.score_views
