"""Backend selection for the numeric hot loops.

The compiled extension is used when importable; set ``AQPIPE_PURE_PYTHON=1``
to force the pure-Python fallback.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("AQPIPE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

active = compiled_backend or python_backend
BACKEND = active.BACKEND

scan_feature = active.scan_feature
window_minmax = active.window_minmax
predict_batch = active.predict_batch
