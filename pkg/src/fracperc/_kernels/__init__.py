"""Hot tree-expansion kernels: compiled core with pure-numpy fallback.

``fracperc._kernels`` exposes expand_extinction / expand_surviving /
offspring_counts from the Cython extension when it was built, and from the
vectorized numpy reference otherwise.  Both implementations are bit-identical;
set FRACPERC_PURE=1 to force the fallback (used by the benchmark and tests).
"""

import os

from . import _pure

if os.environ.get("FRACPERC_PURE", "") not in ("", "0"):
    _impl = _pure
else:
    try:
        from . import _speedups as _impl
    except ImportError:
        _impl = _pure

IMPL = _impl.IMPL
expand_extinction = _impl.expand_extinction
expand_surviving = _impl.expand_surviving
offspring_counts = _impl.offspring_counts
MAX_DIM = 6  # the compiled kernels size child scratch buffers for 2**d <= 64
