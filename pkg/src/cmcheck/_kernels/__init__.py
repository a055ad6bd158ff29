"""Kernel backend selection: compiled extension with pure-Python fallback.

Set ``CMCHECK_PURE_KERNELS=1`` to force the fallback (used by tests and
the benchmark): both backends implement the same functions with identical
iteration order, so all outputs are backend-independent.
"""

import os

from . import pure

if os.environ.get("CMCHECK_PURE_KERNELS"):
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = pure
        BACKEND = "pure"

find_conjunction_witness = _impl.find_conjunction_witness
box_find_model = _impl.box_find_model
box_find_disagreement = _impl.box_find_disagreement
