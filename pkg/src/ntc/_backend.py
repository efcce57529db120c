"""Pick the compiled kernel module, falling back to pure Python.

Set ``NTC_BACKEND=python`` to force the fallback.
"""

import os

from . import _kernels_py as python_kernels

try:
    from . import _kernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if os.environ.get("NTC_BACKEND", "").lower() == "python" or compiled_kernels is None:
    kernels = python_kernels
else:
    kernels = compiled_kernels

BACKEND = kernels.BACKEND
