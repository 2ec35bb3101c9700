"""Select the expression-program evaluator.

The compiled kernel is used when the extension was built; otherwise, or
when ``PENCILKIT_PURE=1`` is set, the numpy fallback is used.
"""

import os

from . import _kernels_py

BACKEND = "python"
run_program = _kernels_py.run_program

if os.environ.get("PENCILKIT_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        run_program = _ckernels.run_program
        BACKEND = "cython"
