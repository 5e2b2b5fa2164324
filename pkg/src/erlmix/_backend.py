"""Selects the compiled kernels when available, else the pure-Python twin.

Set ERLMIX_PURE_PYTHON=1 to force the fallback (used by the benchmark and
the backend-agreement tests).
"""

from __future__ import annotations

import os

if os.environ.get("ERLMIX_PURE_PYTHON"):
    from erlmix import _pykernels as impl
else:
    try:
        from erlmix import _speedups as impl  # type: ignore[no-redef]
    except ImportError:
        from erlmix import _pykernels as impl  # type: ignore[no-redef]

BACKEND = impl.BACKEND_NAME

logpdf_table = impl.logpdf_table
logsf_table = impl.logsf_table
log_kernel_table = impl.log_kernel_table
dp_phi_sweep = impl.dp_phi_sweep
ddp_phi_sweep = impl.ddp_phi_sweep
