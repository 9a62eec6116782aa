"""Process-level performance knobs for the numeric hot loops."""

from __future__ import annotations

import ctypes
import glob
import os
import sys

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3


def tune_allocator(limit: int = 1 << 30) -> bool:
    """Keep large freed blocks on the heap instead of returning them to the
    kernel. The numeric hot loops allocate megabyte-scale scratch arrays every
    step; with glibc's default thresholds each allocation round-trips through
    mmap and the resulting page faults dominate the runtime on some kernels.
    Returns True when the thresholds were applied."""
    if not sys.platform.startswith("linux"):
        return False
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(_M_MMAP_THRESHOLD, limit)
        libc.mallopt(_M_TRIM_THRESHOLD, limit)
        return True
    except OSError:
        return False


def tune_blas(n_threads: int = 1) -> bool:
    """Pin the BLAS thread pool. The networks here multiply tall, skinny
    matrices where multi-thread synchronization costs several times the
    arithmetic; one thread is fastest by a wide margin."""
    os.environ.setdefault("OPENBLAS_NUM_THREADS", str(n_threads))
    os.environ.setdefault("OMP_NUM_THREADS", str(n_threads))
    done = False
    try:
        import numpy as np
        libs_dir = os.path.join(os.path.dirname(np.__file__), ".libs")
        candidates = glob.glob(os.path.join(libs_dir, "*openblas*"))
        candidates += glob.glob(os.path.join(os.path.dirname(np.__file__),
                                             "..", "numpy.libs", "*openblas*"))
        for path in candidates:
            try:
                lib = ctypes.CDLL(path)
            except OSError:
                continue
            for symbol in ("openblas_set_num_threads",
                           "scipy_openblas_set_num_threads",
                           "openblas_set_num_threads64_",
                           "scipy_openblas_set_num_threads64_"):
                fn = getattr(lib, symbol, None)
                if fn is not None:
                    fn(n_threads)
                    done = True
                    break
            if done:
                break
    except Exception:
        return done
    return done


def tune_process() -> None:
    """Apply every knob; harmless where unsupported."""
    tune_allocator()
    tune_blas(1)
