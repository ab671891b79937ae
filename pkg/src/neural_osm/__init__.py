"""Operation sequence and neural reordering models over word-aligned corpora."""

import os

__version__ = "0.1.0"

# NEURAL_OSM_THREADS caps BLAS threads; it must be set before numpy loads.
_threads = os.environ.get("NEURAL_OSM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)
