"""Optimization-based partitioned solver and projection-based reduced models
for incompressible fluid / elastic structure interaction."""
import os

# cap BLAS threads before numpy is imported by the submodules
_threads = os.environ.get("FSIOPT_THREADS", "1")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
