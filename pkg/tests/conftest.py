import os

# Pin BLAS/OpenMP pools to one thread before numpy loads: keeps every check
# single-threaded and bit-deterministic.
for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ.setdefault(_var, "1")
