"""
Cost of the sketched shared-subspace step
=========================================

The averaged projector of many networks is never formed: ten Gaussian
sketches and a short power iteration touch it only through products with
thin matrices. A dense symmetric eigendecomposition of the same matrix is
the baseline.
"""

from tdcmm.evaluation import sketch_benchmark

for d in (500, 1000, 2000):
    res = sketch_benchmark(d=d, k_shared=2, n_sketches=10, q=8)
    print(f"d={d:5d}  sketch {res['sketch_s']:.3f} s  dense {res['dense_s']:.3f} s  "
          f"ratio {res['ratio']:.3f}  subspace gap {res['distance']:.1e}")
