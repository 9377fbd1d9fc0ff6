"""
Borrowing strength from source networks
=======================================

Scenario ``s1``: every source shares the target's two-dimensional shared
subspace up to a small perturbation. Pooling them pins that subspace down,
and the target's private directions are then estimated after projecting it
out.
"""

import numpy as np

from tdcmm import ScenarioSpec, TransferConfig, d_metric, full_pipeline, generate_scenario
from tdcmm.evaluation import eigengap_report
from tdcmm.spectral import projector_distance
from tdcmm.transfer import oracle_tdcmm

spec = ScenarioSpec("s1", d=100, m_total=40, seed=3)
scen = generate_scenario(spec)

gap = eigengap_report(scen.h_target, scen.shared, spec.k_target, spec.k_shared)
print(f"smallest target eigenvalue {gap['delta']:.3f}, "
      f"private gap after deflation {gap['d_p']:.3f} (ratio {gap['ratio']:.1f})")

###############################################################################
# Single-network baseline. Weak eigenvalues make the vertex geometry fragile,
# so this may fail outright on some draws.

try:
    base = full_pipeline(scen.target, k=spec.k_target)
    print("dcmm error      ", round(d_metric(base.h_hat, scen.h_target), 4))
except ArithmeticError as err:
    print("dcmm failed:", err)

###############################################################################
# Transfer with a growing number of sources.

cfg = TransferConfig(k_target=4, k_shared=2, seed=0)
for m in (5, 10, 20, 39):
    tb = oracle_tdcmm(scen.target, scen.sources[:m], cfg)
    est = full_pipeline(scen.target, tb.combined)
    print(f"oracle, {m:2d} sources: shared error {projector_distance(tb.shared, scen.shared):.3f}, "
          f"error_h {d_metric(est.h_hat, scen.h_target):.4f}")
