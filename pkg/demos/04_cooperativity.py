"""Optimal infidelity as the emitter-waveguide coupling improves.

C is the ratio of waveguide emission to residual loss. Raising it helps only
until dephasing dominates; the curves then flatten.
"""

from heraldsim import ConstraintSpec, cooperativity_sweep

constraint = ConstraintSpec(points_per_decade=6)
for kind in ("spontaneous", "resonant"):
    print(f"\n{kind}, gamma_dp = 5")
    for C, inf, rec in cooperativity_sweep(kind, [10, 100, 1000], 5.0, 0.0, constraint):
        print(f"  C {C:6g}  1-F {inf:.4g}  T* {rec.T_star:.3g}")
