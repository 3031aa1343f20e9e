"""Fix the herald probability at 1% and look for the best detection window.

For every window the drive strength (alpha, Omega or beta) is recalibrated so
that eta = 1%. Short windows need a strong drive, which raises the chance of
two excitations; long windows collect dephased photons. The infidelity is
therefore U-shaped in T.
"""

from heraldsim import AtomParams, ConstraintSpec, optimize_over_window

atom = AtomParams(gamma_dp=5.0)
constraint = ConstraintSpec(target_eta=0.01, points_per_decade=6)
for kind in ("spontaneous", "resonant"):
    rec = optimize_over_window(kind, (atom, atom), constraint)
    print(f"\n{kind}: best T = {rec.T_star:.4g}, 1 - F = {rec.infidelity:.4g}, drive {rec.params_star.param:.4g}")
    for T, inf in rec.curve[:: max(1, len(rec.curve) // 10)]:
        print(f"  T {T:9.4g}  1-F {inf:.4g}")
