"""One heralding attempt for each scheme, with and without optical dephasing.

The herald is a click at the first beamsplitter output. Shortening the
detection window T keeps only early photons, which are the ones least touched
by dephasing; the price is a smaller herald probability.
"""

from heraldsim import AtomParams, averaged_metrics
from heraldsim.schemes import default_spec

for label, atom in [("noiseless", AtomParams()), ("gamma_dp = 5", AtomParams(gamma_dp=5.0))]:
    print(f"\n{label}")
    print(f"{'scheme':<12} {'T':>6} {'F':>8} {'eta':>10}")
    for kind in ("spontaneous", "raman", "resonant"):
        for T in (0.01, 0.1, 1.0):
            p = averaged_metrics((atom, atom), default_spec(kind), T)
            print(f"{kind:<12} {T:>6} {p.fidelity:>8.4f} {p.efficiency:>10.3e}")
