"""Narrowing a filter cavity in front of the detectors.

Unlike a time window, a narrow cavity does not restore unit fidelity: once the
cavity is narrower than the emission line the fidelity settles on a plateau.
The Fock space of each cavity is enlarged automatically when the top level
becomes populated.
"""

import numpy as np

from heraldsim import AtomParams, FilterSpec
from heraldsim.diffusion import ensemble_scan
from heraldsim.schemes import default_spec

atom = AtomParams(gamma_dp=5.0)
for kind in ("spontaneous", "resonant"):
    print(f"\n{kind}, gamma_dp = 5, T = 1")
    for kappa in np.geomspace(20.0, 0.2, 5):
        res = ensemble_scan((atom, atom), [default_spec(kind)], [[1.0]], filt=FilterSpec(float(kappa)))[0]
        p = res.metrics()[0]
        print(f"  kappa {kappa:7.3f}  F {p.fidelity:.4f}  eta {p.efficiency:.3e}  n_max {res.n_max}")
