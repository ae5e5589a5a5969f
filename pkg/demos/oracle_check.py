"""Cross-check the closed-form coincidences against a brute-force simulation.

The oracle builds the chain mode by mode from squeezers, beamsplitters and
rotators in a sparse Fock basis, walks every detector readout, and applies
the detector response by direct summation.  It shares no formulas with the
closed-form path, so agreement to rounding error validates both.
"""

import math
import random

from qrelay import ChainSpec, DetectorModel, Family, SourceParams, TruncationConfig, coincidence_q
from qrelay.oracle import oracle_coincidence

rng = random.Random(7)
print(" N  n_max   chi    eta      dark      max rel diff")
for N, n_max in [(1, 1), (1, 2), (1, 3), (2, 1)]:
    chi, eta, dark = rng.uniform(0.1, 0.4), rng.uniform(0.05, 0.9), 10 ** rng.uniform(-6, -3)
    det = DetectorModel(Family.THRESHOLD, eta, dark)
    spec = ChainSpec(N=N, source=SourceParams(chi), trunc=TruncationConfig(n_max), bell_detectors=det)
    angles = (rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi))
    ana = DetectorModel(Family.PNR, eta, dark)
    a = coincidence_q(None, angles, ana, spec)
    b = oracle_coincidence(spec, None, angles, ana)
    gap = max(abs(getattr(a, q) - getattr(b, q)) / getattr(b, q) for q in ("Q1010", "Q0101", "Q1001", "Q0110"))
    print(f" {N}  {n_max}       {chi:.3f}  {eta:.3f}   {dark:.1e}   {gap:.1e}")
