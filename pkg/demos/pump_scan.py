"""How pump strength degrades the fringe for one and two swaps.

Stronger pumping raises the heralding rate but also the chance of extra
pairs, which herald the wrong state.  A two-segment chain has twice as many
sources, so its visibility collapses sooner.
"""

import math

from qrelay import ChainSpec, DetectorModel, Family, SourceParams, TruncationConfig, visibility_sweep

det = DetectorModel(Family.THRESHOLD, eta=0.04, dark=1e-5)
analyzers = DetectorModel(Family.PNR, eta=0.04, dark=1e-5)


def vis(N, chi):
    spec = ChainSpec(N=N, source=SourceParams(chi), trunc=TruncationConfig(3), bell_detectors=det)
    return visibility_sweep(spec, math.pi / 2, analyzer_detectors=analyzers).visibility


print("  chi    V(N=1)   V(N=2)   ratio")
for chi in (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4):
    v1, v2 = vis(1, chi), vis(2, chi)
    print(f"  {chi:.2f}   {v1:.4f}   {v2:.4f}   {v2 / v1:.3f}")
