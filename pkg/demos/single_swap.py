"""A single entanglement swap, from the ideal heralded state to a noisy visibility.

Two down-conversion sources each emit a polarization pair; a Bell-state
measurement on the inner photons heralds the outer photons in a singlet-like
state.  With perfect detectors and one pair per source the heralded state is
exact.  Multi-pair emission and lossy, noisy detectors wash the fringe out.
"""

import math

from qrelay import ChainSpec, DetectorModel, Family, SourceParams, TruncationConfig, normalized, visibility_sweep
from qrelay.chain import ideal_swap_state

# the Bell station sees one H photon at b and one V photon at c
ket = normalized(ideal_swap_state(1, 0, 1, 0))
print("heralded end state for station counts (1, 0, 1, 0):")
for key, amp in sorted(ket.items()):
    print(f"  |{''.join(map(str, key))}>  {amp:+.4f}")

# realistic regime: pump 0.24, 4 % detection efficiency, 1e-5 dark counts
det = DetectorModel(Family.THRESHOLD, eta=0.04, dark=1e-5)
analyzers = DetectorModel(Family.PNR, eta=0.04, dark=1e-5)
print("\nvisibility against the photon-number cutoff:")
for n_max in (1, 2, 3, 4):
    spec = ChainSpec(N=1, source=SourceParams(0.24), trunc=TruncationConfig(n_max), bell_detectors=det)
    res = visibility_sweep(spec, math.pi / 2, analyzer_detectors=analyzers)
    print(f"  n_max={n_max}  V={res.visibility:.4f}")
