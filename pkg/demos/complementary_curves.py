"""Parallel and crossed coincidence curves for a two-segment chain.

The summed parallel coincidences Q1010 + Q0101 and the crossed ones
Q1001 + Q0110 oscillate in antiphase as the second analyzer turns.  This
script prints both curves on a coarse grid as a text bar chart.
"""

import math

import numpy as np

from qrelay import ChainSpec, DetectorModel, Family, SourceParams, TruncationConfig, visibility_sweep

det = DetectorModel(Family.THRESHOLD, eta=0.04, dark=1e-5)
spec = ChainSpec(N=2, source=SourceParams(0.24), trunc=TruncationConfig(3), bell_detectors=det)
grid = np.linspace(0, 2 * np.pi, 32, endpoint=False)
res = visibility_sweep(spec, math.pi / 2, grid, analyzer_detectors=DetectorModel(Family.PNR, 0.04, 1e-5))

top = max(res.parallel.max(), res.crossed.max())
print(" delta/pi   parallel                        crossed")
for d, p, c in zip(grid, res.parallel, res.crossed):
    bar_p = "#" * round(24 * p / top)
    bar_c = "#" * round(24 * c / top)
    print(f"  {d / math.pi:5.3f}   {bar_p:<30s}  {bar_c}")
print(f"\nV = {res.visibility:.4f}, maximum at delta = {res.delta_at_max / math.pi:.3f} pi")
