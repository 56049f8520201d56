"""Lead/lag structure between two series: cross-correlation and windowed rank correlation.

Here documents react to cases five days later, so the cross-correlation of
documents against cases peaks at lag +5, and the windowed grid lights up on
the band where the document window starts five days after the case window.
"""

import numpy as np

from infodemic.corr import ccf, sdc

rng = np.random.default_rng(4)
n, delay = 240, 5
cases = np.convolve(rng.gamma(2.0, 50.0, n + delay), np.ones(7) / 7, mode="same")
documents = cases[:n] * 3 + rng.normal(0, 20, n)
cases = cases[delay:]

r = ccf(documents, cases, max_lag=15)
print("peak lag:", r.peak_lag())
for h in range(-6, 7, 2):
    print(f"  lag {h:+3d}  rho {r.at(h):+.3f}")

grid = sdc(cases, documents, s=40, max_lag=8, n_perm=200, seed=0)
frame = grid.to_frame()
frame["offset"] = frame.y_start - frame.x_start
share = frame.groupby("offset")["significant"].mean()
print("\nshare of significant cells by window offset (documents start - cases start):")
for off, v in share.items():
    print(f"  {off:+d}  {v:.2f}")
