"""Average bound width of one layer as more ReLUs are opened, for each scorer.

Run: python3 demos/03_uncertainty_curve.py   (about a minute)
"""

# %%
import numpy as np

from pmilp.model import InputRegion, random_network
from pmilp.propagate import PropagationConfig, curve_csv, propagate, uncertainty_curve

rng = np.random.default_rng(0)
net = random_network([5, 20, 20, 20, 20], rng)
region = InputRegion(rng.normal(size=5), 0.3)

# %% bounds of layers 1-2 are fixed once, with the LP relaxation
below = propagate(net, region, PropagationConfig(method="lp", skip_stable=False),
                  last_layer=2).bounds
print("unstable in layers 1, 2:", [int(below.unstable_mask(k).sum()) for k in (1, 2)])

# %%
rows = uncertainty_curve(net, region, 3, ["SAS", "GS_FSB", "Huang", "Random"], [0, 4, 8, 12],
                         PropagationConfig(mip_gap=0.0), below=below)
print(curve_csv(rows, timing=True))
