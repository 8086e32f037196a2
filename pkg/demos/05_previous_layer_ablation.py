"""How much do loose bounds on one layer cost the next?

Layer 3 is bounded twice with the same open sets: once on top of LP bounds for
layer 2, once on top of partial-MILP bounds for layer 2.

Run: python3 demos/05_previous_layer_ablation.py
"""

# %%
import numpy as np

from pmilp.model import InputRegion, random_network
from pmilp.propagate import PropagationConfig, ablation_previous_layer_lp

rng = np.random.default_rng(41)
net = random_network([3, 12, 12, 12, 2], rng)
region = InputRegion(rng.normal(size=3), 0.4)

report = ablation_previous_layer_lp(net, region, PropagationConfig(schedule=[6], mip_gap=0.0))
for name, per_layer in report.uncertainty().items():
    print(name, {k: round(v, 4) for k, v in per_layer.items()})
