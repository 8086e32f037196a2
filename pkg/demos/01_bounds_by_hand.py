"""Interval bounds versus the exact range on a two-input network.

Run: python3 demos/01_bounds_by_hand.py
"""

# %%
import numpy as np

from pmilp.bounds import box_propagate
from pmilp.model import InputRegion, Network, forward
from pmilp.oracle import exact_range
from pmilp.propagate import PropagationConfig, pmilp_bounds

# two inputs in [-1, 1], two ReLU layers of width two, identity read-out
net = Network.from_arrays(
    [[[1.0, 1.0], [1.0, -1.0]], [[1.0, 2.0], [0.0, 1.0]], np.eye(2)],
    [np.zeros(2), np.zeros(2), np.zeros(2)],
)
region = InputRegion(np.zeros(2), 1.0)
print("output at (1, 1):", forward(net, [1.0, 1.0]).output)

# %% interval arithmetic, layer by layer
box = box_propagate(net, region)
for k in box.layers:
    print(f"layer {k}: LB {box.lb[k]}  UB {box.ub[k]}")

# %% the first neuron of layer 2 cannot actually reach 6: its two inputs peak at different points
lo, hi = exact_range(net, region, 2, [1.0, 0.0])
print("exact range of z[2,0]:", (lo, hi))

# %% LP relaxation and a full MILP on the same neuron
for method in ("lp", "full_milp"):
    b = pmilp_bounds(net, region, PropagationConfig(method=method, mip_gap=0, skip_stable=False))
    print(f"{method:>9}: z[2,0] in [{b.lb[2][0]:.3f}, {b.ub[2][0]:.3f}]")
