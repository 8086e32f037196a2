"""Which ReLU is worth opening? Global scores versus solution-aware scores.

The network is a chain x -> a -> b -> z with weights 1, c, d and bounds [-1, 1]
on a and b. Opening a's ReLU can only help when c and d share a sign.

Run: python3 demos/02_scoring_a_chain.py
"""

# %%
import numpy as np

from pmilp.bounds import BoundsMap
from pmilp.model import InputRegion, Network
from pmilp.scoring import Target, improve_oracle, score_gs, score_sas

region = InputRegion(np.zeros(1), 1.0)
bounds = BoundsMap(np.array([-1.0]), np.array([1.0]))
bounds.set_layer(1, [-1.0], [1.0])
bounds.set_layer(2, [-1.0], [1.0])

# %%
print(f"{'c':>5} {'d':>5} {'GS_FSB(a)':>10} {'SAS(a)':>8} {'gain(a)':>8}")
for c, d in [(2, 2), (-1, 1), (1, -1), (-2, -2), (1, 1)]:
    net = Network.from_arrays([[[1.0]], [[float(c)]], [[float(d)]]], [[0.0]] * 3)
    z = Target.neuron(net, (3, 0))
    gs = score_gs(net, bounds, z, "FSB").scores[(1, 0)]
    sas = score_sas(net, region, bounds, z)[0].scores[(1, 0)]
    gain = improve_oracle(net, region, bounds, z, (1, 0))
    print(f"{c:>5} {d:>5} {gs:>10.3f} {sas:>8.3f} {gain:>8.3f}")

# %% the solution-aware score never underestimates the actual gain; the global one can
