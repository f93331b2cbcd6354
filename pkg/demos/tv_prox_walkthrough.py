"""Denoise piecewise-constant data with the l1+TV prox, then compose gauges.

The proximal map at the heart of the package handles a weighted sum of
an l1 term and a total-variation term over an arbitrary neighbor graph,
with an optional non-negativity constraint, by exact cyclic coordinate
maximization of the box-constrained dual.  An l2 term composes on top
through a single closed-form shrink.  This script walks through the
three layers on small synthetic data.
"""

import numpy as np

from smf.proximal import TVProxConfig, prox_gauge, prox_l1_tv
from smf.regularizers import GaugeSpec, chain_graph, eval_gauge, lattice_graph

rng = np.random.default_rng(0)

# ---- 1-d: a staircase signal under Gaussian noise -----------------------

n = 120
levels = np.repeat([0.0, 2.0, -1.0, 3.0, 1.0, 0.0], n // 6)
noisy = levels + 0.2 * rng.normal(size=n)

res = prox_l1_tv(noisy, t=1.0, nu1=0.0, nu_tv=0.6, graph=chain_graph(n))
jumps = np.count_nonzero(np.abs(np.diff(res.x)) > 0.2)
err_before = np.linalg.norm(noisy - levels) / np.linalg.norm(levels)
err_after = np.linalg.norm(res.x - levels) / np.linalg.norm(levels)
print("staircase signal, chain TV")
print(f"  jumps above 0.2        {jumps} (signal has 5)")
print(f"  rel err before / after {err_before:.3f} / {err_after:.3f}")
print(f"  duality gap            {res.dual_gap:.1e} in {res.sweeps_used} sweeps")

# ---- 2-d: a blocky image on a 4-connected lattice -----------------------

h = w = 24
image = np.zeros((h, w))
image[4:12, 5:15] = 2.0
image[14:21, 10:20] = -1.5
noisy_img = (image + 0.4 * rng.normal(size=image.shape)).ravel()

res2 = prox_l1_tv(
    noisy_img, t=1.0, nu1=0.0, nu_tv=0.8, graph=lattice_graph(h, w, 4)
)
err_before = np.linalg.norm(noisy_img - image.ravel())
err_after = np.linalg.norm(res2.x - image.ravel())
print("blocky image, lattice TV")
print(f"  abs err before / after {err_before:.2f} / {err_after:.2f}")
print(f"  distinct output levels {np.unique(np.round(res2.x, 6)).size}")
print(f"  duality gap            {res2.dual_gap:.1e} in {res2.sweeps_used} sweeps")

# ---- full gauge: l1 + TV + l2 with non-negativity -----------------------

# the l2 term shrinks the l1+TV output toward zero along its own ray, so
# the two-stage composition is exact; non-negativity folds into the dual
g = GaugeSpec(nu1=0.3, nu_tv=0.6, nu2=1.2, graph=chain_graph(n), nonneg=True)
res3 = prox_gauge(noisy, t=0.8, g=g, cfg=TVProxConfig(gap_tol=1e-10))
stage1 = prox_l1_tv(noisy, 0.8, 0.3, 0.6, graph=chain_graph(n), nonneg=True)
shrink = np.linalg.norm(res3.x) / np.linalg.norm(stage1.x)
print("composed gauge prox, nonneg l1+TV+l2")
print(f"  negative entries       {np.count_nonzero(res3.x < 0)}")
print(f"  l2 stage shrink factor {shrink:.4f}")
print(f"  penalty value          {eval_gauge(g, res3.x):.3f}")
