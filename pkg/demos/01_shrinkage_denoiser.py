"""How the row denoiser treats energy across snapshots.

The posterior support weight of a length-J row depends on its observation
only through the per-snapshot energy ||obs||^2 / J. With few snapshots the
weight rises gradually with energy; as J grows it sharpens into a step at
c (1 + c) log(1 + 1/c). This script tabulates the curves, reports the
predicted step location, and (if matplotlib is around) saves a figure.

Run:  python demos/01_shrinkage_denoiser.py
"""

import numpy as np

from mmvamp.denoiser import hard_threshold_limit, scalar_shrinkage
from mmvamp.harness import ShrinkageSpec, write_shrinkage_csv

C = 0.1
EPSILON = 0.1
SNAPSHOTS = (1, 3, 10, 100)

tau = hard_threshold_limit(C)
print(f"channel noise level c = {C}, sparsity rate = {EPSILON}")
print(f"many-snapshot detection threshold on ||obs||^2/J: tau = {tau:.6f}\n")

grid = np.linspace(0.0, 0.6, 13)
header = "energy/J " + "".join(f"   J={j:<4d}" for j in SNAPSHOTS)
print(header)
print("-" * len(header))
for x in grid:
    row = [f"{x:8.3f}"]
    for j in SNAPSHOTS:
        obs = np.zeros(j)
        obs[0] = np.sqrt(x * j)
        t, _ = scalar_shrinkage(obs, C, EPSILON)
        row.append(f" {t:7.4f}")
    print("".join(row))

print("\nAt the threshold itself the weight equals the sparsity rate for")
print("every J; only the slope changes (linearly in J):")
for j in SNAPSHOTS:
    h = 1e-5

    def weight(x, j=j):
        obs = np.zeros(j)
        obs[0] = np.sqrt(x * j)
        return scalar_shrinkage(obs, C, EPSILON)[0]

    slope = (weight(tau + h) - weight(tau - h)) / (2 * h)
    print(f"  J={j:<4d} weight(tau)={weight(tau):.4f}  slope at tau = {slope:8.2f}")

spec = ShrinkageSpec(c=C, epsilon=EPSILON, snapshots=SNAPSHOTS, grid_lo=0.0, grid_hi=0.6, grid_step=0.005)
write_shrinkage_csv(spec, "shrinkage_curve.csv")
print("\nwrote shrinkage_curve.csv (columns: J, x, t)")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = np.arange(0.0, 0.6 + 1e-12, 0.005)
    fig, ax = plt.subplots(figsize=(6, 4))
    for j in SNAPSHOTS:
        obs = np.zeros((xs.size, j))
        obs[:, 0] = np.sqrt(xs * j)
        from mmvamp.denoiser import scalar_shrinkage_rows

        t, _ = scalar_shrinkage_rows(obs, C, EPSILON)
        ax.plot(xs, t, label=f"J = {j}")
    ax.axvline(tau, color="k", ls=":", lw=1, label="threshold")
    ax.set_xlabel("per-snapshot energy  ||obs||^2 / J")
    ax.set_ylabel("support weight")
    ax.legend()
    fig.tight_layout()
    fig.savefig("shrinkage_curve.png", dpi=120)
    print("wrote shrinkage_curve.png")
except ImportError:
    print("matplotlib not available; skipped the figure")
