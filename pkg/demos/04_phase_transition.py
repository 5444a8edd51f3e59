"""Where recovery lives: the (sparsity, undersampling) plane.

Noiseless recovery succeeds when the support fraction does not exceed the
measurement ratio. This script sweeps a coarse grid, runs a few seeded
trials per cell, and draws the success-rate grid as ASCII; the full-size
sweep is available as the bundled `phase` config
(`mmvamp run phase --out out/phase`).

Run:  python demos/04_phase_transition.py   (about half a minute)
"""

import time

from mmvamp.harness import config_from_dict, run_phase_sweep, write_phase_csv

EPSILONS = [0.1, 0.3, 0.5, 0.7]
DELTAS = [0.2, 0.4, 0.6, 0.8]

cfg = config_from_dict(
    {
        "experiment_id": "phase_demo",
        "trials": 4,
        "base_seed": 7041776,
        "solvers": ["amp"],
        "emit": ["phase"],
        "model": {"n": 800, "m": 400, "j": 3, "d": 40, "epsilon": 0.1, "sigma2": 0.0},
        "solver": {"amp": {"max_iter": 250, "tol": 1e-10}},
        "sweep": {"epsilon": EPSILONS, "delta": DELTAS, "success_nse_db": -50.0},
    }
)

start = time.perf_counter()
rows = run_phase_sweep(cfg)
write_phase_csv(rows, "phase_demo.csv")
by_cell = {(r[0], r[1]): r[2] for r in rows}

print(f"success rate of exact recovery, N=800, J=3, {cfg.trials} trials/cell")
print(f"(computed in {time.perf_counter() - start:.0f}s; '#' = always, '.' = never)\n")
print("             delta (measurements / unknowns)")
print("  eps    " + "".join(f"{d:>7.1f}" for d in DELTAS))
for eps in EPSILONS:
    cells = []
    for delta in DELTAS:
        rate = by_cell[(eps, delta)]
        cells.append("   #   " if rate == 1 else "   .   " if rate == 0 else f" {rate:5.2f} ")
    print(f"{eps:>6.1f} " + "".join(cells))
print(
    "\nRecovery holds below the diagonal eps = delta. Cells hugging the"
    "\ndiagonal (like eps=0.7, delta=0.8) need larger N before the asymptotic"
    "\nboundary shows: the empirical transition sharpens as the system grows."
    "\nWrote phase_demo.csv."
)
