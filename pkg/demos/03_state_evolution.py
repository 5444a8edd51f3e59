"""Predicting the solver without running it.

State evolution turns the per-iteration error of the message-passing solver
into a deterministic recursion on the effective noise level. The scalar form
(valid for uncorrelated snapshots, exact as J grows) is

    c_next = sigma2 + (eps / delta) * c / (1 + c)

and its noiseless fixed point is 0 exactly when eps <= delta. The matrix
form keeps the full posterior covariance and follows the measured error of
the solver through the transient. This script prints both next to an actual
run.

Run:  python demos/03_state_evolution.py
"""

import numpy as np

from mmvamp.amp import AmpConfig, amp_solve
from mmvamp.denoiser import PriorParams
from mmvamp.model import ModelConfig, gen_instance
from mmvamp.se import SeMatrixState, se_fixed_point, se_predict_trace, se_step_matrix

EPS, DELTA, SIGMA2 = 0.1, 0.5, 2e-4
N_ITERS = 10

print("== noiseless fixed points ==")
for eps, delta in [(0.1, 0.5), (0.3, 0.3), (0.3, 0.2), (0.6, 0.4)]:
    c_star, iters = se_fixed_point(eps, delta, 0.0, tol=1e-10, c1=1.0, max_iter=10**6)
    verdict = "recovers" if c_star < 1e-6 else f"stalls at c* = {c_star:.4f}"
    print(f"  eps={eps:.1f} delta={delta:.1f}: {verdict}  ({iters} iterations)")
print("  (the boundary case eps = delta creeps to zero harmonically)\n")

print(f"== tracking one run: eps={EPS}, delta={DELTA}, sigma2={SIGMA2}, N=2000, J=3 ==")
prior = PriorParams(EPS, np.eye(3))
mses = []
for trial in range(5):
    cfg = ModelConfig(N=2000, M=1000, J=3, d=100, prior=prior, sigma2=SIGMA2, seed=300 + trial)
    phi, sig, meas = gen_instance(cfg)
    power = np.sum(sig.X**2) / sig.X.size
    res = amp_solve(phi, meas, prior, AmpConfig(N_ITERS + 2, 1e-13), truth=sig.X)
    tr = [power * 10 ** (rec.nse_db / 10.0) for rec in res.iterations]
    mses.append(tr + [tr[-1]] * (N_ITERS + 3 - len(tr)))
mean_mse = np.mean(mses, axis=0)

scalar = se_predict_trace(EPS, DELTA, SIGMA2, N_ITERS)
rng = np.random.default_rng(0)
state = SeMatrixState(Gamma=EPS * np.eye(3), Sigma=(SIGMA2 + EPS / DELTA) * np.eye(3), mc_samples=100_000)
matrix = []
for _ in range(N_ITERS):
    matrix.append(float(np.trace(state.Sigma) / 3))
    state = se_step_matrix(state, prior, DELTA, SIGMA2, rng)

print(f"{'iter':>5}{'measured c':>13}{'matrix SE':>12}{'scalar SE':>12}")
for i in range(N_ITERS):
    c_emp = SIGMA2 + mean_mse[i] / DELTA
    print(f"{i + 1:>5}{c_emp:>13.6f}{matrix[i]:>12.6f}{scalar[i]:>12.6f}")

print(
    "\nThe matrix recursion (full posterior covariance) follows the measured"
    "\ntransient; the scalar recursion drops the weight-variance term, so at"
    "\nJ=3 it undershoots mid-run and rejoins at the fixed point."
)
