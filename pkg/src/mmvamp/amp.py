"""Approximate message passing for jointly sparse recovery.

Node-indexed iteration: instead of per-edge cavity messages it tracks one
mean per signal row, one residual per measurement row, and a single J x J
effective noise covariance. The residual update carries a correction term
(the weighted sum of denoiser Jacobians applied to the previous residual)
that makes the node-indexed recursion track the cavity recursion.

The ``fast_path`` variant specializes to uncorrelated snapshots
(slab_cov = I): covariances collapse to scalars, rows are shrunk by the
closed-form scalar operator, the error-level recursion drops the
weight-variance rank-one term, and the correction uses the mean diagonal of
the shrinkage Jacobian.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._linalg import symmetrize
from .denoiser import (
    BatchDenoiser,
    PriorParams,
    scalar_jacobian_traces,
    scalar_shrinkage_rows,
)
from .model import MeasurementSet, SensingMatrix
from .results import IterationRecord, SolveResult


@dataclass(frozen=True)
class AmpConfig:
    max_iter: int = 500
    tol: float = 1e-8
    damping: float = 0.0
    fast_path: bool = False

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class AmpState:
    """Node-indexed iteration state.

    ``theta`` is the pseudo observation consumed by the next denoising pass;
    ``Sigma``/``Gamma`` are the effective noise and mean error covariances for
    the same pass. Memory is O((M + N) J) plus the sparse operator itself.
    """

    mu: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    Sigma: np.ndarray
    Gamma: np.ndarray
    iter: int = 1
    weights: np.ndarray | None = None


def amp_init(phi: SensingMatrix, meas: MeasurementSet, prior: PriorParams) -> AmpState:
    """Prior initialization: zero means, residuals = measurements."""
    J = prior.n_snapshots
    gamma = prior.epsilon * prior.slab_cov
    sigma = meas.sigma2 * np.eye(J) + gamma / phi.delta
    mu = np.zeros((phi.N, J))
    z = meas.Y.copy()
    theta = phi.csr.T @ z + mu
    return AmpState(mu=mu, theta=theta, z=z, Sigma=sigma, Gamma=gamma.copy(), iter=1)


def _squared_operator(phi: SensingMatrix) -> sp.csr_matrix:
    sq = phi.csr.copy()
    sq.data = sq.data**2
    return sq


def amp_iterate(
    state: AmpState,
    phi: SensingMatrix,
    meas: MeasurementSet,
    prior: PriorParams,
    damping: float = 0.0,
    onsager: bool = True,
    phi_sq: sp.csr_matrix | None = None,
) -> AmpState:
    """One full sweep of the general (matrix-covariance) iteration.

    Denoises every row at the current (theta, Sigma), refreshes Gamma as the
    row average of the posterior covariances, Sigma = sigma2 I + Gamma/delta,
    then rebuilds residuals with the Jacobian correction
    z_m <- y_m - (Phi mu)_m + [sum_q Phi_mq^2 J_q]' z_m
    and the pseudo observations theta = Phi' z + mu.
    """
    J = prior.n_snapshots
    phi_sq = phi_sq if phi_sq is not None else _squared_operator(phi)
    dn = BatchDenoiser(prior, state.Sigma)
    t, mu_new, v_rows, jacs = dn.posterior_full(state.theta)
    if damping > 0.0:
        mu_new = (1.0 - damping) * mu_new + damping * state.mu
    gamma_new = symmetrize(v_rows.mean(axis=0))
    sigma_new = meas.sigma2 * np.eye(J) + gamma_new / phi.delta

    z_new = meas.Y - phi.csr @ mu_new
    if onsager:
        jac_sums = (phi_sq @ jacs.reshape(phi.N, J * J)).reshape(phi.M, J, J)
        z_new += np.einsum("mij,mi->mj", jac_sums, state.z)
    theta_new = phi.csr.T @ z_new + mu_new
    return AmpState(
        mu=mu_new, theta=theta_new, z=z_new, Sigma=sigma_new, Gamma=gamma_new,
        iter=state.iter + 1, weights=t,
    )


def amp_iterate_uncorrelated(
    state: AmpState,
    phi: SensingMatrix,
    meas: MeasurementSet,
    epsilon: float,
    damping: float = 0.0,
    onsager: bool = True,
    phi_sq: sp.csr_matrix | None = None,
) -> AmpState:
    """One sweep of the scalar fast path (slab_cov = I).

    Tracks the noise level c = Sigma[0, 0] and error level g = Gamma[0, 0]
    only. The error recursion g <- (c / (1 + c)) * mean(weights) drops the
    weight-variance term, which vanishes as the snapshot count grows; the
    residual correction uses the per-row mean diagonal of the shrinkage
    Jacobian, so at J = 1 it coincides with the general path.
    """
    J = state.theta.shape[1]
    phi_sq = phi_sq if phi_sq is not None else _squared_operator(phi)
    c = float(state.Sigma[0, 0])
    t, mu_new = scalar_shrinkage_rows(state.theta, c, epsilon)
    if damping > 0.0:
        mu_new = (1.0 - damping) * mu_new + damping * state.mu
    support_rate = float(t.mean())
    gamma_scalar = c / (1.0 + c) * support_rate
    c_new = meas.sigma2 + gamma_scalar / phi.delta

    z_new = meas.Y - phi.csr @ mu_new
    if onsager:
        jac_trace = scalar_jacobian_traces(c, t)
        z_new += (phi_sq @ jac_trace)[:, None] * state.z
    theta_new = phi.csr.T @ z_new + mu_new
    eye = np.eye(J)
    return AmpState(
        mu=mu_new, theta=theta_new, z=z_new, Sigma=c_new * eye,
        Gamma=gamma_scalar * eye, iter=state.iter + 1, weights=t,
    )


def amp_solve(
    phi: SensingMatrix,
    meas: MeasurementSet,
    prior: PriorParams,
    cfg: AmpConfig,
    truth: np.ndarray | None = None,
) -> SolveResult:
    """Run AMP to convergence (relative Frobenius change of the mean < tol).

    Any non-finite sweep aborts the run and returns the last finite iterate
    flagged ``failed``; numerical trouble never raises.
    """
    from .harness import nse_db  # local import to avoid a cycle

    if cfg.fast_path and not np.allclose(prior.slab_cov, np.eye(prior.n_snapshots)):
        raise ValueError("fast_path requires slab_cov = I (uncorrelated snapshots)")
    J = prior.n_snapshots
    phi_sq = _squared_operator(phi)
    state = amp_init(phi, meas, prior)
    start = time.perf_counter_ns()
    records = [
        IterationRecord(
            iteration=1,
            nse_db=nse_db(state.mu, truth) if truth is not None else np.nan,
            sigma_trace=float(np.trace(state.Sigma) / J),
            gamma_trace=float(np.trace(state.Gamma) / J),
            wallclock_us=0,
        )
    ]
    result = SolveResult(
        estimate=state.mu, weights=np.full(phi.N, prior.epsilon), iterations=records
    )
    # "best so far" by the plain data residual, the quality proxy available
    # without the truth; non-converged runs return it instead of the last
    # iterate, which matters when a noiseless run touches the floor and the
    # collapsed internal covariance then destabilizes the tail sweeps
    best_residual = np.linalg.norm(meas.Y)
    for _ in range(cfg.max_iter):
        prev_mu = state.mu
        try:
            if cfg.fast_path:
                state = amp_iterate_uncorrelated(
                    state, phi, meas, prior.epsilon, cfg.damping, phi_sq=phi_sq
                )
            else:
                state = amp_iterate(state, phi, meas, prior, cfg.damping, phi_sq=phi_sq)
        except (np.linalg.LinAlgError, ValueError) as exc:
            result.failed = True
            result.message = f"sweep {state.iter} aborted: {exc}"
            break

        if not (np.all(np.isfinite(state.mu)) and np.all(np.isfinite(state.z))):
            result.failed = True
            result.message = (
                f"non-finite values in sweep {state.iter - 1}; returning previous iterate"
            )
            break

        elapsed_us = (time.perf_counter_ns() - start) // 1000
        records.append(
            IterationRecord(
                iteration=state.iter,
                nse_db=nse_db(state.mu, truth) if truth is not None else np.nan,
                sigma_trace=float(np.trace(state.Sigma) / J),
                gamma_trace=float(np.trace(state.Gamma) / J),
                wallclock_us=int(elapsed_us),
            )
        )
        residual = np.linalg.norm(meas.Y - phi.csr @ state.mu)
        if residual <= best_residual:
            best_residual = residual
            result.estimate = state.mu
            result.weights = state.weights
        change = np.linalg.norm(state.mu - prev_mu)
        scale = max(np.linalg.norm(state.mu), np.finfo(float).tiny)
        if change <= cfg.tol * scale:
            result.converged = True
            result.estimate = state.mu
            result.weights = state.weights
            break

    if not result.converged and not result.failed:
        result.message = f"no convergence within {cfg.max_iter} sweeps"
    return result
