"""MMSE denoiser for jointly sparse signal rows observed in Gaussian noise.

Each length-J signal row follows a spike-and-slab prior: with probability
``epsilon`` the row is drawn from a zero-mean multivariate Gaussian with
covariance ``slab_cov``, otherwise it is exactly zero. Given a pseudo
observation ``obs = row + noise`` with noise covariance ``cov``, the posterior
is a two-component mixture whose mean, covariance, and support weight all have
closed forms. This module evaluates those forms (and their derivatives) in the
log domain so that large dimensions or strong evidence never overflow.

Notation used throughout the docstrings:

    ratio(obs)  = ((1-eps)/eps) * sqrt(det(L+S)/det(S))
                  * exp(-0.5 * obs' (inv(S) - inv(L+S)) obs)
    weight      = 1 / (1 + ratio)                      # support probability
    slab_mean   = L inv(L+S) obs                       # mean if row is active
    slab_cov_p  = (inv(L) + inv(S))^-1                 # cov if row is active
    mean        = weight * slab_mean
    cov         = weight*(1-weight) * slab_mean slab_mean' + weight*slab_cov_p

with L the prior slab covariance and S the channel covariance.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky
from scipy.special import expit

from ._linalg import (
    COV_EIG_FLOOR,
    check_spd,
    check_symmetric,
    chol_logdet,
    floor_spd,
    symmetrize,
)


@dataclass(frozen=True)
class PriorParams:
    """Spike-and-slab row prior: P(active) = epsilon, active rows ~ N(0, slab_cov).

    epsilon may sit on the boundary (0 or 1); every operation then takes a
    dedicated all-zero / pure-Gaussian path instead of the odds-ratio formula.
    """

    epsilon: float
    slab_cov: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        slab = np.atleast_2d(np.asarray(self.slab_cov, dtype=float))
        check_symmetric(slab, "slab_cov")
        check_spd(slab, "slab_cov")
        object.__setattr__(self, "slab_cov", slab)

    @property
    def n_snapshots(self) -> int:
        return self.slab_cov.shape[0]


@dataclass(frozen=True)
class GaussianChannel:
    """Additive Gaussian observation channel with covariance ``cov`` (J x J).

    Eigenvalues are floored at COV_EIG_FLOOR on construction; noiseless
    solvers drive the effective covariance to zero and the floor keeps all
    downstream factorizations finite.
    """

    cov: np.ndarray

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        check_symmetric(cov, "channel cov")
        eigvals = np.linalg.eigvalsh(symmetrize(cov))
        scale = max(float(eigvals.max()), 1.0)
        if eigvals.min() < -1e-10 * scale:
            raise ValueError(
                f"channel cov is indefinite; smallest eigenvalue {eigvals.min():.3e}"
            )
        object.__setattr__(self, "cov", floor_spd(cov, COV_EIG_FLOOR))


@dataclass(frozen=True)
class DenoiseResult:
    """Posterior summary for one row: mean (J,), covariance (J, J), weight."""

    mean: np.ndarray
    cov: np.ndarray
    weight: float


class BatchDenoiser:
    """Vectorized posterior evaluation for many rows sharing one channel.

    Factorizations of the channel covariance S and of L+S are computed once;
    all per-row quantities are then dense batched operations. This is the
    workhorse used by the node-indexed solvers, where every row of the signal
    estimate sees the same effective noise covariance.
    """

    def __init__(self, prior: PriorParams, cov: np.ndarray):
        self.prior = prior
        cov = floor_spd(np.atleast_2d(np.asarray(cov, dtype=float)))
        if cov.shape != prior.slab_cov.shape:
            raise ValueError("channel covariance and slab covariance disagree in shape")
        self.cov = cov
        slab = prior.slab_cov
        self._chol_s = cho_factor(cov, lower=True)
        self._chol_d = cho_factor(slab + cov, lower=True)
        logdet_s = chol_logdet(self._chol_s[0])
        logdet_d = chol_logdet(self._chol_d[0])
        # gain = L inv(L+S); slab posterior mean is obs @ gain.T
        self._gain = slab @ cho_solve(self._chol_d, np.eye(slab.shape[0]))
        self._slab_post_cov = symmetrize(self._gain @ cov)
        eps = prior.epsilon
        if 0.0 < eps < 1.0:
            self._log_base = np.log1p(-eps) - np.log(eps) + 0.5 * (logdet_d - logdet_s)
        else:
            self._log_base = None  # boundary prior, odds ratio never formed

    def _log_ratio(self, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (log ratio, slab means) for rows ``obs`` of shape (B, J)."""
        s_solve = cho_solve(self._chol_s, obs.T).T
        slab_mean = obs @ self._gain.T
        # obs' (inv(S) - inv(L+S)) obs == (inv(S) obs) . (L inv(L+S) obs)
        quad = np.einsum("bj,bj->b", s_solve, slab_mean)
        return self._log_base - 0.5 * quad, slab_mean

    def weights(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        eps = self.prior.epsilon
        if eps == 0.0:
            return np.zeros(obs.shape[0])
        if eps == 1.0:
            return np.ones(obs.shape[0])
        log_ratio, _ = self._log_ratio(obs)
        return expit(-log_ratio)

    def posterior(self, obs: np.ndarray):
        """Posterior (weights, means, covariances) for rows ``obs`` (B, J)."""
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        b, j = obs.shape
        eps = self.prior.epsilon
        if eps == 0.0:
            return np.zeros(b), np.zeros((b, j)), np.zeros((b, j, j))
        if eps == 1.0:
            means = obs @ self._gain.T
            covs = np.broadcast_to(self._slab_post_cov, (b, j, j)).copy()
            return np.ones(b), means, covs
        log_ratio, slab_mean = self._log_ratio(obs)
        t = expit(-log_ratio)
        means = t[:, None] * slab_mean
        spread = t * (1.0 - t)
        covs = spread[:, None, None] * np.einsum("bi,bj->bij", slab_mean, slab_mean)
        covs += t[:, None, None] * self._slab_post_cov
        return t, means, symmetrize(covs)

    def jacobians(self, obs: np.ndarray):
        """Weights plus d(mean)/d(obs) Jacobians, entry (a, b) = d mean_a / d obs_b."""
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        b, j = obs.shape
        eps = self.prior.epsilon
        if eps == 0.0:
            return np.zeros(b), np.zeros((b, j, j))
        if eps == 1.0:
            return np.ones(b), np.broadcast_to(self._gain, (b, j, j)).copy()
        log_ratio, slab_mean = self._log_ratio(obs)
        t = expit(-log_ratio)
        grad = self.weight_gradients(obs, t=t, slab_mean=slab_mean)
        jac = t[:, None, None] * self._gain
        jac += np.einsum("bi,bj->bij", slab_mean, grad)
        return t, jac

    def posterior_full(self, obs: np.ndarray):
        """One-pass (weights, means, covariances, Jacobians) for rows ``obs``."""
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        b, j = obs.shape
        eps = self.prior.epsilon
        if eps == 0.0:
            zero = np.zeros((b, j, j))
            return np.zeros(b), np.zeros((b, j)), zero, zero.copy()
        if eps == 1.0:
            means = obs @ self._gain.T
            covs = np.broadcast_to(self._slab_post_cov, (b, j, j)).copy()
            jacs = np.broadcast_to(self._gain, (b, j, j)).copy()
            return np.ones(b), means, covs, jacs
        log_ratio, slab_mean = self._log_ratio(obs)
        t = expit(-log_ratio)
        means = t[:, None] * slab_mean
        outer = np.einsum("bi,bj->bij", slab_mean, slab_mean)
        covs = (t * (1.0 - t))[:, None, None] * outer
        covs += t[:, None, None] * self._slab_post_cov
        grad = self.weight_gradients(obs, t=t, slab_mean=slab_mean)
        jacs = t[:, None, None] * self._gain
        jacs += np.einsum("bi,bj->bij", slab_mean, grad)
        return t, means, symmetrize(covs), jacs

    def weight_gradients(self, obs, t=None, slab_mean=None) -> np.ndarray:
        """Gradient of the support weight w.r.t. each row of ``obs``.

        Uses grad = weight*(1-weight) * (inv(S) - inv(L+S)) obs, the log-domain
        form of the direct derivative of the odds ratio.
        """
        obs = np.atleast_2d(np.asarray(obs, dtype=float))
        eps = self.prior.epsilon
        if eps == 0.0 or eps == 1.0:
            return np.zeros_like(obs)
        if t is None or slab_mean is None:
            log_ratio, slab_mean = self._log_ratio(obs)
            t = expit(-log_ratio)
        delta_solve = cho_solve(self._chol_s, slab_mean.T).T
        return (t * (1.0 - t))[:, None] * delta_solve


def posterior_weight(obs, prior: PriorParams, chan: GaussianChannel) -> float:
    """Posterior probability that the observed row is active (non-zero)."""
    return float(BatchDenoiser(prior, chan.cov).weights(_as_row(obs, prior))[0])


def posterior_mean(obs, prior: PriorParams, chan: GaussianChannel) -> np.ndarray:
    """Posterior mean of the row given the pseudo observation ``obs``."""
    _, means, _ = BatchDenoiser(prior, chan.cov).posterior(_as_row(obs, prior))
    return means[0]


def posterior_cov(obs, prior: PriorParams, chan: GaussianChannel) -> np.ndarray:
    """Posterior covariance of the row; symmetric positive semidefinite."""
    _, _, covs = BatchDenoiser(prior, chan.cov).posterior(_as_row(obs, prior))
    return covs[0]


def denoise(obs, prior: PriorParams, chan: GaussianChannel) -> DenoiseResult:
    """Full posterior summary (mean, covariance, weight) for one row."""
    t, means, covs = BatchDenoiser(prior, chan.cov).posterior(_as_row(obs, prior))
    return DenoiseResult(mean=means[0], cov=covs[0], weight=float(t[0]))


def weight_gradient(obs, prior: PriorParams, chan: GaussianChannel) -> np.ndarray:
    """Gradient of posterior_weight with respect to the observation."""
    return BatchDenoiser(prior, chan.cov).weight_gradients(_as_row(obs, prior))[0]


def posterior_jacobian(obs, prior: PriorParams, chan: GaussianChannel) -> np.ndarray:
    """Jacobian of posterior_mean; entry (a, b) is d mean_a / d obs_b."""
    _, jacs = BatchDenoiser(prior, chan.cov).jacobians(_as_row(obs, prior))
    return jacs[0]


def _as_row(obs, prior: PriorParams) -> np.ndarray:
    obs = np.atleast_1d(np.asarray(obs, dtype=float))
    if obs.shape != (prior.n_snapshots,):
        raise ValueError(
            f"observation has shape {obs.shape}, expected ({prior.n_snapshots},)"
        )
    return obs[None, :]


def edge_posterior(obs: np.ndarray, covs: np.ndarray, prior: PriorParams):
    """Posterior (weights, means, covariances) with a distinct channel per row.

    ``obs`` has shape (B, J) and ``covs`` shape (B, J, J); this is the
    edge-indexed path where every message carries its own accumulated noise
    covariance. All solves are batched; no Python-level loop over edges.
    """
    obs = np.asarray(obs, dtype=float)
    covs = floor_spd(np.asarray(covs, dtype=float))
    b, j = obs.shape
    eps = prior.epsilon
    slab = prior.slab_cov
    if eps == 0.0:
        return np.zeros(b), np.zeros((b, j)), np.zeros((b, j, j))
    denom = slab + covs
    slab_mean = np.linalg.solve(denom, obs[..., None])[..., 0] @ slab
    # slab posterior covariance: L inv(L+S) S, symmetrized
    slab_post = symmetrize(np.swapaxes(np.linalg.solve(denom, covs), -1, -2) @ slab)
    if eps == 1.0:
        return np.ones(b), slab_mean, slab_post
    chol_s = np.linalg.cholesky(covs)
    chol_d = np.linalg.cholesky(denom)
    quad = np.einsum(
        "bj,bj->b", np.linalg.solve(covs, obs[..., None])[..., 0], slab_mean
    )
    log_ratio = (
        np.log1p(-eps)
        - np.log(eps)
        + 0.5 * (chol_logdet(chol_d) - chol_logdet(chol_s))
        - 0.5 * quad
    )
    t = expit(-log_ratio)
    means = t[:, None] * slab_mean
    out = (t * (1.0 - t))[:, None, None] * np.einsum("bi,bj->bij", slab_mean, slab_mean)
    out += t[:, None, None] * slab_post
    return t, means, symmetrize(out)


def scalar_shrinkage(obs, noise_var: float, epsilon: float):
    """Fast-path shrinkage for uncorrelated snapshots (slab_cov = I, cov = c I).

    Returns ``(weight, mean)`` with

        weight = 1/(1 + ((1-eps)/eps) (1 + 1/c)^(J/2)
                        exp(-||obs||^2 / (2 c (1+c))))
        mean   = weight * obs / (1 + c)

    evaluated in the log domain; agrees with the general-path posterior at
    slab_cov = I, cov = c I to floating-point accuracy.
    """
    obs = np.atleast_1d(np.asarray(obs, dtype=float))
    t, means = scalar_shrinkage_rows(obs[None, :], noise_var, epsilon)
    return float(t[0]), means[0]


def scalar_shrinkage_rows(obs: np.ndarray, noise_var: float, epsilon: float):
    """Vectorized scalar_shrinkage over rows ``obs`` of shape (B, J)."""
    obs = np.asarray(obs, dtype=float)
    c = max(float(noise_var), COV_EIG_FLOOR)
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    b, j = obs.shape
    if epsilon == 0.0:
        return np.zeros(b), np.zeros_like(obs)
    gain = 1.0 / (1.0 + c)
    if epsilon == 1.0:
        return np.ones(b), obs * gain
    sq = np.einsum("bj,bj->b", obs, obs)
    log_ratio = (
        np.log1p(-epsilon)
        - np.log(epsilon)
        + 0.5 * j * np.log1p(1.0 / c)
        - sq / (2.0 * c * (1.0 + c))
    )
    t = expit(-log_ratio)
    return t, t[:, None] * (obs * gain)


def scalar_jacobian_traces(noise_var: float, weights: np.ndarray):
    """Scalar stand-in for the shrinkage Jacobian per row: weight / (1 + c).

    This is the mean diagonal of d(mean)/d(obs) for mean = t * obs/(1+c)
    under the same simplification the fast path applies to its error
    recursion, namely that the weight variance t(1-t) vanishes as the
    snapshot count grows. Keeping the t(1-t) Jacobian term while dropping it
    from the error recursion is inconsistent and destabilizes the loop at
    small J, so both drop it together.
    """
    c = max(float(noise_var), COV_EIG_FLOOR)
    return np.asarray(weights, dtype=float) / (1.0 + c)


def hard_threshold_limit(noise_var: float) -> float:
    """Many-snapshot detection threshold on ||obs||^2 / J.

    As J grows the shrinkage weight tends to a 0/1 indicator of whether the
    per-snapshot energy exceeds ``c (1+c) log(1 + 1/c)``; this returns that
    threshold for channel level ``c = noise_var``.
    """
    c = float(noise_var)
    if c <= 0.0:
        raise ValueError(f"noise_var must be positive, got {c}")
    return c * (1.0 + c) * np.log1p(1.0 / c)


def slab_covariance_factor(prior: PriorParams) -> np.ndarray:
    """Lower-triangular factor F with F F' = slab_cov, for sampling active rows."""
    return cholesky(prior.slab_cov, lower=True)
