"""State evolution: deterministic prediction of the solvers' per-iteration
error covariance, in scalar (uncorrelated snapshots) and matrix form.

The scalar recursion for noise level c and sparsity eps at undersampling
ratio delta is

    c_next = sigma2 + (eps / delta) * c / (1 + c)

whose noiseless fixed points are 0 (reached from anywhere iff eps <= delta)
and eps/delta - 1 (the attractor when eps > delta). The matrix recursion
replaces the closed form by a Monte Carlo average of the posterior
covariance over signal-plus-noise draws.
"""

from dataclasses import dataclass, field

import numpy as np

from ._linalg import symmetrize
from .denoiser import BatchDenoiser, PriorParams, scalar_shrinkage_rows, slab_covariance_factor


@dataclass
class SeScalarState:
    """Scalar effective noise level and the trajectory that led to it."""

    c: float
    history: list = field(default_factory=list)


@dataclass
class SeMatrixState:
    """Matrix-valued recursion state: error covariance Gamma and the
    effective noise covariance Sigma = sigma2 I + Gamma / delta."""

    Gamma: np.ndarray
    Sigma: np.ndarray
    mc_samples: int = 100_000
    low_sample_warning: bool = False


def se_step_scalar(c: float, epsilon: float, delta: float, sigma2: float) -> float:
    """One step of the scalar recursion."""
    if c < 0:
        raise ValueError("c must be nonnegative")
    if delta <= 0:
        raise ValueError("delta must be positive")
    return sigma2 + (epsilon / delta) * c / (1.0 + c)


def se_fixed_point(
    epsilon: float,
    delta: float,
    sigma2: float,
    tol: float,
    c1: float | None = None,
    max_iter: int = 1_000_000,
):
    """Iterate the scalar recursion until |c_next - c| < tol.

    Returns (c_star, iterations). The map is monotone and bounded, so the
    iteration always settles; at the tangent point eps = delta the approach
    to zero is sublinear (roughly 1/i), which is why the default iteration
    budget is generous.
    """
    c = float(c1) if c1 is not None else sigma2 + epsilon / delta
    for i in range(1, max_iter + 1):
        c_next = se_step_scalar(c, epsilon, delta, sigma2)
        if abs(c_next - c) < tol:
            return c_next, i
        c = c_next
    return c, max_iter


def se_predict_trace(
    epsilon: float,
    delta: float,
    sigma2: float,
    n_iters: int,
    c1: float | None = None,
) -> list[float]:
    """Scalar trajectory [c(1), ..., c(n_iters)].

    c(1) defaults to sigma2 + eps/delta, matching the solvers' prior
    initialization (error covariance eps * I at slab_cov = I), so predicted
    and empirical traces align index by index.
    """
    c = float(c1) if c1 is not None else sigma2 + epsilon / delta
    out = [c]
    for _ in range(n_iters - 1):
        c = se_step_scalar(c, epsilon, delta, sigma2)
        out.append(c)
    return out


def se_step_matrix(
    state: SeMatrixState,
    prior: PriorParams,
    delta: float,
    sigma2: float,
    rng: np.random.Generator,
) -> SeMatrixState:
    """One Monte Carlo step of the matrix recursion.

    Draws ``mc_samples`` spike-and-slab rows plus Gaussian noise with the
    current Sigma, averages the posterior covariance of the noisy draws, and
    refreshes Sigma = sigma2 I + Gamma / delta. Deterministic given ``rng``.
    """
    J = prior.n_snapshots
    n = int(state.mc_samples)
    warn = n < 100
    support = rng.random(n) < prior.epsilon
    x = rng.standard_normal((n, J)) @ slab_covariance_factor(prior).T
    x *= support[:, None]
    noise = rng.standard_normal((n, J)) @ np.linalg.cholesky(symmetrize(state.Sigma)).T
    dn = BatchDenoiser(prior, state.Sigma)
    _, _, covs = dn.posterior(x + noise)
    gamma = symmetrize(covs.mean(axis=0))
    sigma = sigma2 * np.eye(J) + gamma / delta
    return SeMatrixState(
        Gamma=gamma, Sigma=sigma, mc_samples=n, low_sample_warning=warn
    )


def mean_weight_check(
    epsilon: float,
    c: float,
    J: int,
    n_samples: int,
    rng: np.random.Generator,
):
    """Monte Carlo estimate of the mean support weight under the matched model.

    Pseudo observations are drawn from the mixture
    eps * N(0, (1+c) I_J) + (1-eps) * N(0, c I_J) (each component normalized
    with exponent J/2) and passed through the scalar shrinkage weight. In the
    matched case the expectation equals eps exactly; returns
    (sample mean, standard error).
    """
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must lie in (0, 1]")
    if c <= 0:
        raise ValueError("c must be positive")
    if epsilon == 1.0:
        return 1.0, 0.0
    active = rng.random(n_samples) < epsilon
    scale = np.where(active, np.sqrt(1.0 + c), np.sqrt(c))
    obs = rng.standard_normal((n_samples, J)) * scale[:, None]
    t, _ = scalar_shrinkage_rows(obs, c, epsilon)
    stderr = float(t.std(ddof=1) / np.sqrt(n_samples))
    return float(t.mean()), stderr
