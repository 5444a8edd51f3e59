import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import multivariate_normal, norm


def random_spd(rng, j, ridge=0.4):
    a = rng.standard_normal((j, j))
    return a @ a.T + ridge * np.eye(j)


def posterior_by_quadrature(obs, epsilon, slab, chan):
    """Brute-force moments of the two-component posterior for J in {1, 2}.

    Integrates the raw density product eps * N(x; 0, slab) * N(obs - x; 0, chan)
    plus the point-mass term; independent of the closed forms under test.
    """
    obs = np.atleast_1d(np.asarray(obs, dtype=float))
    j = obs.size
    if j == 1:
        s_lam, s_sig = float(slab), float(chan)
        lim = 12.0 * np.sqrt(max(s_lam, s_sig)) + abs(obs[0])

        def moment(k):
            return quad(
                lambda x: x**k * norm.pdf(x, 0, np.sqrt(s_lam)) * norm.pdf(obs[0] - x, 0, np.sqrt(s_sig)),
                -lim, lim, epsabs=1e-13, limit=300,
            )[0]

        m0, m1, m2 = moment(0), moment(1), moment(2)
        spike = (1 - epsilon) * norm.pdf(obs[0], 0, np.sqrt(s_sig))
        z = epsilon * m0 + spike
        t = epsilon * m0 / z
        mean = np.array([epsilon * m1 / z])
        cov = np.array([[epsilon * m2 / z - mean[0] ** 2]])
        return t, mean, cov

    # tensor Gauss-Legendre over a box that carries all the mass; smooth
    # Gaussian integrands converge past 1e-12 well before n = 400 nodes
    slab = np.asarray(slab, dtype=float)
    chan = np.asarray(chan, dtype=float)
    slab_pdf = multivariate_normal(mean=np.zeros(2), cov=slab)
    chan_pdf = multivariate_normal(mean=np.zeros(2), cov=chan)
    lim = (
        8.0 * np.sqrt(np.linalg.eigvalsh(slab).max())
        + 8.0 * np.sqrt(np.linalg.eigvalsh(chan).max())
        + np.max(np.abs(obs))
    )
    nodes, weights = np.polynomial.legendre.leggauss(400)
    grid_x, grid_y = np.meshgrid(nodes * lim, nodes * lim, indexing="ij")
    pts = np.column_stack([grid_x.ravel(), grid_y.ravel()])
    density = slab_pdf.pdf(pts) * chan_pdf.pdf(obs[None, :] - pts)
    w2 = np.outer(weights * lim, weights * lim).ravel()

    def moment(values):
        return float(np.sum(w2 * density * values))

    m0 = moment(np.ones(len(pts)))
    mx = moment(pts[:, 0])
    my = moment(pts[:, 1])
    mxx = moment(pts[:, 0] ** 2)
    mxy = moment(pts[:, 0] * pts[:, 1])
    myy = moment(pts[:, 1] ** 2)
    spike = (1 - epsilon) * chan_pdf.pdf(obs)
    z = epsilon * m0 + spike
    t = epsilon * m0 / z
    mean = epsilon * np.array([mx, my]) / z
    second = epsilon * np.array([[mxx, mxy], [mxy, myy]]) / z
    cov = second - np.outer(mean, mean)
    return t, mean, cov


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
