"""Problem instance generation: jointly sparse signals, sparse sensing
matrices, and noisy measurements, all reproducible from named seed streams."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .denoiser import PriorParams, slab_covariance_factor

# Independent counter-based streams so each component of an instance can be
# regenerated on its own without replaying the others.
_STREAMS = {"support": 0, "slab": 1, "matrix": 2, "noise": 3}


def named_stream(seed: int, name: str) -> np.random.Generator:
    """Counter-based generator for one of the named instance streams."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=(int(seed), _STREAMS[name])))
    )


@dataclass(frozen=True)
class ModelConfig:
    """Instance dimensions, prior, noise level, and seed.

    Exactly one of ``sigma2`` (noise variance) or ``snr_db`` must be given;
    ``noise_variance()`` resolves either to a variance.
    """

    N: int
    M: int
    J: int
    d: int
    prior: PriorParams
    sigma2: float | None = None
    snr_db: float | None = None
    seed: int = 0

    def __post_init__(self):
        if min(self.N, self.M, self.J) < 1:
            raise ValueError("N, M, J must all be >= 1")
        # d = M (retention probability 1) is allowed so that M = 1 smoke
        # instances remain expressible; d > M has no generative meaning.
        if not 0 < self.d <= self.M:
            raise ValueError(f"d must satisfy 0 < d <= M, got d={self.d}, M={self.M}")
        if (self.sigma2 is None) == (self.snr_db is None):
            raise ValueError("exactly one of sigma2 and snr_db must be set")
        if self.sigma2 is not None and self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        if self.prior.n_snapshots != self.J:
            raise ValueError("prior slab covariance must be J x J")

    @property
    def delta(self) -> float:
        """Undersampling ratio M/N."""
        return self.M / self.N

    def noise_variance(self) -> float:
        if self.sigma2 is not None:
            return float(self.sigma2)
        return sigma2_from_snr(self)


@dataclass(frozen=True)
class SensingMatrix:
    """Sparse M x N operator with entries +-1/sqrt(d).

    ``csr``/``csc`` hold the same edge set in row-major and column-major
    order; ``rows``/``cols``/``vals`` expose the edges in column-major order
    for the message-passing solvers.
    """

    M: int
    N: int
    d: int
    csr: sp.csr_matrix
    csc: sp.csc_matrix = field(repr=False)

    @classmethod
    def from_coo(cls, M, N, d, rows, cols, vals) -> "SensingMatrix":
        coo = sp.coo_matrix((vals, (rows, cols)), shape=(M, N))
        return cls(M=M, N=N, d=d, csr=coo.tocsr(), csc=coo.tocsc())

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    @property
    def delta(self) -> float:
        return self.M / self.N

    def edges_col_major(self):
        """(rows, cols, vals) of all edges sorted by column then row."""
        coo = self.csc.tocoo()
        return coo.row, coo.col, coo.data

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()


@dataclass(frozen=True)
class SignalEnsemble:
    """N x J signal matrix plus the 0/1 row support that generated it."""

    X: np.ndarray
    support: np.ndarray


@dataclass(frozen=True)
class MeasurementSet:
    """M x J measurements and the noise variance they were taken with."""

    Y: np.ndarray
    sigma2: float


def sigma2_from_snr(cfg: ModelConfig) -> float:
    """Noise variance realizing ``cfg.snr_db``.

    SNR is defined per measurement entry: the expected signal power of one
    measurement is eps * tr(slab_cov)/J * (N/M) (column normalization makes a
    row's sum of squared entries concentrate at N/M), so

        sigma2 = eps * tr(slab_cov)/J * (N/M) * 10^(-snr_db/10)
    """
    if cfg.snr_db is None:
        raise ValueError("config has no snr_db set")
    per_entry = cfg.prior.epsilon * np.trace(cfg.prior.slab_cov) / cfg.J
    return float(per_entry / cfg.delta * 10.0 ** (-cfg.snr_db / 10.0))


def gen_signal(cfg: ModelConfig, rng: np.random.Generator | None = None) -> SignalEnsemble:
    """Draw a jointly sparse N x J signal.

    Row n is zero with probability 1 - eps and otherwise an independent draw
    from N(0, slab_cov). The slab draw consumes N x J normals regardless of
    the support so the two streams stay independent.
    """
    eps = cfg.prior.epsilon
    support_rng = rng if rng is not None else named_stream(cfg.seed, "support")
    slab_rng = rng if rng is not None else named_stream(cfg.seed, "slab")
    support = (support_rng.random(cfg.N) < eps).astype(np.int8)
    raw = slab_rng.standard_normal((cfg.N, cfg.J))
    X = raw @ slab_covariance_factor(cfg.prior).T
    X *= support[:, None]
    return SignalEnsemble(X=X, support=support)


def gen_sensing_matrix(cfg: ModelConfig, rng: np.random.Generator | None = None) -> SensingMatrix:
    """Draw the sparse sensing matrix.

    Every entry is kept independently with probability d/M and set to
    +-1/sqrt(d) with equal sign probability. Columns are generated in blocks
    to bound memory at large N; empty rows or columns are legitimate draws
    and the solvers tolerate them.
    """
    rng = rng if rng is not None else named_stream(cfg.seed, "matrix")
    keep_prob = cfg.d / cfg.M
    scale = 1.0 / np.sqrt(cfg.d)
    block = max(1, min(cfg.N, (1 << 22) // max(cfg.M, 1)))
    rows_parts, cols_parts, vals_parts = [], [], []
    for start in range(0, cfg.N, block):
        stop = min(start + block, cfg.N)
        mask = rng.random((cfg.M, stop - start)) < keep_prob
        r, c = np.nonzero(mask)
        signs = rng.integers(0, 2, size=r.size) * 2 - 1
        rows_parts.append(r)
        cols_parts.append(c + start)
        vals_parts.append(signs * scale)
    rows = np.concatenate(rows_parts)
    cols = np.concatenate(cols_parts)
    vals = np.concatenate(vals_parts)
    return SensingMatrix.from_coo(cfg.M, cfg.N, cfg.d, rows, cols, vals)


def measure(
    phi: SensingMatrix,
    signal: SignalEnsemble,
    sigma2: float,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
) -> MeasurementSet:
    """Take measurements Y = Phi X + noise with iid N(0, sigma2) entries."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    if signal.X.shape[0] != phi.N:
        raise ValueError(
            f"signal has {signal.X.shape[0]} rows but sensing matrix expects {phi.N}"
        )
    Y = phi.csr @ signal.X
    if sigma2 > 0:
        rng = rng if rng is not None else named_stream(seed if seed is not None else 0, "noise")
        Y = Y + np.sqrt(sigma2) * rng.standard_normal(Y.shape)
    return MeasurementSet(Y=Y, sigma2=float(sigma2))


def gen_instance(cfg: ModelConfig):
    """Generate (sensing matrix, signal, measurements) for one trial."""
    phi = gen_sensing_matrix(cfg)
    signal = gen_signal(cfg)
    meas = measure(phi, signal, cfg.noise_variance(), rng=named_stream(cfg.seed, "noise"))
    return phi, signal, meas


# ---------------------------------------------------------------------------
# Instance interchange formats: coordinate-list text for the matrix, CSV with
# a header row for signals and measurements. Indices are zero-based.
# ---------------------------------------------------------------------------


def dump_sensing_matrix(phi: SensingMatrix, path) -> None:
    coo = phi.csr.tocoo()
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{phi.M} {phi.N} {phi.nnz}\n")
        for m, n, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{m} {n} {float(v)!r}\n")


def load_sensing_matrix(path, d: int = 1) -> SensingMatrix:
    with open(path) as fh:
        M, N, nnz = (int(tok) for tok in fh.readline().split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=float)
        for i in range(nnz):
            m, n, v = fh.readline().split()
            rows[i], cols[i], vals[i] = int(m), int(n), float(v)
    return SensingMatrix.from_coo(M, N, d, rows, cols, vals)


def dump_signal(signal: SignalEnsemble, path) -> None:
    J = signal.X.shape[1]
    with open(path, "w", newline="\n") as fh:
        fh.write("support," + ",".join(f"x{j + 1}" for j in range(J)) + "\n")
        for b, row in zip(signal.support, signal.X):
            fh.write(f"{int(b)}," + ",".join(repr(float(v)) for v in row) + "\n")


def load_signal(path) -> SignalEnsemble:
    data = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
    support = data[:, 0].astype(np.int8)
    return SignalEnsemble(X=data[:, 1:], support=support)


def dump_measurements(meas: MeasurementSet, path) -> None:
    J = meas.Y.shape[1]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(f"y{j + 1}" for j in range(J)) + "\n")
        for row in meas.Y:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_measurements(path, sigma2: float = 0.0) -> MeasurementSet:
    data = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
    return MeasurementSet(Y=data, sigma2=float(sigma2))


def dump_instance(cfg: ModelConfig, out_dir) -> dict:
    """Write matrix.txt, signal.csv, measurements.csv, meta.json for cfg."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    phi, signal, meas = gen_instance(cfg)
    paths = {
        "matrix": out / "matrix.txt",
        "signal": out / "signal.csv",
        "measurements": out / "measurements.csv",
        "meta": out / "meta.json",
    }
    dump_sensing_matrix(phi, paths["matrix"])
    dump_signal(signal, paths["signal"])
    dump_measurements(meas, paths["measurements"])
    meta = {
        "N": cfg.N,
        "M": cfg.M,
        "J": cfg.J,
        "d": cfg.d,
        "epsilon": cfg.prior.epsilon,
        "sigma2": meas.sigma2,
        "seed": cfg.seed,
    }
    with open(paths["meta"], "w", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {k: str(v) for k, v in paths.items()}
