import numpy as np
import numpy.testing as npt
import pytest

from mmvamp.denoiser import PriorParams
from mmvamp.model import (
    ModelConfig,
    SensingMatrix,
    dump_instance,
    dump_measurements,
    dump_sensing_matrix,
    dump_signal,
    gen_instance,
    gen_sensing_matrix,
    gen_signal,
    load_measurements,
    load_sensing_matrix,
    load_signal,
    measure,
    named_stream,
    sigma2_from_snr,
)


def make_cfg(N=100, M=50, J=3, d=20, eps=0.1, seed=0, **noise):
    if not noise:
        noise = {"sigma2": 0.0}
    return ModelConfig(N=N, M=M, J=J, d=d, prior=PriorParams(eps, np.eye(J)), seed=seed, **noise)


class TestConfig:
    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            make_cfg(M=10, d=11)
        with pytest.raises(ValueError):
            make_cfg(d=0)
        with pytest.raises(ValueError):
            make_cfg(N=0)

    def test_exactly_one_noise_spec(self):
        with pytest.raises(ValueError):
            ModelConfig(N=10, M=5, J=1, d=2, prior=PriorParams(0.1, np.eye(1)))
        with pytest.raises(ValueError):
            ModelConfig(
                N=10, M=5, J=1, d=2, prior=PriorParams(0.1, np.eye(1)), sigma2=0.1, snr_db=20.0
            )

    def test_prior_dim_must_match(self):
        with pytest.raises(ValueError):
            ModelConfig(N=10, M=5, J=2, d=2, prior=PriorParams(0.1, np.eye(3)), sigma2=0.0)


class TestSnrConversion:
    def test_unit_power_zero_db(self):
        cfg = ModelConfig(N=10, M=10, J=1, d=2, prior=PriorParams(1.0, np.eye(1)), snr_db=0.0)
        assert sigma2_from_snr(cfg) == pytest.approx(1.0)

    def test_reference_point(self):
        cfg = make_cfg(eps=0.1, snr_db=30.0)  # delta = 0.5
        assert sigma2_from_snr(cfg) == pytest.approx(2e-4)

    def test_monotone_in_snr(self):
        values = [sigma2_from_snr(make_cfg(snr_db=db)) for db in (0.0, 10.0, 20.0, 40.0)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[-1] > 0


class TestSignal:
    def test_all_zero_when_empty_prior(self):
        cfg = make_cfg(eps=0.0, N=500)
        sig = gen_signal(cfg)
        assert not sig.support.any()
        assert not sig.X.any()

    def test_dense_gaussian_variance(self):
        cfg = make_cfg(eps=1.0, N=100_000, J=1, M=50, d=20)
        sig = gen_signal(cfg)
        assert 0.98 <= sig.X.var() <= 1.02

    def test_support_fraction(self):
        cfg = make_cfg(eps=0.1, N=100_000)
        sig = gen_signal(cfg)
        assert 0.097 <= sig.support.mean() <= 0.103

    def test_rows_zero_iff_unsupported(self):
        cfg = make_cfg(N=2000, eps=0.3)
        sig = gen_signal(cfg)
        row_zero = ~sig.X.any(axis=1)
        npt.assert_array_equal(row_zero, sig.support == 0)

    def test_slab_covariance_respected(self):
        slab = np.array([[2.0, 0.8], [0.8, 1.0]])
        cfg = ModelConfig(
            N=200_000, M=50, J=2, d=20, prior=PriorParams(1.0, slab), sigma2=0.0, seed=3
        )
        sig = gen_signal(cfg)
        npt.assert_allclose(np.cov(sig.X.T), slab, atol=0.03)


class TestSensingMatrix:
    def test_values_are_plus_minus_inv_sqrt_d(self):
        phi = gen_sensing_matrix(make_cfg(d=20))
        npt.assert_allclose(np.abs(phi.csr.data), 1.0 / np.sqrt(20.0), rtol=0)

    def test_degenerate_small_case(self):
        cfg = make_cfg(N=2000, M=2, d=1, J=1)
        phi = gen_sensing_matrix(cfg)
        npt.assert_allclose(np.abs(phi.csr.data), 1.0)
        # each entry kept with probability 1/2
        assert 0.45 <= phi.nnz / (2 * 2000) <= 0.55

    def test_mean_column_and_row_sum_of_squares(self):
        phi = gen_sensing_matrix(make_cfg(seed=5))
        sq = phi.csr.multiply(phi.csr)
        col = np.asarray(sq.sum(axis=0)).ravel()
        row = np.asarray(sq.sum(axis=1)).ravel()
        assert 0.95 <= col.mean() <= 1.05
        assert 1.9 <= row.mean() <= 2.1

    def test_large_matrix_statistics(self):
        # per-column energies concentrate in the central band predicted by
        # the binomial generator (std = sqrt((1 - d/M)/d) around 1)
        cfg = make_cfg(N=10_000, M=5_000, d=100, J=1, seed=88)
        phi = gen_sensing_matrix(cfg)
        sq = phi.csr.multiply(phi.csr)
        col = np.asarray(sq.sum(axis=0)).ravel()
        row = np.asarray(sq.sum(axis=1)).ravel()
        band = 2.6 * np.sqrt((1 - 100 / 5000) / 100)
        assert np.mean(np.abs(col - 1.0) <= band) >= 0.985
        assert abs(row.mean() - 2.0) <= 0.05 * 2.0
        cubes = np.asarray(sq.multiply(phi.csr).sum(axis=1)).ravel()
        stderr = cubes.std() / np.sqrt(cubes.size)
        assert abs(cubes.mean()) <= 3 * max(stderr, 1e-12)

    def test_row_and_col_views_agree(self):
        phi = gen_sensing_matrix(make_cfg(seed=9))
        a = phi.csr.tocoo()
        b = phi.csc.tocoo()
        edges_a = sorted(zip(a.row, a.col, a.data))
        edges_b = sorted(zip(b.row, b.col, b.data))
        assert edges_a == edges_b


class TestMeasure:
    def test_zero_signal_zero_noise(self):
        cfg = make_cfg(eps=0.0, N=50, M=20, d=5)
        phi, sig, meas = gen_instance(cfg)
        assert not meas.Y.any()

    def test_single_edge_passthrough(self):
        phi = SensingMatrix.from_coo(3, 4, 1, [1], [1], [1.0])
        X = np.zeros((4, 3))
        X[1] = [1.0, 2.0, 3.0]
        meas = measure(phi, type("S", (), {"X": X, "support": None})(), 0.0)
        npt.assert_array_equal(meas.Y[1], [1.0, 2.0, 3.0])
        assert not meas.Y[[0, 2]].any()

    def test_noise_variance_concentrates(self):
        cfg = ModelConfig(
            N=10, M=20_000, J=5, d=5, prior=PriorParams(0.0, np.eye(5)), sigma2=4.0, seed=2
        )
        phi = gen_sensing_matrix(cfg)
        sig = gen_signal(cfg)
        meas = measure(phi, sig, 4.0, rng=named_stream(2, "noise"))
        assert 3.9 <= meas.Y.var() <= 4.1

    def test_dimension_mismatch(self):
        phi = SensingMatrix.from_coo(3, 4, 1, [0], [0], [1.0])
        bad = type("S", (), {"X": np.zeros((5, 2)), "support": None})()
        with pytest.raises(ValueError):
            measure(phi, bad, 0.0)

    def test_negative_variance_rejected(self):
        cfg = make_cfg()
        phi, sig, _ = gen_instance(cfg)
        with pytest.raises(ValueError):
            measure(phi, sig, -1.0)


class TestReproducibility:
    def test_instance_is_bit_stable(self):
        cfg = make_cfg(seed=777, snr_db=25.0)
        phi1, sig1, meas1 = gen_instance(cfg)
        phi2, sig2, meas2 = gen_instance(cfg)
        assert (phi1.csr != phi2.csr).nnz == 0
        npt.assert_array_equal(sig1.X, sig2.X)
        npt.assert_array_equal(meas1.Y, meas2.Y)

    def test_named_streams_are_independent(self):
        cfg = make_cfg(seed=101)
        sig_a = gen_signal(cfg)
        gen_sensing_matrix(cfg)  # consuming the matrix stream must not shift the signal stream
        sig_b = gen_signal(cfg)
        npt.assert_array_equal(sig_a.X, sig_b.X)

    def test_different_seeds_differ(self):
        a = gen_signal(make_cfg(seed=1))
        b = gen_signal(make_cfg(seed=2))
        assert not np.array_equal(a.X, b.X)

    def test_rows_are_exchangeable_in_distribution(self):
        # any index block of one draw shows the same marginal moments
        sig = gen_signal(make_cfg(N=100_000, eps=0.2, seed=44))
        first, second = sig.X[:50_000], sig.X[50_000:]
        assert abs(first.mean() - second.mean()) < 5e-3
        assert abs(first.var() - second.var()) < 5e-3
        assert abs(sig.support[:50_000].mean() - sig.support[50_000:].mean()) < 8e-3


class TestInterchange:
    def test_matrix_round_trip(self, tmp_path):
        phi = gen_sensing_matrix(make_cfg(N=40, M=20, d=7, seed=4))
        path = tmp_path / "matrix.txt"
        dump_sensing_matrix(phi, path)
        header = path.read_text().splitlines()[0]
        assert header == f"20 40 {phi.nnz}"
        back = load_sensing_matrix(path, d=7)
        assert (back.csr != phi.csr).nnz == 0

    def test_signal_round_trip(self, tmp_path):
        sig = gen_signal(make_cfg(N=30, eps=0.4, seed=6))
        path = tmp_path / "signal.csv"
        dump_signal(sig, path)
        back = load_signal(path)
        npt.assert_array_equal(back.X, sig.X)
        npt.assert_array_equal(back.support, sig.support)

    def test_measurements_round_trip(self, tmp_path):
        cfg = make_cfg(seed=8, snr_db=20.0)
        _, _, meas = gen_instance(cfg)
        path = tmp_path / "meas.csv"
        dump_measurements(meas, path)
        back = load_measurements(path, sigma2=meas.sigma2)
        npt.assert_array_equal(back.Y, meas.Y)
        assert back.sigma2 == meas.sigma2

    def test_dump_instance_writes_all_files(self, tmp_path):
        paths = dump_instance(make_cfg(N=20, M=10, d=4, seed=12), tmp_path / "inst")
        for key in ("matrix", "signal", "measurements", "meta"):
            assert key in paths
            assert (tmp_path / "inst").joinpath(paths[key].split("/")[-1]).exists()
