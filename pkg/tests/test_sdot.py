import numpy as np
import pytest

from helpers import assign_oracle
from nopain import features, sdot
from nopain.errors import (
    DimensionMismatch,
    InvalidSpec,
    MalformedFile,
    NonFiniteData,
    NotConverged,
)


class TestHyperplaneValue:
    def test_direct_arithmetic(self):
        assert sdot.hyperplane_value([1.0, 2.0], 0.5, [3.0, -1.0]) == 1.5

    def test_degenerate_plane_returns_height(self):
        assert sdot.hyperplane_value([0.0, 0.0, 0.0], 7.0, [4.0, 5.0, 6.0]) == 7.0

    def test_against_summation_oracle(self):
        gen = np.random.Generator(np.random.PCG64(21))
        for _ in range(200):
            d = int(gen.integers(1, 12))
            y, x = gen.normal(size=d), gen.normal(size=d)
            h = float(gen.normal())
            expected = sum(float(y[t]) * float(x[t]) for t in range(d)) + h
            assert sdot.hyperplane_value(y, h, x) == pytest.approx(
                expected, rel=1e-12, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            sdot.hyperplane_value([1.0, 2.0], 0.0, [1.0])


class TestAssignCell:
    def test_two_plane_comparison(self):
        Y = np.array([[-1.0], [1.0]])
        assert sdot.assign_cell(Y, [0.0, 0.0], [0.3]) == 1

    def test_tie_breaks_to_lowest_index(self):
        Y = np.array([[-1.0], [1.0]])
        assert sdot.assign_cell(Y, [0.0, 0.0], [0.0]) == 0

    def test_matches_linear_scan_oracle(self):
        gen = np.random.Generator(np.random.PCG64(77))
        for _ in range(20):
            n = int(gen.integers(2, 50))
            d = int(gen.integers(1, 9))
            Y = gen.normal(size=(n, d))
            h = gen.normal(size=n)
            for _ in range(25):
                x = gen.normal(size=d)
                assert sdot.assign_cell(Y, h, x) == assign_oracle(Y, h, x)

    def test_shift_invariance(self):
        gen = np.random.Generator(np.random.PCG64(31))
        Y = gen.normal(size=(12, 4))
        h = gen.normal(size=12)
        for _ in range(50):
            x = gen.normal(size=4)
            base = sdot.assign_cell(Y, h, x)
            assert sdot.assign_cell(Y, h + 17.25, x) == base
            assert sdot.assign_cell(Y, h - 3.5, x) == base


class TestEstimateCellStats:
    def test_single_target_degenerate(self):
        # N=1 is below the FeatureSet floor but allowed on raw arrays.
        M = 4000
        stats = sdot.estimate_cell_stats(np.array([[0.0, 0.0]]), [0.0], M,
                                         seed=9)
        assert stats.frequencies.tolist() == [1.0]
        assert np.abs(stats.centers[0]).max() < 4 / np.sqrt(M)

    def test_symmetric_pair_frequencies(self):
        Y = np.array([[-1.0], [1.0]])
        stats = sdot.estimate_cell_stats(Y, [0.0, 0.0], 100_000, seed=2)
        assert 0.49 < stats.frequencies[0] < 0.51
        assert 0.49 < stats.frequencies[1] < 0.51

    def test_frequencies_sum_to_one(self):
        gen = np.random.Generator(np.random.PCG64(8))
        Y = gen.normal(size=(30, 5))
        stats = sdot.estimate_cell_stats(Y, np.zeros(30), 5000, seed=3)
        assert abs(stats.frequencies.sum() - 1.0) <= 1e-12
        assert stats.member_counts.sum() == 5000

    def test_centers_match_cached_samples(self):
        gen = np.random.Generator(np.random.PCG64(18))
        Y = gen.normal(size=(10, 3))
        stats = sdot.estimate_cell_stats(Y, np.zeros(10), 2000, seed=4)
        for i in range(10):
            members = stats.members_of(i)
            if stats.member_counts[i] == 0:
                assert stats.center_of(i) is None
                assert members.shape[0] == 0
            else:
                assert members.shape[0] == stats.member_counts[i]
                np.testing.assert_allclose(stats.center_of(i),
                                           members.mean(axis=0), atol=1e-12)

    def test_thread_count_does_not_change_result(self):
        gen = np.random.Generator(np.random.PCG64(28))
        Y = gen.normal(size=(20, 4))
        h = gen.normal(size=20)
        # spans several chunks so the reduction order actually matters
        a = sdot.estimate_cell_stats(Y, h, 50_000, seed=6, threads=1)
        b = sdot.estimate_cell_stats(Y, h, 50_000, seed=6, threads=4)
        assert np.array_equal(a.frequencies, b.frequencies)
        assert np.array_equal(a.samples, b.samples)
        assert np.array_equal(a.centers, b.centers, equal_nan=True)

    def test_rejects_bad_m(self):
        with pytest.raises(InvalidSpec):
            sdot.estimate_cell_stats(np.array([[0.0], [1.0]]), [0.0, 0.0], 0,
                                     seed=0)


class TestEnergyAndGradient:
    def test_uniform_is_zero(self):
        w = np.full(8, 1 / 8)
        assert sdot.energy(w, 8) == 0.0
        assert np.array_equal(sdot.height_gradient(w, 8), np.zeros(8))

    def test_fully_concentrated(self):
        assert sdot.energy(np.array([1.0, 0.0]), 2) == 0.5

    def test_two_cell_gradient(self):
        g = sdot.height_gradient(np.array([0.6, 0.4]), 2)
        np.testing.assert_allclose(g, [0.1, -0.1], atol=1e-15)

    def test_energy_against_naive_sum(self):
        gen = np.random.Generator(np.random.PCG64(41))
        for _ in range(100):
            n = int(gen.integers(2, 40))
            raw = gen.random(n)
            w = raw / raw.sum()
            expected = sum((float(w[i]) - 1.0 / n) ** 2 for i in range(n))
            assert sdot.energy(w, n) == pytest.approx(expected, rel=1e-12)

    def test_gradient_is_mean_zero(self):
        gen = np.random.Generator(np.random.PCG64(42))
        for _ in range(100):
            n = int(gen.integers(2, 200))
            raw = gen.random(n)
            w = raw / raw.sum()
            g = sdot.height_gradient(w, n)
            assert abs(g.sum()) <= 1e-15 * n

    def test_energy_nonnegative(self):
        gen = np.random.Generator(np.random.PCG64(43))
        for _ in range(50):
            n = int(gen.integers(2, 30))
            raw = gen.random(n)
            w = raw / raw.sum()
            assert sdot.energy(w, n) >= 0.0


class TestSolve:
    def test_symmetric_pair_heights(self):
        heights, stats, report = sdot.solve(np.array([[-1.0], [1.0]]),
                                            sdot.SolverConfig(seed=0))
        assert report.converged
        assert report.final_energy < 2e-3
        assert abs(heights.heights[0] - heights.heights[1]) < 0.05

    def test_heights_are_mean_centered(self):
        heights, _, _ = sdot.solve(np.array([[-1.0], [0.0], [2.0]]),
                                   sdot.SolverConfig(seed=1))
        n = len(heights)
        assert abs(heights.heights.sum()) <= 1e-9 * n

    def test_converged_energy_below_eta(self, two_mode_solved):
        _, _, stats, report = two_mode_solved
        assert report.converged
        assert report.final_energy < sdot.SolverConfig().eta
        assert sdot.energy(stats, stats.count) == pytest.approx(
            report.final_energy)

    def test_bit_identical_reruns(self):
        Y = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        h1, _, _ = sdot.solve(Y, sdot.SolverConfig(seed=12))
        h2, _, _ = sdot.solve(Y, sdot.SolverConfig(seed=12))
        assert np.array_equal(h1.heights, h2.heights)

    def test_threads_do_not_change_heights(self):
        spec = features.axis_mixture_spec(modes=2, d=4, scale=8.0,
                                          stddev=0.5, seed=2)
        fs = features.synth_mixture(spec, 30, 4)
        h1, _, _ = sdot.solve(fs, sdot.SolverConfig(seed=3), threads=1)
        h2, _, _ = sdot.solve(fs, sdot.SolverConfig(seed=3), threads=3)
        assert np.array_equal(h1.heights, h2.heights)

    def test_not_converged_carries_payload(self):
        spec = features.axis_mixture_spec(modes=2, d=4, scale=8.0,
                                          stddev=0.5, seed=2)
        fs = features.synth_mixture(spec, 30, 4)
        with pytest.raises(NotConverged) as err:
            sdot.solve(fs, sdot.SolverConfig(seed=3, max_epochs=1))
        assert err.value.heights is not None
        assert len(err.value.heights) == 30
        assert err.value.report.converged is False
        assert err.value.report.epochs_run == 1

    def test_rejects_single_target(self):
        with pytest.raises(InvalidSpec):
            sdot.solve(np.array([[1.0]]), sdot.SolverConfig())

    def test_report_log_round_trip(self, tmp_path, two_mode_solved):
        _, _, _, report = two_mode_solved
        log = tmp_path / "solve.log"
        report.write_log(log)
        lines = log.read_text().strip().splitlines()
        assert lines[0] == "epoch,energy,batch_size,lr"
        assert len(lines) == report.epochs_run + 1
        first = lines[1].split(",")
        assert first[0] == "0"
        assert int(first[2]) >= 1


class TestSolverConfigValidation:
    def test_decay_range(self):
        with pytest.raises(InvalidSpec):
            sdot.SolverConfig(lr_decay=1.0)

    def test_growth_above_one(self):
        with pytest.raises(InvalidSpec):
            sdot.SolverConfig(batch_growth=1.0)

    def test_eta_positive(self):
        with pytest.raises(InvalidSpec):
            sdot.SolverConfig(eta=0.0)


class TestHeightsFile:
    def test_round_trip(self, tmp_path):
        h = sdot.HeightVector(np.array([0.5, -0.25, -0.25]))
        path = tmp_path / "h.npht"
        sdot.save_heights(h, path, seed=41, final_energy=1.5e-4)
        back, seed, energy_val = sdot.load_heights(path)
        assert np.array_equal(back.heights, h.heights)
        assert seed == 41
        assert energy_val == 1.5e-4
        assert len(path.read_bytes()) == 16 + 3 * 8 + 16

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "h.npht"
        sdot.save_heights(sdot.HeightVector(np.zeros(2)), path)
        raw = bytearray(path.read_bytes())
        raw[0:4] = b"ABCD"
        path.write_bytes(bytes(raw))
        with pytest.raises(MalformedFile):
            sdot.load_heights(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "h.npht"
        sdot.save_heights(sdot.HeightVector(np.zeros(4)), path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(MalformedFile):
            sdot.load_heights(path)

    def test_height_vector_rejects_nan(self):
        with pytest.raises(NonFiniteData):
            sdot.HeightVector(np.array([0.0, np.nan]))
