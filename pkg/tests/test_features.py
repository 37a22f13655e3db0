import struct

import numpy as np
import pytest

from nopain import features
from nopain.errors import (
    DimensionMismatch,
    InvalidSpec,
    IoFailure,
    MalformedFile,
    NonFiniteData,
)

HEADER = struct.Struct("<4sIBQQ")


def write_npft(path, vectors, labels=None):
    """Independent NPFT writer used to cross-check the production reader."""
    vectors = np.asarray(vectors, dtype=np.float64)
    n, d = vectors.shape
    flags = 1 if labels is not None else 0
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(b"NPFT", 1, flags, n, d))
        fh.write(vectors.astype("<f8").tobytes())
        if labels is not None:
            fh.write(np.asarray(labels, dtype="<i8").tobytes())


class TestFeatureSet:
    def test_basic_construction(self):
        fs = features.FeatureSet(vectors=[[1.0, 0, 0], [0, 1.0, 0]])
        assert fs.count == 2
        assert fs.dim == 3

    def test_rejects_single_vector(self):
        with pytest.raises(InvalidSpec):
            features.FeatureSet(vectors=[[1.0, 2.0]])

    def test_rejects_non_finite(self):
        with pytest.raises(NonFiniteData):
            features.FeatureSet(vectors=[[1.0, np.nan], [0.0, 1.0]])

    def test_rejects_label_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            features.FeatureSet(vectors=[[1.0], [2.0]], labels=[0, 1, 2])

    def test_vectors_are_immutable(self):
        fs = features.FeatureSet(vectors=[[1.0], [2.0]])
        with pytest.raises(ValueError):
            fs.vectors[0, 0] = 5.0


class TestNpftFormat:
    def test_trivial_round_trip(self, tmp_path):
        path = tmp_path / "f.npft"
        write_npft(path, [[1, 0, 0], [0, 1, 0]])
        fs = features.load_features(path)
        assert fs.count == 2 and fs.dim == 3
        assert np.array_equal(fs.vectors, [[1, 0, 0], [0, 1, 0]])

    def test_header_layout(self, tmp_path):
        # magic(4) + version(4) + flags(1) + N(8) + d(8) = 25-byte header,
        # then N*d*8 payload bytes.
        path = tmp_path / "f.npft"
        fs = features.FeatureSet(vectors=[[0.0], [1.5]])
        features.save_features(fs, path)
        raw = path.read_bytes()
        assert len(raw) == 25 + 2 * 1 * 8
        assert raw[0:4] == b"NPFT"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert raw[8] == 0
        assert int.from_bytes(raw[9:17], "little") == 2
        assert int.from_bytes(raw[17:25], "little") == 1

    def test_byte_exact_round_trip_randomized(self, tmp_path):
        gen = np.random.Generator(np.random.PCG64(1234))
        for case in range(25):
            n = int(gen.integers(2, 20))
            d = int(gen.integers(1, 9))
            vectors = gen.normal(size=(n, d)) * 100
            labels = gen.integers(-5, 40, size=n) if case % 2 else None
            src = tmp_path / f"src_{case}.npft"
            dst = tmp_path / f"dst_{case}.npft"
            write_npft(src, vectors, labels)
            fs = features.load_features(src)
            features.save_features(fs, dst)
            assert src.read_bytes() == dst.read_bytes()

    def test_value_round_trip(self, tmp_path):
        gen = np.random.Generator(np.random.PCG64(99))
        fs = features.FeatureSet(vectors=gen.normal(size=(7, 3)),
                                 labels=gen.integers(0, 4, size=7))
        path = tmp_path / "v.npft"
        features.save_features(fs, path)
        assert features.load_features(path) == fs

    def test_nan_payload_rejected(self, tmp_path):
        path = tmp_path / "nan.npft"
        vectors = np.array([[1.0, 2.0], [np.nan, 0.0]])
        with open(path, "wb") as fh:
            fh.write(HEADER.pack(b"NPFT", 1, 0, 2, 2))
            fh.write(vectors.astype("<f8").tobytes())
        with pytest.raises(NonFiniteData):
            features.load_features(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.npft"
        write_npft(path, [[1.0], [2.0]])
        raw = bytearray(path.read_bytes())
        raw[0:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(MalformedFile):
            features.load_features(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "bad.npft"
        write_npft(path, [[1.0], [2.0]])
        raw = bytearray(path.read_bytes())
        raw[4:8] = (2).to_bytes(4, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(MalformedFile):
            features.load_features(path)

    def test_unknown_flag_bits(self, tmp_path):
        path = tmp_path / "bad.npft"
        write_npft(path, [[1.0], [2.0]])
        raw = bytearray(path.read_bytes())
        raw[8] = 0x02
        path.write_bytes(bytes(raw))
        with pytest.raises(MalformedFile):
            features.load_features(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "bad.npft"
        write_npft(path, [[1.0, 2.0], [3.0, 4.0]])
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(MalformedFile):
            features.load_features(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "bad.npft"
        write_npft(path, [[1.0], [2.0]])
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(MalformedFile):
            features.load_features(path)

    def test_single_row_file_rejected(self, tmp_path):
        path = tmp_path / "one.npft"
        with open(path, "wb") as fh:
            fh.write(HEADER.pack(b"NPFT", 1, 0, 1, 1))
            fh.write(np.array([[0.0]]).astype("<f8").tobytes())
        with pytest.raises(MalformedFile):
            features.load_features(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            features.load_features(tmp_path / "nope.npft")

    def test_unwritable_path(self, tmp_path):
        fs = features.FeatureSet(vectors=[[1.0], [2.0]])
        with pytest.raises(IoFailure):
            features.save_features(fs, tmp_path / "no_dir" / "f.npft")


class TestCsvImport:
    def test_csv_round_values(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("1.0,2.0,3.0\n4.0,5.0,6.0\n")
        fs = features.load_features(path)
        assert np.array_equal(fs.vectors, [[1, 2, 3], [4, 5, 6]])

    def test_csv_ragged_rows(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("1.0,2.0\n3.0\n")
        with pytest.raises(DimensionMismatch):
            features.load_features(path)

    def test_csv_non_numeric(self, tmp_path):
        path = tmp_path / "f.csv"
        path.write_text("1.0,abc\n2.0,3.0\n")
        with pytest.raises(MalformedFile):
            features.load_features(path)


class TestNppcFormat:
    def test_round_trip(self, tmp_path):
        gen = np.random.Generator(np.random.PCG64(5))
        clouds = [features.PointCloud(points=gen.normal(size=(16, 3)))
                  for _ in range(3)]
        path = tmp_path / "c.nppc"
        features.save_clouds(clouds, path)
        loaded = features.load_clouds(path)
        assert len(loaded) == 3
        for orig, back in zip(clouds, loaded):
            assert np.array_equal(orig.points, back.points)

    def test_header_magic(self, tmp_path):
        path = tmp_path / "c.nppc"
        features.save_clouds(
            [features.PointCloud(points=[[0.0, 0.0, 0.0]])], path)
        raw = path.read_bytes()
        assert raw[0:4] == b"NPPC"
        assert len(raw) == 25 + 1 * 1 * 3 * 8

    def test_length_mismatch(self, tmp_path):
        path = tmp_path / "c.nppc"
        features.save_clouds(
            [features.PointCloud(points=[[0.0, 0.0, 0.0]])], path)
        path.write_bytes(path.read_bytes() + b"\x01")
        with pytest.raises(MalformedFile):
            features.load_clouds(path)

    def test_unequal_cloud_sizes_rejected(self, tmp_path):
        clouds = [features.PointCloud(points=[[0.0, 0.0, 0.0]]),
                  features.PointCloud(points=[[0.0] * 3, [1.0] * 3])]
        with pytest.raises(DimensionMismatch):
            features.save_clouds(clouds, tmp_path / "c.nppc")

    def test_cloud_validation(self):
        with pytest.raises(DimensionMismatch):
            features.PointCloud(points=[[1.0, 2.0]])
        with pytest.raises(NonFiniteData):
            features.PointCloud(points=[[1.0, 2.0, np.inf]])


class TestSynthMixture:
    def test_single_mode_law_of_large_numbers(self):
        spec = features.MixtureSpec(
            modes=(features.MixtureMode(mean=np.zeros(2), stddev=1.0,
                                        weight=1.0),),
            seed=3,
        )
        fs = features.synth_mixture(spec, 1000, 2)
        assert fs.count == 1000
        # CLT: sample mean within 4 / sqrt(n) of 0 per coordinate
        assert np.abs(fs.vectors.mean(axis=0)).max() < 4 / np.sqrt(1000)

    def test_two_modes_separate(self):
        d = 4
        m0 = np.zeros(d); m0[0] = 10.0
        m1 = np.zeros(d); m1[1] = 10.0
        spec = features.MixtureSpec(
            modes=(features.MixtureMode(mean=m0, stddev=1.0, weight=0.5),
                   features.MixtureMode(mean=m1, stddev=1.0, weight=0.5)),
            seed=4,
        )
        fs = features.synth_mixture(spec, 100, d)
        assert set(np.unique(fs.labels)) == {0, 1}
        Y = fs.vectors
        same, cross = [], []
        for i in range(fs.count):
            for j in range(i + 1, fs.count):
                dist = np.linalg.norm(Y[i] - Y[j])
                (same if fs.labels[i] == fs.labels[j] else cross).append(dist)
        assert np.mean(same) < np.mean(cross)

    def test_seed_determinism(self, tmp_path):
        spec = features.axis_mixture_spec(modes=2, d=3, seed=7)
        a = features.synth_mixture(spec, 50, 3)
        b = features.synth_mixture(spec, 50, 3)
        assert a == b
        pa, pb = tmp_path / "a.npft", tmp_path / "b.npft"
        features.save_features(a, pa)
        features.save_features(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_weights_must_sum_to_one(self):
        with pytest.raises(InvalidSpec):
            features.MixtureSpec(
                modes=(features.MixtureMode(mean=np.zeros(2), stddev=1.0,
                                            weight=0.7),),
                seed=0,
            )

    def test_stddev_must_be_positive(self):
        with pytest.raises(InvalidSpec):
            features.MixtureSpec(
                modes=(features.MixtureMode(mean=np.zeros(2), stddev=0.0,
                                            weight=1.0),),
                seed=0,
            )

    def test_n_below_mode_count(self):
        spec = features.axis_mixture_spec(modes=3, d=4)
        with pytest.raises(InvalidSpec):
            features.synth_mixture(spec, 2, 4)

    def test_every_mode_sampled(self):
        spec = features.MixtureSpec(
            modes=(features.MixtureMode(mean=np.zeros(2), stddev=1.0,
                                        weight=0.999),
                   features.MixtureMode(mean=np.ones(2), stddev=1.0,
                                        weight=0.001)),
            seed=0,
        )
        fs = features.synth_mixture(spec, 10, 2)
        assert set(np.unique(fs.labels)) == {0, 1}
