"""Pluggable encoder/decoder pairs and the shipping stub codec.

A codec is registered under an identifier and built from a CodecSpec; it
must expose `encode_points(points) -> vector` and
`decode_vector(vector) -> points`. Real autoencoder plugins (loading
pretrained weights onto spec.device) register through `register_codec`
with the same interface; nothing here imports a deep-learning framework.

The stub codec keeps every adapter test runnable offline. Its latent code
is the cloud's pooled statistics - per-axis mean (3 values) then per-axis
population std (3 values) - zero-padded or truncated to latent_dim.
Decoding rebuilds a cloud from a fixed standardized base pattern scaled and
shifted by those statistics, so encode(decode(v)) reproduces the pooled
part of v and every output is deterministic.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ModelLoadFailure, ShapeMismatch
from . import formats

_STUB_PATTERN_SEED = 311


@dataclass(frozen=True)
class CodecSpec:
    encoder_id: str
    decoder_id: str
    latent_dim: int
    device: str = "cpu"
    points_per_cloud: int = 64

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ShapeMismatch("latent_dim must be >= 1")
        if self.points_per_cloud < 1:
            raise ShapeMismatch("points_per_cloud must be >= 1")


class StubCodec:
    """Deterministic pooled-statistics codec (no pretrained weights)."""

    def __init__(self, spec: CodecSpec):
        self.spec = spec
        gen = np.random.Generator(np.random.PCG64(_STUB_PATTERN_SEED))
        base = gen.standard_normal((spec.points_per_cloud, 3))
        if spec.points_per_cloud > 1:
            base = base - base.mean(axis=0)
            scale = base.std(axis=0)
            scale[scale == 0] = 1.0
            base = base / scale
        else:
            base = np.zeros((1, 3))
        self._pattern = base

    def encode_points(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ShapeMismatch("expected a P x 3 cloud")
        desc = np.zeros(max(6, self.spec.latent_dim))
        desc[0:3] = points.mean(axis=0)
        desc[3:6] = points.std(axis=0)
        return desc[: self.spec.latent_dim]

    def decode_vector(self, vector: np.ndarray) -> np.ndarray:
        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
        if vector.shape[0] != self.spec.latent_dim:
            raise ShapeMismatch(
                f"latent has dim {vector.shape[0]}, codec expects "
                f"{self.spec.latent_dim}")
        padded = np.zeros(6)
        padded[: min(6, vector.shape[0])] = vector[:6]
        mean = padded[0:3]
        std = np.maximum(padded[3:6], 0.0)
        return mean + std * self._pattern


_REGISTRY = {"stub": StubCodec}


def register_codec(name: str, factory) -> None:
    """Expose a new codec; `factory(spec)` must build the encode/decode pair."""
    _REGISTRY[name] = factory


def get_codec(name: str, spec: CodecSpec):
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ModelLoadFailure(
            f"no codec registered under {name!r}; "
            f"known: {sorted(_REGISTRY)}") from None
    return factory(spec)


def encode_batch(clouds_path, spec: CodecSpec, features_path) -> int:
    """Encode every cloud in an NPPC file into one NPFT feature row."""
    codec = get_codec(spec.encoder_id, spec)
    clouds = formats.read_clouds(clouds_path)
    vectors = np.stack([codec.encode_points(c) for c in clouds])
    if vectors.shape[1] != spec.latent_dim:
        raise ShapeMismatch(
            f"encoder produced dim {vectors.shape[1]}, "
            f"spec says {spec.latent_dim}")
    formats.write_features(vectors, features_path)
    return vectors.shape[0]


def decode_batch(features_path, spec: CodecSpec, clouds_path) -> int:
    """Decode every NPFT feature row into one cloud of an NPPC file."""
    codec = get_codec(spec.decoder_id, spec)
    vectors, _ = formats.read_features(features_path)
    if vectors.shape[1] != spec.latent_dim:
        raise ShapeMismatch(
            f"features have dim {vectors.shape[1]}, "
            f"spec says {spec.latent_dim}")
    clouds = np.stack([codec.decode_vector(v) for v in vectors])
    formats.write_clouds(clouds, clouds_path)
    return clouds.shape[0]
