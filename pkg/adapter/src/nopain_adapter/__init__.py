"""Bridge between point-cloud autoencoders and NPFT/NPPC files."""

from .codec import (
    CodecSpec,
    StubCodec,
    decode_batch,
    encode_batch,
    get_codec,
    register_codec,
)
from .formats import read_clouds, read_features, write_clouds, write_features

__version__ = "0.1.0"
