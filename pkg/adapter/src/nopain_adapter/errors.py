"""Adapter-side exceptions."""


class AdapterError(Exception):
    """Base class for adapter failures."""


class MalformedFile(AdapterError):
    """Input file does not follow the declared binary layout."""


class NonFiniteData(AdapterError):
    """NaN or Inf where finite values are required."""


class ShapeMismatch(AdapterError):
    """Data dimensions disagree with the codec specification."""


class ModelLoadFailure(AdapterError):
    """No codec is registered under the requested identifier."""


class IoFailure(AdapterError):
    """Underlying read or write failed."""
