"""Exception types shared across the package."""


class PretzelError(Exception):
    """Base class for all package errors."""


class ParameterError(PretzelError):
    """Invalid or inconsistent cryptographic / layout parameters."""


class CapabilityError(PretzelError):
    """Operation requested from a backend that does not support it."""


class DecodeError(PretzelError):
    """Malformed serialized object (ciphertext, key, model file, frame)."""


class ModelError(PretzelError):
    """Invalid model, feature vector, or training input."""


class TransportError(PretzelError):
    """Channel failure: closed, truncated, or oversize frame."""


class ProtocolError(PretzelError):
    """Two-party session failure: hash mismatch, bad message, peer abort."""
