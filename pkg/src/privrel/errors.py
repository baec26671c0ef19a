"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations


class PrivrelError(Exception):
    """Base class for all errors raised by privrel."""


# -- system structures ------------------------------------------------------


class StructureError(PrivrelError, ValueError):
    """Malformed system description or a state vector of the wrong size."""


class LevelRangeError(StructureError):
    """A level vector lies outside the grid 0 <= l_k <= M_k."""


class CapacityError(PrivrelError):
    """The requested enumeration exceeds the configured work cap."""


class InputError(PrivrelError, ValueError):
    """Invalid data handed to an estimator or oracle."""


# -- encoding ---------------------------------------------------------------


class PrecisionError(PrivrelError, ValueError):
    """Fixed-point values with different scales were combined additively."""


# -- homomorphic encryption -------------------------------------------------


class CryptoError(PrivrelError):
    """Base class for homomorphic-encryption failures."""


class ParameterError(CryptoError, ValueError):
    """Scheme parameters cannot satisfy a requested constraint."""


class DepthError(CryptoError):
    """A multiplication was requested on a ciphertext with no depth left."""


class PlaintextRangeError(CryptoError, ValueError):
    """A plaintext does not fit in the plaintext space."""


class ParamsMismatchError(CryptoError):
    """Operands were produced under different scheme parameters."""


class FormatError(CryptoError):
    """Serialized key or ciphertext bytes are malformed or mismatched."""


class IntegrityError(CryptoError):
    """Decryption produced a value that cannot be trusted (noise overflow)."""


# -- protocol / transport ---------------------------------------------------


class ProtocolError(PrivrelError):
    """A protocol stage failed; carries the responsible party and stage."""

    def __init__(self, message: str, party: str | None = None, stage: str | None = None):
        self.party = party
        self.stage = stage
        prefix = ""
        if party is not None:
            prefix += f"[{party}] "
        if stage is not None:
            prefix += f"({stage}) "
        super().__init__(prefix + message)


class TransportError(PrivrelError):
    """Delivery failed (timeout, reset, unreachable peer). Retryable."""

    def __init__(self, message: str, party: str | None = None):
        self.party = party
        super().__init__(f"[{party}] {message}" if party else message)


class FramingError(TransportError):
    """A frame was truncated, corrupted or otherwise unparseable."""


class ManifestError(PrivrelError, ValueError):
    """Run manifest validation failure; names the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
