"""Leveled homomorphic encryption over integer slot vectors.

Two interchangeable backends: ``bfv`` (lattice-based, the real thing) and
``debug`` (transparent, for checking protocol arithmetic).
"""

from privrel.errors import ParameterError
from privrel.he.bfv import BFVBackend
from privrel.he.core import Backend, Ciphertext, EvaluationKey, KeyPair, PublicKey, Sampler, SecretKey
from privrel.he.debug import DebugBackend
from privrel.he.params import (
    DEFAULT_PROFILE,
    MINIMAL_PROFILE,
    PROFILE_TABLE,
    SchemeParameters,
    get_profile,
    make_parameters,
)
from privrel.he.wire import (
    deserialize,
    deserialize_ciphertext,
    serialize_ciphertext,
    serialize_evaluation_key,
    serialize_public_key,
    serialize_secret_key,
)

_BACKENDS: dict[str, Backend] = {}


def get_backend(name: str) -> Backend:
    """Shared backend instance by name (``bfv`` or ``debug``)."""
    if name not in _BACKENDS:
        if name == "bfv":
            _BACKENDS[name] = BFVBackend()
        elif name == "debug":
            _BACKENDS[name] = DebugBackend()
        else:
            raise ParameterError(f"unknown HE backend {name!r}; use 'bfv' or 'debug'")
    return _BACKENDS[name]


__all__ = [
    "Backend",
    "BFVBackend",
    "Ciphertext",
    "DebugBackend",
    "DEFAULT_PROFILE",
    "EvaluationKey",
    "KeyPair",
    "MINIMAL_PROFILE",
    "PROFILE_TABLE",
    "PublicKey",
    "Sampler",
    "SchemeParameters",
    "SecretKey",
    "deserialize",
    "deserialize_ciphertext",
    "get_backend",
    "get_profile",
    "make_parameters",
    "serialize_ciphertext",
    "serialize_evaluation_key",
    "serialize_public_key",
    "serialize_secret_key",
]
