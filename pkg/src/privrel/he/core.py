"""Key, ciphertext and backend types shared by the lattice and debug schemes."""

from __future__ import annotations

import logging
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from privrel.errors import DepthError, ParamsMismatchError, PlaintextRangeError
from privrel.he.params import SchemeParameters

log = logging.getLogger(__name__)


class Sampler:
    """Randomness for key generation and encryption.

    Without a seed every byte comes from ``os.urandom``.  A seed switches to a
    reproducible numpy generator and is meant for tests only.
    """

    def __init__(self, seed: int | None = None):
        self.seeded = seed is not None
        self._rng = np.random.default_rng(seed) if self.seeded else None
        if self.seeded:
            log.warning("deterministic HE randomness (seed=%s): test use only", seed)

    def bytes(self, k: int) -> bytes:
        return self._rng.bytes(k) if self._rng is not None else os.urandom(k)

    def spawn(self) -> "Sampler":
        """Independent child stream (per-thread use)."""
        if self._rng is None:
            return Sampler()
        child = Sampler.__new__(Sampler)
        child.seeded = True
        child._rng = np.random.default_rng(self._rng.integers(0, 2**63))
        return child

    def uniform(self, modulus: int, count: int) -> list[int]:
        width = (modulus.bit_length() + 64 + 7) // 8
        raw = self.bytes(width * count)
        fb = int.from_bytes
        return [fb(raw[i : i + width], "little") % modulus for i in range(0, width * count, width)]

    def ternary(self, count: int) -> list[int]:
        out = np.empty(0, dtype=np.int64)
        while out.size < count:
            b = np.frombuffer(self.bytes(2 * count), dtype=np.uint8)
            out = np.concatenate([out, b[b < 255].astype(np.int64) % 3 - 1])
        return out[:count].tolist()

    def centered_binomial(self, count: int, eta: int) -> list[int]:
        """Errors with variance eta/2, bounded by eta in magnitude."""
        nbytes = (count * 2 * eta + 7) // 8
        bits = np.unpackbits(np.frombuffer(self.bytes(nbytes), dtype=np.uint8))[: count * 2 * eta]
        pairs = bits.reshape(count, 2, eta).sum(axis=2, dtype=np.int64)
        return (pairs[:, 0] - pairs[:, 1]).tolist()


@dataclass(frozen=True, eq=False)
class PublicKey:
    params: SchemeParameters
    backend: str
    key_id: bytes
    data: Any
    _cache: dict = field(default_factory=dict, repr=False, compare=False)


@dataclass(frozen=True, eq=False)
class SecretKey:
    params: SchemeParameters
    backend: str
    key_id: bytes
    data: Any
    _cache: dict = field(default_factory=dict, repr=False, compare=False)


@dataclass(frozen=True, eq=False)
class EvaluationKey:
    """Relinearization material plus key-switching keys per Galois element."""

    params: SchemeParameters
    backend: str
    key_id: bytes
    relin: Any
    galois: dict[int, Any]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def without_galois(self) -> "EvaluationKey":
        return EvaluationKey(self.params, self.backend, self.key_id, self.relin, {})


@dataclass(frozen=True)
class KeyPair:
    params: SchemeParameters
    public_key: PublicKey
    secret_key: SecretKey
    evaluation_key: EvaluationKey


@dataclass(eq=False)
class Ciphertext:
    """An encrypted slot vector.  ``level`` is the remaining multiplicative depth."""

    params: SchemeParameters
    backend: str
    key_id: bytes
    level: int
    data: Any

    @property
    def params_id(self) -> bytes:
        return self.params.params_id

    @property
    def payload(self) -> bytes:
        from privrel.he.wire import serialize_ciphertext

        return serialize_ciphertext(self)


PlainValues = int | Sequence[int]


class Backend(ABC):
    """Leveled homomorphic scheme over integer slot vectors.

    ``encrypt`` takes one integer (placed in every slot) or a sequence of up
    to n slot values (zero padded).  ``decrypt`` returns all n slots as
    centered integers modulo the plaintext modulus.
    """

    name: str

    # -- public API with shared checks ---------------------------------

    def keygen(
        self,
        params: SchemeParameters,
        rng_seed: int | None = None,
        galois_elements: Sequence[int] = (),
    ) -> KeyPair:
        return self._keygen(params, Sampler(rng_seed), tuple(sorted(set(galois_elements))))

    def encrypt(self, public_key: PublicKey, values: PlainValues, sampler: Sampler | None = None) -> Ciphertext:
        self._own(public_key)
        params = public_key.params
        vec = self._check_plain(params, values)
        return self._encrypt(public_key, vec, sampler or Sampler())

    def decrypt(self, secret_key: SecretKey, ct: Ciphertext, check: bool = True) -> list[int]:
        self._own(secret_key)
        self._same_params(secret_key.params, ct)
        return self._decrypt(secret_key, ct, check)

    def add(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._pair(a, b)
        return self._add(a, b)

    def mul(self, a: Ciphertext, b: Ciphertext, evaluation_key: EvaluationKey) -> Ciphertext:
        self._pair(a, b)
        self._same_params(evaluation_key.params, a)
        for c in (a, b):
            if c.level < 1:
                raise DepthError("multiplicative depth exhausted: operand has no remaining level")
        return self._mul(a, b, evaluation_key)

    def mul_plain(self, ct: Ciphertext, values: PlainValues) -> Ciphertext:
        if ct.backend != self.name:
            raise ParamsMismatchError(f"operand does not belong to backend {self.name!r}")
        if ct.level < 1:
            raise DepthError("multiplicative depth exhausted: operand has no remaining level")
        vec = self._check_plain(ct.params, values)
        return self._mul_plain(ct, vec)

    def rotate(self, ct: Ciphertext, steps: int, evaluation_key: EvaluationKey) -> Ciphertext:
        """Rotate both slot rows left by ``steps``."""
        self._same_params(evaluation_key.params, ct)
        n = evaluation_key.params.ring_dimension
        return self._automorphism(ct, pow(3, steps % (n // 2), 2 * n), evaluation_key)

    def swap_rows(self, ct: Ciphertext, evaluation_key: EvaluationKey) -> Ciphertext:
        self._same_params(evaluation_key.params, ct)
        return self._automorphism(ct, 2 * evaluation_key.params.ring_dimension - 1, evaluation_key)

    def noise_budget(self, secret_key: SecretKey, ct: Ciphertext) -> float:
        """Remaining noise headroom in bits (infinite for the debug scheme)."""
        self._own(secret_key)
        self._same_params(secret_key.params, ct)
        return self._noise_budget(secret_key, ct)

    # -- helpers ---------------------------------------------------------

    def _own(self, key) -> None:
        if key.backend != self.name:
            raise ParamsMismatchError(f"key belongs to backend {key.backend!r}, not {self.name!r}")

    @staticmethod
    def _same_params(params: SchemeParameters, ct: Ciphertext) -> None:
        if ct.params_id != params.params_id:
            raise ParamsMismatchError("ciphertext was produced under different scheme parameters")

    def _pair(self, a: Ciphertext, b: Ciphertext) -> None:
        if a.params_id != b.params_id:
            raise ParamsMismatchError("operands were produced under different scheme parameters")
        if a.backend != self.name or b.backend != self.name:
            raise ParamsMismatchError(f"operands do not belong to backend {self.name!r}")
        if a.key_id != b.key_id:
            raise ParamsMismatchError("operands were encrypted under different keys")

    @staticmethod
    def _check_plain(params: SchemeParameters, values: PlainValues) -> int | list[int]:
        bound = params.max_plaintext_magnitude
        if isinstance(values, (int, np.integer)):
            v = int(values)
            if abs(v) > bound:
                raise PlaintextRangeError(f"|{v}| exceeds the plaintext bound {bound}")
            return v
        vec = [int(v) for v in values]
        if len(vec) > params.slot_count:
            raise PlaintextRangeError(f"{len(vec)} values exceed the {params.slot_count} available slots")
        if vec and max(abs(v) for v in vec) > bound:
            raise PlaintextRangeError(f"a slot value exceeds the plaintext bound {bound}")
        return vec

    @staticmethod
    def _center(v: int, modulus: int) -> int:
        v %= modulus
        return v - modulus if v > (modulus - 1) // 2 else v

    # -- scheme-specific --------------------------------------------------

    @abstractmethod
    def _keygen(self, params, sampler, galois_elements) -> KeyPair: ...

    @abstractmethod
    def _encrypt(self, public_key, values, sampler) -> Ciphertext: ...

    @abstractmethod
    def _decrypt(self, secret_key, ct, check) -> list[int]: ...

    @abstractmethod
    def _add(self, a, b) -> Ciphertext: ...

    @abstractmethod
    def _mul(self, a, b, evaluation_key) -> Ciphertext: ...

    @abstractmethod
    def _mul_plain(self, ct, values) -> Ciphertext: ...

    @abstractmethod
    def _automorphism(self, ct, g, evaluation_key) -> Ciphertext: ...

    @abstractmethod
    def _noise_budget(self, secret_key, ct) -> float: ...


def crt_combine(residues: Sequence[int], moduli: Sequence[int]) -> int:
    """Integer in [0, prod(moduli)) with the given residues."""
    total = 1
    for m in moduli:
        total *= m
    x = 0
    for r, m in zip(residues, moduli):
        partial = total // m
        x += r * partial * pow(partial, -1, m)
    return x % total
