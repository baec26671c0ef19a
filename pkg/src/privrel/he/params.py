"""Scheme parameters, named profiles and the lattice-security lookup.

Security figures come from the Homomorphic Encryption Security Standard
(homomorphicencryption.org, 2018), Table 1, ternary secret distribution,
classical attacker: the largest log2(q) for which a ring dimension still
reaches the given security level.  A parameter set is rated at the highest
level whose bound its modulus respects.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import gmpy2

from privrel.errors import ParameterError

# security level -> {ring dimension: max modulus bits}
SECURITY_TABLE: dict[int, dict[int, int]] = {
    128: {1024: 27, 2048: 54, 4096: 109, 8192: 218, 16384: 438, 32768: 881},
    192: {1024: 19, 2048: 37, 4096: 75, 8192: 152, 16384: 305, 32768: 611},
    256: {1024: 14, 2048: 29, 4096: 58, 8192: 118, 16384: 237, 32768: 476},
}


def security_level(ring_dimension: int, modulus_bits: int) -> int:
    """Highest tabulated security level met by (n, log2 q); 0 if none."""
    best = 0
    for level, bounds in SECURITY_TABLE.items():
        limit = bounds.get(ring_dimension)
        if limit is not None and modulus_bits <= limit:
            best = max(best, level)
    return best


def max_modulus_bits(ring_dimension: int, security_bits: int) -> int:
    levels = [lvl for lvl in SECURITY_TABLE if lvl >= security_bits]
    if not levels:
        raise ParameterError(f"no security table for {security_bits}-bit security")
    bounds = SECURITY_TABLE[min(levels)]
    if ring_dimension not in bounds:
        raise ParameterError(f"ring dimension {ring_dimension} is not in the security table")
    return bounds[ring_dimension]


@lru_cache(maxsize=None)
def batching_primes(bits: int, ring_dimension: int, count: int) -> tuple[int, ...]:
    """The ``count`` largest primes below 2**bits congruent to 1 mod 2n."""
    step = 2 * ring_dimension
    c = ((1 << bits) - 1) // step * step + 1
    out: list[int] = []
    while len(out) < count:
        if c < step:
            raise ParameterError(f"no {bits}-bit batching prime for n={ring_dimension}")
        if gmpy2.is_prime(c, 40):
            out.append(int(c))
        c -= step
    return tuple(out)


@lru_cache(maxsize=None)
def modulus_prime(bits: int) -> int:
    """Largest prime below 2**bits."""
    return int(gmpy2.prev_prime(1 << bits))


# Noise model, calibrated against measured noise budgets (tests/test_he.py
# re-checks it per profile).  Bits consumed: a fresh encryption about
# FRESH_NOISE_BITS, each multiplication by a fresh ciphertext about
# log2(t) + log2(n) + GROWTH_CONSTANT_BITS; decryption needs log2(t) + 1 bits
# of headroom and we keep SAFETY_MARGIN_BITS spare.
FRESH_NOISE_BITS = 12.0
GROWTH_CONSTANT_BITS = 5.0
SAFETY_MARGIN_BITS = 8.0


def required_modulus_bits(ring_dimension: int, plaintext_bits: float, depth: int) -> int:
    """Estimated log2(q) needed for ``depth`` sequential multiplications."""
    growth = plaintext_bits + math.log2(ring_dimension) + GROWTH_CONSTANT_BITS
    need = plaintext_bits + 1 + FRESH_NOISE_BITS + depth * growth + SAFETY_MARGIN_BITS
    return math.ceil(need)


@dataclass(frozen=True)
class SchemeParameters:
    """Everything needed to generate compatible keys and ciphertexts."""

    name: str
    ring_dimension: int
    ciphertext_modulus: int
    plaintext_moduli: tuple[int, ...]
    depth_budget: int
    security_bits: int
    decomposition_bits: int = 0
    noise_eta: int = 21
    insecure: bool = field(default=False, compare=False)

    def __post_init__(self):
        n = self.ring_dimension
        if n < 2 or n & (n - 1):
            raise ParameterError("ring_dimension must be a power of two")
        if not self.plaintext_moduli:
            raise ParameterError("at least one plaintext modulus is required")
        for t in self.plaintext_moduli:
            if (t - 1) % (2 * n) or not gmpy2.is_prime(t):
                raise ParameterError(f"plaintext modulus {t} is not a prime = 1 mod 2n")
        if self.decomposition_bits <= 0:
            # relinearization noise stays below multiplication noise at this digit size
            object.__setattr__(self, "decomposition_bits", max(t.bit_length() for t in self.plaintext_moduli))
        if len(set(self.plaintext_moduli)) != len(self.plaintext_moduli):
            raise ParameterError("plaintext moduli must be distinct")
        if self.depth_budget < 0:
            raise ParameterError("depth_budget must be non-negative")
        if not self.insecure:
            rated = security_level(n, self.modulus_bits)
            if rated < self.security_bits:
                raise ParameterError(
                    f"security: n={n} with a {self.modulus_bits}-bit modulus rates "
                    f"{rated} bits, below the {self.security_bits}-bit target"
                )
        need = required_modulus_bits(n, max(t.bit_length() for t in self.plaintext_moduli), self.depth_budget)
        if need > self.modulus_bits:
            raise ParameterError(
                f"depth: depth_budget={self.depth_budget} needs about {need} modulus bits, "
                f"the modulus has {self.modulus_bits}"
            )

    # -- derived quantities ---------------------------------------------

    @property
    def modulus_bits(self) -> int:
        return self.ciphertext_modulus.bit_length()

    @property
    def ciphertext_modulus_chain(self) -> tuple[int, ...]:
        return (self.ciphertext_modulus,)

    @property
    def plaintext_modulus(self) -> int:
        return math.prod(self.plaintext_moduli)

    @property
    def max_plaintext_magnitude(self) -> int:
        return (self.plaintext_modulus - 1) // 2

    @property
    def noise_stddev(self) -> float:
        return math.sqrt(self.noise_eta / 2)

    @property
    def slot_count(self) -> int:
        return self.ring_dimension

    @property
    def rated_security(self) -> int:
        return security_level(self.ring_dimension, self.modulus_bits)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "ring_dimension": self.ring_dimension,
            "ciphertext_modulus": str(self.ciphertext_modulus),
            "plaintext_moduli": [str(t) for t in self.plaintext_moduli],
            "depth_budget": self.depth_budget,
            "security_bits": self.security_bits,
            "decomposition_bits": self.decomposition_bits,
            "noise_eta": self.noise_eta,
            "insecure": self.insecure,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SchemeParameters":
        return cls(
            name=d["name"],
            ring_dimension=int(d["ring_dimension"]),
            ciphertext_modulus=int(d["ciphertext_modulus"]),
            plaintext_moduli=tuple(int(t) for t in d["plaintext_moduli"]),
            depth_budget=int(d["depth_budget"]),
            security_bits=int(d["security_bits"]),
            decomposition_bits=int(d.get("decomposition_bits", 0)),
            noise_eta=int(d.get("noise_eta", 21)),
            insecure=bool(d.get("insecure", False)),
        )

    @cached_property
    def params_id(self) -> bytes:
        """16-byte digest binding keys and ciphertexts to these parameters."""
        d = self.to_dict()
        d.pop("name")
        d.pop("insecure")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).digest()[:16]

    def check_depth(self, required: int) -> None:
        if self.depth_budget < required:
            raise ParameterError(
                f"depth: profile {self.name!r} supports depth {self.depth_budget}, {required} required"
            )

    def check_plaintext_bound(self, magnitude: int) -> None:
        """Refuse unless every value up to ``magnitude`` survives mod-t reduction."""
        if self.plaintext_modulus <= 2 * magnitude:
            raise ParameterError(
                f"plaintext modulus: t={self.plaintext_modulus} must exceed 2*{magnitude} "
                f"(profile {self.name!r})"
            )


def make_parameters(
    name: str,
    ring_dimension: int,
    plaintext_bits: int,
    plaintext_count: int,
    depth_budget: int,
    modulus_bits: int | None = None,
    security_bits: int = 128,
    decomposition_bits: int = 0,
    insecure: bool = False,
) -> SchemeParameters:
    """Build parameters, sizing the modulus from the noise model if not given."""
    if modulus_bits is None:
        modulus_bits = required_modulus_bits(ring_dimension, plaintext_bits, depth_budget)
        if not insecure:
            limit = max_modulus_bits(ring_dimension, security_bits)
            if modulus_bits > limit:
                raise ParameterError(
                    f"depth: depth {depth_budget} needs ~{modulus_bits} modulus bits but "
                    f"n={ring_dimension} allows at most {limit} at {security_bits}-bit security"
                )
    return SchemeParameters(
        name=name,
        ring_dimension=ring_dimension,
        ciphertext_modulus=modulus_prime(modulus_bits),
        plaintext_moduli=batching_primes(plaintext_bits, ring_dimension, plaintext_count),
        depth_budget=depth_budget,
        security_bits=security_bits,
        decomposition_bits=decomposition_bits,
        insecure=insecure,
    )


# name -> (n, plaintext prime bits, number of plaintext primes, depth, modulus bits)
PROFILE_TABLE: dict[str, tuple[int, int, int, int, int]] = {
    "desk-128-d4-k3": (16384, 60, 1, 4, 400),
    "desk-128-d4-k5": (16384, 47, 2, 4, 340),
    "desk-128-d2-k3": (8192, 40, 1, 2, 185),
    "desk-128-d1-k3": (4096, 30, 1, 1, 100),
}
DEFAULT_PROFILE = "desk-128-d4-k3"
MINIMAL_PROFILE = "desk-128-d1-k3"


@lru_cache(maxsize=None)
def get_profile(name: str) -> SchemeParameters:
    try:
        n, tbits, tcount, depth, qbits = PROFILE_TABLE[name]
    except KeyError:
        raise ParameterError(f"unknown parameter profile {name!r}; known: {sorted(PROFILE_TABLE)}") from None
    return make_parameters(name, n, tbits, tcount, depth, modulus_bits=qbits)
