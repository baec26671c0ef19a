"""Transparent backend: ciphertexts are plain slot vectors mod t.

Same API, levels, Galois-key requirements and decrypted integers as the
lattice backend, so protocol code can be checked cell by cell.  It offers
no secrecy at all.  Each ciphertext carries a short keyed tag so that
corruption and wrong-key decryption are reported instead of returned.
"""

from __future__ import annotations

import hashlib

from privrel.errors import IntegrityError, ParameterError
from privrel.he.batching import rotate_slots, swap_slot_rows
from privrel.he.ring import byte_width
from privrel.he.core import Backend, Ciphertext, EvaluationKey, KeyPair, PublicKey, SecretKey


def _tag(key_id: bytes, slots: list[int]) -> bytes:
    # slots are reduced mod t, so they are non-negative
    width = byte_width(max(slots, default=0))
    blob = b"".join(v.to_bytes(width, "little") for v in slots)
    return hashlib.blake2b(blob, key=key_id, digest_size=8).digest()


class DebugBackend(Backend):
    name = "debug"

    def _wrap(self, params, key_id: bytes, level: int, slots: list[int]) -> Ciphertext:
        return Ciphertext(params, self.name, key_id, level, (slots, _tag(key_id, slots)))

    def _keygen(self, params, sampler, galois_elements) -> KeyPair:
        n = params.ring_dimension
        key_id = sampler.bytes(16)
        for g in galois_elements:
            if g % 2 == 0 or not 0 < g < 2 * n:
                raise ParameterError(f"invalid Galois element {g}")
        pk = PublicKey(params, self.name, key_id, None)
        sk = SecretKey(params, self.name, key_id, None)
        evk = EvaluationKey(params, self.name, key_id, None, {g: None for g in galois_elements})
        return KeyPair(params, pk, sk, evk)

    def _encrypt(self, public_key, values, sampler) -> Ciphertext:
        params = public_key.params
        T, n = params.plaintext_modulus, params.ring_dimension
        if isinstance(values, int):
            slots = [values % T] * n
        else:
            slots = [v % T for v in values] + [0] * (n - len(values))
        return self._wrap(params, public_key.key_id, params.depth_budget, slots)

    def _decrypt(self, secret_key, ct, check) -> list[int]:
        slots, tag = ct.data
        if ct.key_id != secret_key.key_id or tag != _tag(secret_key.key_id, slots):
            raise IntegrityError("ciphertext does not decrypt cleanly (corrupted or wrong key)")
        T = secret_key.params.plaintext_modulus
        return [self._center(v, T) for v in slots]

    def _noise_budget(self, secret_key, ct) -> float:
        return float("inf")

    def _add(self, a, b) -> Ciphertext:
        T = a.params.plaintext_modulus
        slots = [(x + y) % T for x, y in zip(a.data[0], b.data[0])]
        return self._wrap(a.params, a.key_id, min(a.level, b.level), slots)

    def _mul(self, a, b, evaluation_key) -> Ciphertext:
        T = a.params.plaintext_modulus
        slots = [x * y % T for x, y in zip(a.data[0], b.data[0])]
        return self._wrap(a.params, a.key_id, min(a.level, b.level) - 1, slots)

    def _mul_plain(self, ct, values) -> Ciphertext:
        T, n = ct.params.plaintext_modulus, ct.params.ring_dimension
        if isinstance(values, int):
            m = [values] * n
        else:
            m = list(values) + [0] * (n - len(values))
        slots = [x * y % T for x, y in zip(ct.data[0], m)]
        return self._wrap(ct.params, ct.key_id, ct.level - 1, slots)

    def _automorphism(self, ct, g, evaluation_key) -> Ciphertext:
        if g not in evaluation_key.galois:
            raise ParameterError(f"evaluation key has no key-switching key for Galois element {g}")
        n = ct.params.ring_dimension
        slots = ct.data[0]
        if g == 2 * n - 1:
            out = swap_slot_rows(slots)
        else:
            steps = _discrete_log3(g, n)
            out = rotate_slots(slots, steps)
        return self._wrap(ct.params, ct.key_id, ct.level, out)


def _discrete_log3(g: int, n: int) -> int:
    e = 1
    for k in range(n // 2):
        if e == g:
            return k
        e = e * 3 % (2 * n)
    raise ParameterError(f"Galois element {g} is not a row rotation")
