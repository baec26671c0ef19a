"""Fan-Vercauteren leveled scheme over Z_q[X]/(X^n + 1) with slot batching.

Textbook construction, no bootstrapping:

* secret s ternary, errors centered binomial (eta = 21, sigma ~ 3.24);
* public key (-(a s + e), a); encryption (p0 u + e1 + round(q m / t), p1 u + e2)
  with m centered mod t, which keeps the (q mod t) m term out of the noise;
* multiplication: tensor product over Z, scaled by t/q and rounded, then
  relinearized with base-2^b digit key switching;
* rotations: automorphism X -> X^g followed by the same key switching.

A plaintext modulus given as several primes is handled by CRT: every
ciphertext carries one (c0, c1) pair per prime, all under the same keys.
"""

from __future__ import annotations

import math
from typing import Sequence

import gmpy2

from privrel.errors import IntegrityError, ParameterError
from privrel.he.batching import slot_encoder
from privrel.he.core import (
    Backend,
    Ciphertext,
    EvaluationKey,
    KeyPair,
    PublicKey,
    Sampler,
    SecretKey,
    crt_combine,
)
from privrel.he.params import SchemeParameters
from privrel.he.ring import Poly, Ring, pack, unpack

# a ciphertext whose noise leaves less headroom than this is treated as garbage
MIN_NOISE_BUDGET_BITS = 1.0


class BFVBackend(Backend):
    name = "bfv"

    def __init__(self):
        self._rings: dict[tuple[int, int], Ring] = {}

    def ring(self, params: SchemeParameters) -> Ring:
        key = (params.ring_dimension, params.ciphertext_modulus)
        r = self._rings.get(key)
        if r is None:
            r = self._rings[key] = Ring(*key)
        return r

    # -- keys --------------------------------------------------------------

    def _keygen(self, params, sampler, galois_elements) -> KeyPair:
        ring = self.ring(params)
        n, q = params.ring_dimension, params.ciphertext_modulus
        key_id = sampler.bytes(16)
        s = sampler.ternary(n)
        sk = SecretKey(params, self.name, key_id, s)

        a = sampler.uniform(q, n)
        e = sampler.centered_binomial(n, params.noise_eta)
        a_s = self._times_secret(sk, a)
        p0 = [(-x - y) % q for x, y in zip(a_s, e)]
        pk = PublicKey(params, self.name, key_id, (p0, a))

        s_mod = [x % q for x in s]
        s_squared = self._times_secret(sk, s_mod)
        relin = self._switching_key(sk, s_squared, sampler)
        galois = {}
        for g in galois_elements:
            if g % 2 == 0 or not 0 < g < 2 * n:
                raise ParameterError(f"invalid Galois element {g}")
            galois[g] = self._switching_key(sk, ring.automorphism(s_mod, g), sampler)
        evk = EvaluationKey(params, self.name, key_id, relin, galois)
        return KeyPair(params, pk, sk, evk)

    def _switching_key(self, sk: SecretKey, target: Poly, sampler: Sampler) -> list[tuple[Poly, Poly]]:
        """Encryptions of 2^(b j) * target under s, one per digit j."""
        params = sk.params
        n, q, b = params.ring_dimension, params.ciphertext_modulus, params.decomposition_bits
        out = []
        for j in range(self._digits(params)):
            a = sampler.uniform(q, n)
            e = sampler.centered_binomial(n, params.noise_eta)
            w = pow(2, b * j, q)
            a_s = self._times_secret(sk, a)
            k0 = [(w * tg - x - y) % q for tg, x, y in zip(target, a_s, e)]
            out.append((k0, a))
        return out

    @staticmethod
    def _digits(params: SchemeParameters) -> int:
        return math.ceil(params.modulus_bits / params.decomposition_bits)

    def _times_secret(self, sk: SecretKey, a: Poly) -> Poly:
        """a * s mod q for a with coefficients in [0, q)."""
        ring = self.ring(sk.params)
        q = ring.q
        width = ring.product_width(q, 2)
        packed = sk._cache.get(("s+1", width))
        if packed is None:
            packed = sk._cache[("s+1", width)] = pack((x + 1 for x in sk.data), width)
        prod = ring.mul_packed(pack(a, width), packed, width)
        ones = ring.mul_all_ones(a)
        return [(p - o) % q for p, o in zip(prod, ones)]

    # -- encryption ---------------------------------------------------------

    def _plain_coeffs(self, params: SchemeParameters, values: int | list[int], t: int) -> list[int]:
        if isinstance(values, int):
            out = [0] * params.ring_dimension
            out[0] = values % t
            return out
        return slot_encoder(params.ring_dimension, t).encode(values)

    def _encrypt(self, public_key: PublicKey, values, sampler: Sampler) -> Ciphertext:
        params = public_key.params
        ring = self.ring(params)
        n, q = params.ring_dimension, params.ciphertext_modulus
        width = ring.product_width(q, 2)
        packed = public_key._cache.get(width)
        if packed is None:
            p0, p1 = public_key.data
            packed = public_key._cache[width] = (
                pack(p0, width),
                pack(p1, width),
                ring.mul_all_ones(p0),
                ring.mul_all_ones(p1),
            )
        z0, z1, ones0, ones1 = packed
        parts = []
        for t in params.plaintext_moduli:
            scaled = [(q * (v if v <= t // 2 else v - t) + t // 2) // t for v in self._plain_coeffs(params, values, t)]
            u = sampler.ternary(n)
            e1 = sampler.centered_binomial(n, params.noise_eta)
            e2 = sampler.centered_binomial(n, params.noise_eta)
            zu = pack((x + 1 for x in u), width)
            pu0 = ring.mul_packed(z0, zu, width)
            pu1 = ring.mul_packed(z1, zu, width)
            c0 = [(x - o + err + sm) % q for x, o, err, sm in zip(pu0, ones0, e1, scaled)]
            c1 = [(x - o + err) % q for x, o, err in zip(pu1, ones1, e2)]
            parts.append((c0, c1))
        return Ciphertext(params, self.name, public_key.key_id, params.depth_budget, tuple(parts))

    def _phase(self, sk: SecretKey, c0: Poly, c1: Poly) -> Poly:
        q = sk.params.ciphertext_modulus
        return [(x + y) % q for x, y in zip(c0, self._times_secret(sk, c1))]

    def _decrypt(self, secret_key: SecretKey, ct: Ciphertext, check: bool) -> list[int]:
        params = secret_key.params
        q, half = params.ciphertext_modulus, params.ciphertext_modulus // 2
        residues = []
        for (c0, c1), t in zip(ct.data, params.plaintext_moduli):
            x = self._phase(secret_key, c0, c1)
            rounded = [(t * v + half) // q for v in x]
            if check:
                worst = max(abs(t * v - q * r) for v, r in zip(x, rounded))
                budget = math.log2(half / worst) if worst else float("inf")
                if budget < MIN_NOISE_BUDGET_BITS:
                    raise IntegrityError(
                        "ciphertext does not decrypt cleanly (noise overflow or wrong key); "
                        "use parameters with a larger modulus or less depth"
                    )
            residues.append(slot_encoder(params.ring_dimension, t).decode([r % t for r in rounded]))
        moduli = params.plaintext_moduli
        T = params.plaintext_modulus
        if len(moduli) == 1:
            return [self._center(v, T) for v in residues[0]]
        return [self._center(crt_combine(rs, moduli), T) for rs in zip(*residues)]

    def _noise_budget(self, secret_key: SecretKey, ct: Ciphertext) -> float:
        params = secret_key.params
        q, half = params.ciphertext_modulus, params.ciphertext_modulus // 2
        budget = float("inf")
        for (c0, c1), t in zip(ct.data, params.plaintext_moduli):
            x = self._phase(secret_key, c0, c1)
            worst = max(abs(t * v - q * ((t * v + half) // q)) for v in x)
            if worst:
                budget = min(budget, math.log2(half / worst))
        return max(budget, 0.0)

    # -- evaluation -----------------------------------------------------------

    def _add(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        q = a.params.ciphertext_modulus
        parts = tuple(
            ([(x + y) % q for x, y in zip(a0, b0)], [(x + y) % q for x, y in zip(a1, b1)])
            for (a0, a1), (b0, b1) in zip(a.data, b.data)
        )
        return Ciphertext(a.params, self.name, a.key_id, min(a.level, b.level), parts)

    def _mul(self, a: Ciphertext, b: Ciphertext, evk: EvaluationKey) -> Ciphertext:
        params = evk.params
        ring = self.ring(params)
        q, half = params.ciphertext_modulus, params.ciphertext_modulus // 2
        n = params.ring_dimension
        width = ring.product_width(2 * q, 2 * q)
        parts = []
        for (a0, a1), (b0, b1), t in zip(a.data, b.data, params.plaintext_moduli):
            za0, za1, zb0, zb1 = (pack(p, width) for p in (a0, a1, b0, b1))
            p00 = za0 * zb0
            p11 = za1 * zb1
            cross = (za0 + za1) * (zb0 + zb1) - p00 - p11
            e0, e1, e2 = (
                [((t * v + half) // q) % q for v in ring.fold(unpack(z, width, 2 * n))]
                for z in (p00, cross, p11)
            )
            k0, k1 = self._key_switch(evk, "relin", evk.relin, e2)
            parts.append(([(x + y) % q for x, y in zip(e0, k0)], [(x + y) % q for x, y in zip(e1, k1)]))
        return Ciphertext(a.params, self.name, a.key_id, min(a.level, b.level) - 1, tuple(parts))

    def _mul_plain(self, ct: Ciphertext, values) -> Ciphertext:
        params = ct.params
        ring = self.ring(params)
        q = params.ciphertext_modulus
        parts = []
        for (c0, c1), t in zip(ct.data, params.plaintext_moduli):
            m = [v if v <= t // 2 else v - t for v in self._plain_coeffs(params, values, t)]
            if isinstance(values, int):
                k = m[0]
                parts.append(([x * k % q for x in c0], [x * k % q for x in c1]))
            else:
                bound = t // 2
                parts.append((ring.mul_small(c0, m, bound), ring.mul_small(c1, m, bound)))
        return Ciphertext(ct.params, self.name, ct.key_id, ct.level - 1, tuple(parts))

    def _automorphism(self, ct: Ciphertext, g: int, evk: EvaluationKey) -> Ciphertext:
        keys = evk.galois.get(g)
        if keys is None:
            raise ParameterError(f"evaluation key has no key-switching key for Galois element {g}")
        ring = self.ring(evk.params)
        q = ring.q
        parts = []
        for c0, c1 in ct.data:
            r0, r1 = ring.automorphism(c0, g), ring.automorphism(c1, g)
            k0, k1 = self._key_switch(evk, g, keys, r1)
            parts.append(([(x + y) % q for x, y in zip(r0, k0)], k1))
        return Ciphertext(ct.params, self.name, ct.key_id, ct.level, tuple(parts))

    def _key_switch(self, evk: EvaluationKey, tag, keys: Sequence[tuple[Poly, Poly]], d: Poly) -> tuple[Poly, Poly]:
        """(k0, k1) with k0 + k1 s = d * sigma + small, for the key's source secret sigma."""
        params = evk.params
        ring = self.ring(params)
        n, q, bits = params.ring_dimension, params.ciphertext_modulus, params.decomposition_bits
        width = ring.product_width(1 << bits, q, len(keys))
        packed = evk._cache.get((tag, width))
        if packed is None:
            packed = evk._cache[(tag, width)] = [(pack(k0, width), pack(k1, width)) for k0, k1 in keys]
        mask = (1 << bits) - 1
        s0 = s1 = gmpy2.mpz(0)
        for j, (z0, z1) in enumerate(packed):
            shift = bits * j
            zd = pack(((x >> shift) & mask for x in d), width)
            s0 += zd * z0
            s1 += zd * z1
        k0 = [x % q for x in ring.fold(unpack(s0, width, 2 * n))]
        k1 = [x % q for x in ring.fold(unpack(s1, width, 2 * n))]
        return k0, k1
