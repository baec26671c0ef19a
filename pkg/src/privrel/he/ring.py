"""Negacyclic polynomial arithmetic in Z[X]/(X^n + 1) on Python integers.

Polynomials are plain ``list[int]`` of length ``n``.  Products are computed
exactly with Kronecker substitution: each operand is packed into one big
integer (fixed byte width per coefficient), multiplied by GMP and unpacked.
Packing requires non-negative coefficients, so signed *small* operands are
shifted by a constant and the shift is removed with an O(n) correction.
"""

from __future__ import annotations

from itertools import accumulate
from typing import Iterable, Sequence

import gmpy2

Poly = list[int]


def byte_width(max_value: int) -> int:
    """Bytes needed to hold any integer in ``[0, max_value]``."""
    return max(1, (int(max_value).bit_length() + 7) // 8)


def pack(coeffs: Iterable[int], width: int) -> gmpy2.mpz:
    return gmpy2.mpz.from_bytes(b"".join(c.to_bytes(width, "little") for c in coeffs), "little")


def unpack(z: gmpy2.mpz, width: int, count: int) -> Poly:
    raw = z.to_bytes(width * count, "little")
    fb = int.from_bytes
    return [fb(raw[i : i + width], "little") for i in range(0, width * count, width)]


class Ring:
    """Arithmetic helpers for Z_q[X]/(X^n + 1)."""

    def __init__(self, n: int, q: int):
        if n < 2 or n & (n - 1):
            raise ValueError("ring dimension must be a power of two")
        self.n = n
        self.q = q
        self._perm_cache: dict[int, tuple[list[int], list[bool]]] = {}

    # -- widths ---------------------------------------------------------

    def product_width(self, a_bound: int, b_bound: int, terms: int = 1) -> int:
        """Packing width for a sum of ``terms`` products of such operands."""
        return byte_width(self.n * terms * a_bound * b_bound)

    # -- exact products -------------------------------------------------

    def fold(self, full: Sequence[int]) -> Poly:
        """Reduce a length-2n product modulo X^n + 1 (no reduction mod q)."""
        n = self.n
        hi = list(full[n:]) + [0] * (2 * n - len(full))
        return [a - b for a, b in zip(full[:n], hi)]

    def mul_packed(self, za: gmpy2.mpz, zb: gmpy2.mpz, width: int) -> Poly:
        """Exact negacyclic product of two packed operands, over Z."""
        return self.fold(unpack(za * zb, width, 2 * self.n))

    def mul_exact(self, a: Poly, b: Poly, a_bound: int, b_bound: int) -> Poly:
        """Exact product over Z of non-negative polynomials with given bounds."""
        w = self.product_width(a_bound, b_bound)
        return self.mul_packed(pack(a, w), pack(b, w), w)

    def mul_mod(self, a: Poly, b: Poly) -> Poly:
        """Product of two polynomials with coefficients in [0, q), reduced mod q."""
        q = self.q
        return [c % q for c in self.mul_exact(a, b, q, q)]

    def mul_small(self, a: Poly, small: Sequence[int], bound: int) -> Poly:
        """a * s mod q where |s_i| <= bound and a has coefficients in [0, q)."""
        shifted = [s + bound for s in small]
        prod = self.mul_exact(a, shifted, self.q, 2 * bound)
        ones = self.mul_all_ones(a)
        q = self.q
        return [(p - bound * o) % q for p, o in zip(prod, ones)]

    def mul_all_ones(self, a: Sequence[int]) -> list[int]:
        """Exact negacyclic product of ``a`` with 1 + X + ... + X^(n-1)."""
        prefix = list(accumulate(a))
        total = prefix[-1]
        return [2 * p - total for p in prefix]

    # -- additive helpers -----------------------------------------------

    def add(self, a: Poly, b: Poly) -> Poly:
        q = self.q
        return [(x + y) % q for x, y in zip(a, b)]

    def sub(self, a: Poly, b: Poly) -> Poly:
        q = self.q
        return [(x - y) % q for x, y in zip(a, b)]

    def neg(self, a: Poly) -> Poly:
        q = self.q
        return [(-x) % q for x in a]

    def scalar(self, a: Poly, c: int) -> Poly:
        q = self.q
        return [(x * c) % q for x in a]

    def center(self, a: Poly) -> Poly:
        q, half = self.q, self.q // 2
        return [x - q if x > half else x for x in a]

    # -- automorphisms --------------------------------------------------

    def automorphism(self, a: Poly, g: int) -> Poly:
        """Apply X -> X^g (g odd) to a polynomial with coefficients in [0, q)."""
        dest, negate = self._perm(g)
        out = [0] * self.n
        q = self.q
        for x, j, neg in zip(a, dest, negate):
            out[j] = (q - x) % q if neg else x
        return out

    def _perm(self, g: int) -> tuple[list[int], list[bool]]:
        cached = self._perm_cache.get(g)
        if cached is None:
            n, two_n = self.n, 2 * self.n
            dest, negate = [], []
            for i in range(n):
                e = (i * g) % two_n
                dest.append(e % n)
                negate.append(e >= n)
            cached = self._perm_cache[g] = (dest, negate)
        return cached
