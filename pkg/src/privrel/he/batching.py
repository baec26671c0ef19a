"""SIMD slot encoding for plaintext primes t = 1 (mod 2n).

A plaintext polynomial m(X) holds n slot values: its evaluations at the
primitive 2n-th roots of unity mod t.  Slots form a 2 x (n/2) matrix; slot
(r, j) is m(zeta^e) with e = 3^j (r = 0) or e = -3^j (r = 1) mod 2n.  With
that order, the automorphism X -> X^(3^k) rotates each row left by k and
X -> X^(2n-1) swaps the two rows.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np


def _primitive_root_of_unity(order: int, t: int) -> int:
    for x in range(2, t):
        z = pow(x, (t - 1) // order, t)
        if pow(z, order // 2, t) == t - 1:
            return z
    raise ValueError(f"no primitive {order}-th root of unity mod {t}")


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


class SlotEncoder:
    """Converts between slot vectors and plaintext coefficients mod t."""

    def __init__(self, n: int, t: int):
        if (t - 1) % (2 * n):
            raise ValueError("plaintext modulus must be 1 mod 2n for batching")
        self.n, self.t = n, t
        zeta = _primitive_root_of_unity(2 * n, t)
        omega = zeta * zeta % t
        self._rev = _bit_reverse(n)
        self._fwd_tw = self._twiddles(omega)
        self._inv_tw = self._twiddles(pow(omega, -1, t))
        twist = [pow(zeta, i, t) for i in range(n)]
        n_inv = pow(n, -1, t)
        zeta_inv = pow(zeta, -1, t)
        self._twist = np.array(twist, dtype=object)
        self._untwist = np.array([pow(zeta_inv, i, t) * n_inv % t for i in range(n)], dtype=object)
        # slot s -> index k of the evaluation at zeta^(2k+1)
        half = n // 2
        slot_index = np.empty(n, dtype=np.int64)
        e = 1
        for j in range(half):
            slot_index[j] = (e - 1) // 2
            slot_index[half + j] = (2 * n - e - 1) // 2
            e = e * 3 % (2 * n)
        self._slot_index = slot_index

    def _twiddles(self, root: int) -> list[np.ndarray]:
        n, t = self.n, self.t
        out = []
        half = 1
        while half < n:
            w = pow(root, n // (2 * half), t)
            out.append(np.array([pow(w, j, t) for j in range(half)], dtype=object))
            half *= 2
        return out

    def _ntt(self, a: np.ndarray, tw: list[np.ndarray]) -> np.ndarray:
        t, n = self.t, self.n
        a = a[self._rev]
        half = 1
        for w in tw:
            blocks = a.reshape(n // (2 * half), 2, half)
            u = blocks[:, 0, :]
            v = blocks[:, 1, :] * w % t
            a = np.stack(((u + v) % t, (u - v) % t), axis=1).reshape(n)
            half *= 2
        return a

    def decode(self, coeffs: Sequence[int]) -> list[int]:
        """Plaintext coefficients (mod t) -> slot values in [0, t)."""
        a = np.array([c % self.t for c in coeffs], dtype=object) * self._twist % self.t
        evals = self._ntt(a, self._fwd_tw)
        return evals[self._slot_index].tolist()

    def encode(self, slots: Sequence[int]) -> list[int]:
        """Slot values -> plaintext coefficients in [0, t).  Short input is zero padded."""
        n, t = self.n, self.t
        if len(slots) > n:
            raise ValueError(f"{len(slots)} values do not fit in {n} slots")
        evals = np.zeros(n, dtype=object)
        evals[self._slot_index[: len(slots)]] = [s % t for s in slots]
        coeffs = self._ntt(evals, self._inv_tw) * self._untwist % t
        return coeffs.tolist()

    def rotation_element(self, steps: int) -> int:
        """Galois element rotating each slot row left by ``steps``."""
        return pow(3, steps % (self.n // 2), 2 * self.n)

    @property
    def swap_element(self) -> int:
        return 2 * self.n - 1


@lru_cache(maxsize=16)
def slot_encoder(n: int, t: int) -> SlotEncoder:
    return SlotEncoder(n, t)


def rotate_slots(values: Sequence[int], steps: int) -> list[int]:
    """Plaintext model of a row rotation (both rows left by ``steps``)."""
    n = len(values)
    half = n // 2
    k = steps % half
    rows = [list(values[:half]), list(values[half:])]
    return [x for row in rows for x in row[k:] + row[:k]]


def swap_slot_rows(values: Sequence[int]) -> list[int]:
    half = len(values) // 2
    return list(values[half:]) + list(values[:half])
