"""Level table, encrypted signature table and the four protocol computations.

The R x T encrypted table is stored in SIMD slots.  Two layouts exist:

``packed`` (default)
    T' = next power of two >= T.  Each ciphertext holds B = n / T' table rows
    as blocks of T' slots (both slot rows used).  A manufacturer stage costs
    one encryption and one multiplication per ciphertext.  Column sums add
    the ciphertexts, then rotate-and-add across blocks and swap-and-add
    across the two slot rows, so every slot ends up holding a full column
    sum and no partial sums survive.

``row``
    One ciphertext per table row, T slots each.  A manufacturer encrypts one
    vector per level value and reuses it for every row at that level
    (``strict=True`` encrypts per row instead).  No rotations are needed.

Unused slots (padding times, rows past R) hold zeros.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

from privrel.encoding import EncodedValue, encode
from privrel.errors import CapacityError, DepthError, ParameterError, ParamsMismatchError, ProtocolError
from privrel.he.core import Backend, Ciphertext, EvaluationKey, KeyPair, PublicKey, Sampler, SecretKey
from privrel.he.params import SchemeParameters
from privrel.survsig import (
    SurvivalCurve,
    SurvivalSignatureTable,
    SystemStructure,
    level_grid,
    survival_signature,
)

log = logging.getLogger(__name__)

LAYOUTS = ("packed", "row")


# -- encoding helpers ------------------------------------------------------------


def encode_probability(p: float | Fraction, kappa: int) -> int:
    """mu_kappa of a probability, exact for Fractions (no float detour)."""
    if isinstance(p, Fraction):
        num = abs(p.numerator) * 10**kappa
        m = (2 * num + p.denominator) // (2 * p.denominator)
        return -m if p < 0 else m
    return encode(p, kappa).integer


def error_envelope(rows: int, K: int, kappa: int) -> float:
    """Worst-case gap between the decoded curve and the float oracle."""
    return rows * (K + 1) * 0.5 * 10.0**-kappa


def result_magnitude_bound(rows: int, K: int, kappa: int) -> int:
    """Largest absolute value a column sum can take."""
    return rows * 10 ** ((K + 1) * kappa)


# -- level table ----------------------------------------------------------------


@dataclass(frozen=True)
class LevelTable:
    """All level vectors, one per row, last coordinate fastest."""

    multiplicities: tuple[int, ...]
    rows: tuple[tuple[int, ...], ...]

    @classmethod
    def for_multiplicities(cls, multiplicities: Sequence[int]) -> "LevelTable":
        mults = tuple(int(m) for m in multiplicities)
        return cls(mults, tuple(level_grid(mults)))

    @property
    def R(self) -> int:
        return len(self.rows)

    @property
    def K(self) -> int:
        return len(self.multiplicities)

    def column(self, k: int) -> tuple[int, ...]:
        """Levels of type k (1-based) for every row."""
        if not 1 <= k <= self.K:
            raise ProtocolError(f"no column {k} in a table with {self.K} types")
        return tuple(row[k - 1] for row in self.rows)


# -- slot layout ----------------------------------------------------------------


def _next_pow2(x: int) -> int:
    return 1 << max(0, (x - 1).bit_length())


@dataclass(frozen=True)
class TableLayout:
    mode: str
    ring_dimension: int
    rows: int
    times: int

    def __post_init__(self):
        if self.mode not in LAYOUTS:
            raise ParameterError(f"unknown table layout {self.mode!r}; use one of {LAYOUTS}")
        if self.rows < 1 or self.times < 1:
            raise ProtocolError("table needs at least one row and one time point")
        n = self.ring_dimension
        if self.mode == "packed" and self.block > n // 2:
            raise CapacityError(f"{self.times} time points need more than n/2 = {n // 2} slots; use a larger ring")
        if self.mode == "row" and self.times > n:
            raise CapacityError(f"{self.times} time points exceed the {n} slots of a ciphertext")

    @property
    def block(self) -> int:
        """Slots per table row."""
        return _next_pow2(self.times) if self.mode == "packed" else self.times

    @property
    def blocks_per_slot_row(self) -> int:
        return self.ring_dimension // 2 // self.block

    @property
    def rows_per_ciphertext(self) -> int:
        return 2 * self.blocks_per_slot_row if self.mode == "packed" else 1

    @property
    def ciphertext_count(self) -> int:
        return -(-self.rows // self.rows_per_ciphertext)

    def slot(self, local_row: int, t: int) -> int:
        if self.mode == "row":
            return t
        per = self.blocks_per_slot_row
        return (local_row // per) * (self.ring_dimension // 2) + (local_row % per) * self.block + t

    def rows_of(self, c: int) -> range:
        b = self.rows_per_ciphertext
        return range(c * b, min(self.rows, (c + 1) * b))

    @property
    def rotation_steps(self) -> tuple[int, ...]:
        if self.mode == "row":
            return ()
        return tuple(self.block << j for j in range(int(math.log2(self.blocks_per_slot_row))))

    def galois_elements(self) -> tuple[int, ...]:
        if self.mode == "row":
            return ()
        two_n = 2 * self.ring_dimension
        return tuple(pow(3, s, two_n) for s in self.rotation_steps) + (two_n - 1,)

    def slot_vector(self, c: int, value) -> list[int]:
        """Slot vector for ciphertext c with ``value(row, t)`` at every used slot."""
        out = [0] * (self.ring_dimension if self.mode == "packed" else self.times)
        for local, g in enumerate(self.rows_of(c)):
            for t in range(self.times):
                out[self.slot(local, t)] = value(g, t)
        return out

    def to_dict(self) -> dict:
        return {"mode": self.mode, "ring_dimension": self.ring_dimension, "rows": self.rows, "times": self.times}

    @classmethod
    def from_dict(cls, d: dict) -> "TableLayout":
        return cls(str(d["mode"]), int(d["ring_dimension"]), int(d["rows"]), int(d["times"]))


# -- encrypted table -------------------------------------------------------------


@dataclass(frozen=True)
class EncryptedSignatureTable:
    layout: TableLayout
    ciphertexts: tuple[Ciphertext, ...]
    times: tuple[float, ...]
    kappa: int
    scale_exponent: int
    applied_mask: tuple[bool, ...]

    @property
    def K(self) -> int:
        return len(self.applied_mask)

    @property
    def R(self) -> int:
        return self.layout.rows

    @property
    def T(self) -> int:
        return self.layout.times

    @property
    def stages_applied(self) -> int:
        return sum(self.applied_mask)

    @property
    def complete(self) -> bool:
        return all(self.applied_mask)

    @property
    def min_level(self) -> int:
        return min(c.level for c in self.ciphertexts)


@dataclass(frozen=True)
class ResultVector:
    """Encrypted column sums; slot t of ``ciphertext`` holds the sum for time t."""

    ciphertext: Ciphertext
    layout: TableLayout
    times: tuple[float, ...]
    kappa: int
    scale_exponent: int
    K: int


@dataclass
class StageReport:
    encryptions: int = 0
    multiplications: int = 0
    rotations: int = 0
    extra: dict = field(default_factory=dict)


def check_parameters(params: SchemeParameters, rows: int, K: int, kappa: int) -> None:
    """Refuse to start unless depth and plaintext modulus fit the run."""
    params.check_depth(K)
    params.check_plaintext_bound(result_magnitude_bound(rows, K, kappa))


def check_keys(keys: KeyPair, params: SchemeParameters, backend: Backend, layout: TableLayout) -> None:
    """Refuse a stored key pair that cannot serve this run."""
    if keys.params.params_id != params.params_id:
        raise ParamsMismatchError("stored keys were generated for different scheme parameters")
    if keys.public_key.backend != backend.name:
        raise ParamsMismatchError(f"stored keys belong to backend {keys.public_key.backend!r}, not {backend.name!r}")
    missing = set(layout.galois_elements()) - set(keys.evaluation_key.galois)
    if missing:
        raise ParameterError(f"stored evaluation key lacks rotation keys for Galois elements {sorted(missing)}")


def designer_setup(
    system: SystemStructure,
    times: Sequence[float],
    kappa: int,
    params: SchemeParameters,
    backend: Backend,
    layout: str = "packed",
    rng_seed: int | None = None,
    signature: SurvivalSignatureTable | None = None,
    sampler: Sampler | None = None,
    keys: KeyPair | None = None,
) -> tuple[KeyPair, LevelTable, EncryptedSignatureTable]:
    """Keys, the plain level table and the encrypted signature table.

    Pass ``keys`` to reuse a previously generated key pair instead of
    generating a fresh one.
    """
    times = tuple(float(t) for t in times)
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ProtocolError("time grid must be strictly increasing", party="designer", stage="setup")
    levels = LevelTable.for_multiplicities(system.multiplicities)
    check_parameters(params, levels.R, levels.K, kappa)
    lay = TableLayout(layout, params.ring_dimension, levels.R, len(times))
    if signature is None:
        signature = survival_signature(system)

    if keys is None:
        keys = backend.keygen(params, rng_seed=rng_seed, galois_elements=lay.galois_elements())
    else:
        check_keys(keys, params, backend, lay)
    sampler = sampler or (Sampler(rng_seed + 1) if rng_seed is not None else Sampler())
    phi = [encode_probability(signature[row], kappa) for row in levels.rows]
    cts = tuple(
        backend.encrypt(keys.public_key, lay.slot_vector(c, lambda g, t: phi[g]), sampler)
        for c in range(lay.ciphertext_count)
    )
    table = EncryptedSignatureTable(lay, cts, times, kappa, kappa, (False,) * levels.K)
    return keys, levels, table


def manufacturer_update(
    table: EncryptedSignatureTable,
    type_index: int,
    level_column: Sequence[int],
    dist,
    public_key: PublicKey,
    evaluation_key: EvaluationKey,
    kappa: int,
    backend: Backend,
    sampler: Sampler | None = None,
    strict: bool = False,
    report: StageReport | None = None,
) -> EncryptedSignatureTable:
    """Multiply every cell (i, t) by Enc(mu(P(C_t = level_i))) for this type."""
    party = f"manufacturer-{type_index}"
    stage = "update"
    if kappa != table.kappa:
        raise ProtocolError(f"kappa {kappa} does not match the table's {table.kappa}", party, stage)
    if tuple(float(t) for t in dist.times) != table.times:
        raise ProtocolError("time grid of the component distribution does not match the table", party, stage)
    if not 1 <= type_index <= table.K:
        raise ProtocolError(f"type index {type_index} outside 1..{table.K}", party, stage)
    if table.applied_mask[type_index - 1]:
        raise ProtocolError(f"stage {type_index} was already applied", party, stage)
    if len(level_column) != table.R:
        raise ProtocolError(f"level column has {len(level_column)} rows, the table has {table.R}", party, stage)
    width = len(dist.pmf[0])
    if any(not 0 <= l < width for l in level_column):
        raise ProtocolError("level column does not match the component multiplicity", party, stage)
    if table.min_level < 1:
        raise ProtocolError(
            f"multiplicative depth exhausted at stage {table.stages_applied + 1}", party, stage
        ) from DepthError("no remaining level")

    sampler = sampler or Sampler()
    report = report if report is not None else StageReport()
    # one rounding site per probability
    enc = [[encode_probability(dist.pmf[t][l], kappa) for t in range(table.T)] for l in range(width)]
    lay = table.layout
    try:
        if lay.mode == "packed":
            out = []
            for c, ct in enumerate(table.ciphertexts):
                factor = backend.encrypt(public_key, lay.slot_vector(c, lambda g, t: enc[level_column[g]][t]), sampler)
                out.append(backend.mul(ct, factor, evaluation_key))
                report.encryptions += 1
                report.multiplications += 1
        else:
            shared: dict[int, Ciphertext] = {}
            out = []
            for i, ct in enumerate(table.ciphertexts):
                l = level_column[i]
                if strict or l not in shared:
                    shared[l] = backend.encrypt(public_key, enc[l], sampler)
                    report.encryptions += 1
                out.append(backend.mul(ct, shared[l], evaluation_key))
                report.multiplications += 1
    except DepthError as e:
        raise ProtocolError(f"stage {table.stages_applied + 1}: {e}", party, stage) from e
    mask = list(table.applied_mask)
    mask[type_index - 1] = True
    return replace(
        table,
        ciphertexts=tuple(out),
        scale_exponent=table.scale_exponent + kappa,
        applied_mask=tuple(mask),
    )


def final_column_sums(
    table: EncryptedSignatureTable,
    evaluation_key: EvaluationKey,
    backend: Backend,
    report: StageReport | None = None,
) -> ResultVector:
    """Encrypted sum over all rows for every time point; uses no depth."""
    if not table.complete:
        missing = [k + 1 for k, done in enumerate(table.applied_mask) if not done]
        raise ProtocolError(f"column sums requested before stages {missing} were applied", stage="column-sums")
    report = report if report is not None else StageReport()
    acc = table.ciphertexts[0]
    for ct in table.ciphertexts[1:]:
        acc = backend.add(acc, ct)
    if table.layout.mode == "packed":
        for step in table.layout.rotation_steps:
            acc = backend.add(acc, backend.rotate(acc, step, evaluation_key))
            report.rotations += 1
        acc = backend.add(acc, backend.swap_rows(acc, evaluation_key))
        report.rotations += 1
    return ResultVector(acc, table.layout, table.times, table.kappa, table.scale_exponent, table.K)


def decrypt_result(result: ResultVector, secret_key: SecretKey, backend: Backend) -> list[int]:
    """Integer column sums at scale ``result.scale_exponent``."""
    slots = backend.decrypt(secret_key, result.ciphertext)
    return [slots[result.layout.slot(0, t)] for t in range(result.layout.times)]


def designer_finalize(
    result: ResultVector, secret_key: SecretKey, backend: Backend, kappa: int, K: int
) -> SurvivalCurve:
    """Decrypt, rescale by 10^-(K+1)kappa and clamp to [0, 1] (raw values kept)."""
    expected = (K + 1) * kappa
    if result.kappa != kappa or result.K != K:
        raise ProtocolError("result was produced for a different kappa or type count", "designer", "finalize")
    if result.scale_exponent != expected:
        raise ProtocolError(
            f"result scale exponent {result.scale_exponent} differs from (K+1)*kappa = {expected}",
            "designer",
            "finalize",
        )
    ints = decrypt_result(result, secret_key, backend)
    return curve_from_integers(ints, result.times, expected, result.layout.rows, K, kappa)


def curve_from_integers(
    ints: Sequence[int], times: Sequence[float], scale: int, rows: int, K: int, kappa: int
) -> SurvivalCurve:
    raw = tuple(m / 10**scale for m in ints)
    eps = error_envelope(rows, K, kappa)
    outside = [t for t, v in zip(times, raw) if not -eps <= v <= 1 + eps]
    if outside:
        log.warning("%d decrypted values fall outside [-%g, 1+%g], first at t=%g", len(outside), eps, eps, outside[0])
    clamped = tuple(min(1.0, max(0.0, v)) for v in raw)
    return SurvivalCurve(tuple(float(t) for t in times), clamped, raw)


def plaintext_column_sums(
    signature: SurvivalSignatureTable, dists: Sequence, times: Sequence[float], kappa: int
) -> list[EncodedValue]:
    """The whole computation on EncodedValues, no encryption.

    ``dists`` is ordered by type id.  Each column sum carries scale (K+1)kappa.
    """
    levels = LevelTable.for_multiplicities(signature.multiplicities)
    out = []
    for j, t in enumerate(times):
        total = EncodedValue(0, (levels.K + 1) * kappa)
        for row in levels.rows:
            term = EncodedValue(encode_probability(signature[row], kappa), kappa)
            for k, dist in enumerate(dists):
                term = term * EncodedValue(encode_probability(dist.at(t)[row[k]], kappa), kappa)
            total = total + term
        out.append(total)
    return out
