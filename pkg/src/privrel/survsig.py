"""Coherent systems, structure functions and survival signatures.

A system has K component types, type k holding M_k exchangeable
components.  Component slots are numbered 0..M-1 type by type in type-id
order, so a state vector is the concatenation of one 0/1 block per type.

The structure is a monotone formula: AND / OR / k-out-of-n nodes over
component leaves.  Any such formula is non-decreasing, and coherence
(phi(0)=0, phi(1)=1, every component relevant) is checked separately.

Signature values are exact ``Fraction``s; floats appear only in the curve.
"""

from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

from privrel.errors import CapacityError, InputError, LevelRangeError, StructureError

SYSTEM_FORMAT = "privrel-system/1"

# largest level grid and largest number of structure evaluations we accept
DEFAULT_MAX_ROWS = 1 << 20
DEFAULT_MAX_EVALUATIONS = 1 << 24
# exhaustive coherence check up to this many components, random probes above
EXHAUSTIVE_CHECK_LIMIT = 20
_CHUNK = 1 << 16


# -- types -----------------------------------------------------------------------


@dataclass(frozen=True)
class ComponentType:
    id: int
    label: str
    multiplicity: int

    def __post_init__(self):
        if self.multiplicity < 1:
            raise StructureError(f"type {self.label!r}: multiplicity must be >= 1")
        if not self.label or self.label[-1].isdigit():
            raise StructureError(f"type label {self.label!r} must be non-empty and not end in a digit")


@dataclass(frozen=True)
class Component:
    """Leaf: the ``index``-th (1-based) component of type ``type_id``."""

    type_id: int
    index: int


@dataclass(frozen=True)
class All:
    children: tuple["Node", ...]


@dataclass(frozen=True)
class Any_:
    children: tuple["Node", ...]


@dataclass(frozen=True)
class AtLeast:
    k: int
    children: tuple["Node", ...]


Node = Union[Component, All, Any_, AtLeast]


@dataclass(frozen=True)
class SystemStructure:
    types: tuple[ComponentType, ...]
    structure: Node
    name: str = ""

    def __post_init__(self):
        if not self.types:
            raise StructureError("a system needs at least one component type")
        ids = [t.id for t in self.types]
        if ids != list(range(1, len(ids) + 1)):
            raise StructureError(f"type ids must be 1..K in order, got {ids}")
        labels = [t.label for t in self.types]
        if len(set(labels)) != len(labels):
            raise StructureError(f"duplicate type labels in {labels}")
        self._validate(self.structure)

    def _validate(self, node: Node) -> None:
        if isinstance(node, Component):
            if not 1 <= node.type_id <= len(self.types):
                raise StructureError(f"leaf refers to unknown type id {node.type_id}")
            m = self.types[node.type_id - 1].multiplicity
            if not 1 <= node.index <= m:
                raise StructureError(
                    f"leaf {self.types[node.type_id - 1].label}{node.index} is outside 1..{m}"
                )
            return
        if isinstance(node, (All, Any_, AtLeast)):
            if not node.children:
                raise StructureError("gate with no inputs")
            if isinstance(node, AtLeast) and not 1 <= node.k <= len(node.children):
                raise StructureError(f"k-out-of-n gate needs 1 <= k <= {len(node.children)}, got {node.k}")
            for c in node.children:
                self._validate(c)
            return
        raise StructureError(f"unknown structure node {node!r}")

    # -- sizes --------------------------------------------------------------

    @property
    def K(self) -> int:
        return len(self.types)

    @property
    def multiplicities(self) -> tuple[int, ...]:
        return tuple(t.multiplicity for t in self.types)

    @property
    def M(self) -> int:
        return sum(self.multiplicities)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(itertools.accumulate(self.multiplicities, initial=0))[:-1]

    @property
    def row_count(self) -> int:
        return math.prod(m + 1 for m in self.multiplicities)

    def slot(self, leaf: Component) -> int:
        return self.offsets[leaf.type_id - 1] + leaf.index - 1

    def slot_label(self, i: int) -> str:
        for t, off in zip(self.types, self.offsets):
            if off <= i < off + t.multiplicity:
                return f"{t.label}{i - off + 1}"
        raise StructureError(f"slot {i} out of range")

    # -- evaluation ------------------------------------------------------------

    @cached_property
    def _compiled(self):
        return _compile(self.structure, self)

    def evaluate_many(self, states: np.ndarray) -> np.ndarray:
        """phi for each row of a boolean (N, M) array."""
        return _eval_vec(self._compiled, states)


def _compile(node: Node, system: SystemStructure):
    if isinstance(node, Component):
        return system.slot(node)
    kids = tuple(_compile(c, system) for c in node.children)
    if isinstance(node, All):
        return ("and", len(kids), kids)
    if isinstance(node, Any_):
        return ("and", 1, kids) if len(kids) == 1 else ("or", 1, kids)
    return ("k", node.k, kids)


def _eval_one(c, x: Sequence[int]) -> int:
    if isinstance(c, int):
        return x[c]
    kind, k, kids = c
    if kind == "and":
        return int(all(_eval_one(g, x) for g in kids))
    if kind == "or":
        return int(any(_eval_one(g, x) for g in kids))
    return int(sum(_eval_one(g, x) for g in kids) >= k)


def _eval_vec(c, states: np.ndarray) -> np.ndarray:
    if isinstance(c, int):
        return states[:, c]
    kind, k, kids = c
    vals = [_eval_vec(g, states) for g in kids]
    if kind == "and":
        return np.logical_and.reduce(vals)
    if kind == "or":
        return np.logical_or.reduce(vals)
    return np.add.reduce([v.astype(np.int32) for v in vals]) >= k


def evaluate_structure(system: SystemStructure, x: Sequence[int]) -> int:
    """phi(x) for a full 0/1 state vector."""
    if len(x) != system.M:
        raise StructureError(f"state vector has length {len(x)}, the system has {system.M} components")
    if any(v not in (0, 1) for v in x):
        raise StructureError("state vector entries must be 0 or 1")
    return _eval_one(system._compiled, tuple(int(v) for v in x))


# -- level sets ----------------------------------------------------------------


def level_grid(multiplicities: Sequence[int]) -> list[tuple[int, ...]]:
    """All level vectors, last coordinate fastest."""
    return list(itertools.product(*(range(m + 1) for m in multiplicities)))


def check_level(system: SystemStructure, l: Sequence[int]) -> tuple[int, ...]:
    if len(l) != system.K:
        raise LevelRangeError(f"level vector has {len(l)} entries, the system has {system.K} types")
    for lk, t in zip(l, system.types):
        if not 0 <= lk <= t.multiplicity:
            raise LevelRangeError(f"level {lk} for type {t.label!r} is outside 0..{t.multiplicity}")
    return tuple(int(v) for v in l)


def enumerate_level_set(system: SystemStructure, l: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """Every state vector with exactly l_k working components of type k."""
    l = check_level(system, l)
    blocks = []
    for lk, m in zip(l, system.multiplicities):
        block = []
        for working in itertools.combinations(range(m), lk):
            bits = [0] * m
            for i in working:
                bits[i] = 1
            block.append(tuple(bits))
        blocks.append(block)
    for parts in itertools.product(*blocks):
        yield tuple(itertools.chain.from_iterable(parts))


def level_set_size(system: SystemStructure, l: Sequence[int]) -> int:
    l = check_level(system, l)
    return math.prod(math.comb(m, lk) for m, lk in zip(system.multiplicities, l))


# -- signature ------------------------------------------------------------------


@dataclass(frozen=True)
class SurvivalSignatureTable:
    types: tuple[ComponentType, ...]
    rows: Mapping[tuple[int, ...], Fraction]

    def __post_init__(self):
        expected = math.prod(t.multiplicity + 1 for t in self.types)
        if len(self.rows) != expected:
            raise StructureError(f"signature table has {len(self.rows)} rows, expected {expected}")

    @property
    def multiplicities(self) -> tuple[int, ...]:
        return tuple(t.multiplicity for t in self.types)

    @property
    def K(self) -> int:
        return len(self.types)

    def levels(self) -> list[tuple[int, ...]]:
        return level_grid(self.multiplicities)

    def __getitem__(self, l: Sequence[int]) -> Fraction:
        try:
            return self.rows[tuple(l)]
        except KeyError:
            raise LevelRangeError(f"level vector {tuple(l)} is outside the grid {self.multiplicities}") from None

    def __len__(self) -> int:
        return len(self.rows)

    def as_array(self) -> np.ndarray:
        """Float tensor of shape (M_1+1, ..., M_K+1)."""
        arr = np.array([float(self.rows[l]) for l in self.levels()], dtype=float)
        return arr.reshape([m + 1 for m in self.multiplicities])

    def to_dict(self) -> dict:
        return {
            "types": [{"label": t.label, "multiplicity": t.multiplicity} for t in self.types],
            "rows": [{"levels": list(l), "value": str(self.rows[l])} for l in self.levels()],
        }


def survival_signature(
    system: SystemStructure,
    max_rows: int = DEFAULT_MAX_ROWS,
    max_evaluations: int = DEFAULT_MAX_EVALUATIONS,
    check: bool = True,
) -> SurvivalSignatureTable:
    """Exact survival signature by exhaustive evaluation of the structure.

    All 2^M states are evaluated in vectorized chunks and counted per level
    vector, which visits each level set exactly once.
    """
    if system.row_count > max_rows:
        raise CapacityError(
            f"level grid has {system.row_count} rows (cap {max_rows}); use a smaller system "
            "or a Monte Carlo estimate of the signature"
        )
    total = 1 << system.M
    if total > max_evaluations:
        raise CapacityError(
            f"{total} structure evaluations needed (cap {max_evaluations}); use a smaller system "
            "or a Monte Carlo estimate of the signature"
        )
    if check:
        check_coherent(system)

    mults = system.multiplicities
    # level index of a state = sum over types of popcount(block) * stride
    strides = [math.prod(m + 1 for m in mults[k + 1 :]) for k in range(len(mults))]
    counts = np.zeros(system.row_count, dtype=np.int64)
    for states in _state_chunks(system.M):
        phi = system.evaluate_many(states)
        idx = np.zeros(len(states), dtype=np.int64)
        for k, off in enumerate(system.offsets):
            idx += states[:, off : off + mults[k]].sum(axis=1, dtype=np.int64) * strides[k]
        counts += np.bincount(idx[phi], minlength=system.row_count)

    rows = {}
    for i, l in enumerate(level_grid(mults)):
        size = math.prod(math.comb(m, lk) for m, lk in zip(mults, l))
        rows[l] = Fraction(int(counts[i]), size)
    return SurvivalSignatureTable(system.types, rows)


def _state_chunks(M: int) -> Iterator[np.ndarray]:
    total = 1 << M
    shifts = np.arange(M, dtype=np.int64)
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        yield ((codes[:, None] >> shifts) & 1).astype(bool)


def check_coherent(system: SystemStructure, probes: int = 20000, seed: int = 0) -> None:
    """Raise StructureError unless the system is coherent.

    Exhaustive for M <= 20; above that, random monotonicity and relevance probes.
    """
    M = system.M
    all_down = np.zeros((1, M), dtype=bool)
    if system.evaluate_many(all_down)[0]:
        raise StructureError("phi(all failed) must be 0")
    if not system.evaluate_many(~all_down)[0]:
        raise StructureError("phi(all working) must be 1")
    relevant = np.zeros(M, dtype=bool)
    if M <= EXHAUSTIVE_CHECK_LIMIT:
        chunks = _state_chunks(M)
    else:
        rng = np.random.default_rng(seed)
        chunks = (rng.random((min(_CHUNK, probes - s), M)) < 0.5 for s in range(0, probes, _CHUNK))
    for states in chunks:
        for i in range(M):
            up = states.copy()
            up[:, i] = True
            down = states.copy()
            down[:, i] = False
            hi, lo = system.evaluate_many(up), system.evaluate_many(down)
            if np.any(lo & ~hi):
                raise StructureError(f"structure is not monotone in component {system.slot_label(i)}")
            relevant[i] |= bool(np.any(hi & ~lo))
    missing = [system.slot_label(i) for i in np.flatnonzero(~relevant)]
    if missing:
        raise StructureError(f"irrelevant components (system is not coherent): {', '.join(missing)}")


# -- curve oracle ---------------------------------------------------------------


@dataclass(frozen=True)
class SurvivalCurve:
    times: tuple[float, ...]
    values: tuple[float, ...]
    raw: tuple[float, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise InputError("times and values differ in length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise InputError("curve times must be strictly increasing")
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise InputError("curve values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.times)


def _pmf_at(dist, t: float) -> np.ndarray:
    times = list(dist.times)
    try:
        j = times.index(t)
    except ValueError:
        raise InputError(f"no component distribution for type {dist.type_id} at time {t}") from None
    return np.asarray(dist.pmf[j], dtype=float)


def survival_curve_oracle(signature: SurvivalSignatureTable, component_dists: Sequence, times: Sequence[float]) -> SurvivalCurve:
    """P(T_S > t) = sum_l Phi(l) prod_k P(C^k_t = l_k), in floating point."""
    if len(component_dists) != signature.K:
        raise InputError(f"need {signature.K} component distributions, got {len(component_dists)}")
    phi = signature.as_array()
    values = []
    for t in times:
        acc = phi
        for k, dist in enumerate(component_dists):
            p = _pmf_at(dist, t)
            if len(p) != signature.multiplicities[k] + 1:
                raise InputError(
                    f"type {k + 1}: distribution has {len(p)} levels, expected {signature.multiplicities[k] + 1}"
                )
            acc = np.tensordot(p, acc, axes=(0, 0))
        values.append(float(acc))
    clamped = tuple(min(1.0, max(0.0, v)) for v in values)
    return SurvivalCurve(tuple(float(t) for t in times), clamped, tuple(values))


# -- file format ------------------------------------------------------------------

_LEAF = re.compile(r"^(.*?)(\d*)$")


def _parse_node(obj, by_label: dict[str, ComponentType]) -> Node:
    if isinstance(obj, str):
        label, digits = _LEAF.match(obj.strip()).groups()
        t = by_label.get(label)
        if t is None:
            raise StructureError(f"leaf {obj!r} names an unknown component type")
        if not digits:
            if t.multiplicity != 1:
                raise StructureError(f"leaf {obj!r} needs an index: type {label!r} has {t.multiplicity} components")
            digits = "1"
        return Component(t.id, int(digits))
    if isinstance(obj, dict) and len(obj) == 1:
        (key, val), = obj.items()
        if key in ("all", "any"):
            if not isinstance(val, list):
                raise StructureError(f"{key!r} expects a list")
            kids = tuple(_parse_node(v, by_label) for v in val)
            return All(kids) if key == "all" else Any_(kids)
    if isinstance(obj, dict) and set(obj) == {"at_least", "of"}:
        if not isinstance(obj["of"], list):
            raise StructureError("'of' expects a list")
        return AtLeast(int(obj["at_least"]), tuple(_parse_node(v, by_label) for v in obj["of"]))
    raise StructureError(f"cannot parse structure node {obj!r}")


def _dump_node(node: Node, system: SystemStructure):
    if isinstance(node, Component):
        t = system.types[node.type_id - 1]
        return f"{t.label}{node.index}"
    if isinstance(node, All):
        return {"all": [_dump_node(c, system) for c in node.children]}
    if isinstance(node, Any_):
        return {"any": [_dump_node(c, system) for c in node.children]}
    return {"at_least": node.k, "of": [_dump_node(c, system) for c in node.children]}


def system_from_dict(d: dict) -> SystemStructure:
    if d.get("format", SYSTEM_FORMAT) != SYSTEM_FORMAT:
        raise StructureError(f"unsupported system format {d.get('format')!r} (expected {SYSTEM_FORMAT})")
    try:
        types = tuple(
            ComponentType(i + 1, str(t["label"]), int(t["multiplicity"])) for i, t in enumerate(d["types"])
        )
        by_label = {t.label: t for t in types}
        structure = _parse_node(d["structure"], by_label)
    except (KeyError, TypeError) as e:
        raise StructureError(f"malformed system description: {e}") from None
    return SystemStructure(types, structure, str(d.get("name", "")))


def system_to_dict(system: SystemStructure) -> dict:
    return {
        "format": SYSTEM_FORMAT,
        "name": system.name,
        "types": [{"label": t.label, "multiplicity": t.multiplicity} for t in system.types],
        "structure": _dump_node(system.structure, system),
    }


def load_system(path: str | Path) -> SystemStructure:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except FileNotFoundError:
        raise InputError(f"system file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise StructureError(f"{path}: not valid JSON ({e})") from None
    return system_from_dict(d)


def save_system(system: SystemStructure, path: str | Path) -> None:
    Path(path).write_text(json.dumps(system_to_dict(system), indent=2) + "\n")


# -- stock systems ------------------------------------------------------------------


def _single_type(n: int, gate) -> SystemStructure:
    kids = tuple(Component(1, i + 1) for i in range(n))
    return SystemStructure((ComponentType(1, "X", n),), gate(kids))


def series_system(n: int) -> SystemStructure:
    return _single_type(n, All)


def parallel_system(n: int) -> SystemStructure:
    return _single_type(n, Any_)


def k_out_of_n_system(k: int, n: int) -> SystemStructure:
    return _single_type(n, lambda kids: AtLeast(k, kids))


def braking_system() -> SystemStructure:
    """The four-type automotive braking system shipped with the package."""
    from importlib.resources import files

    d = json.loads(files("privrel.data.braking").joinpath("system.json").read_text())
    return system_from_dict(d)
