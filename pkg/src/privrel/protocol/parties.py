"""Designer and manufacturer state machines.

Message flow (designer D, manufacturers in ring order X1 .. XK)::

    D  -> Xi   HELLO                       every i
    Xi -> D    HELLO (or ABORT)            every i; D waits for all
    D  -> Xi   PUBKEY, GRID, LEVEL_COLUMN  every i (column i only)
    D  -> X1   TABLE
    Xi -> Xi+1 TABLE
    XK -> D    RESULT

Any party that fails sends ABORT to the designer, which relays it to all
manufacturers.  Each party buffers messages that arrive early in a
mailbox, so frame order across different connections does not matter.
"""

from __future__ import annotations

import enum
import logging
import time
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass, field

from privrel.errors import PrivrelError, ProtocolError
from privrel.he import get_backend
from privrel.he.core import KeyPair, Sampler
from privrel.he.params import SchemeParameters, get_profile
from privrel.inference import ComponentCountDistribution, LifetimeSample, binomial_pmf, survival_function
from privrel.protocol import messages as msg
from privrel.protocol.messages import Hello, MessageType
from privrel.protocol.tables import (
    StageReport,
    TableLayout,
    check_parameters,
    decrypt_result,
    designer_finalize,
    designer_setup,
    final_column_sums,
    manufacturer_update,
)
from privrel.protocol.transcript import Transcript
from privrel.survsig import SurvivalCurve, SystemStructure, survival_signature
from privrel.transport import DEFAULT_TIMEOUT, Delivery, Endpoint

log = logging.getLogger(__name__)

DESIGNER = "designer"


def manufacturer_name(label: str) -> str:
    return f"manufacturer-{label}"


class State(enum.Enum):
    INIT = "init"
    HANDSHAKE = "handshake"
    SETUP = "setup"
    DISTRIBUTE = "distribute"
    WAIT_KEYS = "wait-keys"
    WAIT_TABLE = "wait-table"
    UPDATE = "update"
    WAIT_RESULT = "wait-result"
    DONE = "done"
    ABORTED = "aborted"


@dataclass(frozen=True)
class PartyConfig:
    """What one party knows before the run starts."""

    name: str
    role: str
    kappa: int
    times: tuple[float, ...]
    profile: str
    ring: tuple[str, ...]
    type_index: int = 0
    backend: str = "bfv"
    layout: str = "packed"
    strict: bool = False
    designer: str = DESIGNER
    rng_seed: int | None = None
    compression_level: int = msg.DEFAULT_COMPRESSION_LEVEL
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        if self.role not in ("designer", "manufacturer"):
            raise ProtocolError(f"unknown role {self.role!r}")
        if self.role == "manufacturer" and self.name not in self.ring:
            raise ProtocolError(f"{self.name} is not in the ring {self.ring}")
        if len(set(self.ring)) != len(self.ring):
            raise ProtocolError("ring order lists a party twice")
        if any(b <= a for a, b in zip(self.times, self.times[1:])) or not self.times:
            raise ProtocolError("time grid must be non-empty and strictly increasing")

    @property
    def params(self) -> SchemeParameters:
        return get_profile(self.profile)

    def hello(self) -> Hello:
        return Hello(
            sender=self.name,
            role=self.role,
            params_id=self.params.params_id.hex(),
            profile=self.profile,
            backend=self.backend,
            kappa=self.kappa,
            grid_hash=msg.grid_hash(self.times),
        )


class Party:
    def __init__(self, config: PartyConfig, endpoint: Endpoint | None, transcript: Transcript | None = None):
        self.config = config
        self.endpoint = endpoint
        self.transcript = transcript or Transcript()
        self.state = State.INIT
        self._mailbox: deque[Delivery] = deque()
        self.backend = get_backend(config.backend)
        self.sampler = Sampler(config.rng_seed) if config.rng_seed is not None else Sampler()

    @property
    def name(self) -> str:
        return self.config.name

    def _enter(self, state: State) -> None:
        self.state = state
        self.transcript.record(self.name, "state", state=state.value)

    @contextmanager
    def timed(self, stage: str, **fields):
        t0 = time.perf_counter()
        yield
        self.transcript.stage(self.name, stage, time.perf_counter() - t0, **fields)

    def expect(self, msg_type: MessageType, sender: str) -> Delivery:
        """Next message of this type from this sender; others wait in the mailbox."""
        for i, d in enumerate(self._mailbox):
            if d.msg_type == msg_type and d.sender == sender:
                del self._mailbox[i]
                return d
        while True:
            d = self.endpoint.recv(self.config.timeout)
            if d.msg_type == MessageType.ABORT:
                raise msg.decode_abort(d.payload)
            if d.msg_type == msg_type and d.sender == sender:
                return d
            self._mailbox.append(d)

    def fail(self, stage: str, reason: str) -> ProtocolError:
        return ProtocolError(reason, party=self.name, stage=stage)

    def send(self, dest: str, frame: bytes) -> None:
        self.endpoint.send(dest, frame)


@dataclass
class DesignerOutcome:
    curve: SurvivalCurve
    integers: list[int]
    scale_exponent: int
    report: dict = field(default_factory=dict)


class Designer(Party):
    def __init__(
        self, config: PartyConfig, system: SystemStructure, endpoint: Endpoint, transcript=None, keys: KeyPair | None = None
    ):
        super().__init__(config, endpoint, transcript)
        self.system = system
        self.keys = keys
        if len(config.ring) != system.K:
            raise ProtocolError(f"ring has {len(config.ring)} manufacturers, the system has {system.K} types", self.name, "config")

    def run(self) -> DesignerOutcome:
        try:
            return self._run()
        except PrivrelError as e:
            self._enter(State.ABORTED)
            stage = getattr(e, "stage", None) or self.state.value
            for peer in self.config.ring:
                try:
                    self.send(peer, msg.encode_abort(getattr(e, "party", None) or self.name, stage, str(e)))
                except PrivrelError:
                    pass
            raise

    def _run(self) -> DesignerOutcome:
        cfg = self.config
        params = cfg.params
        K = self.system.K
        # refuse before any traffic if the profile cannot carry the run
        check_parameters(params, self.system.row_count, K, cfg.kappa)
        TableLayout(cfg.layout, params.ring_dimension, self.system.row_count, len(cfg.times))

        self._enter(State.HANDSHAKE)
        mine = cfg.hello()
        for peer in cfg.ring:
            self.send(peer, mine.encode())
        for peer in cfg.ring:
            theirs = Hello.decode(self.expect(MessageType.HELLO, peer).payload)
            bad = mine.mismatch(theirs)
            if bad:
                raise self.fail("handshake", f"{peer} disagrees on {bad}")

        self._enter(State.SETUP)
        with self.timed("survival signature"):
            signature = survival_signature(self.system)
        with self.timed("keygen and encrypt table"):
            keys, levels, table = designer_setup(
                self.system, cfg.times, cfg.kappa, params, self.backend, cfg.layout,
                rng_seed=cfg.rng_seed, signature=signature, sampler=self.sampler, keys=self.keys,
            )

        self._enter(State.DISTRIBUTE)
        with self.timed("serialize keys"):
            relin_only = msg.encode_pubkey(params, keys.public_key, keys.evaluation_key.without_galois())
            full = msg.encode_pubkey(params, keys.public_key, keys.evaluation_key)
        grid = msg.encode_grid(cfg.times, cfg.kappa)
        for pos, peer in enumerate(cfg.ring):
            k = self._type_of(peer)
            # only the last manufacturer computes column sums and needs rotation keys
            self.send(peer, full if pos == len(cfg.ring) - 1 else relin_only)
            self.send(peer, grid)
            self.send(peer, msg.encode_level_column(k, levels.column(k)))
        with self.timed("save table"):
            frame = msg.encode_table(table, cfg.compression_level)
        self.send(cfg.ring[0], frame)

        self._enter(State.WAIT_RESULT)
        d = self.expect(MessageType.RESULT, cfg.ring[-1])
        with self.timed("load result"):
            result = msg.decode_result(d.payload, params)
        with self.timed("decrypt"):
            ints = decrypt_result(result, keys.secret_key, self.backend)
            curve = designer_finalize(result, keys.secret_key, self.backend, cfg.kappa, K)
        self._enter(State.DONE)
        return DesignerOutcome(curve, ints, result.scale_exponent)

    def _type_of(self, peer: str) -> int:
        for t in self.system.types:
            if manufacturer_name(t.label) == peer:
                return t.id
        raise self.fail("config", f"{peer} does not manufacture any type of this system")


class Manufacturer(Party):
    """Holds one type's lifetime data; inference happens before any traffic."""

    def __init__(self, config: PartyConfig, sample: LifetimeSample, endpoint: Endpoint, transcript=None):
        super().__init__(config, endpoint, transcript)
        if config.role != "manufacturer":
            raise ProtocolError("Manufacturer needs a manufacturer config", config.name, "config")
        self.sample = sample
        with self.timed("inference"):
            self.survival = [float(s) for s in survival_function(sample, config.times)]

    @property
    def position(self) -> int:
        return self.config.ring.index(self.name)

    @property
    def predecessor(self) -> str:
        return self.config.designer if self.position == 0 else self.config.ring[self.position - 1]

    @property
    def is_last(self) -> bool:
        return self.position == len(self.config.ring) - 1

    def run(self) -> None:
        try:
            self._run()
        except PrivrelError as e:
            self._enter(State.ABORTED)
            if not isinstance(e, msg.PeerAbort):
                stage = getattr(e, "stage", None) or self.state.value
                try:
                    self.send(self.config.designer, msg.encode_abort(self.name, stage, str(e)))
                except PrivrelError:
                    pass
            raise

    def _run(self) -> None:
        cfg = self.config
        dsg = cfg.designer
        self._enter(State.HANDSHAKE)
        theirs = Hello.decode(self.expect(MessageType.HELLO, dsg).payload)
        mine = cfg.hello()
        bad = mine.mismatch(theirs)
        if bad:
            raise self.fail("handshake", f"designer disagrees on {bad}")
        self.send(dsg, mine.encode())

        self._enter(State.WAIT_KEYS)
        params, pk, evk = msg.decode_pubkey(self.expect(MessageType.PUBKEY, dsg).payload)
        if params.params_id != cfg.params.params_id:
            raise self.fail("keys", "received keys for different scheme parameters")
        times, kappa = msg.decode_grid(self.expect(MessageType.GRID, dsg).payload)
        if times != cfg.times or kappa != cfg.kappa:
            raise self.fail("grid", "time grid or kappa differs from the agreed values")
        k, column = msg.decode_level_column(self.expect(MessageType.LEVEL_COLUMN, dsg).payload)
        if k != cfg.type_index:
            raise self.fail("level column", f"received column {k}, this party manufactures type {cfg.type_index}")
        multiplicity = max(column)
        if sorted(set(column)) != list(range(multiplicity + 1)):
            raise self.fail("level column", "level column does not cover 0..M_k")
        dist = ComponentCountDistribution(
            k, cfg.times, tuple(binomial_pmf(multiplicity, s) for s in self.survival)
        )

        self._enter(State.WAIT_TABLE)
        d = self.expect(MessageType.TABLE, self.predecessor)
        with self.timed("load table", bytes=d.size):
            table = msg.decode_table(d.payload, params)
        if table.K != len(cfg.ring) or table.R != len(column):
            raise self.fail("load table", "table shape does not match the level column and ring")

        self._enter(State.UPDATE)
        report = StageReport()
        with self.timed("update table"):
            table = manufacturer_update(
                table, k, column, dist, pk, evk, cfg.kappa, self.backend,
                sampler=self.sampler, strict=cfg.strict, report=report,
            )
        self.transcript.record(
            self.name, "work", encryptions=report.encryptions, multiplications=report.multiplications
        )
        if self.is_last:
            with self.timed("column sums"):
                result = final_column_sums(table, evk, self.backend, report)
            with self.timed("save result"):
                frame = msg.encode_result(result, cfg.compression_level)
            self.send(dsg, frame)
        else:
            with self.timed("save table"):
                frame = msg.encode_table(table, cfg.compression_level)
            self.send(cfg.ring[self.position + 1], frame)
        self._enter(State.DONE)
