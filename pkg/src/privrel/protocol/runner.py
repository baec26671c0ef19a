"""Run a whole protocol in one process, parties on threads."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Sequence

from privrel.errors import ProtocolError
from privrel.he.core import KeyPair
from privrel.he.params import DEFAULT_PROFILE
from privrel.inference import LifetimeSample
from privrel.protocol.messages import DEFAULT_COMPRESSION_LEVEL, PeerAbort
from privrel.protocol.parties import DESIGNER, Designer, DesignerOutcome, Manufacturer, PartyConfig, manufacturer_name
from privrel.protocol.transcript import Transcript
from privrel.survsig import SurvivalCurve, SystemStructure
from privrel.transport import DEFAULT_TIMEOUT, Endpoint, LoopbackNetwork, TcpEndpoint

TRANSPORTS = ("loopback", "tcp")


@dataclass
class ProtocolRun:
    curve: SurvivalCurve
    integers: list[int]
    scale_exponent: int
    transcript: Transcript
    configs: dict[str, PartyConfig]
    inbound_frames: dict[str, list[tuple[str, bytes]]] = field(default_factory=dict)
    seconds: float = 0.0


def build_configs(
    system: SystemStructure,
    times: Sequence[float],
    kappa: int,
    profile: str,
    backend: str = "bfv",
    ring_order: Sequence[int] | None = None,
    layout: str = "packed",
    strict: bool = False,
    seed: int | None = None,
    compression_level: int = DEFAULT_COMPRESSION_LEVEL,
    timeout: float = DEFAULT_TIMEOUT,
) -> dict[str, PartyConfig]:
    """One config per party; ``ring_order`` lists type ids, first manufacturer first."""
    order = list(ring_order) if ring_order is not None else [t.id for t in system.types]
    if sorted(order) != [t.id for t in system.types]:
        raise ProtocolError(f"ring order {order} is not a permutation of the type ids 1..{system.K}")
    ring = tuple(manufacturer_name(system.types[k - 1].label) for k in order)
    common = dict(
        kappa=kappa,
        times=tuple(float(t) for t in times),
        profile=profile,
        ring=ring,
        backend=backend,
        layout=layout,
        strict=strict,
        compression_level=compression_level,
        timeout=timeout,
    )
    configs = {DESIGNER: PartyConfig(DESIGNER, "designer", rng_seed=seed, **common)}
    for i, k in enumerate(order):
        name = ring[i]
        configs[name] = PartyConfig(
            name, "manufacturer", type_index=k, rng_seed=None if seed is None else seed + 100 + k, **common
        )
    return configs


def run_parties(
    system: SystemStructure,
    samples: dict[int, LifetimeSample],
    configs: dict[str, PartyConfig],
    endpoints: dict[str, Endpoint],
    transcript: Transcript,
    keys: KeyPair | None = None,
) -> DesignerOutcome:
    """Run every party to completion; re-raise the root-cause failure."""
    errors: list[tuple[float, str, BaseException]] = []
    lock = threading.Lock()

    def guard(name, fn):
        try:
            return fn()
        except BaseException as e:  # noqa: BLE001 - reported below
            with lock:
                errors.append((time.perf_counter(), name, e))
            return None

    manufacturers = []
    for name, cfg in configs.items():
        if cfg.role == "manufacturer":
            sample = samples.get(cfg.type_index)
            if sample is None:
                raise ProtocolError(f"no lifetime data for type {cfg.type_index}", name, "config")
            manufacturers.append(Manufacturer(cfg, sample, endpoints[name], transcript))
    designer = Designer(configs[DESIGNER], system, endpoints[DESIGNER], transcript, keys)

    threads = [
        threading.Thread(target=guard, args=(m.name, m.run), name=m.name, daemon=True) for m in manufacturers
    ]
    for t in threads:
        t.start()
    outcome = guard(DESIGNER, designer.run)
    for t in threads:
        t.join()
    if errors:
        # a peer's ABORT only echoes the real failure; prefer the original
        errors.sort(key=lambda e: (isinstance(e[2], PeerAbort), e[0]))
        raise errors[0][2]
    return outcome


def run_protocol(
    system: SystemStructure,
    samples: dict[int, LifetimeSample],
    times: Sequence[float],
    kappa: int = 3,
    profile: str = DEFAULT_PROFILE,
    backend: str = "bfv",
    transport: str = "loopback",
    ring_order: Sequence[int] | None = None,
    layout: str = "packed",
    strict: bool = False,
    seed: int | None = None,
    transcript: Transcript | None = None,
    record_frames: bool = False,
    host: str = "127.0.0.1",
    timeout: float = DEFAULT_TIMEOUT,
    keys: KeyPair | None = None,
) -> ProtocolRun:
    """Designer plus one manufacturer per type; ``samples`` maps type id to data."""
    if transport not in TRANSPORTS:
        raise ProtocolError(f"unknown transport {transport!r}; use one of {TRANSPORTS}")
    configs = build_configs(
        system, times, kappa, profile, backend, ring_order, layout, strict, seed, timeout=timeout
    )
    transcript = transcript or Transcript()
    endpoints: dict[str, Endpoint] = {}
    try:
        if transport == "loopback":
            net = LoopbackNetwork()
            for name in configs:
                endpoints[name] = net.endpoint(name, transcript, record_frames)
        else:
            for name in configs:
                endpoints[name] = TcpEndpoint(name, (host, 0), transcript=transcript, record_frames=record_frames)
            addresses = {name: ep.address for name, ep in endpoints.items()}
            for ep in endpoints.values():
                ep.peers.update(addresses)
        t0 = time.perf_counter()
        outcome = run_parties(system, samples, configs, endpoints, transcript, keys)
        seconds = time.perf_counter() - t0
    finally:
        for ep in endpoints.values():
            ep.close()
    transcript.record("runner", "done", seconds=round(seconds, 3), transport=transport, backend=backend)
    return ProtocolRun(
        outcome.curve,
        outcome.integers,
        outcome.scale_exponent,
        transcript,
        configs,
        {name: ep.inbound_frames for name, ep in endpoints.items()},
        seconds,
    )
