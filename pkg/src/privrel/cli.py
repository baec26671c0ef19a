"""Command-line entry points: one subcommand per party role plus tooling.

    privrel keygen       MANIFEST [--out DIR]
    privrel designer     MANIFEST [--in-process] [--oracle CSV]
    privrel manufacturer MANIFEST --label L [--data FILE] [--index K]
    privrel oracle       (MANIFEST | --system S --data L=FILE ... --grid a,b,n) [--compare CSV]
    privrel verify       MANIFEST [--backends debug,bfv]

MANIFEST is a JSON run manifest, or the word ``braking`` for the shipped
example.  Input paths in a manifest are relative to the manifest file;
output paths are relative to ``--out-dir`` (default: current directory).
Party addresses can be overridden with PRIVREL_ADDR_DESIGNER and
PRIVREL_ADDR_<LABEL> (for example PRIVREL_ADDR_C=10.0.0.5:7001).

Exit codes: 0 success, 1 verification mismatch, 2 invalid input or
manifest, 3 protocol failure, 4 cryptographic failure, 5 transport failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from privrel.errors import (
    CapacityError,
    CryptoError,
    InputError,
    ManifestError,
    PrecisionError,
    PrivrelError,
    ProtocolError,
    StructureError,
    TransportError,
)
from privrel.he import get_backend, wire
from privrel.he.core import KeyPair
from privrel.he.params import PROFILE_TABLE, get_profile
from privrel.inference import LifetimeSample, load_lifetimes
from privrel.protocol.parties import DESIGNER, Designer, Manufacturer, PartyConfig, manufacturer_name
from privrel.protocol.runner import run_protocol
from privrel.protocol.tables import LAYOUTS, TableLayout
from privrel.protocol.transcript import Transcript
from privrel.survsig import SurvivalCurve, SystemStructure, load_system
from privrel.transport import DEFAULT_TIMEOUT, TcpEndpoint
from privrel import verify

log = logging.getLogger("privrel")

MANIFEST_FORMAT = "privrel-manifest/1"
CURVE_FORMAT = "privrel-curve/1"
PLOT_FORMAT = "privrel-plot/1"

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INVALID = 2
EXIT_PROTOCOL = 3
EXIT_CRYPTO = 4
EXIT_TRANSPORT = 5

KEY_FILES = {"public": "public.key", "secret": "secret.key", "evaluation": "evaluation.key"}


# -- manifest --------------------------------------------------------------------


@dataclass(frozen=True)
class PartyEntry:
    label: str
    index: int
    address: tuple[str, int]
    data: Path | None


@dataclass
class RunManifest:
    profile: str
    kappa: int
    grid: tuple[float, float, int]
    designer_address: tuple[str, int]
    manufacturers: list[PartyEntry]
    system: Path | None = None
    keys: Path | None = None
    oracle: Path | None = None
    backend: str = "bfv"
    layout: str = "packed"
    seed: int | None = None
    timeout: float = DEFAULT_TIMEOUT
    outputs: dict[str, Path] = field(default_factory=dict)

    @property
    def times(self) -> tuple[float, ...]:
        return verify.grid(*self.grid)

    @property
    def ring(self) -> tuple[str, ...]:
        return tuple(manufacturer_name(m.label) for m in self.manufacturers)

    def entry(self, label: str) -> PartyEntry:
        for m in self.manufacturers:
            if m.label == label:
                return m
        raise ManifestError("manufacturers", f"no manufacturer with label {label!r}")

    def addresses(self) -> dict[str, tuple[str, int]]:
        out = {DESIGNER: self.designer_address}
        out.update({manufacturer_name(m.label): m.address for m in self.manufacturers})
        return out

    def config(self, name: str, role: str, type_index: int = 0) -> PartyConfig:
        return PartyConfig(
            name,
            role,
            self.kappa,
            self.times,
            self.profile,
            self.ring,
            type_index=type_index,
            backend=self.backend,
            layout=self.layout,
            rng_seed=self.seed,
            timeout=self.timeout,
        )

    def require(self, *fields: str) -> None:
        """Check that the named input files exist before anything starts."""
        for f in fields:
            if f == "data":
                for m in self.manufacturers:
                    _exists(m.data, f"manufacturers[{m.label}].data")
            else:
                _exists(getattr(self, f), f)


def _exists(path: Path | None, name: str) -> None:
    if path is None:
        raise ManifestError(name, "required but not given")
    if not path.exists():
        raise ManifestError(name, f"file not found: {path}")


def parse_address(value, name: str) -> tuple[str, int]:
    if not isinstance(value, str) or ":" not in value:
        raise ManifestError(name, f"expected host:port, got {value!r}")
    host, _, port = value.rpartition(":")
    try:
        p = int(port)
    except ValueError:
        raise ManifestError(name, f"port {port!r} is not an integer") from None
    if not 0 <= p <= 65535:
        raise ManifestError(name, f"port {p} out of range")
    return host.strip("[]"), p


def _env_address(key: str, default, name: str) -> tuple[str, int]:
    return parse_address(os.environ.get(f"PRIVREL_ADDR_{key.upper()}", default), name)


def _typed(d: dict, key: str, kind, default=..., where: str = ""):
    name = f"{where}{key}"
    if key not in d:
        if default is ...:
            raise ManifestError(name, "missing")
        return default
    v = d[key]
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, kind) or isinstance(v, bool) and kind is not bool:
        raise ManifestError(name, f"expected {kind.__name__}, got {type(v).__name__}")
    return v


def manifest_from_dict(d: dict, base: Path, out_dir: Path) -> RunManifest:
    if not isinstance(d, dict):
        raise ManifestError("manifest", "top level must be a JSON object")
    fmt = d.get("format")
    if fmt != MANIFEST_FORMAT:
        raise ManifestError("format", f"expected {MANIFEST_FORMAT!r}, got {fmt!r}")

    profile = _typed(d, "profile", str)
    if profile not in PROFILE_TABLE:
        raise ManifestError("profile", f"unknown profile {profile!r}; known: {', '.join(PROFILE_TABLE)}")
    kappa = _typed(d, "kappa", int)
    if kappa < 0:
        raise ManifestError("kappa", "must be non-negative")
    backend = _typed(d, "backend", str, "bfv")
    if backend not in ("bfv", "debug"):
        raise ManifestError("backend", f"unknown backend {backend!r}")
    layout = _typed(d, "layout", str, "packed")
    if layout not in LAYOUTS:
        raise ManifestError("layout", f"unknown layout {layout!r}")

    g = _typed(d, "grid", dict)
    start = _typed(g, "start", float, where="grid.")
    end = _typed(g, "end", float, 0.0, where="grid.")
    count = _typed(g, "count", int, where="grid.")
    try:
        verify.grid(start, end, count)
    except InputError as e:
        raise ManifestError("grid", str(e)) from None

    dsg = _typed(d, "designer", dict)
    designer_address = _env_address("designer", _typed(dsg, "address", str, where="designer."), "designer.address")

    entries = []
    raw = _typed(d, "manufacturers", list)
    if not raw:
        raise ManifestError("manufacturers", "at least one manufacturer is required")
    for i, m in enumerate(raw):
        where = f"manufacturers[{i}]."
        if not isinstance(m, dict):
            raise ManifestError(f"manufacturers[{i}]", "expected an object")
        label = _typed(m, "label", str, where=where)
        index = _typed(m, "index", int, where=where)
        addr = _env_address(label, _typed(m, "address", str, where=where), where + "address")
        data = m.get("data")
        entries.append(PartyEntry(label, index, addr, base / data if data else None))
    labels = [e.label for e in entries]
    if len(set(labels)) != len(labels):
        raise ManifestError("manufacturers", "duplicate labels")
    if sorted(e.index for e in entries) != list(range(1, len(entries) + 1)):
        raise ManifestError("manufacturers", "indices must be a permutation of 1..K")

    def path(key):
        v = d.get(key)
        if v is None:
            return None
        if not isinstance(v, str):
            raise ManifestError(key, "expected a path")
        return base / v

    outputs = {}
    for k, v in _typed(d, "outputs", dict, {}).items():
        if not isinstance(v, str):
            raise ManifestError(f"outputs.{k}", "expected a path")
        outputs[k] = out_dir / v

    seed = d.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        raise ManifestError("seed", "expected an integer or null")
    timeout = _typed(d, "timeout", float, DEFAULT_TIMEOUT)
    return RunManifest(
        profile=profile,
        kappa=kappa,
        grid=(start, end, count),
        designer_address=designer_address,
        manufacturers=entries,
        system=path("system"),
        keys=path("keys"),
        oracle=path("oracle"),
        backend=backend,
        layout=layout,
        seed=seed,
        timeout=timeout,
        outputs=outputs,
    )


def braking_manifest_path() -> Path:
    return Path(str(resources.files("privrel.data.braking").joinpath("manifest.json")))


def load_manifest(path: str | Path, out_dir: str | Path = ".") -> RunManifest:
    p = braking_manifest_path() if str(path) == "braking" else Path(path)
    try:
        d = json.loads(p.read_text())
    except FileNotFoundError:
        raise ManifestError("manifest", f"file not found: {p}") from None
    except json.JSONDecodeError as e:
        raise ManifestError("manifest", f"not valid JSON: {e}") from None
    return manifest_from_dict(d, p.parent, Path(out_dir))


def load_samples(m: RunManifest, system: SystemStructure) -> dict[int, LifetimeSample]:
    """Lifetime data keyed by the system's type ids, matched on labels."""
    m.require("data")
    by_label = {t.label: t.id for t in system.types}
    out = {}
    for e in m.manufacturers:
        if e.label not in by_label:
            raise ManifestError("manufacturers", f"label {e.label!r} is not a component type of the system")
        out[by_label[e.label]] = load_lifetimes(e.data)
    missing = set(by_label) - {e.label for e in m.manufacturers}
    if missing:
        raise ManifestError("manufacturers", f"no manufacturer for types {sorted(missing)}")
    return out


def ring_order(m: RunManifest, system: SystemStructure) -> list[int]:
    by_label = {t.label: t.id for t in system.types}
    return [by_label[e.label] for e in m.manufacturers]


# -- files -------------------------------------------------------------------------


def write_curve(curve: SurvivalCurve, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = curve.raw if curve.raw is not None else curve.values
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CURVE_FORMAT}\n")
        w = csv.writer(fh)
        w.writerow(["time", "probability", "raw"])
        for t, v, r in zip(curve.times, curve.values, raw):
            w.writerow([repr(t), repr(v), repr(r)])


def read_curve(path: str | Path) -> SurvivalCurve:
    try:
        lines = Path(path).read_text().splitlines()
    except FileNotFoundError:
        raise InputError(f"curve file not found: {path}") from None
    if not lines or lines[0].strip() != f"# {CURVE_FORMAT}":
        raise InputError(f"{path}: not a {CURVE_FORMAT} file")
    rows = list(csv.DictReader(lines[1:]))
    try:
        times = tuple(float(r["time"]) for r in rows)
        values = tuple(float(r["probability"]) for r in rows)
        raw = tuple(float(r.get("raw") or r["probability"]) for r in rows)
    except (KeyError, ValueError) as e:
        raise InputError(f"{path}: malformed curve row ({e})") from None
    return SurvivalCurve(times, values, raw)


def write_plot(encrypted: SurvivalCurve, oracle: SurvivalCurve, path: Path) -> float:
    """Side-by-side columns ready for any plotting tool; returns the TV distance."""
    tv = verify.tv_distance(encrypted, oracle)
    gap = verify.max_pointwise_gap(encrypted.values, oracle.values)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"# {PLOT_FORMAT}",
        f"# tv_distance {tv!r}",
        f"# max_gap {gap!r}",
        "# time encrypted oracle gap",
    ]
    for t, a, b in zip(encrypted.times, encrypted.values, oracle.values):
        lines.append(f"{t!r} {a!r} {b!r} {abs(a - b)!r}")
    path.write_text("\n".join(lines) + "\n")
    return tv


def save_keys(keys: KeyPair, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / KEY_FILES["public"]).write_bytes(wire.serialize_public_key(keys.public_key))
    (directory / KEY_FILES["evaluation"]).write_bytes(wire.serialize_evaluation_key(keys.evaluation_key))
    secret = directory / KEY_FILES["secret"]
    fd = os.open(secret, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "wb") as fh:
        fh.write(wire.serialize_secret_key(keys.secret_key))


def load_keys(directory: Path, profile: str) -> KeyPair:
    params = get_profile(profile)
    for f in KEY_FILES.values():
        _exists(directory / f, f"keys/{f}")
    return KeyPair(
        params,
        wire.deserialize_public_key((directory / KEY_FILES["public"]).read_bytes(), params),
        wire.deserialize_secret_key((directory / KEY_FILES["secret"]).read_bytes(), params),
        wire.deserialize_evaluation_key((directory / KEY_FILES["evaluation"]).read_bytes(), params),
    )


# -- commands ----------------------------------------------------------------------


def _output(m: RunManifest, key: str, override: str | None = None) -> Path | None:
    if override:
        return Path(override)
    return m.outputs.get(key)


def cmd_keygen(args) -> int:
    m = load_manifest(args.manifest, args.out_dir)
    out = Path(args.out) if args.out else m.keys
    if out is None:
        raise ManifestError("keys", "give --out or a keys directory in the manifest")
    params = get_profile(m.profile)
    # rotation keys depend only on the ring and the grid length
    layout = TableLayout(m.layout, params.ring_dimension, 1, m.grid[2])
    keys = get_backend(m.backend).keygen(params, rng_seed=args.seed, galois_elements=layout.galois_elements())
    save_keys(keys, out)
    print(f"keys for {m.profile} ({m.backend}) written to {out}")
    return EXIT_OK


def cmd_designer(args) -> int:
    m = load_manifest(args.manifest, args.out_dir)
    m.require("system")
    system = load_system(m.system)
    keys = load_keys(m.keys, m.profile) if m.keys is not None else None
    oracle_path = Path(args.oracle) if args.oracle else m.oracle
    oracle = read_curve(oracle_path) if oracle_path else None
    transcript_path = _output(m, "transcript", args.transcript)
    if transcript_path:
        transcript_path.parent.mkdir(parents=True, exist_ok=True)
    transcript = Transcript(transcript_path)
    try:
        if args.in_process:
            samples = load_samples(m, system)
            run = run_protocol(
                system, samples, m.times, m.kappa, m.profile, m.backend, args.transport,
                ring_order=ring_order(m, system), layout=m.layout, seed=m.seed,
                transcript=transcript, timeout=m.timeout, keys=keys,
            )
            curve = run.curve
        else:
            endpoint = TcpEndpoint(DESIGNER, m.designer_address, m.addresses(), transcript)
            with endpoint:
                outcome = Designer(m.config(DESIGNER, "designer"), system, endpoint, transcript, keys).run()
            curve = outcome.curve
    finally:
        transcript.close()

    curve_path = _output(m, "curve", args.curve)
    if curve_path:
        write_curve(curve, curve_path)
        print(f"curve: {curve_path} ({len(curve)} rows)")
    if oracle is not None:
        plot_path = _output(m, "plot") or Path("comparison.dat")
        tv = write_plot(curve, oracle, plot_path)
        print(f"comparison: {plot_path} (TV distance {tv:.4g})")
    print(transcript.timing_table())
    return EXIT_OK


def cmd_manufacturer(args) -> int:
    m = load_manifest(args.manifest, args.out_dir)
    entry = m.entry(args.label)
    data = Path(args.data) if args.data else entry.data
    _exists(data, f"manufacturers[{entry.label}].data")
    # inference runs (and fails on bad data) before any socket is opened
    sample = load_lifetimes(data)
    name = manufacturer_name(entry.label)
    index = args.index if args.index is not None else entry.index
    cfg = m.config(name, "manufacturer", index)
    transcript_path = _output(m, "transcript", args.transcript)
    if transcript_path and not args.transcript:
        transcript_path = transcript_path.with_name(f"{transcript_path.stem}.{entry.label}{transcript_path.suffix}")
    if transcript_path:
        transcript_path.parent.mkdir(parents=True, exist_ok=True)
    transcript = Transcript(transcript_path)
    try:
        party = Manufacturer(cfg, sample, None, transcript)
        pos = m.ring.index(name)
        peers = {DESIGNER: m.designer_address}
        if pos + 1 < len(m.ring):
            nxt = m.manufacturers[pos + 1]
            peers[m.ring[pos + 1]] = nxt.address
        with TcpEndpoint(name, entry.address, peers, transcript) as endpoint:
            party.endpoint = endpoint
            party.run()
    finally:
        transcript.close()
    print(transcript.timing_table())
    return EXIT_OK


def _parse_grid(text: str) -> tuple[float, ...]:
    try:
        a, b, n = text.split(",")
        return verify.grid(float(a), float(b), int(n))
    except ValueError:
        raise InputError(f"--grid expects start,end,count, got {text!r}") from None


def cmd_oracle(args) -> int:
    if args.manifest:
        m = load_manifest(args.manifest, args.out_dir)
        m.require("system")
        system = load_system(args.system or m.system)
        samples = load_samples(m, system)
        times = _parse_grid(args.grid) if args.grid else m.times
        out = Path(args.out) if args.out else m.outputs.get("oracle", Path("oracle.csv"))
    else:
        if not (args.system and args.data and args.grid):
            raise InputError("without a manifest, give --system, --data and --grid")
        system = load_system(args.system)
        by_label = {t.label: t.id for t in system.types}
        samples = {}
        for item in args.data:
            label, sep, file = item.partition("=")
            if not sep or label not in by_label:
                raise InputError(f"--data expects LABEL=FILE with a label of the system, got {item!r}")
            samples[by_label[label]] = load_lifetimes(file)
        missing = set(by_label) - {lab for lab, i in by_label.items() if i in samples}
        if missing:
            raise InputError(f"no data for types {sorted(missing)}")
        times = _parse_grid(args.grid)
        out = Path(args.out or "oracle.csv")
    curve = verify.oracle_curve(system, samples, times)
    write_curve(curve, out)
    print(f"oracle curve: {out} ({len(curve)} rows)")
    if args.compare:
        other = read_curve(args.compare)
        print(f"TV distance {verify.tv_distance(curve, other):.6g}")
        print(f"max pointwise gap {verify.max_pointwise_gap(curve.values, other.values):.6g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    m = load_manifest(args.manifest, args.out_dir)
    m.require("system")
    system = load_system(m.system)
    samples = load_samples(m, system)
    backends = [b.strip() for b in args.backends.split(",") if b.strip()]
    report = verify.end_to_end_check(
        system, samples, m.times, m.kappa, m.profile, backends, args.transport, seed=m.seed
    )
    print(report.summary())
    out = Path(args.report) if args.report else m.outputs.get("report")
    if out:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report.to_json())
        print(f"report: {out}")
    return EXIT_OK if report.passed else EXIT_MISMATCH


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="privrel", description="Privacy-preserving system reliability from encrypted data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def manifest_cmd(name, helptext):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("manifest", help="run manifest (JSON) or 'braking'")
        s.add_argument("--out-dir", default=".", help="base directory for outputs")
        return s

    s = manifest_cmd("keygen", "generate and store a key pair")
    s.add_argument("--out", help="key directory (default: manifest 'keys')")
    s.add_argument("--seed", type=int, help="deterministic keys, for testing only")
    s.set_defaults(func=cmd_keygen)

    s = manifest_cmd("designer", "run the designer")
    s.add_argument("--in-process", action="store_true", help="run every party in this process")
    s.add_argument("--transport", choices=("loopback", "tcp"), default="loopback", help="in-process transport")
    s.add_argument("--oracle", help="oracle curve CSV to compare against")
    s.add_argument("--curve", help="output curve CSV")
    s.add_argument("--transcript", help="output transcript (JSON lines)")
    s.set_defaults(func=cmd_designer)

    s = manifest_cmd("manufacturer", "run one manufacturer")
    s.add_argument("--label", required=True, help="component type label this party makes")
    s.add_argument("--data", help="lifetime data file (default: from manifest)")
    s.add_argument("--index", type=int, help="type index k (default: from manifest)")
    s.add_argument("--transcript", help="output transcript (JSON lines)")
    s.set_defaults(func=cmd_manufacturer)

    s = sub.add_parser("oracle", help="unencrypted reference curve")
    s.add_argument("manifest", nargs="?", help="run manifest or 'braking'")
    s.add_argument("--out-dir", default=".")
    s.add_argument("--system", help="system JSON")
    s.add_argument("--data", action="append", help="LABEL=FILE, repeatable")
    s.add_argument("--grid", help="start,end,count")
    s.add_argument("--out", help="output curve CSV")
    s.add_argument("--compare", help="second curve CSV; prints the TV distance")
    s.set_defaults(func=cmd_oracle)

    s = manifest_cmd("verify", "encrypted runs against the oracle")
    s.add_argument("--backends", default="debug,bfv")
    s.add_argument("--transport", choices=("loopback", "tcp"), default="loopback")
    s.add_argument("--report", help="output report JSON")
    s.set_defaults(func=cmd_verify)
    return p


def exit_code(e: BaseException) -> int:
    if isinstance(e, TransportError):
        return EXIT_TRANSPORT
    if isinstance(e, CryptoError):
        return EXIT_CRYPTO
    if isinstance(e, ProtocolError):
        return EXIT_PROTOCOL
    if isinstance(e, (ManifestError, InputError, StructureError, CapacityError, PrecisionError)):
        return EXIT_INVALID
    return EXIT_PROTOCOL


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PrivrelError as e:
        print(f"privrel {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
