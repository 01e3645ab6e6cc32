"""Network-flow identifiers: canonical bytes, synthesis, and file ingestion.

Sketches hash opaque byte strings, so every flow 5-tuple must map to exactly
one byte encoding before hashing — otherwise two implementations disagree on
what was inserted and estimates (and crafted attack sets) stop being
portable. The layout is fixed here and documented in the README:

    family u8 (4 or 6) | src addr | dst addr | src_port u16 BE | dst_port u16 BE | protocol u8

IPv4 tuples encode to 14 bytes, IPv6 to 38. Flow synthesis for experiments
uses the splitmix64 generator (seeded, documented) so streams are
reproducible across runs and machines.
"""

from __future__ import annotations

import csv
import ipaddress
from dataclasses import dataclass
from typing import Iterable, Iterator

from .hashing import split_seed

_Address = ipaddress.IPv4Address | ipaddress.IPv6Address

CSV_HEADER = ["src_addr", "dst_addr", "src_port", "dst_port", "protocol"]

_HEX_DIGITS = set("0123456789abcdef")


class FlowParseError(ValueError):
    """Malformed flow file content; message names the offending line."""


def _as_address(value) -> _Address:
    if isinstance(value, (ipaddress.IPv4Address, ipaddress.IPv6Address)):
        return value
    return ipaddress.ip_address(value)


@dataclass(frozen=True)
class FlowTuple:
    """One flow identifier: addresses, ports, protocol."""

    src_addr: _Address
    dst_addr: _Address
    src_port: int
    dst_port: int
    protocol: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "src_addr", _as_address(self.src_addr))
        object.__setattr__(self, "dst_addr", _as_address(self.dst_addr))
        if self.src_addr.version != self.dst_addr.version:
            raise ValueError("src and dst address families differ")
        for name in ("src_port", "dst_port"):
            port = getattr(self, name)
            if not 0 <= port <= 0xFFFF:
                raise ValueError(f"{name} out of range: {port}")
        if not 0 <= self.protocol <= 0xFF:
            raise ValueError(f"protocol out of range: {self.protocol}")

    @property
    def family(self) -> int:
        return self.src_addr.version


def encode_flow(flow: FlowTuple) -> bytes:
    """Canonical injective byte encoding of a flow tuple."""
    return (
        bytes([flow.family])
        + flow.src_addr.packed
        + flow.dst_addr.packed
        + flow.src_port.to_bytes(2, "big")
        + flow.dst_port.to_bytes(2, "big")
        + bytes([flow.protocol])
    )


@dataclass(frozen=True)
class FlowTemplate:
    """Fixed fields for flow synthesis; None fields vary freely."""

    src_addr: _Address | str | None = None
    dst_addr: _Address | str | None = None
    src_port: int | None = None
    dst_port: int | None = None
    protocol: int | None = None


def _template_capacity(template: FlowTemplate, family: int) -> int:
    addr_space = 1 << (32 if family == 4 else 128)
    capacity = 1
    if template.src_addr is None:
        capacity *= addr_space
    if template.dst_addr is None:
        capacity *= addr_space
    if template.src_port is None:
        capacity *= 1 << 16
    if template.dst_port is None:
        capacity *= 1 << 16
    if template.protocol is None:
        capacity *= 1 << 8
    return capacity


def generate_flows(seed: int, count: int, template: FlowTemplate | None = None) -> list[FlowTuple]:
    """Deterministic stream of `count` distinct flow tuples.

    Free fields are drawn from splitmix64 words keyed by (seed, draw index);
    the same seed always reproduces the same stream. Raises when the template
    pins so many fields that fewer than `count` distinct tuples exist.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    template = template or FlowTemplate()

    fixed_src = _as_address(template.src_addr) if template.src_addr is not None else None
    fixed_dst = _as_address(template.dst_addr) if template.dst_addr is not None else None
    if fixed_src is not None and fixed_dst is not None and fixed_src.version != fixed_dst.version:
        raise ValueError("template src and dst address families differ")
    family = (fixed_src or fixed_dst).version if (fixed_src or fixed_dst) else 4

    if count > _template_capacity(template, family):
        raise ValueError(
            f"template admits fewer than {count} distinct flows"
        )

    addr_cls = ipaddress.IPv4Address if family == 4 else ipaddress.IPv6Address
    addr_words = 1 if family == 4 else 2

    def draw_addr(base: int) -> _Address:
        raw = 0
        for k in range(addr_words):
            raw = (raw << 64) | split_seed(seed, base + k)
        return addr_cls(raw & ((1 << (32 if family == 4 else 128)) - 1))

    out: list[FlowTuple] = []
    seen: set[FlowTuple] = set()
    attempt = 0
    # 6 words per attempt: up to two 128-bit addresses plus one word of
    # ports/protocol. Fixed stride keeps the stream independent of which
    # fields the template pins.
    while len(out) < count:
        base = attempt * 6
        attempt += 1
        w = split_seed(seed, base + 4)
        flow = FlowTuple(
            src_addr=fixed_src if fixed_src is not None else draw_addr(base),
            dst_addr=fixed_dst if fixed_dst is not None else draw_addr(base + 2),
            src_port=template.src_port if template.src_port is not None else w & 0xFFFF,
            dst_port=template.dst_port if template.dst_port is not None else (w >> 16) & 0xFFFF,
            protocol=template.protocol if template.protocol is not None else (w >> 32) & 0xFF,
        )
        if flow not in seen:
            seen.add(flow)
            out.append(flow)
    return out


def _parse_csv_row(row: list[str], line_no: int) -> FlowTuple:
    if len(row) != 5:
        raise FlowParseError(f"line {line_no}: expected 5 fields, got {len(row)}")
    try:
        return FlowTuple(
            src_addr=row[0].strip(),
            dst_addr=row[1].strip(),
            src_port=int(row[2]),
            dst_port=int(row[3]),
            protocol=int(row[4]),
        )
    except ValueError as exc:
        raise FlowParseError(f"line {line_no}: {exc}") from exc


def read_flows_csv(path) -> Iterator[FlowTuple]:
    """Parse a flow CSV (header row required); errors carry line numbers."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FlowParseError("line 1: missing header row") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise FlowParseError(
                f"line 1: header must be {','.join(CSV_HEADER)}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            yield _parse_csv_row(row, line_no)


def write_flows_csv(path, flows: Iterable[FlowTuple]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for f in flows:
            writer.writerow([str(f.src_addr), str(f.dst_addr), f.src_port, f.dst_port, f.protocol])


def _read_hex_lines(path) -> Iterator[bytes]:
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line_no == 1 and line.startswith("{"):
                continue  # attack-set files carry a JSON header line
            if len(line) % 2 or not set(line) <= _HEX_DIGITS:
                raise FlowParseError(f"line {line_no}: not lowercase hex")
            yield bytes.fromhex(line)


def write_hex_lines(path, elements: Iterable[bytes]) -> None:
    with open(path, "w") as fh:
        for e in elements:
            fh.write(e.hex() + "\n")


def read_elements(path, format: str = "hex-lines") -> Iterator[bytes]:
    """Yield sketch-ready element bytes from a flow CSV or a hex-lines file."""
    if format == "csv":
        return (encode_flow(f) for f in read_flows_csv(path))
    if format in ("hex-lines", "hex"):
        return _read_hex_lines(path)
    raise ValueError(f"unknown element format {format!r}")
