"""Dense HyperLogLog sketch with optional salting.

A sketch is an array of M = 2^b six-bit counters. An element is hashed to
64 bits; the top b bits pick a counter and the remaining 64-b bits form the
value window, whose rank (one plus the number of leading zeros) is the
candidate counter value. Each counter keeps the maximum rank it has seen,
which makes the structure insensitive to duplicates and mergeable by
taking per-position maxima.

The cardinality estimate is the bias-corrected harmonic mean
``alpha_m * M^2 / sum(2^-c_i)``, switched to linear counting
``M * ln(M / V)`` (V = number of zero counters) at small cardinalities
where the harmonic-mean form is badly biased.

Salting: when the hash configuration carries a salt, its 8 little-endian
bytes are prepended to every element before hashing. A salted sketch is
statistically independent of an unsalted one fed the same stream, at the
price of being mergeable only with sketches sharing the same salt.

Implementation notes kept out of the public surface: the harmonic-mean
denominator is maintained incrementally as the exact integer
``sum(2^(61 - c_i))`` (61 is the largest possible rank, at b = 4), so
estimates are O(1), bit-reproducible, and a pure function of the register
contents regardless of insertion order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .hashing import leading_rank, xxh64, xxh64_rows, xxh64_words

MIN_PRECISION = 4
MAX_PRECISION = 18

_RANK_SCALE = 61  # max rank over all supported precisions (b = 4)
_MAGIC = b"HLLS"
_VERSION = 1
_FLAG_SALTED = 0x01
_HEADER = struct.Struct("<4sBBBB")
_SEEDS = struct.Struct("<QQ")
_SALT = struct.Struct("<Q")

# Threshold (as a multiple of M) below which linear counting replaces the
# harmonic-mean estimate when zero registers remain.
_LINEAR_COUNTING_FACTOR = 2.5


class SketchFormatError(ValueError):
    """Raised when a serialized sketch payload is malformed."""


class IncompatibleSketchError(ValueError):
    """Raised when two sketches cannot be merged (geometry or hash config)."""


def _check_u64(name: str, value: int) -> int:
    if not 0 <= value < (1 << 64):
        raise ValueError(f"{name} must be an unsigned 64-bit integer")
    return value


@dataclass(frozen=True)
class HashConfig:
    """Hash parameters of a sketch: two seeds and an optional salt.

    With equal seeds (the default) a single 64-bit hash is computed and
    split: top bits index, remaining bits value window. Distinct seeds give
    fully independent index and value hashes. ``salt`` is an 8-byte random
    value mixed into every element; two configs are interchangeable exactly
    when all three fields are equal (absent salts count as equal).
    """

    index_seed: int = 0
    value_seed: int = 0
    salt: int | None = None

    def __post_init__(self) -> None:
        _check_u64("index_seed", self.index_seed)
        _check_u64("value_seed", self.value_seed)
        if self.salt is not None:
            _check_u64("salt", self.salt)

    @property
    def salted(self) -> bool:
        return self.salt is not None

    def prefix_bytes(self) -> bytes:
        """Salt bytes prepended to every hashed element (empty if unsalted)."""
        return b"" if self.salt is None else self.salt.to_bytes(8, "little")


class HashOutcome(NamedTuple):
    """Where an element lands: register index and rank of its value window."""

    index: int
    value: int


def _check_precision(precision: int) -> int:
    if not MIN_PRECISION <= precision <= MAX_PRECISION:
        raise ValueError(
            f"precision must be in [{MIN_PRECISION}, {MAX_PRECISION}], got {precision}"
        )
    return precision


def _as_bytes(element) -> bytes:
    if isinstance(element, bytes):
        return element
    if isinstance(element, (bytearray, memoryview)):
        return bytes(element)
    raise TypeError(f"elements are byte strings, got {type(element).__name__}")


def hash_element(element: bytes, config: HashConfig, precision: int) -> HashOutcome:
    """Hash one element to its (register index, rank) pair.

    Deterministic in (element, config). The salt, when present, participates
    as an 8-byte prefix to the element in both hashes.
    """
    _check_precision(precision)
    data = _as_bytes(element)
    if not data:
        raise ValueError("element must be non-empty")
    data = config.prefix_bytes() + data
    h_index = xxh64(data, config.index_seed)
    if config.value_seed == config.index_seed:
        h_value = h_index
    else:
        h_value = xxh64(data, config.value_seed)
    width = 64 - precision
    return HashOutcome(
        index=h_index >> width,
        value=leading_rank(h_value & ((1 << width) - 1), width),
    )


def alpha_m(m: int) -> float:
    """Bias-correction constant of the harmonic-mean estimator for M counters."""
    if m == 16:
        return 0.673
    if m == 32:
        return 0.697
    if m == 64:
        return 0.709
    return 0.7213 / (1.0 + 1.079 / m)


class EstimatorParams(NamedTuple):
    """Constants the estimate is built from: (alpha_m, M)."""

    alpha_m: float
    m: int


def estimator_params(precision: int) -> EstimatorParams:
    _check_precision(precision)
    m = 1 << precision
    return EstimatorParams(alpha_m=alpha_m(m), m=m)


def _vec_indices(h: np.ndarray, precision: int) -> np.ndarray:
    return (h >> np.uint64(64 - precision)).astype(np.int64)


def _vec_ranks(h: np.ndarray, precision: int) -> np.ndarray:
    # Shift the value window to the top 64-b bits, then count leading zeros
    # by smearing the highest set bit downward and popcounting.
    width = 64 - precision
    x = h << np.uint64(precision)
    for s in (1, 2, 4, 8, 16, 32):
        x = x | (x >> np.uint64(s))
    ones = np.bitwise_count(x).astype(np.uint8)
    clz = np.uint8(64) - ones
    return np.minimum(clz, np.uint8(width)) + np.uint8(1)


class Sketch:
    """A HyperLogLog sketch: 2^precision registers plus a hash configuration.

    Single-writer: concurrent inserts on one sketch are not supported.
    Reads (estimates, serialization) are safe whenever no insert is running.
    """

    __slots__ = ("_precision", "_m", "_config", "_regs", "_zsum", "_zeros", "_numerator")

    def __init__(self, precision: int, config: HashConfig | None = None):
        _check_precision(precision)
        self._precision = precision
        self._m = 1 << precision
        self._config = config if config is not None else HashConfig()
        self._regs = np.zeros(self._m, dtype=np.uint8)
        self._zsum = self._m << _RANK_SCALE
        self._zeros = self._m
        # alpha * M^2 * 2^61: numerator of the O(1) harmonic-mean estimate.
        self._numerator = alpha_m(self._m) * self._m * self._m * 2.0**_RANK_SCALE

    @property
    def precision(self) -> int:
        return self._precision

    @property
    def num_registers(self) -> int:
        return self._m

    @property
    def config(self) -> HashConfig:
        return self._config

    @property
    def rank_cap(self) -> int:
        """Largest rank a value window can produce: 64 - precision + 1."""
        return 64 - self._precision + 1

    @property
    def registers(self) -> np.ndarray:
        """Copy of the register array (uint8, length 2^precision)."""
        return self._regs.copy()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Sketch):
            return NotImplemented
        return (
            self._precision == other._precision
            and self._config == other._config
            and np.array_equal(self._regs, other._regs)
        )

    __hash__ = None  # mutable

    def __repr__(self) -> str:
        kind = "salted" if self._config.salted else "unsalted"
        return f"Sketch(b={self._precision}, m={self._m}, {kind})"

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _from_registers(cls, precision: int, config: HashConfig, regs: np.ndarray) -> "Sketch":
        sk = cls(precision, config)
        sk._regs = np.ascontiguousarray(regs, dtype=np.uint8)
        sk._recount()
        return sk

    def copy(self) -> "Sketch":
        return Sketch._from_registers(self._precision, self._config, self._regs.copy())

    def _recount(self) -> None:
        counts = np.bincount(self._regs, minlength=64)
        self._zeros = int(counts[0])
        zsum = 0
        for rank, n in enumerate(counts):
            if n:
                zsum += int(n) << (_RANK_SCALE - rank)
        self._zsum = zsum

    # -- updates --------------------------------------------------------------

    def insert(self, element: bytes) -> bool:
        """Insert one element; returns True iff a register strictly increased."""
        index, rank = hash_element(element, self._config, self._precision)
        old = int(self._regs[index])
        if rank <= old:
            return False
        self._regs[index] = rank
        self._zsum += (1 << (_RANK_SCALE - rank)) - (1 << (_RANK_SCALE - old))
        if old == 0:
            self._zeros -= 1
        return True

    def insert_many(self, elements: Iterable[bytes]) -> int:
        """Insert a batch; returns the number of registers that increased.

        Same-length batches take a vectorized path; the resulting registers
        are identical to inserting one element at a time.
        """
        elems = [(e if isinstance(e, bytes) else _as_bytes(e)) for e in elements]
        if not elems:
            return 0
        width = len(elems[0])
        before = self._regs.copy()
        if width > 0 and len(elems) >= 32 and all(len(e) == width for e in elems):
            rows = np.frombuffer(b"".join(elems), dtype=np.uint8).reshape(len(elems), width)
            if self._config.salted:
                salted = np.empty((len(elems), width + 8), dtype=np.uint8)
                salted[:, :8] = np.frombuffer(self._config.prefix_bytes(), dtype=np.uint8)
                salted[:, 8:] = rows
                rows = salted
            h_index = xxh64_rows(rows, self._config.index_seed)
            if self._config.value_seed == self._config.index_seed:
                h_value = h_index
            else:
                h_value = xxh64_rows(rows, self._config.value_seed)
            self._scatter(h_index, h_value)
        else:
            for e in elems:
                self.insert(e)
        return int(np.count_nonzero(self._regs > before))

    def insert_u64(self, values: np.ndarray) -> None:
        """Bulk-insert uint64 values, each standing for its 8-byte LE encoding.

        ``insert_u64(np.array([v]))`` lands exactly like
        ``insert(v.to_bytes(8, "little"))``; this is the fast path used by the
        experiment runners.
        """
        values = np.ascontiguousarray(values, dtype=np.uint64)
        prefix = self._config.salt
        h_index = xxh64_words(values, self._config.index_seed, prefix=prefix)
        if self._config.value_seed == self._config.index_seed:
            h_value = h_index
        else:
            h_value = xxh64_words(values, self._config.value_seed, prefix=prefix)
        self._scatter(h_index, h_value)

    def _scatter(self, h_index: np.ndarray, h_value: np.ndarray) -> None:
        idx = _vec_indices(h_index, self._precision)
        ranks = _vec_ranks(h_value, self._precision)
        np.maximum.at(self._regs, idx, ranks)
        self._recount()

    # -- estimation -----------------------------------------------------------

    def raw_estimate(self) -> float:
        """Bias-corrected harmonic-mean estimate, with no range correction."""
        return self._numerator / self._zsum

    def estimate(self) -> float:
        """Cardinality estimate with small-range (linear counting) correction."""
        raw = self._numerator / self._zsum
        if raw <= _LINEAR_COUNTING_FACTOR * self._m and self._zeros > 0:
            return self._m * math.log(self._m / self._zeros)
        return raw

    def zero_register_count(self) -> int:
        """Number of registers still at zero."""
        return self._zeros

    # -- persistence ----------------------------------------------------------

    def to_bytes(self) -> bytes:
        """Serialize: HLLS header, seeds, optional salt, packed 6-bit registers."""
        flags = _FLAG_SALTED if self._config.salted else 0
        out = [
            _HEADER.pack(_MAGIC, _VERSION, flags, self._precision, 0),
            _SEEDS.pack(self._config.index_seed, self._config.value_seed),
        ]
        if self._config.salted:
            out.append(_SALT.pack(self._config.salt))
        out.append(_pack_registers(self._regs))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, payload: bytes) -> "Sketch":
        """Deserialize; rejects bad magic/version, truncation, invalid registers."""
        if len(payload) < _HEADER.size:
            raise SketchFormatError("payload shorter than header")
        magic, version, flags, precision, _reserved = _HEADER.unpack_from(payload, 0)
        if magic != _MAGIC:
            raise SketchFormatError(f"bad magic {magic!r}")
        if version != _VERSION:
            raise SketchFormatError(f"unsupported version {version}")
        if flags & ~_FLAG_SALTED:
            raise SketchFormatError(f"unknown flag bits 0x{flags:02x}")
        if not MIN_PRECISION <= precision <= MAX_PRECISION:
            raise SketchFormatError(f"precision {precision} out of range")
        offset = _HEADER.size
        if len(payload) < offset + _SEEDS.size:
            raise SketchFormatError("truncated payload (seeds)")
        index_seed, value_seed = _SEEDS.unpack_from(payload, offset)
        offset += _SEEDS.size
        salt = None
        if flags & _FLAG_SALTED:
            if len(payload) < offset + _SALT.size:
                raise SketchFormatError("truncated payload (salt)")
            (salt,) = _SALT.unpack_from(payload, offset)
            offset += _SALT.size
        m = 1 << precision
        reg_bytes = (m * 6) // 8
        if len(payload) != offset + reg_bytes:
            raise SketchFormatError(
                f"payload length {len(payload)}, expected {offset + reg_bytes}"
            )
        regs = _unpack_registers(payload[offset:], m)
        cap = 64 - precision + 1
        if int(regs.max(initial=0)) > cap:
            raise SketchFormatError(f"register value exceeds rank cap {cap}")
        config = HashConfig(index_seed=index_seed, value_seed=value_seed, salt=salt)
        return cls._from_registers(precision, config, regs)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Sketch":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _pack_registers(regs: np.ndarray) -> bytes:
    # Contiguous 6-bit fields, LSB-first within each byte. M is always a
    # multiple of 4, so groups of 4 registers pack into exactly 3 bytes.
    quads = regs.reshape(-1, 4).astype(np.uint32)
    u = quads[:, 0] | (quads[:, 1] << 6) | (quads[:, 2] << 12) | (quads[:, 3] << 18)
    out = np.empty((len(u), 3), dtype=np.uint8)
    out[:, 0] = u & 0xFF
    out[:, 1] = (u >> 8) & 0xFF
    out[:, 2] = (u >> 16) & 0xFF
    return out.tobytes()


def _unpack_registers(data: bytes, m: int) -> np.ndarray:
    triples = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3).astype(np.uint32)
    u = triples[:, 0] | (triples[:, 1] << 8) | (triples[:, 2] << 16)
    regs = np.empty((len(u), 4), dtype=np.uint8)
    regs[:, 0] = u & 0x3F
    regs[:, 1] = (u >> 6) & 0x3F
    regs[:, 2] = (u >> 12) & 0x3F
    regs[:, 3] = (u >> 18) & 0x3F
    return regs.reshape(-1)


def merge(a: Sketch, b: Sketch) -> Sketch:
    """Union of two sketches by per-position register maxima.

    Requires identical precision and identical hash configuration (salts
    included); the result is register-identical to a sketch built over the
    two input streams concatenated. Inputs are left untouched.
    """
    if a.precision != b.precision:
        raise IncompatibleSketchError(
            f"precision mismatch: {a.precision} vs {b.precision}"
        )
    if a.config != b.config:
        if a.config.salt != b.config.salt:
            raise IncompatibleSketchError(
                "hash config mismatch: differing salts make sketches non-mergeable"
            )
        raise IncompatibleSketchError("hash config mismatch: differing seeds")
    regs = np.maximum(a._regs, b._regs)
    return Sketch._from_registers(a.precision, a.config, regs)


def config_fingerprint(config: HashConfig, precision: int) -> str:
    """Stable 16-hex-digit identifier of a (hash config, precision) pair."""
    blob = struct.pack(
        "<BBQQQ",
        precision,
        1 if config.salted else 0,
        config.index_seed,
        config.value_seed,
        config.salt or 0,
    )
    return f"{xxh64(blob, 0):016x}"
