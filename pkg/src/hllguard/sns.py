"""Dual-sketch guard: one salted and one unsalted sketch, updated together.

An attacker who can predict the hash mapping (or probe it black-box) can
craft element sets whose unsalted estimate stays far below their true
cardinality. The salted twin is immune — its salt re-randomizes every rank —
so a crafted set shows up as a large gap between the two estimates. On clean
streams the normalized gap (C_ns - C_s)/C_s is approximately Normal(0, sigma)
with sigma = 1.04*sqrt(1/M_s + 1/M_ns), which calibrates the detection
threshold d_t for any desired false-positive rate.

The unsalted member keeps its usual mergeability across nodes; the salted
member merges only between sketches sharing the same salt (shared-secret
deployments). A merge is refused outright when either input looks attacked.

Verdicts below a small-cardinality floor (10 * max(M_s, M_ns)) are reported
as indeterminate-clean: the normal approximation behind the calibration only
holds once estimates are in the asymptotic regime.
"""

from __future__ import annotations

import secrets
import struct
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .hashing import split_seed
from .sketch import (
    HashConfig,
    IncompatibleSketchError,
    Sketch,
    SketchFormatError,
    merge,
)
from .stats import DetectionParams, normal_cdf, sns_sigma, threshold_for_fp

_MAGIC = b"SNS1"
_HEADER = struct.Struct("<4sddBI")  # magic, d_t, fp_target, flags, salted payload length
_LEN = struct.Struct("<I")
_FLAG_TWO_SIDED = 0x01

FLOOR_FACTOR = 10

DEFAULT_FP_TARGET = normal_cdf(-5.0)


@dataclass(frozen=True)
class Verdict:
    """Outcome of one manipulation check.

    normalized_diff is (C_ns - C_s)/C_s; attacked flips when it falls below
    -d_t (or beyond +d_t too, in two-sided mode). trusted_estimate is the
    salted estimate under attack — the only one the attacker cannot steer —
    and the register-count-weighted average of both when clean.
    indeterminate marks verdicts below the small-cardinality floor.
    """

    c_salted: float
    c_unsalted: float
    normalized_diff: float
    attacked: bool
    trusted_estimate: float
    indeterminate: bool = False


class AttackDetectedError(RuntimeError):
    """A merge was refused because an input sketch looks manipulated."""

    def __init__(self, message: str, verdict_a: Verdict, verdict_b: Verdict):
        super().__init__(message)
        self.verdict_a = verdict_a
        self.verdict_b = verdict_b


def evaluate(
    c_salted: float,
    c_unsalted: float,
    params: DetectionParams,
    m_salted: int,
    m_unsalted: int,
    two_sided: bool = False,
) -> Verdict:
    """Pure decision rule mapping a pair of estimates to a Verdict."""
    weighted = (m_unsalted * c_unsalted + m_salted * c_salted) / (m_unsalted + m_salted)
    if c_salted < FLOOR_FACTOR * max(m_salted, m_unsalted):
        diff = (c_unsalted - c_salted) / c_salted if c_salted > 0 else 0.0
        return Verdict(
            c_salted=c_salted,
            c_unsalted=c_unsalted,
            normalized_diff=diff,
            attacked=False,
            trusted_estimate=weighted,
            indeterminate=True,
        )
    diff = (c_unsalted - c_salted) / c_salted
    attacked = diff < -params.d_t or (two_sided and diff > params.d_t)
    return Verdict(
        c_salted=c_salted,
        c_unsalted=c_unsalted,
        normalized_diff=diff,
        attacked=attacked,
        trusted_estimate=c_salted if attacked else weighted,
    )


def _draw_salt(entropy) -> int:
    if entropy is None:
        return secrets.randbits(64)
    if isinstance(entropy, (int, np.integer)):
        return split_seed(int(entropy), 0)
    if isinstance(entropy, np.random.Generator):
        return int(entropy.integers(0, 1 << 64, dtype=np.uint64))
    raise TypeError("entropy must be None, an int seed, or a numpy Generator")


def _precision_for(m: int, name: str) -> int:
    if m < 16 or m & (m - 1):
        raise ValueError(f"{name} must be a power of two >= 16, got {m}")
    return m.bit_length() - 1


class SnsSketch:
    """Salted + unsalted sketch pair with a calibrated manipulation test."""

    __slots__ = ("_salted", "_unsalted", "_params", "_two_sided")

    def __init__(
        self,
        salted: Sketch,
        unsalted: Sketch,
        params: DetectionParams,
        two_sided: bool = False,
    ):
        if not salted.config.salted:
            raise ValueError("first member sketch must carry a salt")
        if unsalted.config.salted:
            raise ValueError("second member sketch must not carry a salt")
        self._salted = salted
        self._unsalted = unsalted
        self._params = params
        self._two_sided = two_sided

    @classmethod
    def new(
        cls,
        m_salted: int = 1024,
        m_unsalted: int = 1024,
        fp_target: float = DEFAULT_FP_TARGET,
        *,
        entropy=None,
        d_t: float | None = None,
        index_seed: int = 0,
        value_seed: int = 0,
        two_sided: bool = False,
    ) -> "SnsSketch":
        """Fresh pair: salt drawn from `entropy`, threshold calibrated.

        entropy may be None (OS randomness), an int seed, or a numpy
        Generator. An explicit d_t overrides the fp_target calibration and
        records the false-positive rate it implies instead.
        """
        b_s = _precision_for(m_salted, "m_salted")
        b_ns = _precision_for(m_unsalted, "m_unsalted")
        if d_t is None:
            params = DetectionParams.calibrated(m_salted, m_unsalted, fp_target)
        else:
            sigma = sns_sigma(m_salted, m_unsalted)
            params = DetectionParams(sigma=sigma, d_t=d_t, fp_target=normal_cdf(-d_t / sigma))
        salt = _draw_salt(entropy)
        salted = Sketch(b_s, HashConfig(index_seed=index_seed, value_seed=value_seed, salt=salt))
        unsalted = Sketch(b_ns, HashConfig(index_seed=index_seed, value_seed=value_seed))
        return cls(salted, unsalted, params, two_sided=two_sided)

    @property
    def salted(self) -> Sketch:
        return self._salted

    @property
    def unsalted(self) -> Sketch:
        return self._unsalted

    @property
    def params(self) -> DetectionParams:
        return self._params

    @property
    def two_sided(self) -> bool:
        return self._two_sided

    def __repr__(self) -> str:
        return (
            f"SnsSketch(m_salted={self._salted.num_registers}, "
            f"m_unsalted={self._unsalted.num_registers}, d_t={self._params.d_t:.4f})"
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SnsSketch):
            return NotImplemented
        return (
            self._salted == other._salted
            and self._unsalted == other._unsalted
            and self._params == other._params
            and self._two_sided == other._two_sided
        )

    __hash__ = None

    # -- updates (always both members) -----------------------------------------

    def insert(self, element: bytes) -> None:
        self._salted.insert(element)
        self._unsalted.insert(element)

    def insert_many(self, elements: Iterable[bytes]) -> None:
        elems = list(elements)
        self._salted.insert_many(elems)
        self._unsalted.insert_many(elems)

    def insert_u64(self, values: np.ndarray) -> None:
        self._salted.insert_u64(values)
        self._unsalted.insert_u64(values)

    # -- verdicts ---------------------------------------------------------------

    def check(self) -> Verdict:
        """Read-only manipulation check on the current contents."""
        return evaluate(
            self._salted.estimate(),
            self._unsalted.estimate(),
            self._params,
            self._salted.num_registers,
            self._unsalted.num_registers,
            two_sided=self._two_sided,
        )

    def copy(self) -> "SnsSketch":
        return SnsSketch(
            self._salted.copy(), self._unsalted.copy(), self._params, self._two_sided
        )

    # -- persistence ------------------------------------------------------------

    def to_bytes(self) -> bytes:
        salted_payload = self._salted.to_bytes()
        unsalted_payload = self._unsalted.to_bytes()
        flags = _FLAG_TWO_SIDED if self._two_sided else 0
        return b"".join(
            [
                _HEADER.pack(
                    _MAGIC, self._params.d_t, self._params.fp_target, flags, len(salted_payload)
                ),
                salted_payload,
                _LEN.pack(len(unsalted_payload)),
                unsalted_payload,
            ]
        )

    @classmethod
    def from_bytes(cls, payload: bytes) -> "SnsSketch":
        if len(payload) < _HEADER.size:
            raise SketchFormatError("payload shorter than container header")
        magic, d_t, fp_target, flags, len_s = _HEADER.unpack_from(payload, 0)
        if magic != _MAGIC:
            raise SketchFormatError(f"bad magic {magic!r}")
        if flags & ~_FLAG_TWO_SIDED:
            raise SketchFormatError(f"unknown flag bits 0x{flags:02x}")
        offset = _HEADER.size
        if len(payload) < offset + len_s + _LEN.size:
            raise SketchFormatError("truncated container")
        salted = Sketch.from_bytes(payload[offset : offset + len_s])
        offset += len_s
        (len_ns,) = _LEN.unpack_from(payload, offset)
        offset += _LEN.size
        if len(payload) != offset + len_ns:
            raise SketchFormatError("container length mismatch")
        unsalted = Sketch.from_bytes(payload[offset:])
        sigma = sns_sigma(salted.num_registers, unsalted.num_registers)
        params = DetectionParams(sigma=sigma, d_t=d_t, fp_target=fp_target)
        return cls(salted, unsalted, params, two_sided=bool(flags & _FLAG_TWO_SIDED))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "SnsSketch":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass(frozen=True)
class SnsMergeOutcome:
    """Merge result: always the unsalted union; the full protected pair only
    when both inputs shared a salt (otherwise `sns` is None and downstream
    aggregation continues unprotected)."""

    unsalted: Sketch
    sns: "SnsSketch | None"
    verdict_a: Verdict
    verdict_b: Verdict

    @property
    def protected(self) -> bool:
        return self.sns is not None


def sns_merge(a: SnsSketch, b: SnsSketch) -> SnsMergeOutcome:
    """Checked merge of two guarded sketches.

    Both inputs are verified first; if either looks attacked the merge is
    refused with AttackDetectedError (carrying both verdicts). Unsalted
    members must share their hash configuration.
    """
    if a.unsalted.config != b.unsalted.config or a.unsalted.precision != b.unsalted.precision:
        raise IncompatibleSketchError("unsalted members have differing configurations")
    verdict_a = a.check()
    verdict_b = b.check()
    if verdict_a.attacked or verdict_b.attacked:
        raise AttackDetectedError(
            "merge refused: manipulation detected in input sketch "
            + ("A" if verdict_a.attacked else "B"),
            verdict_a,
            verdict_b,
        )
    merged_unsalted = merge(a.unsalted, b.unsalted)
    merged_sns = None
    if (
        a.salted.config == b.salted.config
        and a.salted.precision == b.salted.precision
    ):
        merged_sns = SnsSketch(
            merge(a.salted, b.salted), merged_unsalted, a.params, a.two_sided
        )
    return SnsMergeOutcome(
        unsalted=merged_unsalted, sns=merged_sns, verdict_a=verdict_a, verdict_b=verdict_b
    )
