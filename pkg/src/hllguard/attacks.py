"""Attack-set construction against HyperLogLog sketches.

Two adversary models:

* Known configuration ("white box"): the attacker can evaluate the sketch's
  hashes offline. `craft_m1` keeps only candidates whose value window has
  rank 1, so inserting them never pushes any register past 1 and the
  estimate stays near the all-ranks-one ceiling (~1.44*M) no matter how many
  distinct elements are inserted. `craft_inflation` goes the other way,
  collecting candidates of rank >= min_rank to force the estimate upward.

* Insert-and-observe ("black box"): the attacker only has insert/estimate
  access — the interface any PFADD/PFCOUNT-style service exposes.
  `filter_m2` inserts candidates cumulatively and retains those that leave
  the reported estimate unchanged; repeating for a few rounds against fresh
  victims concentrates the set on low-impact elements.

Attack sets serialize to a one-line JSON header (count, model, config
fingerprint) followed by one lowercase-hex element per line.
"""

from __future__ import annotations

import ipaddress
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Protocol

import numpy as np

from .flows import FlowParseError, FlowTuple, encode_flow
from .hashing import split_seed, split_stream, xxh64_words
from .sketch import HashConfig, Sketch, _vec_ranks, config_fingerprint, hash_element

MODEL_M1 = "m1"
MODEL_M2 = "m2"
MODEL_INFLATION = "inflation"

UNKNOWN_FINGERPRINT = "unknown"


class AttackSetFormatError(FlowParseError):
    """Malformed attack-set file."""


class TemplateExhaustedError(RuntimeError):
    """Candidate template ran out before the requested set size was reached."""


@dataclass(frozen=True)
class AttackSet:
    """A set of distinct elements engineered against a target sketch."""

    elements: tuple[bytes, ...]
    target_config_known: bool
    model: str
    fingerprint: str = UNKNOWN_FINGERPRINT

    def __post_init__(self) -> None:
        if len(set(self.elements)) != len(self.elements):
            raise ValueError("attack-set elements must be pairwise distinct")

    @property
    def true_cardinality(self) -> int:
        return len(self.elements)


@dataclass
class OracleBudget:
    """Counts the black-box queries an attack spent."""

    insert_calls: int = 0
    estimate_calls: int = 0


class VictimHandle(Protocol):
    """The only two things an insert-and-observe attacker may touch."""

    def insert(self, element: bytes) -> bool: ...
    def estimate(self) -> float: ...


class BlackBoxSketch:
    """Opaque wrapper giving a sketch the insert/estimate-only surface."""

    __slots__ = ("_sk",)

    def __init__(self, sketch: Sketch):
        self._sk = sketch

    def insert(self, element: bytes) -> bool:
        return self._sk.insert(element)

    def estimate(self) -> float:
        return self._sk.estimate()


def flow_candidates(
    seed: int = 0,
    dst_addr: str = "198.51.100.17",
    dst_port: int = 443,
    protocol: int = 6,
) -> Iterator[bytes]:
    """Endless distinct flow-shaped candidates: sweep the source port, then
    move to a new pseudo-random source address."""
    dst = ipaddress.ip_address(dst_addr)
    for i in range(1 << 32):
        src = ipaddress.IPv4Address(split_seed(seed, i) & 0xFFFFFFFF)
        for port in range(1 << 16):
            yield encode_flow(
                FlowTuple(
                    src_addr=src,
                    dst_addr=dst,
                    src_port=port,
                    dst_port=dst_port,
                    protocol=protocol,
                )
            )


def word_candidates(seed: int, budget: int) -> np.ndarray:
    """`budget` pairwise-distinct uint64 candidates (8-byte LE elements)."""
    return split_stream(seed, budget)


def craft_m1(
    config: HashConfig,
    precision_b: int,
    count: int,
    template: Iterable[bytes] | None = None,
) -> AttackSet:
    """Collect `count` elements whose value window has rank exactly 1.

    Requires full knowledge of `config` (salt included, if any). Half of all
    candidates qualify in expectation, so roughly 2*count template items are
    consumed. Raises TemplateExhaustedError if the template runs dry first.
    """
    it = iter(template) if template is not None else flow_candidates()
    kept: list[bytes] = []
    while len(kept) < count:
        try:
            candidate = next(it)
        except StopIteration:
            raise TemplateExhaustedError(
                f"template exhausted with {len(kept)}/{count} elements found"
            ) from None
        if hash_element(candidate, config, precision_b).value == 1:
            kept.append(candidate)
    return AttackSet(
        elements=tuple(kept),
        target_config_known=True,
        model=MODEL_M1,
        fingerprint=config_fingerprint(config, precision_b),
    )


def craft_inflation(
    config: HashConfig,
    precision_b: int,
    min_rank: int,
    budget: int,
    template: Iterable[bytes] | None = None,
) -> AttackSet:
    """All candidates within `budget` whose rank is >= min_rank.

    Yield is ~ budget * 2^(1-min_rank), so deep ranks need big budgets; the
    caller inspects the result size. With no template, candidates are 8-byte
    words and the scan is vectorized.
    """
    cap = 64 - precision_b + 1
    if not 1 <= min_rank <= cap:
        raise ValueError(f"min_rank must be in [1, {cap}], got {min_rank}")
    if budget < 0:
        raise ValueError("budget must be >= 0")

    if template is None:
        words = word_candidates(split_seed(0x1F4A7, min_rank), budget)
        prefix = config.salt
        h = xxh64_words(words, config.value_seed, prefix=prefix)
        ranks = _vec_ranks(h, precision_b)
        kept_words = words[ranks >= min_rank]
        elements = tuple(int(w).to_bytes(8, "little") for w in kept_words)
    else:
        kept: list[bytes] = []
        it = iter(template)
        for _ in range(budget):
            try:
                candidate = next(it)
            except StopIteration:
                break
            if hash_element(candidate, config, precision_b).value >= min_rank:
                kept.append(candidate)
        elements = tuple(kept)

    return AttackSet(
        elements=elements,
        target_config_known=True,
        model=MODEL_INFLATION,
        fingerprint=config_fingerprint(config, precision_b),
    )


@dataclass(frozen=True)
class RoundStats:
    """One filtering round: what went in, what survived, how it measures."""

    candidates: int
    retained: int
    fresh_estimate: float  # estimate of the retained set on a fresh sketch
    ratio: float  # fresh_estimate / retained (0 when nothing was retained)


@dataclass
class M2Result:
    attack_set: AttackSet
    rounds: list[RoundStats] = field(default_factory=list)
    budget: OracleBudget = field(default_factory=OracleBudget)


def filter_m2(
    make_victim: Callable[[], VictimHandle],
    candidates: Iterable[bytes],
    rounds: int,
    budget: OracleBudget | None = None,
) -> M2Result:
    """Insert-and-observe filtering against black-box victims.

    Per round: take a fresh victim, insert the current candidates one by
    one, read the estimate after each insert, and retain the elements that
    left it exactly unchanged. The next round starts from the retained set.
    After each round the retained set is re-measured on another fresh
    victim; all oracle traffic is tallied in `budget`.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    budget = budget if budget is not None else OracleBudget()
    current = list(candidates)
    if len(set(current)) != len(current):
        raise ValueError("candidates must be pairwise distinct")

    stats: list[RoundStats] = []
    for _ in range(rounds):
        victim = make_victim()
        previous = victim.estimate()
        budget.estimate_calls += 1
        retained: list[bytes] = []
        for element in current:
            victim.insert(element)
            budget.insert_calls += 1
            est = victim.estimate()
            budget.estimate_calls += 1
            if est == previous:
                retained.append(element)
            previous = est

        probe = make_victim()
        for element in retained:
            probe.insert(element)
            budget.insert_calls += 1
        fresh = probe.estimate()
        budget.estimate_calls += 1
        stats.append(
            RoundStats(
                candidates=len(current),
                retained=len(retained),
                fresh_estimate=fresh,
                ratio=(fresh / len(retained)) if retained else 0.0,
            )
        )
        current = retained

    attack_set = AttackSet(
        elements=tuple(current),
        target_config_known=False,
        model=MODEL_M2,
        fingerprint=UNKNOWN_FINGERPRINT,
    )
    return M2Result(attack_set=attack_set, rounds=stats, budget=budget)


def save_attack_set(attack_set: AttackSet, path) -> None:
    """Write the hex-lines format with its one-line JSON header."""
    header = {
        "count": attack_set.true_cardinality,
        "model": attack_set.model,
        "config_fingerprint": attack_set.fingerprint,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for element in attack_set.elements:
            fh.write(element.hex() + "\n")


def load_attack_set(path) -> AttackSet:
    with open(path) as fh:
        first = fh.readline().strip()
        if not first.startswith("{"):
            raise AttackSetFormatError("line 1: missing JSON header")
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise AttackSetFormatError(f"line 1: bad JSON header: {exc}") from exc
        elements: list[bytes] = []
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                elements.append(bytes.fromhex(line))
            except ValueError:
                raise AttackSetFormatError(f"line {line_no}: not lowercase hex") from None
    model = header.get("model", MODEL_M2)
    if header.get("count") != len(elements):
        raise AttackSetFormatError(
            f"header count {header.get('count')} != {len(elements)} elements"
        )
    return AttackSet(
        elements=tuple(elements),
        target_config_known=model in (MODEL_M1, MODEL_INFLATION),
        model=model,
        fingerprint=str(header.get("config_fingerprint", UNKNOWN_FINGERPRINT)),
    )
