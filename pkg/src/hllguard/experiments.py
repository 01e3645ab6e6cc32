"""Seeded experiment runners: estimator accuracy, clean-gap distribution,
detection power, false-positive rate, and the black-box filtering attack.

Every runner is a pure function of its parameters plus one master seed.
Per-trial randomness is derived by splitmix64 chaining: trial t uses
key = split_seed(master, t), then split_seed(key, 0) for the salt and
split_seed(key, 1) for the element stream, so trials are independent and
any single trial can be reproduced in isolation. Element streams are the
8-byte little-endian encodings of pairwise-distinct 64-bit words, giving
exact control of the true cardinality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .attacks import BlackBoxSketch, M2Result, OracleBudget, filter_m2
from .hashing import split_seed, split_stream
from .sketch import HashConfig, Sketch
from .stats import DetectionParams, normal_cdf, sns_sigma
from .sns import FLOOR_FACTOR, Verdict, evaluate

DEFAULT_CARDINALITY = 100_000
DEFAULT_M = 1024
DEFAULT_M2_CANDIDATES = 250_000
DEFAULT_M2_ROUNDS = 3
DEFAULT_VICTIM_PRECISION = 14  # 16384 registers, the usual dense service geometry


def _trial_seeds(master: int, trial: int) -> tuple[int, int]:
    key = split_seed(master, trial)
    return split_seed(key, 0), split_seed(key, 1)


def _precision_of(m: int) -> int:
    if m < 16 or m & (m - 1):
        raise ValueError(f"register count must be a power of two >= 16, got {m}")
    return m.bit_length() - 1


def stream_words(seed: int, count: int) -> np.ndarray:
    """The experiment element stream: `count` distinct uint64 values."""
    return split_stream(seed, count)


def words_to_elements(words: np.ndarray) -> list[bytes]:
    """8-byte little-endian element encoding of a word stream."""
    blob = np.ascontiguousarray(words, dtype="<u8").tobytes()
    return [blob[i : i + 8] for i in range(0, len(blob), 8)]


# -- estimator accuracy ---------------------------------------------------------


@dataclass
class AccuracyResult:
    cardinality: int
    m: int
    relative_errors: np.ndarray

    @property
    def std(self) -> float:
        return float(np.std(self.relative_errors, ddof=1))

    @property
    def mean(self) -> float:
        return float(np.mean(self.relative_errors))


def run_estimator_error(
    trials: int = 500,
    cardinality: int = DEFAULT_CARDINALITY,
    m: int = DEFAULT_M,
    seed: int = 0,
) -> AccuracyResult:
    """Relative estimate error over independent streams (one sketch each)."""
    precision = _precision_of(m)
    errors = np.empty(trials)
    for t in range(trials):
        _, stream_seed = _trial_seeds(seed, t)
        sk = Sketch(precision)
        sk.insert_u64(stream_words(stream_seed, cardinality))
        errors[t] = sk.estimate() / cardinality - 1.0
    return AccuracyResult(cardinality=cardinality, m=m, relative_errors=errors)


# -- clean-stream gap distribution ----------------------------------------------


@dataclass
class Fig4Result:
    """Per-trial estimates of the salted/unsalted pair on clean streams.

    diffs holds (C_s - C_ns)/C, the gap normalized by the true cardinality.
    """

    trials: int
    cardinality: int
    m_salted: int
    m_unsalted: int
    seed: int
    sigma: float
    d_t: float
    c_salted: np.ndarray
    c_unsalted: np.ndarray

    @property
    def diffs(self) -> np.ndarray:
        return (self.c_salted - self.c_unsalted) / self.cardinality

    @property
    def sample_mean(self) -> float:
        return float(np.mean(self.diffs))

    @property
    def sample_std(self) -> float:
        return float(np.std(self.diffs, ddof=1))

    def beyond_threshold(self) -> int:
        return int(np.count_nonzero(np.abs(self.diffs) > self.d_t))


def run_fig4(
    trials: int = 1000,
    cardinality: int = DEFAULT_CARDINALITY,
    m_salted: int = DEFAULT_M,
    m_unsalted: int = DEFAULT_M,
    seed: int = 0,
    d_t: float | None = None,
) -> Fig4Result:
    """Clean-stream distribution of the normalized estimate gap.

    Fresh salt and fresh stream per trial; both members see the identical
    stream, mirroring deployment.
    """
    b_s = _precision_of(m_salted)
    b_ns = _precision_of(m_unsalted)
    sigma = sns_sigma(m_salted, m_unsalted)
    if d_t is None:
        d_t = 5.0 * sigma
    c_s = np.empty(trials)
    c_ns = np.empty(trials)
    for t in range(trials):
        salt_seed, stream_seed = _trial_seeds(seed, t)
        words = stream_words(stream_seed, cardinality)
        salted = Sketch(b_s, HashConfig(salt=salt_seed))
        unsalted = Sketch(b_ns)
        salted.insert_u64(words)
        unsalted.insert_u64(words)
        c_s[t] = salted.estimate()
        c_ns[t] = unsalted.estimate()
    return Fig4Result(
        trials=trials,
        cardinality=cardinality,
        m_salted=m_salted,
        m_unsalted=m_unsalted,
        seed=seed,
        sigma=sigma,
        d_t=d_t,
        c_salted=c_s,
        c_unsalted=c_ns,
    )


# -- false positives on clean traffic ---------------------------------------------


@dataclass
class CleanFpResult:
    trials: int
    cardinality: int
    params: DetectionParams
    false_positives: int
    normalized_diffs: np.ndarray  # (C_ns - C_s)/C_s, the tested statistic

    @property
    def fp_rate(self) -> float:
        return self.false_positives / self.trials


def run_clean_fp(
    trials: int = 10_000,
    cardinality: int = DEFAULT_CARDINALITY,
    m_salted: int = DEFAULT_M,
    m_unsalted: int = DEFAULT_M,
    fp_target: float = normal_cdf(-3.0),
    seed: int = 0,
    d_t: float | None = None,
    two_sided: bool = False,
) -> CleanFpResult:
    """Empirical false-positive rate of the calibrated test on clean streams."""
    b_s = _precision_of(m_salted)
    b_ns = _precision_of(m_unsalted)
    if d_t is None:
        params = DetectionParams.calibrated(m_salted, m_unsalted, fp_target)
    else:
        params = DetectionParams.with_threshold(m_salted, m_unsalted, d_t)
    diffs = np.empty(trials)
    false_positives = 0
    for t in range(trials):
        salt_seed, stream_seed = _trial_seeds(seed, t)
        words = stream_words(stream_seed, cardinality)
        salted = Sketch(b_s, HashConfig(salt=salt_seed))
        unsalted = Sketch(b_ns)
        salted.insert_u64(words)
        unsalted.insert_u64(words)
        verdict = evaluate(
            salted.estimate(), unsalted.estimate(), params, m_salted, m_unsalted, two_sided
        )
        diffs[t] = verdict.normalized_diff
        false_positives += verdict.attacked
    return CleanFpResult(
        trials=trials,
        cardinality=cardinality,
        params=params,
        false_positives=false_positives,
        normalized_diffs=diffs,
    )


# -- detection power against a prepared attack set --------------------------------


@dataclass
class DetectResult:
    trials: int
    attack_size: int
    params: DetectionParams
    detections: int
    verdicts: list[Verdict] = field(default_factory=list)
    floor_warning: bool = False

    @property
    def detection_rate(self) -> float:
        return self.detections / self.trials

    @property
    def mean_normalized_diff(self) -> float:
        return float(np.mean([v.normalized_diff for v in self.verdicts]))


def run_detect(
    attack_elements: Sequence[bytes],
    trials: int = 100,
    m_salted: int = DEFAULT_M,
    m_unsalted: int = DEFAULT_M,
    d_t: float | None = None,
    fp_target: float = normal_cdf(-5.0),
    seed: int = 0,
    clean_count: int = 0,
    two_sided: bool = False,
) -> DetectResult:
    """Detection rate over independent salt draws for a fixed attack stream.

    Each trial salts a fresh guarded pair and pushes the attack set (plus
    optional clean background traffic) through it. With no background the
    unsalted member is salt-independent, so it is built once and shared.
    """
    elements = list(attack_elements)
    b_s = _precision_of(m_salted)
    b_ns = _precision_of(m_unsalted)
    if d_t is None:
        params = DetectionParams.calibrated(m_salted, m_unsalted, fp_target)
    else:
        params = DetectionParams.with_threshold(m_salted, m_unsalted, d_t)

    base_unsalted = Sketch(b_ns)
    base_unsalted.insert_many(elements)

    detections = 0
    verdicts: list[Verdict] = []
    floor = FLOOR_FACTOR * max(m_salted, m_unsalted)
    floor_warning = len(elements) + clean_count < floor
    for t in range(trials):
        salt_seed, stream_seed = _trial_seeds(seed, t)
        salted = Sketch(b_s, HashConfig(salt=salt_seed))
        salted.insert_many(elements)
        if clean_count:
            clean = stream_words(stream_seed, clean_count)
            salted.insert_u64(clean)
            unsalted = Sketch(b_ns)
            unsalted.insert_many(elements)
            unsalted.insert_u64(clean)
        else:
            unsalted = base_unsalted
        verdict = evaluate(
            salted.estimate(), unsalted.estimate(), params, m_salted, m_unsalted, two_sided
        )
        verdicts.append(verdict)
        detections += verdict.attacked
        if verdict.indeterminate:
            floor_warning = True
    return DetectResult(
        trials=trials,
        attack_size=len(elements),
        params=params,
        detections=detections,
        verdicts=verdicts,
        floor_warning=floor_warning,
    )


# -- black-box filtering attack ----------------------------------------------------


@dataclass
class M2ExperimentResult:
    candidates: int
    rounds: int
    victim_precision: int
    seed: int
    result: M2Result

    @property
    def final_ratio(self) -> float:
        return self.result.rounds[-1].ratio if self.result.rounds else 0.0


def run_m2(
    candidates: int = DEFAULT_M2_CANDIDATES,
    rounds: int = DEFAULT_M2_ROUNDS,
    victim_precision: int = DEFAULT_VICTIM_PRECISION,
    seed: int = 0,
) -> M2ExperimentResult:
    """Black-box filtering against fresh unsalted victims.

    The attacker never sees the victim's configuration; it only inserts and
    reads estimates. Candidates are distinct 8-byte elements.
    """
    elements = words_to_elements(stream_words(split_seed(seed, 0), candidates))
    victim_config = HashConfig()

    def make_victim() -> BlackBoxSketch:
        return BlackBoxSketch(Sketch(victim_precision, victim_config))

    result = filter_m2(make_victim, elements, rounds, OracleBudget())
    return M2ExperimentResult(
        candidates=candidates,
        rounds=rounds,
        victim_precision=victim_precision,
        seed=seed,
        result=result,
    )
