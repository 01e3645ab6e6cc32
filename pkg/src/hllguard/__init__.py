"""hllguard: HyperLogLog sketches, estimate-manipulation attacks, and a
salted+unsalted guarded sketch that detects them.

The core `Sketch` is a dense HyperLogLog with a documented hash
configuration (XXH64, optional 8-byte salt prefix), which makes both sides
of the adversarial story concrete: `attacks` crafts element sets that pin
the estimate far below the true cardinality (or inflate it), and
`SnsSketch` pairs a salted and an unsalted sketch to detect exactly that
manipulation with a calibrated statistical test — while the unsalted member
keeps its mergeability.
"""

from .attacks import (
    AttackSet,
    AttackSetFormatError,
    BlackBoxSketch,
    M2Result,
    OracleBudget,
    RoundStats,
    TemplateExhaustedError,
    craft_inflation,
    craft_m1,
    filter_m2,
    flow_candidates,
    load_attack_set,
    save_attack_set,
    word_candidates,
)
from .flows import (
    FlowParseError,
    FlowTemplate,
    FlowTuple,
    encode_flow,
    generate_flows,
    read_elements,
    read_flows_csv,
    write_flows_csv,
    write_hex_lines,
)
from .hashing import leading_rank, split_seed, split_stream, xxh64
from .sketch import (
    EstimatorParams,
    HashConfig,
    HashOutcome,
    IncompatibleSketchError,
    Sketch,
    SketchFormatError,
    alpha_m,
    config_fingerprint,
    estimator_params,
    hash_element,
    merge,
)
from .sns import (
    AttackDetectedError,
    SnsMergeOutcome,
    SnsSketch,
    Verdict,
    evaluate,
    sns_merge,
)
from .stats import DetectionParams, normal_cdf, sns_sigma, threshold_for_fp

__version__ = "0.1.0"

__all__ = [
    "AttackDetectedError",
    "AttackSet",
    "AttackSetFormatError",
    "BlackBoxSketch",
    "DetectionParams",
    "EstimatorParams",
    "FlowParseError",
    "FlowTemplate",
    "FlowTuple",
    "HashConfig",
    "HashOutcome",
    "IncompatibleSketchError",
    "M2Result",
    "OracleBudget",
    "RoundStats",
    "Sketch",
    "SketchFormatError",
    "SnsMergeOutcome",
    "SnsSketch",
    "TemplateExhaustedError",
    "Verdict",
    "alpha_m",
    "config_fingerprint",
    "craft_inflation",
    "craft_m1",
    "encode_flow",
    "estimator_params",
    "evaluate",
    "filter_m2",
    "flow_candidates",
    "generate_flows",
    "hash_element",
    "leading_rank",
    "load_attack_set",
    "merge",
    "normal_cdf",
    "read_elements",
    "read_flows_csv",
    "save_attack_set",
    "sns_merge",
    "sns_sigma",
    "split_seed",
    "split_stream",
    "threshold_for_fp",
    "word_candidates",
    "write_flows_csv",
    "write_hex_lines",
    "xxh64",
]
