"""Experiment output: CSV records, JSON summaries, and rendered figures.

Output is machine-first — every figure has a CSV sibling carrying the same
numbers (including the theoretical-curve column), so plots can be rebuilt by
any external tool. Rendering uses the Agg backend and never needs a display.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .attacks import M2Result
from .experiments import CleanFpResult, DetectResult, Fig4Result


def _normal_pdf(x: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_fig4_trials_csv(path, result: Fig4Result) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "c_salted", "c_unsalted", "normalized_diff"])
        diffs = result.diffs
        for t in range(result.trials):
            writer.writerow(
                [t, f"{result.c_salted[t]:.6f}", f"{result.c_unsalted[t]:.6f}", f"{diffs[t]:.8f}"]
            )


def fig4_histogram(result: Fig4Result, bins: int = 61):
    """Histogram of the normalized gap plus the Normal(0, sigma) overlay.

    Bins span +-6 sigma so the theoretical density column integrates to 1
    within plotting tolerance.
    """
    span = 6.0 * result.sigma
    edges = np.linspace(-span, span, bins + 1)
    counts, _ = np.histogram(result.diffs, bins=edges)
    width = edges[1] - edges[0]
    centers = 0.5 * (edges[:-1] + edges[1:])
    empirical = counts / (result.trials * width)
    theoretical = _normal_pdf(centers, result.sigma)
    return centers, width, empirical, theoretical


def write_fig4_histogram_csv(path, result: Fig4Result, bins: int = 61) -> None:
    centers, width, empirical, theoretical = fig4_histogram(result, bins)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_center", "bin_width", "empirical_density", "normal_density"])
        for c, e, th in zip(centers, empirical, theoretical):
            writer.writerow([f"{c:.8f}", f"{width:.8f}", f"{e:.8f}", f"{th:.8f}"])


def fig4_summary(result: Fig4Result) -> dict:
    return {
        "trials": result.trials,
        "cardinality": result.cardinality,
        "m_salted": result.m_salted,
        "m_unsalted": result.m_unsalted,
        "seed": result.seed,
        "sigma_theory": result.sigma,
        "d_t": result.d_t,
        "sample_mean": result.sample_mean,
        "sample_std": result.sample_std,
        "beyond_threshold": result.beyond_threshold(),
    }


def clean_fp_summary(result: CleanFpResult) -> dict:
    return {
        "trials": result.trials,
        "cardinality": result.cardinality,
        "sigma": result.params.sigma,
        "d_t": result.params.d_t,
        "fp_target": result.params.fp_target,
        "false_positives": result.false_positives,
        "fp_rate": result.fp_rate,
    }


def detect_summary(result: DetectResult) -> dict:
    return {
        "trials": result.trials,
        "attack_size": result.attack_size,
        "sigma": result.params.sigma,
        "d_t": result.params.d_t,
        "detections": result.detections,
        "detection_rate": result.detection_rate,
        "mean_normalized_diff": result.mean_normalized_diff,
        "floor_warning": result.floor_warning,
    }


def write_detect_trials_csv(path, result: DetectResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["trial", "c_salted", "c_unsalted", "normalized_diff", "attacked", "indeterminate"]
        )
        for t, v in enumerate(result.verdicts):
            writer.writerow(
                [
                    t,
                    f"{v.c_salted:.6f}",
                    f"{v.c_unsalted:.6f}",
                    f"{v.normalized_diff:.8f}",
                    int(v.attacked),
                    int(v.indeterminate),
                ]
            )


def m2_summary(result: M2Result) -> dict:
    return {
        "rounds": [
            {
                "candidates": r.candidates,
                "retained": r.retained,
                "fresh_estimate": r.fresh_estimate,
                "ratio": r.ratio,
            }
            for r in result.rounds
        ],
        "final_retained": result.attack_set.true_cardinality,
        "final_ratio": result.rounds[-1].ratio if result.rounds else 0.0,
        "oracle_insert_calls": result.budget.insert_calls,
        "oracle_estimate_calls": result.budget.estimate_calls,
    }


def write_m2_rounds_csv(path, result: M2Result) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "candidates", "retained", "fresh_estimate", "ratio"])
        for i, r in enumerate(result.rounds, start=1):
            writer.writerow([i, r.candidates, r.retained, f"{r.fresh_estimate:.3f}", f"{r.ratio:.6f}"])


# -- figures ---------------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_fig4(path, result: Fig4Result, bins: int = 61) -> None:
    """Empirical gap distribution vs the Normal(0, sigma) curve, with the
    detection thresholds marked."""
    plt = _pyplot()
    centers, width, empirical, theoretical = fig4_histogram(result, bins)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar(centers, empirical, width=width * 0.92, color="#7aa6c2", label="empirical")
    ax.plot(centers, theoretical, color="#b3443c", linewidth=1.8, label="Normal(0, σ)")
    for sign in (-1, 1):
        ax.axvline(sign * result.d_t, color="#555555", linestyle="--", linewidth=1.0)
    ax.text(result.d_t, ax.get_ylim()[1] * 0.92, " ±d_t", color="#555555")
    ax.set_xlabel("(C_s − C_ns) / C")
    ax.set_ylabel("density")
    ax.set_title(
        f"Clean-stream estimate gap: {result.trials} trials, "
        f"C={result.cardinality}, M_s={result.m_salted}, M_ns={result.m_unsalted}"
    )
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_detect(path, result: DetectResult, clean: CleanFpResult | None = None) -> None:
    """Normalized-diff histograms: attack trials vs (optional) clean control."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    attack_diffs = [v.normalized_diff for v in result.verdicts]
    ax.hist(attack_diffs, bins=40, color="#b3443c", alpha=0.75, label="attack trials", density=True)
    if clean is not None:
        ax.hist(
            clean.normalized_diffs,
            bins=40,
            color="#7aa6c2",
            alpha=0.75,
            label="clean control",
            density=True,
        )
    ax.axvline(-result.params.d_t, color="#555555", linestyle="--", linewidth=1.0, label="−d_t")
    ax.set_xlabel("(C_ns − C_s) / C_s")
    ax.set_ylabel("density")
    ax.set_title(f"Detection statistic over {result.trials} salt draws")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_m2(path, result: M2Result) -> None:
    """Per-round retained size vs the estimate it produces on a fresh sketch."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    rounds = np.arange(1, len(result.rounds) + 1)
    retained = [r.retained for r in result.rounds]
    estimates = [r.fresh_estimate for r in result.rounds]
    ax.bar(rounds - 0.18, retained, width=0.36, color="#7aa6c2", label="retained (true)")
    ax.bar(rounds + 0.18, estimates, width=0.36, color="#b3443c", label="fresh estimate")
    for x, r in zip(rounds, result.rounds):
        ax.text(x, max(r.retained, r.fresh_estimate) * 1.02, f"×{r.ratio:.2f}", ha="center")
    ax.set_xticks(rounds)
    ax.set_xlabel("round")
    ax.set_ylabel("elements")
    ax.set_title("Black-box filtering: retained set vs its estimate")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
