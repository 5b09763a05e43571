"""Fusing the neural attribute heads with the circuit's tables.

Two prediction variants share the class-given-attributes table computed by
the circuit. The baseline (NPC) mixes it with the factorized neural
attribute distribution; under interventions the heads are merely clamped.
The causal variant (CNPC) instead forms a product of experts between the
clamped neural distribution and the circuit's interventional attribute
marginal: a normalized geometric mean with balancing weight alpha, which
is the minimizer of the alpha-weighted sum of reverse KL divergences to
the two sources. Its normalizer never exceeds 1 (Hoelder), a fact the test
suite asserts on every evaluation.

Zero handling, centralized here so a different convention is a one-point
change: 0^b = 0 for b > 0, a factor raised to exponent 0 contributes 1
even at value 0, and nonzero factors are floored at 1e-12 before logs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import InterventionSet, ModelError

log = logging.getLogger("cnpc.fusion")

LOG_FLOOR = 1e-12
RENORM_WARN = 1e-6


class _ZWatermark:
    """High-water mark over every normalizer computed in-process; the test
    suite reads it to assert the bound across all evaluations."""

    def __init__(self):
        self.max_z = 0.0
        self.count = 0


z_watermark = _ZWatermark()


@dataclass(frozen=True)
class FusionConfig:
    alpha: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ModelError(f"alpha must be in [0,1], got {self.alpha}")


@dataclass(frozen=True)
class PoeResult:
    """Normalized product-of-experts table over joint attribute
    assignments, with its normalizer and support."""

    table: np.ndarray
    z_alpha: float
    support: np.ndarray  # boolean mask of nonzero entries


def joint_from_heads(dists: list[np.ndarray]) -> np.ndarray:
    """Flatten factorized per-head distributions into a joint table in
    mixed-radix order (first head most significant)."""
    joint = np.ones(1)
    for d in dists:
        joint = np.outer(joint, np.asarray(d, dtype=float)).ravel()
    return joint


def npc_class_dist(dists: list[np.ndarray], class_table: np.ndarray) -> np.ndarray:
    """Mixture of class rows weighted by the factorized attribute
    distribution. The output is renormalized; drift beyond RENORM_WARN
    indicates inconsistent inputs."""
    joint = joint_from_heads(dists)
    if len(joint) != class_table.shape[0]:
        raise ModelError(
            f"attribute space mismatch: heads give {len(joint)} assignments, "
            f"class table has {class_table.shape[0]} rows"
        )
    raw = joint @ class_table
    total = float(raw.sum())
    if total <= 0.0:
        raise ModelError("class distribution has zero mass")
    if abs(total - 1.0) > RENORM_WARN:
        log.warning("class distribution drifted before renormalization: sum=%r", total)
    return raw / total


def npc_interventional(
    dists: list[np.ndarray],
    do: InterventionSet,
    attr_names: list[str],
    class_table: np.ndarray,
) -> np.ndarray:
    """Clamp the intervened heads and reuse the observational rule; nothing
    propagates to the other heads."""
    from .predictor import clamp

    return npc_class_dist(clamp(dists, do, attr_names), class_table)


def poe_attribute_dist(
    clamped_dists: list[np.ndarray],
    interventional_table: np.ndarray,
    alpha: float,
) -> PoeResult:
    """Entrywise geometric mean p_theta^(1-alpha) * p_w^alpha, normalized.

    Accumulation runs in log space with max subtraction; the linear-space
    sum is kept by tests as a cross-check.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ModelError(f"alpha must be in [0,1], got {alpha}")
    p_theta = joint_from_heads(clamped_dists)
    p_w = np.asarray(interventional_table, dtype=float)
    if p_theta.shape != p_w.shape:
        raise ModelError(
            f"joint spaces differ: {p_theta.shape} vs {p_w.shape}"
        )

    # the endpoints are exact passthroughs, so the reductions to either
    # source hold bit-for-bit, not just to rounding error
    if alpha == 0.0 or alpha == 1.0:
        m = p_theta.copy() if alpha == 0.0 else p_w.copy()
        support = m > 0.0
        if not support.any():
            raise ModelError("product of experts has empty support")
        z_alpha = float(m.sum())
        table = m / z_alpha
        z_watermark.max_z = max(z_watermark.max_z, z_alpha)
        z_watermark.count += 1
        return PoeResult(table, z_alpha, support)

    support = np.ones(len(p_theta), dtype=bool)
    log_m = np.zeros(len(p_theta))
    for weight, p in ((1.0 - alpha, p_theta), (alpha, p_w)):
        zero = p <= 0.0
        support &= ~zero
        log_m += weight * np.log(np.maximum(p, LOG_FLOOR))
    if not support.any():
        raise ModelError(
            "product of experts has empty support: the clamped neural "
            "distribution and the interventional table share no assignment"
        )
    log_m = np.where(support, log_m, -np.inf)
    peak = log_m[support].max()
    z_alpha = float(np.exp(peak) * np.exp(log_m[support] - peak).sum())
    table = np.zeros_like(log_m)
    table[support] = np.exp(log_m[support] - peak)
    table /= table.sum()
    z_watermark.max_z = max(z_watermark.max_z, z_alpha)
    z_watermark.count += 1
    return PoeResult(table, z_alpha, support)


def cnpc_interventional(poe: PoeResult, class_table: np.ndarray) -> np.ndarray:
    """Class distribution induced by the product-of-experts attribute
    table."""
    raw = poe.table @ class_table
    total = float(raw.sum())
    if total <= 0.0:
        raise ModelError("class distribution has zero mass")
    if abs(total - 1.0) > RENORM_WARN:
        log.warning("class distribution drifted before renormalization: sum=%r", total)
    return raw / total


def attr_marginals(table: np.ndarray, cards: list[int]) -> list[np.ndarray]:
    """Per-attribute marginals of a joint table."""
    shaped = np.asarray(table).reshape(cards)
    out = []
    for k in range(len(cards)):
        axes = tuple(i for i in range(len(cards)) if i != k)
        out.append(shaped.sum(axis=axes))
    return out


def predict_labels(
    poe_table: np.ndarray, class_dist: np.ndarray, cards: list[int]
) -> tuple[tuple[int, ...], int]:
    """Joint argmax over attribute assignments (ties resolve to the
    lexicographically smallest assignment, which mixed-radix order makes
    the first maximal index) and argmax class."""
    flat = int(np.argmax(poe_table))
    assignment = []
    for c in reversed(cards):
        assignment.append(flat % c)
        flat //= c
    return tuple(reversed(assignment)), int(np.argmax(class_dist))
