"""Exhaustive-enumeration references for desk-size problem instances.

Everything here trades speed for being obviously correct: likelihoods are
summed placement by placement in the linear domain, and error probabilities
enumerate every report matrix. Used to validate the factorized scoring and
the Monte Carlo estimates on instances small enough to enumerate.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .bits import all_bit_vectors, pack_bits, popcount, unpack_bits
from .fusion import SCORE_TIE_TOL, FusionAssumption, argmax_lex, fuse
from .model import (
    BoundedBelowHalf,
    FixedCount,
    IndependentAlpha,
    UnconstrainedMaxEntropy,
    bounded_k_max,
    crossover_delta,
    validate_model,
)

__all__ = [
    "MAX_ENUM_NODES",
    "MAX_REPORT_BITS",
    "ExactScenario",
    "enumerate_placements",
    "exact_likelihood",
    "exact_map_decision",
    "all_report_probabilities",
    "exact_error_probability",
]

MAX_ENUM_NODES = 16
MAX_REPORT_BITS = 18


@dataclass(frozen=True)
class ExactScenario:
    """Fully specified small instance: true model and assumed model may differ."""

    n: int
    m: int
    eps: float
    pmal_b: float
    pmal_fc: float
    true_model: object
    fc_model: object

    def __post_init__(self):
        validate_model(self.true_model, self.n)
        validate_model(self.fc_model, self.n)
        for name in ("eps", "pmal_b", "pmal_fc"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def delta_b(self):
        return crossover_delta(self.eps, self.pmal_b)

    @property
    def assumption(self):
        return FusionAssumption(self.fc_model, self.eps, self.pmal_fc)


def enumerate_placements(model, n):
    """All placements with their probabilities: (masks (M, n) uint8, weights (M,)).

    Weights sum to one. Capped at MAX_ENUM_NODES nodes.
    """
    validate_model(model, n)
    if n > MAX_ENUM_NODES:
        raise ValueError(f"n={n} exceeds the enumeration cap {MAX_ENUM_NODES}")
    masks = all_bit_vectors(n)
    counts = masks.sum(axis=1)
    if isinstance(model, UnconstrainedMaxEntropy):
        return masks, np.full(len(masks), 0.5**n)
    if isinstance(model, IndependentAlpha):
        a = model.alpha
        weights = a**counts * (1.0 - a) ** (n - counts)
        return masks, weights
    if isinstance(model, FixedCount):
        keep = counts == model.n_b
    else:
        keep = counts <= bounded_k_max(model, n)
    masks = masks[keep]
    return masks, np.full(len(masks), 1.0 / len(masks))


def _channel_tables(eps, delta, m):
    # probability of d mismatches out of m for the honest and flipped channels
    d = np.arange(m + 1, dtype=np.float64)
    honest = (1.0 - eps) ** (m - d) * eps**d
    flipped = (1.0 - delta) ** (m - d) * delta**d
    return honest, flipped


def exact_likelihood(reports, states, model, eps, delta):
    """P(r | s) by direct summation over placements, linear domain.

    Independent-placement models with more than MAX_ENUM_NODES nodes use the
    per-node product form instead of enumerating.
    """
    reports = np.asarray(reports, dtype=np.uint8)
    states = np.asarray(states, dtype=np.uint8)
    if reports.ndim != 2 or states.ndim != 1 or reports.shape[1] != states.shape[0]:
        raise ValueError("reports must be (n, m) and states (m,)")
    n, m = reports.shape
    mism = (reports != states[None, :]).sum(axis=1)
    honest_t, flipped_t = _channel_tables(eps, delta, m)
    ph = honest_t[mism]
    pb = flipped_t[mism]
    if isinstance(model, (UnconstrainedMaxEntropy, IndependentAlpha)) and n > MAX_ENUM_NODES:
        a = 0.5 if isinstance(model, UnconstrainedMaxEntropy) else model.alpha
        return float(np.prod((1.0 - a) * ph + a * pb))
    masks, weights = enumerate_placements(model, n)
    per_node = np.where(masks == 1, pb[None, :], ph[None, :])
    return float((weights * per_node.prod(axis=1)).sum())


def exact_map_decision(reports, model, eps, delta, tie_tol=SCORE_TIE_TOL):
    """Arg-max of exact_likelihood over all state hypotheses, same tie rule as fuse."""
    reports = np.asarray(reports, dtype=np.uint8)
    m = reports.shape[1]
    hypotheses = all_bit_vectors(m)
    likes = np.array(
        [exact_likelihood(reports, hypotheses[i], model, eps, delta) for i in range(2**m)]
    )
    with np.errstate(divide="ignore"):
        return hypotheses[argmax_lex(np.log(likes), tie_tol)].copy()


@functools.lru_cache(maxsize=8)
def _all_report_rows(n, m):
    # packed node rows of every report matrix, shape (2**(n*m), n)
    bits = unpack_bits(np.arange(2 ** (n * m)), n * m).reshape(-1, n, m)
    rows = pack_bits(bits)
    rows.setflags(write=False)
    return rows


def all_report_probabilities(n, m, state_int, mask, eps, delta_b):
    """P(r | a, s) for every report matrix r, in row-major enumeration order.

    The report matrix with index v has its bits laid out row-major, first
    node in the most significant bits. `mask` is the Byzantine placement.
    """
    if n * m > MAX_REPORT_BITS:
        raise ValueError(f"n*m={n*m} exceeds the enumeration cap {MAX_REPORT_BITS}")
    mask = np.asarray(mask, dtype=bool)
    rows = _all_report_rows(n, m)
    mism = popcount(rows ^ int(state_int))
    honest_t, flipped_t = _channel_tables(eps, delta_b, m)
    per_node = np.where(mask[None, :], flipped_t[mism], honest_t[mism])
    return per_node.prod(axis=1)


def exact_error_probability(scenario, metric="per-component"):
    """Exact expected decision error of the MAP rule, no sampling.

    Enumerates placements, state sequences and report matrices, so n*m is
    capped at MAX_REPORT_BITS bits. `metric` selects the per-component bit
    error rate or the whole-sequence error rate.
    """
    if metric not in ("per-component", "per-sequence"):
        raise ValueError(f"unknown metric {metric!r}")
    n, m = scenario.n, scenario.m
    if n * m > MAX_REPORT_BITS:
        raise ValueError(f"n*m={n*m} exceeds the enumeration cap {MAX_REPORT_BITS}")
    rows = _all_report_rows(n, m)
    assumption = scenario.assumption
    bits = unpack_bits(np.arange(2 ** (n * m)), n * m).reshape(-1, n, m)
    decisions = np.array([pack_bits(fuse(bits[v], assumption)) for v in range(len(bits))])
    masks, weights = enumerate_placements(scenario.true_model, n)
    honest_t, flipped_t = _channel_tables(scenario.eps, scenario.delta_b, m)
    total = 0.0
    state_prior = 0.5**m
    for state_int in range(2**m):
        if metric == "per-component":
            err = popcount(decisions ^ state_int) / m
        else:
            err = (decisions != state_int).astype(np.float64)
        mism = popcount(rows ^ state_int)
        ph = honest_t[mism]
        pb = flipped_t[mism]
        for mask, w in zip(masks.astype(bool), weights):
            if w == 0.0:
                continue
            probs = np.where(mask[None, :], pb, ph).prod(axis=1)
            total += state_prior * w * float(probs @ err)
    return total
