"""Joint MAP decoding of the state sequence from all reports.

The fusion center scores every candidate state sequence s against the full
report matrix r and returns the maximizer of P(r | s) (states are uniform,
so this is the MAP rule). What P(r | s) looks like depends on the Byzantine
model the center assumes:

* independent placements factor across nodes into a two-term mixture per
  node (``log_score_independent``);
* fixed-count and bounded-minority placements couple the nodes and reduce
  to subset-weighted sums handled by :mod:`byzfusion.dp`
  (``log_score_subset``).

Scores are kept in the log domain throughout. Ties are broken toward the
lexicographically smallest sequence: any hypothesis scoring within
``SCORE_TIE_TOL`` of the maximum counts as tied. The tolerance makes exact
mathematical ties (a fully blinded center, perfectly balanced reports)
deterministic across the scalar path, the vectorized path and exhaustive
reference implementations, which may round differently.

``fuse`` is the readable one-shot rule. ``BatchFuser`` fixes the assumption
once and decodes packed report batches; the Monte Carlo game engine uses it.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from . import dp
from .bits import all_bit_vectors, pack_bits, popcount, unpack_bits
from .model import (
    BoundedBelowHalf,
    FixedCount,
    IndependentAlpha,
    UnconstrainedMaxEntropy,
    bounded_k_max,
    crossover_delta,
)

__all__ = [
    "SCORE_TIE_TOL",
    "MAX_FUSE_COMPONENTS",
    "FusionAssumption",
    "match_counts",
    "honest_log_weights",
    "byzantine_log_weights",
    "log_score_independent",
    "log_score_subset",
    "log_score",
    "argmax_lex",
    "fuse",
    "fuse_majority",
    "BatchFuser",
]

SCORE_TIE_TOL = 1e-9
MAX_FUSE_COMPONENTS = 24


@dataclass(frozen=True)
class FusionAssumption:
    """What the fusion center believes: placement model, eps and flip rate."""

    model: object
    eps: float
    pmal_fc: float

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")
        if not 0.0 <= self.pmal_fc <= 1.0:
            raise ValueError("pmal_fc must lie in [0, 1]")

    @property
    def delta_fc(self):
        return crossover_delta(self.eps, self.pmal_fc)


def match_counts(reports, states):
    """Per-node count of report bits agreeing with the candidate states."""
    reports = np.asarray(reports)
    states = np.asarray(states)
    if reports.ndim != 2 or states.ndim != 1 or reports.shape[1] != states.shape[0]:
        raise ValueError("reports must be (n, m) and states (m,)")
    return (reports == states[None, :]).sum(axis=1)


def honest_log_weights(eps, m):
    """log[(1-eps)^c * eps^(m-c)] for c = 0..m; xlogy keeps 0*log(0) = 0."""
    c = np.arange(m + 1, dtype=np.float64)
    return xlogy(c, 1.0 - eps) + xlogy(m - c, eps)


def byzantine_log_weights(delta, m):
    """Same table for the flipped channel with crossover delta."""
    return honest_log_weights(delta, m)


def _independent_mix_weights(alpha, eps, delta_fc, m):
    # per-node log[(1-a) (1-e)^c e^(m-c) + a (1-d)^c d^(m-c)] indexed by c
    with np.errstate(divide="ignore"):
        la = np.log(alpha)
        lna = np.log1p(-alpha) if alpha < 1.0 else -np.inf
    return np.logaddexp(lna + honest_log_weights(eps, m), la + byzantine_log_weights(delta_fc, m))


def log_score_independent(reports, states, alpha, eps, delta_fc):
    """log P(r | s) when nodes are Byzantine independently with rate alpha."""
    counts = match_counts(reports, states)
    m = np.asarray(states).shape[0]
    w = _independent_mix_weights(alpha, eps, delta_fc, m)
    return float(w[counts].sum())


def log_score_subset(reports, states, fc_model, eps, delta_fc):
    """log P(r | s) for placement models that fix or bound the Byzantine count."""
    counts = match_counts(reports, states)
    m = np.asarray(states).shape[0]
    n = counts.shape[0]
    weights = dp.NodeWeights(
        logb=byzantine_log_weights(delta_fc, m)[counts],
        logh=honest_log_weights(eps, m)[counts],
    )
    if isinstance(fc_model, FixedCount):
        return dp.subset_sum(weights, fc_model.n_b) - _log_comb(n, fc_model.n_b)
    if isinstance(fc_model, BoundedBelowHalf):
        cap = bounded_k_max(fc_model, n)
        f_all = dp.subset_sum_all(weights, cap)
        norm = math.log(sum(math.comb(n, j) for j in range(cap + 1)))
        return float(np.logaddexp.reduce(f_all)) - norm
    raise TypeError(f"not a subset-count model: {fc_model!r}")


def _log_comb(n, k):
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def log_score(reports, states, assumption):
    """Dispatch on the assumed placement model; normalized log P(r | s)."""
    model = assumption.model
    if isinstance(model, UnconstrainedMaxEntropy):
        return log_score_independent(reports, states, 0.5, assumption.eps, assumption.delta_fc)
    if isinstance(model, IndependentAlpha):
        return log_score_independent(
            reports, states, model.alpha, assumption.eps, assumption.delta_fc
        )
    return log_score_subset(reports, states, model, assumption.eps, assumption.delta_fc)


def argmax_lex(scores, tol=SCORE_TIE_TOL):
    """Index of the first entry within tol of the maximum."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.shape[0] == 0:
        raise ValueError("scores must be a nonempty 1-d array")
    best = scores.max()
    if math.isinf(best) and best < 0:
        return 0
    return int(np.argmax(scores >= best - tol))


def fuse(reports, assumption, tie_tol=SCORE_TIE_TOL):
    """MAP state sequence for one report matrix, shape (m,) uint8.

    Enumerates all 2**m hypotheses, so m is capped at MAX_FUSE_COMPONENTS.
    Batches should go through BatchFuser instead.
    """
    reports = np.asarray(reports)
    if reports.ndim != 2:
        raise ValueError("reports must be (n, m)")
    m = reports.shape[1]
    if m > MAX_FUSE_COMPONENTS:
        raise ValueError(f"m={m} exceeds the enumeration cap {MAX_FUSE_COMPONENTS}")
    hypotheses = all_bit_vectors(m)
    scores = np.empty(2**m)
    for idx in range(2**m):
        scores[idx] = log_score(reports, hypotheses[idx], assumption)
    return hypotheses[argmax_lex(scores, tie_tol)].copy()


def fuse_majority(reports):
    """Componentwise majority vote over nodes; ties resolve to 0."""
    reports = np.asarray(reports)
    if reports.ndim != 2:
        raise ValueError("reports must be (n, m)")
    n = reports.shape[0]
    ones = reports.astype(np.int64).sum(axis=0)
    return (2 * ones > n).astype(np.uint8)


@functools.lru_cache(maxsize=8)
def _match_count_table(m):
    # table[v, h] = number of bit positions where v and h agree, m bits each
    v = np.arange(2**m)
    tab = (m - popcount(v[:, None] ^ v[None, :])).astype(np.int8)
    tab.setflags(write=False)
    return tab


class BatchFuser:
    """Vectorized MAP decoding of many report matrices under one assumption.

    Reports enter packed: one int per node row (first component = MSB).
    Decisions come back packed the same way and match ``fuse`` decision for
    decision under the shared tie rule. Keeps (2**m, 2**m) tables, so m is
    capped at 12.

    For the subset-count models the per-trial DP runs over elementary
    symmetric polynomials of the per-node Byzantine/honest likelihood
    ratios, which is the same recursion as :func:`byzfusion.dp.subset_sum`
    after factoring out the all-honest product. When the ratio table would
    overflow (degenerate eps or delta), scoring falls back to a log-domain
    variant of the recursion.
    """

    MAX_M = 12

    def __init__(self, assumption, n, m, tie_tol=SCORE_TIE_TOL, chunk_cells=1 << 22):
        if m > self.MAX_M:
            raise ValueError(f"m={m} exceeds the BatchFuser cap {self.MAX_M}")
        if n < 1:
            raise ValueError("need at least one node")
        self.assumption = assumption
        self.n = n
        self.m = m
        self.tie_tol = float(tie_tol)
        self.n_hyp = 2**m
        self._rows_per_chunk = max(1, chunk_cells // (n * self.n_hyp))
        lut = _match_count_table(m)
        model = assumption.model
        eps = assumption.eps
        delta = assumption.delta_fc
        logh = honest_log_weights(eps, m)
        logb = byzantine_log_weights(delta, m)
        if isinstance(model, (UnconstrainedMaxEntropy, IndependentAlpha)):
            alpha = 0.5 if isinstance(model, UnconstrainedMaxEntropy) else model.alpha
            self._kind = "independent"
            self._node_score = _independent_mix_weights(alpha, eps, delta, m)[lut]
            return
        if isinstance(model, FixedCount):
            self._kind = "fixed"
            self._k_cap = model.n_b
        elif isinstance(model, BoundedBelowHalf):
            self._kind = "bounded"
            self._k_cap = bounded_k_max(model, n)
        else:
            raise TypeError(f"unknown Byzantine model {model!r}")
        if self._k_cap > n:
            raise ValueError(f"Byzantine count cap {self._k_cap} exceeds n={n}")
        self._node_logh = logh[lut]
        finite_h = np.isfinite(logh).all()
        ratios = logb - logh if finite_h else None
        headroom = np.inf
        if finite_h:
            headroom = _log_comb(n, self._k_cap) + self._k_cap * max(0.0, ratios.max())
        if headroom < 600.0:
            self._node_ratio = np.exp(ratios)[lut]
            self._node_logb = None
        else:
            self._node_ratio = None
            self._node_logb = logb[lut]

    def scores(self, report_ints):
        """Log scores (up to a constant) for every hypothesis, shape (T, 2**m)."""
        report_ints = np.ascontiguousarray(report_ints, dtype=np.int64)
        if report_ints.ndim != 2 or report_ints.shape[1] != self.n:
            raise ValueError("report_ints must be (trials, n)")
        out = np.empty((report_ints.shape[0], self.n_hyp))
        for start in range(0, report_ints.shape[0], self._rows_per_chunk):
            chunk = report_ints[start : start + self._rows_per_chunk]
            out[start : start + chunk.shape[0]] = self._score_chunk(chunk)
        return out

    def _score_chunk(self, chunk):
        if self._kind == "independent":
            return self._node_score[chunk].sum(axis=1)
        if self._node_ratio is not None:
            return self._score_chunk_ratio(chunk)
        return self._score_chunk_log(chunk)

    def _score_chunk_ratio(self, chunk):
        base = self._node_logh[chunk].sum(axis=1)
        rho = self._node_ratio[chunk]
        k_cap = self._k_cap
        esym = np.zeros((k_cap + 1,) + base.shape)
        esym[0] = 1.0
        for i in range(self.n):
            r_i = rho[:, i, :]
            for k in range(min(k_cap, i + 1), 0, -1):
                esym[k] += r_i * esym[k - 1]
        with np.errstate(divide="ignore"):
            if self._kind == "fixed":
                return base + np.log(esym[k_cap])
            return base + np.log(esym.sum(axis=0))

    def _score_chunk_log(self, chunk):
        logh = self._node_logh[chunk]
        logb = self._node_logb[chunk]
        k_cap = self._k_cap
        g = np.full((k_cap + 1, chunk.shape[0], self.n_hyp), -np.inf)
        g[0] = 0.0
        for i in range(self.n):
            lh_i = logh[:, i, :]
            lb_i = logb[:, i, :]
            for k in range(min(k_cap, i + 1), 0, -1):
                g[k] = np.logaddexp(g[k] + lh_i, g[k - 1] + lb_i)
            g[0] += lh_i
        if self._kind == "fixed":
            return g[k_cap]
        return np.logaddexp.reduce(g, axis=0)

    def decide_ints(self, report_ints):
        """Packed MAP decision per trial, shape (T,) int64."""
        report_ints = np.ascontiguousarray(report_ints, dtype=np.int64)
        if report_ints.ndim != 2 or report_ints.shape[1] != self.n:
            raise ValueError("report_ints must be (trials, n)")
        out = np.empty(report_ints.shape[0], dtype=np.int64)
        for start in range(0, report_ints.shape[0], self._rows_per_chunk):
            chunk = report_ints[start : start + self._rows_per_chunk]
            sc = self._score_chunk(chunk)
            best = sc.max(axis=1, keepdims=True)
            out[start : start + chunk.shape[0]] = np.argmax(sc >= best - self.tie_tol, axis=1)
        return out

    def decide(self, reports):
        """Convenience wrapper taking (T, n, m) bit arrays, returning (T, m) bits."""
        reports = np.asarray(reports)
        if reports.ndim != 3 or reports.shape[1:] != (self.n, self.m):
            raise ValueError("reports must be (trials, n, m)")
        return unpack_bits(self.decide_ints(pack_bits(reports)), self.m)
