"""Network model: binary states, Byzantine placements, noisy reports.

A network of n nodes observes a sequence of m binary state components.
Each node decides every component locally with error probability eps and
reports its decisions to a fusion center. Honest nodes report their local
decisions as they are; Byzantine nodes flip each reported bit independently
with probability pmal. From the fusion center's point of view a Byzantine
report bit therefore differs from the true state with the crossover
probability delta = eps * (1 - pmal) + (1 - eps) * pmal.

Which nodes are Byzantine is drawn from one of four placement models:

* ``UnconstrainedMaxEntropy``: every node is Byzantine independently with
  probability one half (the max-entropy distribution over placements).
* ``IndependentAlpha``: every node independently with probability alpha.
* ``BoundedBelowHalf``: uniform over placements where Byzantines are a
  strict minority (popcount < n/2), optionally tightened via ``k_max``.
* ``FixedCount``: uniform over placements with exactly ``n_b`` Byzantines.

All samplers are pure functions of the generator handed to them, so a run
is reproducible from its seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "crossover_delta",
    "ChannelParams",
    "UnconstrainedMaxEntropy",
    "IndependentAlpha",
    "BoundedBelowHalf",
    "FixedCount",
    "ByzantineModel",
    "validate_model",
    "bounded_k_max",
    "mix64",
    "derive_rng",
    "sample_states",
    "sample_placement",
    "sample_reports",
    "sample_states_batch",
    "sample_placements_batch",
    "sample_reports_batch",
]

_MASK64 = (1 << 64) - 1


def _check_prob(value, name):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def crossover_delta(eps, pmal):
    """Probability that a flipping node's report bit disagrees with the state."""
    eps = _check_prob(eps, "eps")
    pmal = _check_prob(pmal, "pmal")
    return eps * (1.0 - pmal) + (1.0 - eps) * pmal


@dataclass(frozen=True)
class ChannelParams:
    """Local decision error eps and Byzantine flip probability pmal."""

    eps: float
    pmal: float

    def __post_init__(self):
        _check_prob(self.eps, "eps")
        _check_prob(self.pmal, "pmal")

    @property
    def delta(self):
        return crossover_delta(self.eps, self.pmal)


@dataclass(frozen=True)
class UnconstrainedMaxEntropy:
    """Each node Byzantine independently with probability 1/2."""


@dataclass(frozen=True)
class IndependentAlpha:
    """Each node Byzantine independently with probability alpha."""

    alpha: float

    def __post_init__(self):
        _check_prob(self.alpha, "alpha")


@dataclass(frozen=True)
class BoundedBelowHalf:
    """Uniform over placements whose Byzantine count is a strict minority.

    The default bound keeps popcount(a) < n/2, i.e. at most (n - 1) // 2
    Byzantines. Passing ``k_max`` substitutes a different inclusive cap.
    """

    k_max: int | None = None

    def __post_init__(self):
        if self.k_max is not None and self.k_max < 0:
            raise ValueError("k_max must be nonnegative")


@dataclass(frozen=True)
class FixedCount:
    """Uniform over the (n choose n_b) placements with exactly n_b Byzantines."""

    n_b: int

    def __post_init__(self):
        if self.n_b < 0:
            raise ValueError("n_b must be nonnegative")


ByzantineModel = UnconstrainedMaxEntropy | IndependentAlpha | BoundedBelowHalf | FixedCount


def validate_model(model, n):
    """Raise ValueError if `model` cannot apply to an n-node network."""
    if n < 1:
        raise ValueError("need at least one node")
    if isinstance(model, FixedCount):
        if model.n_b > n:
            raise ValueError(f"n_b={model.n_b} exceeds network size {n}")
    elif isinstance(model, BoundedBelowHalf):
        if model.k_max is not None and model.k_max > n:
            raise ValueError(f"k_max={model.k_max} exceeds network size {n}")
    elif not isinstance(model, (UnconstrainedMaxEntropy, IndependentAlpha)):
        raise TypeError(f"unknown Byzantine model {model!r}")


def bounded_k_max(model, n):
    """Inclusive cap on the Byzantine count for a BoundedBelowHalf model."""
    if model.k_max is not None:
        return min(model.k_max, n)
    return (n - 1) // 2


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix64(seed, *indices):
    """Deterministic 64-bit hash of a seed and an index path.

    Chained splitmix64 rounds. Used to derive substream seeds so work units
    (payoff matrix rows, mainly) can run in any order or in parallel without
    changing their draws.
    """
    h = _splitmix64(int(seed) & _MASK64)
    for v in indices:
        h = _splitmix64(h ^ (int(v) & _MASK64))
    return h


def derive_rng(seed, *indices):
    """Generator seeded from mix64(seed, *indices)."""
    return np.random.default_rng(mix64(seed, *indices))


def sample_states(rng, m):
    """One state sequence: m fair bits, shape (m,) uint8."""
    if m < 1:
        raise ValueError("m must be positive")
    return (rng.random(m) < 0.5).astype(np.uint8)


def sample_placement(rng, model, n):
    """One Byzantine indicator vector of shape (n,) uint8."""
    return sample_placements_batch(rng, model, n, 1)[0]


def sample_reports(rng, states, placement, eps, pmal_b):
    """Report matrix of shape (n, m) for one trial.

    Draw order is fixed: local decision noise for all node/component pairs
    first, then flip noise for all pairs. Flip noise is drawn for honest
    nodes too and masked out, so consumption of the stream does not depend
    on the placement.
    """
    states = np.asarray(states, dtype=np.uint8)
    placement = np.asarray(placement, dtype=np.uint8)
    reports = sample_reports_batch(rng, states[None, :], placement[None, :], eps, pmal_b)
    return reports[0]


def sample_states_batch(rng, m, count):
    """count independent state sequences, shape (count, m) uint8."""
    if m < 1:
        raise ValueError("m must be positive")
    return (rng.random((count, m)) < 0.5).astype(np.uint8)


def sample_placements_batch(rng, model, n, count):
    """count placements, shape (count, n) uint8."""
    validate_model(model, n)
    if isinstance(model, UnconstrainedMaxEntropy):
        return (rng.random((count, n)) < 0.5).astype(np.uint8)
    if isinstance(model, IndependentAlpha):
        return (rng.random((count, n)) < model.alpha).astype(np.uint8)
    if isinstance(model, FixedCount):
        # rank n uniforms per row; the n_b smallest mark the Byzantines
        u = rng.random((count, n))
        order = np.argsort(u, axis=1)
        flags = np.zeros((count, n), dtype=np.uint8)
        np.put_along_axis(flags, order[:, : model.n_b], 1, axis=1)
        return flags
    # BoundedBelowHalf: rejection from the unconstrained model
    cap = bounded_k_max(model, n)
    out = np.empty((count, n), dtype=np.uint8)
    filled = 0
    while filled < count:
        need = count - filled
        # acceptance rate is >= 0.4 for the default cap; oversample a little
        draw = max(64, int(need * 2.8) + 8)
        cand = (rng.random((draw, n)) < 0.5).astype(np.uint8)
        good = cand[cand.sum(axis=1) <= cap]
        take = min(len(good), need)
        out[filled : filled + take] = good[:take]
        filled += take
    return out


def sample_reports_batch(rng, states, placements, eps, pmal_b):
    """Report matrices for a batch of trials, shape (count, n, m) uint8.

    states has shape (count, m), placements (count, n). Same fixed draw
    order as sample_reports.
    """
    eps = _check_prob(eps, "eps")
    pmal_b = _check_prob(pmal_b, "pmal_b")
    states = np.asarray(states, dtype=np.uint8)
    placements = np.asarray(placements, dtype=np.uint8)
    if states.ndim != 2 or placements.ndim != 2 or states.shape[0] != placements.shape[0]:
        raise ValueError("states and placements must be 2-d with matching first axis")
    count, m = states.shape
    n = placements.shape[1]
    local_noise = rng.random((count, n, m)) < eps
    flip_noise = rng.random((count, n, m)) < pmal_b
    flips = flip_noise & (placements[:, :, None] == 1)
    reports = states[:, None, :] ^ local_noise.astype(np.uint8) ^ flips.astype(np.uint8)
    return reports.astype(np.uint8)
