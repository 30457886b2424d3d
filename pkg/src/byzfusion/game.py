"""Monte Carlo payoff matrices for the flip-probability duel, plus solvers.

The Byzantines pick a flip probability pmal_b (row player, maximizing the
fusion error), the fusion center picks the flip probability pmal_fc it
assumes when decoding (column player, minimizing). Payoffs are estimated
by simulation: for each row the trial realizations (states, placements,
noise) are drawn once and reused for every column, so column comparisons
within a row share common random numbers and row jobs are independent,
which keeps results identical under any worker count.

The solving side is standard finite zero-sum machinery: dominance checks,
pure saddle points, and mixed equilibria via a pair of linear programs with
a support-enumeration fallback used for cross-validation.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linprog

from .bits import pack_bits, popcount
from .fusion import BatchFuser, FusionAssumption, fuse_majority
from .model import (
    mix64,
    sample_placements_batch,
    sample_reports_batch,
    sample_states_batch,
    validate_model,
)

__all__ = [
    "DEFAULT_GRID",
    "StrategyGrid",
    "Scenario",
    "PayoffMatrix",
    "ErrorEstimate",
    "simulate_row",
    "estimate_payoff_matrix",
    "estimate_majority_pe",
    "find_dominant_row",
    "DominanceReport",
    "dominance_report",
    "find_pure_equilibria",
    "solve_lp_pair",
    "Equilibrium",
    "solve_mixed",
    "solve_mixed_enum",
    "eliminate_dominated",
    "equilibrium_payoff",
]

DEFAULT_GRID = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)

_MAJORITY_STREAM_TAG = 0x4D414A  # disjoint from payoff row indices

METRICS = ("per-component", "per-sequence")


@dataclass(frozen=True)
class StrategyGrid:
    """Ascending flip probabilities one side may play."""

    values: tuple = DEFAULT_GRID

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) == 0:
            raise ValueError("grid must be nonempty")
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise ValueError("grid values must lie in [0, 1]")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("grid values must be strictly ascending")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def index(self, value):
        return self.values.index(float(value))


@dataclass(frozen=True)
class Scenario:
    """Fixed experiment context: network size, components, eps, both models."""

    n: int
    m: int
    eps: float
    true_model: object
    fc_model: object

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be positive")
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")
        validate_model(self.true_model, self.n)
        validate_model(self.fc_model, self.n)


@dataclass(eq=False)
class PayoffMatrix:
    """Estimated error probabilities on a strategy grid, both metrics kept.

    `metric` selects which estimate the solvers and exporters read; the
    other stays available. Standard errors are per cell.
    """

    grid_b: StrategyGrid
    grid_fc: StrategyGrid
    pe_component: np.ndarray
    pe_sequence: np.ndarray
    se_component: np.ndarray
    se_sequence: np.ndarray
    trials: int
    seed: int
    metric: str = "per-component"

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")

    @property
    def pe(self):
        return self.pe_component if self.metric == "per-component" else self.pe_sequence

    @property
    def se(self):
        return self.se_component if self.metric == "per-component" else self.se_sequence

    def with_metric(self, metric):
        if metric not in METRICS:
            raise ValueError(f"unknown metric {metric!r}")
        return replace(self, metric=metric)

    def to_csv(self, comments=None):
        """Render the selected metric as CSV text, 6 significant digits.

        Standard metadata (seed, trials, metric) is embedded as comment
        lines; `comments` adds caller metadata ahead of it.
        """
        lines = []
        meta = dict(comments or {})
        meta.update(seed=self.seed, trials=self.trials, metric=self.metric)
        for key, value in meta.items():
            lines.append(f"# {key} = {value}")
        lines.append("pmal_b/pmal_fc," + ",".join(_fmt(v) for v in self.grid_fc.values))
        for i, pb in enumerate(self.grid_b.values):
            lines.append(_fmt(pb) + "," + ",".join(_fmt(v) for v in self.pe[i]))
        return "\n".join(lines) + "\n"

    def to_markdown(self, comments=None):
        """Same table as a markdown grid."""
        lines = []
        meta = dict(comments or {})
        meta.update(seed=self.seed, trials=self.trials, metric=self.metric)
        for key, value in meta.items():
            lines.append(f"*{key} = {value}*")
        if lines:
            lines.append("")
        header = "| pmal_b \\ pmal_fc | " + " | ".join(_fmt(v) for v in self.grid_fc.values) + " |"
        lines.append(header)
        lines.append("|" + " --- |" * (len(self.grid_fc) + 1))
        for i, pb in enumerate(self.grid_b.values):
            lines.append(
                "| " + _fmt(pb) + " | " + " | ".join(_fmt(v) for v in self.pe[i]) + " |"
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ErrorEstimate:
    """Monte Carlo error estimate of one decoding scheme, both metrics."""

    pe_component: float
    pe_sequence: float
    se_component: float
    se_sequence: float
    trials: int

    def value(self, metric="per-component"):
        if metric == "per-component":
            return self.pe_component
        if metric == "per-sequence":
            return self.pe_sequence
        raise ValueError(f"unknown metric {metric!r}")


def _fmt(v):
    return f"{v:.6g}"


def simulate_row(scenario, pmal_b, trials, rng):
    """Draw all realizations for one row: states (T, m) and reports (T, n, m).

    Fixed draw order (states, placements, local noise, flip noise) so a row
    is a pure function of its generator state.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    states = sample_states_batch(rng, scenario.m, trials)
    placements = sample_placements_batch(rng, scenario.true_model, scenario.n, trials)
    reports = sample_reports_batch(rng, states, placements, scenario.eps, pmal_b)
    return states, reports


def _row_errors(scenario, pmal_b, grid_fc, trials, row_seed):
    rng = np.random.default_rng(row_seed)
    states, reports = simulate_row(scenario, pmal_b, trials, rng)
    state_ints = pack_bits(states)
    report_ints = pack_bits(reports)
    n_cols = len(grid_fc)
    pe_c = np.empty(n_cols)
    pe_s = np.empty(n_cols)
    se_c = np.empty(n_cols)
    se_s = np.empty(n_cols)
    ddof = 1 if trials > 1 else 0
    for j, pmal_fc in enumerate(grid_fc.values):
        fuser = BatchFuser(
            FusionAssumption(scenario.fc_model, scenario.eps, pmal_fc), scenario.n, scenario.m
        )
        decisions = fuser.decide_ints(report_ints)
        bit_err = popcount(decisions ^ state_ints) / scenario.m
        seq_err = (decisions != state_ints).astype(np.float64)
        pe_c[j] = bit_err.mean()
        pe_s[j] = seq_err.mean()
        se_c[j] = bit_err.std(ddof=ddof) / np.sqrt(trials)
        se_s[j] = seq_err.std(ddof=ddof) / np.sqrt(trials)
    return pe_c, pe_s, se_c, se_s


def estimate_payoff_matrix(
    scenario,
    grid_b=None,
    grid_fc=None,
    trials=50_000,
    seed=0,
    metric="per-component",
    workers=1,
):
    """Estimate the payoff matrix over the two strategy grids.

    Row realizations are seeded by mix64(seed, row_index) independently of
    worker scheduling; every column of a row decodes the same realizations.
    """
    grid_b = grid_b if grid_b is not None else StrategyGrid()
    grid_fc = grid_fc if grid_fc is not None else StrategyGrid()
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if trials < 1:
        raise ValueError("trials must be positive")
    jobs = [
        (scenario, pmal_b, grid_fc, trials, mix64(seed, i))
        for i, pmal_b in enumerate(grid_b.values)
    ]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda args: _row_errors(*args), jobs))
    else:
        results = [_row_errors(*args) for args in jobs]
    pe_c = np.stack([r[0] for r in results])
    pe_s = np.stack([r[1] for r in results])
    se_c = np.stack([r[2] for r in results])
    se_s = np.stack([r[3] for r in results])
    return PayoffMatrix(
        grid_b=grid_b,
        grid_fc=grid_fc,
        pe_component=pe_c,
        pe_sequence=pe_s,
        se_component=se_c,
        se_sequence=se_s,
        trials=trials,
        seed=seed,
        metric=metric,
    )


def estimate_majority_pe(scenario, pmal_b, trials, seed):
    """Monte Carlo error of the componentwise majority vote at one pmal_b."""
    rng = np.random.default_rng(mix64(seed, _MAJORITY_STREAM_TAG))
    states, reports = simulate_row(scenario, pmal_b, trials, rng)
    votes = reports.astype(np.int64).sum(axis=1)
    decisions = (2 * votes > scenario.n).astype(np.uint8)
    bit_err = (decisions != states).mean(axis=1)
    seq_err = (decisions != states).any(axis=1).astype(np.float64)
    ddof = 1 if trials > 1 else 0
    return ErrorEstimate(
        pe_component=float(bit_err.mean()),
        pe_sequence=float(seq_err.mean()),
        se_component=float(bit_err.std(ddof=ddof) / np.sqrt(trials)),
        se_sequence=float(seq_err.std(ddof=ddof) / np.sqrt(trials)),
        trials=trials,
    )


def _entries(pm):
    a = pm.pe if isinstance(pm, PayoffMatrix) else np.asarray(pm, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValueError("payoff matrix must be 2-d and nonempty")
    if not np.isfinite(a).all():
        raise ValueError("payoff entries must be finite")
    return a


def find_dominant_row(pm, strict=True):
    """Row index best for the maximizer against every column, or None.

    strict: the row beats every other row in every column. Non-strict: the
    row is at least as good everywhere (first such index wins).
    """
    a = _entries(pm)
    for r in range(a.shape[0]):
        others = np.delete(a, r, axis=0)
        if strict:
            if (a[r] > others).all():
                return r
        elif (a[r] >= others).all():
            return r
    return None


@dataclass(frozen=True)
class DominanceReport:
    """Dominant-row verdict plus how far it sits above the noise floor."""

    row: int | None
    level: str  # "strict", "weak" or "none"
    margin_sigmas: float
    separated: bool


def dominance_report(pm, sigmas=3.0):
    """Judge row dominance against the estimation noise of a PayoffMatrix.

    margin_sigmas is the smallest gap between the candidate row and any
    rival cell in units of the combined standard error; `separated` means
    every gap clears `sigmas`.
    """
    if not isinstance(pm, PayoffMatrix):
        raise TypeError("dominance_report needs a PayoffMatrix with standard errors")
    row = find_dominant_row(pm, strict=True)
    level = "strict"
    if row is None:
        row = find_dominant_row(pm, strict=False)
        level = "weak" if row is not None else "none"
    if row is None:
        return DominanceReport(row=None, level="none", margin_sigmas=-np.inf, separated=False)
    gaps = pm.pe[row] - np.delete(pm.pe, row, axis=0)
    ses = np.sqrt(pm.se[row] ** 2 + np.delete(pm.se, row, axis=0) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(
            ses > 0, gaps / ses, np.where(gaps > 0, np.inf, np.where(gaps < 0, -np.inf, 0.0))
        )
    margin = float(ratio.min()) if ratio.size else np.inf
    return DominanceReport(row=row, level=level, margin_sigmas=margin, separated=margin > sigmas)


def find_pure_equilibria(pm):
    """All saddle points (row max of its column, column min of its row).

    Exact entry comparisons, row-major order.
    """
    a = _entries(pm)
    col_max = a.max(axis=0)
    row_min = a.min(axis=1)
    hits = (a == col_max[None, :]) & (a == row_min[:, None])
    return [(int(r), int(c)) for r, c in np.argwhere(hits)]


def saddle_points_within_noise(pm, sigmas=3.0):
    """Saddle points of an estimated matrix, up to sampling noise.

    A cell counts as a saddle when no same-column rival exceeds it and no
    same-row rival undercuts it by more than `sigmas` combined standard
    errors. With zero standard errors this reduces to find_pure_equilibria.
    Only meaningful on a PayoffMatrix carrying standard errors.
    """
    a = np.asarray(pm.pe, dtype=np.float64)
    se = np.asarray(pm.se, dtype=np.float64)
    if not (np.isfinite(a).all() and np.isfinite(se).all()):
        raise ValueError("payoff entries and standard errors must be finite")
    nr, nc = a.shape
    hits = []
    for r in range(nr):
        for c in range(nc):
            margin = sigmas * np.hypot(se[r, c], se[:, c])
            if np.any(a[:, c] > a[r, c] + margin):
                continue
            margin = sigmas * np.hypot(se[r, c], se[r, :])
            if np.any(a[r, :] < a[r, c] - margin):
                continue
            hits.append((r, c))
    return hits


def solve_lp_pair(a, method="highs"):
    """Maximin and minimax linear programs; returns (p, v_row, q, v_col).

    Entries are shifted to be positive before solving (pure conditioning,
    the shift is removed from the values).
    """
    a = _entries(a)
    nr, nc = a.shape
    shift = 1.0 - a.min()
    b = a + shift
    # row player: maximize v subject to b^T p >= v, p a distribution
    c_row = np.zeros(nr + 1)
    c_row[-1] = -1.0
    a_ub = np.hstack([-b.T, np.ones((nc, 1))])
    res_p = linprog(
        c_row,
        A_ub=a_ub,
        b_ub=np.zeros(nc),
        A_eq=np.concatenate([np.ones(nr), [0.0]])[None, :],
        b_eq=[1.0],
        bounds=[(0.0, 1.0)] * nr + [(None, None)],
        method=method,
    )
    if not res_p.success:
        raise RuntimeError(f"maximin LP failed: {res_p.message}")
    # column player: minimize u subject to b q <= u, q a distribution
    c_col = np.zeros(nc + 1)
    c_col[-1] = 1.0
    a_ub = np.hstack([b, -np.ones((nr, 1))])
    res_q = linprog(
        c_col,
        A_ub=a_ub,
        b_ub=np.zeros(nr),
        A_eq=np.concatenate([np.ones(nc), [0.0]])[None, :],
        b_eq=[1.0],
        bounds=[(0.0, 1.0)] * nc + [(None, None)],
        method=method,
    )
    if not res_q.success:
        raise RuntimeError(f"minimax LP failed: {res_q.message}")
    p = np.clip(res_p.x[:nr], 0.0, None)
    q = np.clip(res_q.x[:nc], 0.0, None)
    p /= p.sum()
    q /= q.sum()
    return p, float(res_p.x[-1] - shift), q, float(res_q.x[-1] - shift)


@dataclass(frozen=True)
class Equilibrium:
    """Optimal mixed strategies and game value; pure profile noted if one exists."""

    p: np.ndarray
    q: np.ndarray
    value: float
    pure: tuple | None
    dominant_row: int | None


def solve_mixed(pm, tol=1e-9):
    """Equilibrium of the zero-sum game given by the payoff matrix.

    A saddle point short-circuits to the degenerate mixture on its profile
    (value taken exactly from the entry). Otherwise the LP pair is solved
    and must agree within tol; support enumeration backs it up on small
    matrices if it does not.
    """
    a = _entries(pm)
    dominant = find_dominant_row(a, strict=True)
    saddles = find_pure_equilibria(a)
    if saddles:
        r, c = saddles[0]
        p = np.zeros(a.shape[0])
        q = np.zeros(a.shape[1])
        p[r] = 1.0
        q[c] = 1.0
        return Equilibrium(p=p, q=q, value=float(a[r, c]), pure=(r, c), dominant_row=dominant)
    p, v_row, q, v_col = solve_lp_pair(a)
    if abs(v_row - v_col) > tol:
        fallback = solve_mixed_enum(a) if max(a.shape) <= 10 else None
        if fallback is None:
            raise RuntimeError(
                f"LP duality gap {abs(v_row - v_col):.3e} exceeds tol and no fallback applies"
            )
        p, q, value = fallback
        return Equilibrium(p=p, q=q, value=value, pure=None, dominant_row=dominant)
    value = 0.5 * (v_row + v_col)
    return Equilibrium(p=p, q=q, value=float(value), pure=None, dominant_row=dominant)


def solve_mixed_enum(a, tol=1e-8):
    """Support enumeration over square supports; independent of the LP route.

    Returns (p, q, value) or None if no square support passes the checks.
    Capped at 10x10.
    """
    a = _entries(a)
    nr, nc = a.shape
    if max(nr, nc) > 10:
        raise ValueError("support enumeration capped at 10x10 matrices")
    scale = max(1.0, np.abs(a).max())
    for size in range(1, min(nr, nc) + 1):
        for rows in itertools.combinations(range(nr), size):
            for cols in itertools.combinations(range(nc), size):
                sub = a[np.ix_(rows, cols)]
                try:
                    q_sub, v = _support_solve(sub)
                    p_sub, v2 = _support_solve(sub.T)
                except np.linalg.LinAlgError:
                    continue
                if abs(v - v2) > tol * scale:
                    continue
                if (q_sub < -tol).any() or (p_sub < -tol).any():
                    continue
                p = np.zeros(nr)
                q = np.zeros(nc)
                p[list(rows)] = np.clip(p_sub, 0.0, None)
                q[list(cols)] = np.clip(q_sub, 0.0, None)
                p /= p.sum()
                q /= q.sum()
                if (a @ q > v + tol * scale).any():
                    continue
                if (p @ a < v - tol * scale).any():
                    continue
                return p, q, float(v)
    return None


def _support_solve(sub):
    # q and v with sub @ q = v * 1 and sum(q) = 1
    k = sub.shape[0]
    lhs = np.zeros((k + 1, k + 1))
    lhs[:k, :k] = sub
    lhs[:k, k] = -1.0
    lhs[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.solve(lhs, rhs)
    return sol[:k], sol[k]


def eliminate_dominated(pm):
    """Iterated strict dominance; returns (reduced, kept_rows, kept_cols)."""
    a = _entries(pm)
    rows = list(range(a.shape[0]))
    cols = list(range(a.shape[1]))
    changed = True
    while changed:
        changed = False
        sub = a[np.ix_(rows, cols)]
        for i in range(len(rows) - 1, -1, -1):
            others = np.delete(sub, i, axis=0)
            if others.size and (others > sub[i]).all(axis=1).any():
                del rows[i]
                changed = True
                sub = a[np.ix_(rows, cols)]
        for j in range(len(cols) - 1, -1, -1):
            others = np.delete(sub, j, axis=1)
            if others.size and (others < sub[:, [j]]).all(axis=0).any():
                del cols[j]
                changed = True
                sub = a[np.ix_(rows, cols)]
    kept_rows = np.array(rows, dtype=int)
    kept_cols = np.array(cols, dtype=int)
    if isinstance(pm, PayoffMatrix):
        reduced = replace(
            pm,
            grid_b=StrategyGrid(tuple(pm.grid_b.values[i] for i in rows)),
            grid_fc=StrategyGrid(tuple(pm.grid_fc.values[j] for j in cols)),
            pe_component=pm.pe_component[np.ix_(rows, cols)],
            pe_sequence=pm.pe_sequence[np.ix_(rows, cols)],
            se_component=pm.se_component[np.ix_(rows, cols)],
            se_sequence=pm.se_sequence[np.ix_(rows, cols)],
        )
    else:
        reduced = a[np.ix_(kept_rows, kept_cols)]
    return reduced, kept_rows, kept_cols


def equilibrium_payoff(pm, eq):
    """Expected payoff of the profile (eq.p, eq.q) under this matrix."""
    a = _entries(pm)
    return float(eq.p @ a @ eq.q)
