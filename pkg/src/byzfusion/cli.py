"""Config-driven command line runner.

Subcommands::

    byzfusion payoff       estimate the payoff matrix, write payoff.csv/.md
    byzfusion equilibrium  solve the matrix game, write equilibrium.md
    byzfusion compare      majority vote vs optimum fusion, write compare.md
    byzfusion oracle-check cross-check Monte Carlo against exact enumeration

Experiments are described by a flat ``key = value`` config file; unknown
keys are rejected. A few flags (--seed, --trials, --metric, --out,
--workers) override the file. Every emitted file embeds the hash of the
effective experiment config and the seed, and contains no timestamps, so
identical inputs reproduce identical bytes.

Exit codes: 0 success, 1 config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .game import (
    PayoffMatrix,
    Scenario,
    StrategyGrid,
    dominance_report,
    eliminate_dominated,
    equilibrium_payoff,
    estimate_majority_pe,
    estimate_payoff_matrix,
    find_pure_equilibria,
    saddle_points_within_noise,
    solve_mixed,
)
from .fusion import BatchFuser
from .model import (
    BoundedBelowHalf,
    FixedCount,
    IndependentAlpha,
    UnconstrainedMaxEntropy,
    validate_model,
)
from .oracle import ExactScenario, exact_error_probability

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "config_hash", "main"]


class ConfigError(Exception):
    """Bad flags, bad config file or inconsistent experiment parameters."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def parse_model(text):
    """Byzantine model from its config spelling.

    unconstrained | independent:<alpha> | bounded[:<k_max>] | fixed:<n_b>
    """
    head, sep, arg = text.strip().partition(":")
    try:
        if head == "unconstrained":
            if sep:
                raise ValueError("unconstrained takes no parameter")
            return UnconstrainedMaxEntropy()
        if head == "independent":
            return IndependentAlpha(float(arg))
        if head == "bounded":
            return BoundedBelowHalf(int(arg)) if sep else BoundedBelowHalf()
        if head == "fixed":
            return FixedCount(int(arg))
    except ValueError as exc:
        raise ConfigError(f"bad model {text!r}: {exc}") from exc
    raise ConfigError(f"unknown model {text!r}")


def model_to_text(model):
    if isinstance(model, UnconstrainedMaxEntropy):
        return "unconstrained"
    if isinstance(model, IndependentAlpha):
        return f"independent:{model.alpha!r}"
    if isinstance(model, BoundedBelowHalf):
        return "bounded" if model.k_max is None else f"bounded:{model.k_max}"
    if isinstance(model, FixedCount):
        return f"fixed:{model.n_b}"
    raise TypeError(f"unknown model {model!r}")


def _parse_grid(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from exc


_CONFIG_KEYS = {
    "n": int,
    "m": int,
    "eps": float,
    "true_model": str,
    "fc_model": str,
    "grid_b": str,
    "grid_fc": str,
    "trials": int,
    "seed": int,
    "metric": str,
    "workers": int,
    "out": str,
    "payoff_file": str,
}

_DEFAULTS = {
    "n": 20,
    "m": 4,
    "eps": 0.1,
    "true_model": "unconstrained",
    "fc_model": None,  # defaults to true_model
    "grid_b": "0.5,0.6,0.7,0.8,0.9,1.0",
    "grid_fc": "0.5,0.6,0.7,0.8,0.9,1.0",
    "trials": 50_000,
    "seed": 0,
    "metric": "per-component",
    "workers": 1,
    "out": "out",
    "payoff_file": None,
}


@dataclass
class ExperimentConfig:
    scenario: Scenario
    grid_b: StrategyGrid
    grid_fc: StrategyGrid
    trials: int
    seed: int
    metric: str
    workers: int
    out: str
    payoff_file: str | None

    def canonical_text(self):
        """Normalized experiment description; execution details excluded.

        Worker count and output directory do not change results, so they do
        not participate in the hash. An injected payoff file contributes a
        digest of its bytes.
        """
        sc = self.scenario
        pairs = [
            ("n", sc.n),
            ("m", sc.m),
            ("eps", repr(sc.eps)),
            ("true_model", model_to_text(sc.true_model)),
            ("fc_model", model_to_text(sc.fc_model)),
            ("grid_b", ",".join(repr(v) for v in self.grid_b.values)),
            ("grid_fc", ",".join(repr(v) for v in self.grid_fc.values)),
            ("trials", self.trials),
            ("seed", self.seed),
            ("metric", self.metric),
        ]
        if self.payoff_file is not None:
            with open(self.payoff_file, "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()
            pairs.append(("payoff_sha256", digest))
        return "\n".join(f"{k} = {v}" for k, v in pairs) + "\n"


def config_hash(cfg):
    """Short digest identifying the effective experiment."""
    return hashlib.sha256(cfg.canonical_text().encode()).hexdigest()[:16]


def _read_config_file(path):
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config(config_path=None, overrides=None):
    """Effective config from defaults, optional file, then CLI overrides."""
    raw = dict(_DEFAULTS)
    if config_path is not None:
        file_values = _read_config_file(config_path)
        for key, text in file_values.items():
            try:
                raw[key] = _CONFIG_KEYS[key](text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {text!r}") from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    if raw["fc_model"] is None:
        raw["fc_model"] = raw["true_model"]
    true_model = parse_model(raw["true_model"])
    fc_model = parse_model(raw["fc_model"])
    try:
        scenario = Scenario(
            n=int(raw["n"]), m=int(raw["m"]), eps=float(raw["eps"]),
            true_model=true_model, fc_model=fc_model,
        )
        grid_b = StrategyGrid(_parse_grid(raw["grid_b"]) if isinstance(raw["grid_b"], str) else raw["grid_b"])
        grid_fc = StrategyGrid(_parse_grid(raw["grid_fc"]) if isinstance(raw["grid_fc"], str) else raw["grid_fc"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if scenario.m > BatchFuser.MAX_M:
        raise ConfigError(f"m={scenario.m} exceeds the simulation cap {BatchFuser.MAX_M}")
    metric = raw["metric"]
    if metric not in ("per-component", "per-sequence"):
        raise ConfigError(f"unknown metric {metric!r}")
    trials = int(raw["trials"])
    workers = int(raw["workers"])
    if trials < 1 or workers < 1:
        raise ConfigError("trials and workers must be positive")
    return ExperimentConfig(
        scenario=scenario,
        grid_b=grid_b,
        grid_fc=grid_fc,
        trials=trials,
        seed=int(raw["seed"]),
        metric=metric,
        workers=workers,
        out=str(raw["out"]),
        payoff_file=raw["payoff_file"],
    )


def _write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _meta_comments(cfg, matrix_seed=None):
    return {"config": config_hash(cfg), "tool": f"byzfusion {__version__}"}


def _write_meta(cfg, subcommand):
    text = (
        f"tool = byzfusion {__version__}\n"
        f"subcommand = {subcommand}\n"
        f"config = {config_hash(cfg)}\n" + cfg.canonical_text()
    )
    _write(os.path.join(cfg.out, "meta.txt"), text)


def _estimate(cfg):
    return estimate_payoff_matrix(
        cfg.scenario,
        grid_b=cfg.grid_b,
        grid_fc=cfg.grid_fc,
        trials=cfg.trials,
        seed=cfg.seed,
        metric=cfg.metric,
        workers=cfg.workers,
    )


def load_payoff_csv(path, metric="per-component"):
    """PayoffMatrix from a payoff.csv written by this tool (or hand-made).

    Injected matrices are treated as exact: both metrics are set to the
    stored entries and standard errors are zero.
    """
    meta = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].partition("=")
                if sep:
                    meta[key.strip()] = value.strip()
                continue
            rows.append([cell.strip() for cell in line.split(",")])
    if len(rows) < 2:
        raise ValueError(f"{path}: expected a header row and at least one data row")
    grid_fc = StrategyGrid(tuple(float(v) for v in rows[0][1:]))
    grid_b = StrategyGrid(tuple(float(r[0]) for r in rows[1:]))
    entries = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    if entries.shape != (len(grid_b), len(grid_fc)):
        raise ValueError(f"{path}: ragged payoff table")
    zeros = np.zeros_like(entries)
    return PayoffMatrix(
        grid_b=grid_b,
        grid_fc=grid_fc,
        pe_component=entries,
        pe_sequence=entries.copy(),
        se_component=zeros,
        se_sequence=zeros.copy(),
        trials=int(meta.get("trials", 0)),
        seed=int(meta.get("seed", 0)),
        metric=metric,
    )


def run_payoff(cfg):
    pm = _estimate(cfg)
    comments = _meta_comments(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    _write(os.path.join(cfg.out, "payoff.csv"), pm.to_csv(comments))
    _write(os.path.join(cfg.out, "payoff.md"), pm.to_markdown(comments))
    _write_meta(cfg, "payoff")
    print(f"payoff: wrote {cfg.out}/payoff.csv ({len(cfg.grid_b)}x{len(cfg.grid_fc)}, "
          f"{cfg.trials} trials)")


def _format_profile(grid_b, grid_fc, rc):
    r, c = rc
    return f"(pmal_b={_g(grid_b[r])}, pmal_fc={_g(grid_fc[c])})"


def _g(v):
    return f"{v:.6g}"


def _mixture_lines(label, grid, weights):
    lines = [f"{label}:"]
    for value, w in zip(grid.values, weights):
        if w > 1e-12:
            lines.append(f"  - {_g(value)} with probability {_g(w)}")
    return lines


def run_equilibrium(cfg):
    if cfg.payoff_file is not None:
        pm = load_payoff_csv(cfg.payoff_file, metric=cfg.metric)
    else:
        pm = _estimate(cfg)
    eq = solve_mixed(pm)
    report = dominance_report(pm)
    saddles = find_pure_equilibria(pm)
    _, kept_rows, kept_cols = eliminate_dominated(pm)
    lines = [
        "# Equilibrium report",
        "",
        f"*config = {config_hash(cfg)}*",
        f"*seed = {pm.seed}, trials = {pm.trials}, metric = {pm.metric}*",
        "",
        "## Dominance",
        "",
    ]
    if report.row is None:
        lines.append("No dominant row.")
    else:
        lines.append(
            f"Row pmal_b={_g(pm.grid_b[report.row])} is {report.level}ly dominant "
            f"(margin {_g(report.margin_sigmas)} standard errors, "
            f"separated: {'yes' if report.separated else 'no'})."
        )
    lines += [
        "",
        f"Iterated strict dominance keeps rows "
        f"{[_g(pm.grid_b[i]) for i in kept_rows]} and columns "
        f"{[_g(pm.grid_fc[j]) for j in kept_cols]}.",
        "",
        "## Pure equilibria",
        "",
    ]
    if saddles:
        for rc in saddles:
            lines.append(f"- {_format_profile(pm.grid_b, pm.grid_fc, rc)} "
                         f"with value {_g(pm.pe[rc])}")
    else:
        lines.append("None.")
    # estimated entries carry sampling noise, so also list the cells that are
    # saddle points up to three combined standard errors
    noisy = saddle_points_within_noise(pm)
    lines += ["", "## Saddle points within noise (3 standard errors)", ""]
    if noisy:
        for rc in noisy:
            lines.append(f"- {_format_profile(pm.grid_b, pm.grid_fc, rc)}")
    else:
        lines.append("None.")
    lines += ["", "## Equilibrium", ""]
    if eq.pure is not None:
        lines.append(f"Pure: {_format_profile(pm.grid_b, pm.grid_fc, eq.pure)}.")
    else:
        lines += _mixture_lines("Byzantine mixture over pmal_b", pm.grid_b, eq.p)
        lines += _mixture_lines("Fusion center mixture over pmal_fc", pm.grid_fc, eq.q)
    lines.append(f"Game value: {_g(eq.value)}")
    lines.append("")
    os.makedirs(cfg.out, exist_ok=True)
    _write(os.path.join(cfg.out, "equilibrium.md"), "\n".join(lines))
    _write_meta(cfg, "equilibrium")
    print(f"equilibrium: value {_g(eq.value)}, "
          f"{'pure' if eq.pure is not None else 'mixed'}; wrote {cfg.out}/equilibrium.md")


def run_compare(cfg):
    pm = _estimate(cfg)
    eq = solve_mixed(pm)
    opt = equilibrium_payoff(pm, eq)
    worst = None
    for pmal_b in cfg.grid_b.values:
        est = estimate_majority_pe(cfg.scenario, pmal_b, cfg.trials, cfg.seed)
        if worst is None or est.value(cfg.metric) > worst[1].value(cfg.metric):
            worst = (pmal_b, est)
    maj_pb, maj = worst
    lines = [
        "# Majority vote vs optimum fusion",
        "",
        f"*config = {config_hash(cfg)}*",
        f"*seed = {cfg.seed}, trials = {cfg.trials}, metric = {cfg.metric}*",
        "",
        "| scheme | error probability | standard error |",
        "| --- | --- | --- |",
        f"| majority vote (worst pmal_b = {_g(maj_pb)}) | {_g(maj.value(cfg.metric))} | "
        f"{_g(maj.se_component if cfg.metric == 'per-component' else maj.se_sequence)} |",
        f"| optimum fusion (equilibrium) | {_g(opt)} | |",
        "",
    ]
    if eq.pure is not None:
        lines.append(f"Equilibrium is pure at "
                     f"{_format_profile(pm.grid_b, pm.grid_fc, eq.pure)}.")
    else:
        lines += _mixture_lines("Byzantine mixture over pmal_b", pm.grid_b, eq.p)
        lines += _mixture_lines("Fusion center mixture over pmal_fc", pm.grid_fc, eq.q)
    lines.append("")
    os.makedirs(cfg.out, exist_ok=True)
    _write(os.path.join(cfg.out, "compare.md"), "\n".join(lines))
    _write_meta(cfg, "compare")
    print(f"compare: majority {_g(maj.value(cfg.metric))} vs optimum {_g(opt)}; "
          f"wrote {cfg.out}/compare.md")


_ORACLE_CASES = (
    # (n, m, eps, pmal_b, pmal_fc, model_text)
    (3, 2, 0.1, 0.8, 0.8, "fixed:1"),
    (4, 1, 0.2, 1.0, 1.0, "unconstrained"),
    (4, 2, 0.15, 0.9, 0.7, "bounded"),
    (3, 2, 0.2, 0.6, 0.6, "independent:0.3"),
)


def run_oracle_check(cfg):
    """Exact enumeration vs Monte Carlo on fixed small instances."""
    all_ok = True
    for n, m, eps, pmal_b, pmal_fc, model_text in _ORACLE_CASES:
        model = parse_model(model_text)
        exact = exact_error_probability(
            ExactScenario(n=n, m=m, eps=eps, pmal_b=pmal_b, pmal_fc=pmal_fc,
                          true_model=model, fc_model=model),
            metric=cfg.metric,
        )
        scenario = Scenario(n=n, m=m, eps=eps, true_model=model, fc_model=model)
        pm = estimate_payoff_matrix(
            scenario,
            grid_b=StrategyGrid((pmal_b,)),
            grid_fc=StrategyGrid((pmal_fc,)),
            trials=cfg.trials,
            seed=cfg.seed,
            metric=cfg.metric,
        )
        mc = float(pm.pe[0, 0])
        se = float(pm.se[0, 0])
        ok = abs(mc - exact) <= 4.0 * se + 1e-12
        all_ok &= ok
        print(f"oracle-check: {model_text} n={n} m={m} eps={_g(eps)} "
              f"pmal_b={_g(pmal_b)} pmal_fc={_g(pmal_fc)}: "
              f"exact={exact:.6g} mc={mc:.6g} se={se:.2g} "
              f"{'PASS' if ok else 'FAIL'}")
    if not all_ok:
        raise RuntimeError("Monte Carlo estimates disagree with exact enumeration")
    print("oracle-check: all cases agree")


def _build_parser():
    parser = _Parser(prog="byzfusion", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value experiment file")
    common.add_argument("--seed", type=int, help="override the seed")
    common.add_argument("--trials", type=int, help="override the trial count")
    common.add_argument("--metric", choices=("per-component", "per-sequence"),
                        help="override the error metric")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("--workers", type=int, help="row-level thread count")
    for name, fn in (
        ("payoff", run_payoff),
        ("equilibrium", run_equilibrium),
        ("compare", run_compare),
        ("oracle-check", run_oracle_check),
    ):
        sp = sub.add_parser(name, parents=[common])
        sp.set_defaults(func=fn)
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = {
            "seed": args.seed,
            "trials": args.trials,
            "metric": args.metric,
            "out": args.out,
            "workers": args.workers,
        }
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        args.func(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
