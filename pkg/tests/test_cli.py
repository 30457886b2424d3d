import numpy as np
import pytest

from byzfusion.cli import (
    ConfigError,
    config_hash,
    load_config,
    load_payoff_csv,
    main,
    model_to_text,
    parse_model,
)
from byzfusion.model import (
    BoundedBelowHalf,
    FixedCount,
    IndependentAlpha,
    UnconstrainedMaxEntropy,
)

TINY = """
n = 4
m = 2
eps = 0.1
true_model = fixed:1
trials = 300
seed = 9
"""


def write_config(tmp_path, text=TINY, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestParseModel:
    def test_all_forms(self):
        assert parse_model("unconstrained") == UnconstrainedMaxEntropy()
        assert parse_model("independent:0.3") == IndependentAlpha(0.3)
        assert parse_model("bounded") == BoundedBelowHalf()
        assert parse_model("bounded:7") == BoundedBelowHalf(7)
        assert parse_model("fixed:6") == FixedCount(6)

    def test_round_trip(self):
        for text in ("unconstrained", "independent:0.3", "bounded", "bounded:7", "fixed:6"):
            assert parse_model(model_to_text(parse_model(text))) == parse_model(text)

    def test_rejects_garbage(self):
        for bad in ("fancy", "independent", "independent:x", "fixed:1.5", "unconstrained:3"):
            with pytest.raises(ConfigError):
                parse_model(bad)


class TestLoadConfig:
    def test_defaults(self):
        cfg = load_config(None, {})
        assert cfg.scenario.n == 20 and cfg.scenario.m == 4
        assert cfg.scenario.fc_model == cfg.scenario.true_model
        assert cfg.trials == 50_000 and cfg.metric == "per-component"

    def test_file_values_and_fc_defaulting(self, tmp_path):
        cfg = load_config(write_config(tmp_path), {})
        assert cfg.scenario.n == 4
        assert cfg.scenario.true_model == FixedCount(1)
        assert cfg.scenario.fc_model == FixedCount(1)
        assert cfg.seed == 9

    def test_overrides_win(self, tmp_path):
        cfg = load_config(write_config(tmp_path), {"seed": 42, "trials": 7})
        assert cfg.seed == 42 and cfg.trials == 7

    def test_comments_and_blank_lines(self, tmp_path):
        text = "# experiment\n\nn = 4\nm = 2  # two components\ntrue_model = fixed:1\n"
        cfg = load_config(write_config(tmp_path, text), {})
        assert cfg.scenario.m == 2

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown key"):
            load_config(write_config(tmp_path, "banana = 3\n"), {})

    def test_duplicate_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="duplicate"):
            load_config(write_config(tmp_path, "n = 4\nn = 5\n"), {})

    def test_bad_value_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, "n = banana\n"), {})

    def test_inconsistent_model_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, "n = 4\ntrue_model = fixed:9\n"), {})

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/exp.cfg", {})

    def test_m_cap(self, tmp_path):
        with pytest.raises(ConfigError, match="cap"):
            load_config(write_config(tmp_path, "m = 13\n"), {})


class TestConfigHash:
    def test_execution_details_do_not_change_hash(self, tmp_path):
        cfg1 = load_config(write_config(tmp_path), {"workers": 1, "out": "a"})
        cfg2 = load_config(write_config(tmp_path), {"workers": 4, "out": "b"})
        assert config_hash(cfg1) == config_hash(cfg2)

    def test_seed_changes_hash(self, tmp_path):
        cfg1 = load_config(write_config(tmp_path), {"seed": 1})
        cfg2 = load_config(write_config(tmp_path), {"seed": 2})
        assert config_hash(cfg1) != config_hash(cfg2)


class TestMainPayoff:
    def test_end_to_end_and_reproducible(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = tmp_path / "run1"
        rc = main(["payoff", "--config", cfg, "--out", str(out)])
        assert rc == 0
        csv1 = (out / "payoff.csv").read_bytes()
        md = (out / "payoff.md").read_text()
        meta = (out / "meta.txt").read_text()
        cfg_obj = load_config(cfg, {})
        assert config_hash(cfg_obj) in meta
        assert config_hash(cfg_obj) in csv1.decode()
        assert "seed = 9" in csv1.decode()
        assert "| pmal_b \\ pmal_fc |" in md
        # rerun into another directory: identical bytes
        out2 = tmp_path / "run2"
        assert main(["payoff", "--config", cfg, "--out", str(out2)]) == 0
        assert (out2 / "payoff.csv").read_bytes() == csv1

    def test_workers_do_not_change_bytes(self, tmp_path):
        cfg = write_config(tmp_path)
        out1, out2 = tmp_path / "w1", tmp_path / "w4"
        assert main(["payoff", "--config", cfg, "--out", str(out1), "--workers", "1"]) == 0
        assert main(["payoff", "--config", cfg, "--out", str(out2), "--workers", "4"]) == 0
        assert (out1 / "payoff.csv").read_bytes() == (out2 / "payoff.csv").read_bytes()

    def test_csv_round_trip(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "run"
        assert main(["payoff", "--config", cfg, "--out", str(out)]) == 0
        pm = load_payoff_csv(str(out / "payoff.csv"))
        assert pm.pe_component.shape == (6, 6)
        assert pm.seed == 9 and pm.trials == 300
        # six significant digits survive the round trip
        assert np.isfinite(pm.pe_component).all()


class TestMainEquilibrium:
    def test_from_simulation(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "eq"
        rc = main(["equilibrium", "--config", cfg, "--out", str(out)])
        assert rc == 0
        text = (out / "equilibrium.md").read_text()
        assert "Game value" in text
        assert "## Pure equilibria" in text
        assert "## Saddle points within noise" in text

    def test_constant_matrix_from_file_lists_every_profile(self, tmp_path):
        grid = "0.5,0.6,0.7"
        payoff = tmp_path / "payoff.csv"
        lines = ["pmal_b/pmal_fc," + grid]
        for v in grid.split(","):
            lines.append(f"{v},0.25,0.25,0.25")
        payoff.write_text("\n".join(lines) + "\n")
        cfg = write_config(
            tmp_path,
            TINY + f"payoff_file = {payoff}\ngrid_b = {grid}\ngrid_fc = {grid}\n",
        )
        out = tmp_path / "eq"
        assert main(["equilibrium", "--config", cfg, "--out", str(out)]) == 0
        text = (out / "equilibrium.md").read_text()
        # all nine profiles are saddle points of a constant matrix, both
        # under exact comparisons and with the (zero) noise margin
        assert text.count("with value 0.25") == 9
        assert text.count("- (pmal_b=") == 18
        assert "Pure: (pmal_b=0.5, pmal_fc=0.5)" in text


class TestMainCompare:
    def test_end_to_end(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "cmp"
        rc = main(["compare", "--config", cfg, "--out", str(out)])
        assert rc == 0
        text = (out / "compare.md").read_text()
        assert "majority vote" in text
        assert "optimum fusion" in text


class TestOracleCheck:
    def test_passes_on_small_instances(self, capsys):
        rc = main(["oracle-check", "--trials", "4000", "--seed", "3"])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 4
        assert "FAIL" not in out


class TestExitCodes:
    def test_bad_flag(self, capsys):
        assert main(["payoff", "--bogus"]) == 1

    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_missing_config_file(self, capsys):
        assert main(["payoff", "--config", "/nonexistent.cfg"]) == 1

    def test_bad_config_value(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "trials = -5\n")
        assert main(["payoff", "--config", cfg]) == 1

    def test_runtime_error_is_2(self, tmp_path, capsys):
        bad = tmp_path / "payoff.csv"
        bad.write_text("pmal_b/pmal_fc,0.5\n")  # header only: malformed
        cfg = write_config(tmp_path, TINY + f"payoff_file = {bad}\n")
        assert main(["equilibrium", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
