import numpy as np
import pytest

from byzfusion.game import (
    DominanceReport,
    Equilibrium,
    ErrorEstimate,
    PayoffMatrix,
    Scenario,
    StrategyGrid,
    dominance_report,
    eliminate_dominated,
    equilibrium_payoff,
    estimate_majority_pe,
    estimate_payoff_matrix,
    find_dominant_row,
    find_pure_equilibria,
    saddle_points_within_noise,
    simulate_row,
    solve_lp_pair,
    solve_mixed,
    solve_mixed_enum,
)
from byzfusion.model import FixedCount, IndependentAlpha, UnconstrainedMaxEntropy
from byzfusion.oracle import ExactScenario, exact_error_probability


def small_scenario(**kw):
    base = dict(n=5, m=2, eps=0.1, true_model=FixedCount(1), fc_model=FixedCount(1))
    base.update(kw)
    return Scenario(**base)


def make_pm(pe, se=None):
    pe = np.asarray(pe, dtype=float)
    se = np.zeros_like(pe) if se is None else np.asarray(se, dtype=float)
    nr, nc = pe.shape
    gb = StrategyGrid(tuple(np.linspace(0.5, 1.0, nr)))
    gc = StrategyGrid(tuple(np.linspace(0.5, 1.0, nc)))
    return PayoffMatrix(
        grid_b=gb, grid_fc=gc, pe_component=pe, pe_sequence=pe * 2,
        se_component=se, se_sequence=se, trials=100, seed=0,
    )


class TestGridAndMatrix:
    def test_grid_validation(self):
        StrategyGrid((0.5, 0.75, 1.0))
        with pytest.raises(ValueError):
            StrategyGrid(())
        with pytest.raises(ValueError):
            StrategyGrid((0.5, 0.5))
        with pytest.raises(ValueError):
            StrategyGrid((0.8, 0.6))
        with pytest.raises(ValueError):
            StrategyGrid((0.5, 1.2))

    def test_metric_selection(self):
        pm = make_pm([[0.1, 0.2], [0.3, 0.4]])
        assert pm.pe[0, 0] == 0.1
        seq = pm.with_metric("per-sequence")
        assert seq.pe[0, 0] == 0.2
        with pytest.raises(ValueError):
            pm.with_metric("nope")

    def test_csv_format(self):
        pm = make_pm([[0.123456789, 0.2], [0.3, 0.000012345678]])
        text = pm.to_csv({"config": "abc"})
        lines = text.strip().split("\n")
        assert lines[0] == "# config = abc"
        assert lines[1] == "# seed = 0"
        assert lines[2] == "# trials = 100"
        assert lines[3] == "# metric = per-component"
        assert lines[4].startswith("pmal_b/pmal_fc,0.5,1")
        # six significant digits
        assert "0.123457" in lines[5]
        assert "1.23457e-05" in lines[6]

    def test_markdown_contains_table(self):
        pm = make_pm([[0.1, 0.2], [0.3, 0.4]])
        text = pm.to_markdown()
        assert "| pmal_b \\ pmal_fc | 0.5 | 1 |" in text
        assert "| 0.5 | 0.1 | 0.2 |" in text


class TestSimulation:
    def test_simulate_row_shapes_and_determinism(self):
        sc = small_scenario()
        s1, r1 = simulate_row(sc, 0.7, 50, np.random.default_rng(3))
        s2, r2 = simulate_row(sc, 0.7, 50, np.random.default_rng(3))
        assert s1.shape == (50, 2) and r1.shape == (50, 5, 2)
        np.testing.assert_array_equal(s1, s2)
        np.testing.assert_array_equal(r1, r2)

    def test_estimate_matrix_shapes(self):
        pm = estimate_payoff_matrix(small_scenario(), trials=300, seed=1)
        assert pm.pe_component.shape == (6, 6)
        assert (pm.pe_component >= 0).all() and (pm.pe_component <= 1).all()
        assert (pm.pe_sequence >= pm.pe_component - 1e-12).all()

    def test_single_trial_runs(self):
        pm = estimate_payoff_matrix(small_scenario(), trials=1, seed=2)
        vals = np.unique(pm.pe_component)
        assert set(np.round(vals * 2, 6)) <= {0.0, 1.0, 2.0}
        assert (pm.se_component == 0).all()

    def test_workers_do_not_change_results(self):
        sc = small_scenario()
        a = estimate_payoff_matrix(sc, trials=500, seed=3, workers=1)
        b = estimate_payoff_matrix(sc, trials=500, seed=3, workers=4)
        np.testing.assert_array_equal(a.pe_component, b.pe_component)
        np.testing.assert_array_equal(a.se_sequence, b.se_sequence)

    def test_common_random_numbers_across_columns(self):
        # adding a column must not perturb existing ones
        sc = small_scenario()
        wide = estimate_payoff_matrix(
            sc, grid_fc=StrategyGrid((0.5, 0.9)), trials=400, seed=4)
        narrow = estimate_payoff_matrix(
            sc, grid_fc=StrategyGrid((0.5,)), trials=400, seed=4)
        np.testing.assert_array_equal(wide.pe_component[:, 0], narrow.pe_component[:, 0])

    def test_matches_exact_oracle(self):
        sc = small_scenario(n=4, m=2)
        pm = estimate_payoff_matrix(
            sc, grid_b=StrategyGrid((0.8,)), grid_fc=StrategyGrid((0.8,)),
            trials=40_000, seed=5)
        exact = exact_error_probability(ExactScenario(
            n=4, m=2, eps=0.1, pmal_b=0.8, pmal_fc=0.8,
            true_model=FixedCount(1), fc_model=FixedCount(1)))
        assert pm.pe_component[0, 0] == pytest.approx(
            exact, abs=4 * pm.se_component[0, 0] + 1e-9)

    def test_blinding_at_full_flip(self):
        # with unknown independent placement, a true full flip makes the
        # report mixture a fair coin regardless of the state: row 1.0 pins to
        # one half in every column. A half flip rate does not blind (honest
        # nodes still carry signal), except against a center that itself
        # assumes full flipping: its assumed mixture of eps and 1-eps
        # channels is the fair coin, so that column is 0.5 too.
        sc = small_scenario(
            n=6, true_model=UnconstrainedMaxEntropy(),
            fc_model=UnconstrainedMaxEntropy())
        pm = estimate_payoff_matrix(
            sc, grid_b=StrategyGrid((0.5, 1.0)), grid_fc=StrategyGrid((0.5, 1.0)),
            trials=20_000, seed=11)
        for j in range(2):
            assert pm.pe_component[1, j] == pytest.approx(
                0.5, abs=4 * pm.se_component[1, j])
        assert pm.pe_component[0, 0] < 0.35
        assert pm.pe_component[0, 1] == pytest.approx(
            0.5, abs=4 * pm.se_component[0, 1])

    def test_majority_estimate_against_binomial(self):
        # per-component majority error has a closed form; tie votes go to zero
        from math import comb
        sc = small_scenario(n=6, m=2, true_model=FixedCount(2), fc_model=FixedCount(2))
        eps, delta = 0.1, 0.1 * 0.3 + 0.9 * 0.7
        est = estimate_majority_pe(sc, 0.7, trials=60_000, seed=6)

        def pmf(k_tot):
            # wrong-vote count: binomial(4, eps) + binomial(2, delta)
            total = 0.0
            for a in range(5):
                for b in range(3):
                    if a + b != k_tot:
                        continue
                    total += (
                        comb(4, a) * eps**a * (1 - eps) ** (4 - a)
                        * comb(2, b) * delta**b * (1 - delta) ** (2 - b)
                    )
            return total

        p_wrong_majority = sum(pmf(k) for k in range(4, 7))
        p_tie = pmf(3)
        want = p_wrong_majority + 0.5 * p_tie  # ties wrong only when the state is one
        assert est.pe_component == pytest.approx(want, abs=4 * est.se_component + 1e-9)

    def test_majority_worse_than_map_when_blind(self):
        sc = small_scenario(n=6, m=2, true_model=FixedCount(2), fc_model=FixedCount(2))
        est = estimate_majority_pe(sc, 1.0, trials=10_000, seed=7)
        pm = estimate_payoff_matrix(
            sc, grid_b=StrategyGrid((1.0,)), grid_fc=StrategyGrid((1.0,)),
            trials=10_000, seed=7)
        assert pm.pe_component[0, 0] < est.pe_component


class TestDominance:
    def test_strict_dominant_row(self):
        pe = [[0.3, 0.4], [0.1, 0.2]]
        assert find_dominant_row(pe) == 0
        # each row wins one column, so neither dominates
        assert find_dominant_row([[0.3, 0.1], [0.2, 0.4]]) is None

    def test_weak_dominance(self):
        pe = [[0.3, 0.2], [0.3, 0.1]]
        assert find_dominant_row(pe, strict=True) is None
        assert find_dominant_row(pe, strict=False) == 0

    def test_report_separated(self):
        pm = make_pm([[0.5, 0.5], [0.1, 0.1]], se=[[0.01, 0.01], [0.01, 0.01]])
        rep = dominance_report(pm)
        assert rep.row == 0 and rep.level == "strict" and rep.separated
        assert rep.margin_sigmas > 3

    def test_report_noisy(self):
        pm = make_pm([[0.22, 0.22], [0.2, 0.2]], se=[[0.05, 0.05], [0.05, 0.05]])
        rep = dominance_report(pm)
        assert rep.row == 0 and rep.level == "strict" and not rep.separated

    def test_report_none(self):
        pm = make_pm([[0.3, 0.1], [0.1, 0.3]])
        rep = dominance_report(pm)
        assert rep.row is None and rep.level == "none" and not rep.separated

    def test_report_requires_matrix(self):
        with pytest.raises(TypeError):
            dominance_report([[0.1, 0.2], [0.3, 0.4]])


class TestPureEquilibria:
    def test_saddle(self):
        assert find_pure_equilibria([[3.0, 5.0], [2.0, 1.0]]) == [(0, 0)]

    def test_no_saddle(self):
        assert find_pure_equilibria([[1.0, -1.0], [-1.0, 1.0]]) == []

    def test_constant_matrix_all_saddles(self):
        hits = find_pure_equilibria(np.full((2, 3), 0.25))
        assert hits == [(r, c) for r in range(2) for c in range(3)]


class TestNoisySaddles:
    def test_zero_se_reduces_to_exact(self):
        pe = [[3.0, 5.0], [2.0, 1.0]]
        pm = make_pm(pe)
        assert saddle_points_within_noise(pm) == find_pure_equilibria(pe)

    def test_noise_admits_near_saddle(self):
        # (0,0) misses being an exact saddle by 0.05 in its column, well
        # inside 3 combined standard errors of 0.1
        pe = [[1.00, 1.30], [1.05, 0.40]]
        se = np.full((2, 2), 0.1)
        pm = make_pm(pe, se=se)
        assert find_pure_equilibria(pm) == []
        assert (0, 0) in saddle_points_within_noise(pm)

    def test_separated_matrix_rejects(self):
        pe = [[1.0, 2.0], [3.0, 0.5]]
        pm = make_pm(pe, se=np.full((2, 2), 0.01))
        assert saddle_points_within_noise(pm) == []

    def test_nonfinite_rejected(self):
        pm = make_pm([[1.0, np.inf], [0.0, 0.5]])
        with pytest.raises(ValueError):
            saddle_points_within_noise(pm)


class TestSolvers:
    def test_matching_pennies(self):
        eq = solve_mixed(np.array([[1.0, -1.0], [-1.0, 1.0]]))
        np.testing.assert_allclose(eq.p, [0.5, 0.5], atol=1e-9)
        np.testing.assert_allclose(eq.q, [0.5, 0.5], atol=1e-9)
        assert eq.value == pytest.approx(0.0, abs=1e-9)
        assert eq.pure is None

    def test_saddle_shortcut_exact(self):
        a = np.array([[3.0, 5.0], [2.0, 1.0]])
        eq = solve_mixed(a)
        assert eq.pure == (0, 0)
        assert eq.value == 3.0
        np.testing.assert_array_equal(eq.p, [1.0, 0.0])
        assert eq.dominant_row == 0

    def test_known_2x2_mixture(self):
        # [[a,b],[c,d]] without saddle: p = ((d-c)/(a-b-c+d), ...)
        a = np.array([[4.0, 1.0], [2.0, 3.0]])
        eq = solve_mixed(a)
        np.testing.assert_allclose(eq.p, [0.25, 0.75], atol=1e-9)
        np.testing.assert_allclose(eq.q, [0.5, 0.5], atol=1e-9)
        assert eq.value == pytest.approx(2.5, abs=1e-9)

    def test_lp_duality_random(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            a = rng.normal(size=(rng.integers(1, 7), rng.integers(1, 7)))
            p, vr, q, vc = solve_lp_pair(a)
            assert abs(vr - vc) <= 1e-9
            assert p.sum() == pytest.approx(1.0, abs=1e-9)
            assert q.sum() == pytest.approx(1.0, abs=1e-9)
            # best-response consistency
            assert (p @ a).min() == pytest.approx(vr, abs=1e-8)
            assert (a @ q).max() == pytest.approx(vc, abs=1e-8)

    def test_enum_agrees_with_lp(self):
        rng = np.random.default_rng(9)
        found = 0
        for _ in range(40):
            a = rng.normal(size=(3, 4))
            eq = solve_mixed(a)
            enum = solve_mixed_enum(a)
            if enum is None:
                continue
            found += 1
            p, q, v = enum
            assert v == pytest.approx(eq.value, abs=1e-7)
        assert found >= 35

    def test_enum_cap(self):
        with pytest.raises(ValueError):
            solve_mixed_enum(np.zeros((11, 3)))

    def test_value_is_bilinear_payoff(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            a = rng.normal(size=(4, 4))
            eq = solve_mixed(a)
            assert equilibrium_payoff(a, eq) == pytest.approx(eq.value, abs=1e-8)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            solve_mixed(np.array([[np.nan, 1.0], [0.0, 2.0]]))


class TestEliminateDominated:
    def test_reduces_strictly_dominated(self):
        pe = [[0.5, 0.6, 0.55], [0.2, 0.3, 0.25], [0.4, 0.5, 0.45]]
        reduced, rows, cols = eliminate_dominated(np.array(pe))
        # row 0 dominates the others (maximizer keeps it); column 0 is minimal
        np.testing.assert_array_equal(rows, [0])
        np.testing.assert_array_equal(cols, [0])
        assert reduced.shape == (1, 1)

    def test_value_preserved(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            a = rng.normal(size=(5, 5))
            reduced, rows, cols = eliminate_dominated(a)
            v_full = solve_mixed(a).value
            v_red = solve_mixed(reduced).value
            assert v_red == pytest.approx(v_full, abs=1e-7)

    def test_payoff_matrix_slicing(self):
        pm = make_pm([[0.5, 0.6], [0.2, 0.3]])
        reduced, rows, cols = eliminate_dominated(pm)
        assert isinstance(reduced, PayoffMatrix)
        assert reduced.grid_b.values == (0.5,)
        assert reduced.grid_fc.values == (0.5,)
        assert reduced.pe_component.shape == (1, 1)


def test_scenario_validation():
    with pytest.raises(ValueError):
        small_scenario(m=0)
    with pytest.raises(ValueError):
        small_scenario(true_model=FixedCount(9))
