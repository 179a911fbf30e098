import math

import numpy as np
import pytest

from matchnet import (
    GridCell,
    Labeling,
    SimConfig,
    count_four_cycles_total,
    default_grid,
    draw_cycle_population,
    er_generate,
    estimate_beta,
    format_grid_tables,
    load_network,
    outcome_labeling_bias_experiment,
    read_grid_file,
    run_grid,
    run_simulation,
)
from matchnet.montecarlo import POPULATION_COV, POPULATION_MEAN, _CH_NOISE, _stream

from conftest import complete_bipartite


class TestDrawCyclePopulation:
    def test_moments_match_target_distribution(self):
        n = 1_000_000
        gen = _stream(123, 10)
        # verify via the same channel the population uses
        pop_draws = gen.multivariate_normal(POPULATION_MEAN, POPULATION_COV, size=n)
        emp_mean = pop_draws.mean(axis=0)
        emp_cov = np.cov(pop_draws.T)
        assert np.abs(emp_mean - POPULATION_MEAN).max() < 0.01
        assert np.abs(emp_cov - POPULATION_COV).max() < 0.01

    def test_sorting_into_high_low(self):
        pop = draw_cycle_population(500, 1.0, seed=7)
        assert np.all(pop.alpha_hi >= pop.alpha_lo)
        assert np.all(pop.psi_hi >= pop.psi_lo)

    def test_perfect_labels_all_positive(self):
        pop = draw_cycle_population(1000, 1.0, seed=1)
        assert np.all(pop.pi_alpha == 1.0)

    def test_coin_flip_labels_average_out(self):
        pop = draw_cycle_population(100_000, 0.5, seed=2)
        assert abs(pop.pi_alpha.mean()) < 0.02

    def test_population_is_seed_deterministic(self):
        a = draw_cycle_population(50, 0.8, seed=9)
        b = draw_cycle_population(50, 0.8, seed=9)
        assert np.array_equal(a.alpha_hi, b.alpha_hi)
        assert np.array_equal(a.pi_alpha, b.pi_alpha)


class TestRunSimulation:
    def test_bit_identical_reports(self):
        cfg = SimConfig(n_cycles=50, sigma=1.0, p_correct=0.85, beta0=0.0, reps=200, seed=77)
        assert run_simulation(cfg) == run_simulation(cfg)

    def test_thread_count_does_not_change_results(self):
        cfg = SimConfig(n_cycles=40, sigma=0.5, p_correct=1.0, beta0=1.0, reps=120, seed=3)
        assert run_simulation(cfg, n_threads=1) == run_simulation(cfg, n_threads=4)

    def test_single_nearly_noiseless_replication(self):
        cfg = SimConfig(
            n_cycles=30, sigma=1e-10, p_correct=1.0, beta0=1.0, reps=1, seed=11
        )
        rep = run_simulation(cfg)
        assert rep.mse == pytest.approx(0.0, abs=1e-16)
        assert rep.rejection_rate == 1.0  # the single exact test rejects beta0=0
        assert rep.rep_failures == 0

    def test_engine_matches_reference_estimator(self):
        # one replication, recomputed through the network/estimator path
        L, sigma, p, beta0, seed = 6, 0.4, 0.7, 0.6, 5
        cfg = SimConfig(n_cycles=L, sigma=sigma, p_correct=p, beta0=beta0, reps=1, seed=seed)
        report = run_simulation(cfg)

        pop = draw_cycle_population(L, p, seed)
        eta = _stream(seed, _CH_NOISE, counter=1).standard_normal((L, 4)) * sigma
        rows = []
        for ell in range(L):
            wa, wb = f"w{ell:02d}a", f"w{ell:02d}b"
            fa, fb = f"f{ell:02d}a", f"f{ell:02d}b"
            th = lambda a, q: a + q + beta0 * a * q  # noqa: E731
            rows += [
                (wa, fa, th(pop.alpha_hi[ell], pop.psi_hi[ell]) + eta[ell, 0]),
                (wa, fb, th(pop.alpha_hi[ell], pop.psi_lo[ell]) + eta[ell, 1]),
                (wb, fa, th(pop.alpha_lo[ell], pop.psi_hi[ell]) + eta[ell, 2]),
                (wb, fb, th(pop.alpha_lo[ell], pop.psi_lo[ell]) + eta[ell, 3]),
            ]
        net = load_network(rows)
        lab = Labeling(
            rule="oracle",
            seed=seed,
            signs=tuple((int(s), 1) for s in pop.pi_alpha),
        )
        est = estimate_beta(net, lab, gamma=cfg.gamma)
        assert report.mse == pytest.approx((est.beta_hat - beta0) ** 2, rel=1e-12)
        assert report.avg_ci_width == pytest.approx(est.ci[1] - est.ci[0], rel=1e-12)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(n_cycles=0, sigma=1.0, p_correct=1.0, beta0=0.0)
        with pytest.raises(ValueError):
            SimConfig(n_cycles=10, sigma=0.0, p_correct=1.0, beta0=0.0)
        with pytest.raises(ValueError):
            SimConfig(n_cycles=10, sigma=1.0, p_correct=0.3, beta0=0.0)
        with pytest.raises(ValueError):
            SimConfig(n_cycles=10, sigma=1.0, p_correct=1.0, beta0=0.0, reps=0)

    def test_uninformative_labels_inflate_error(self):
        strong = run_simulation(
            SimConfig(n_cycles=200, sigma=0.5, p_correct=1.0, beta0=0.0, reps=300, seed=13)
        )
        weak = run_simulation(
            SimConfig(n_cycles=200, sigma=0.5, p_correct=0.5, beta0=0.0, reps=300, seed=13)
        )
        assert weak.mse > strong.mse * 10


class TestErGenerate:
    def test_full_probability_gives_complete_graph(self):
        net = er_generate(5, 7, 1.0, seed=0)
        assert net.n_matches == 35
        assert net.n_workers == 5 and net.n_firms == 7

    def test_mean_edge_count_binomial(self):
        n, trials, p = 12 * 9, 2000, 0.3
        counts = [er_generate(12, 9, p, seed=s).n_matches for s in range(trials)]
        se = math.sqrt(n * p * (1 - p) / trials)
        assert abs(np.mean(counts) - n * p) < 3 * se

    def test_isolated_nodes_are_declared(self):
        net = er_generate(6, 6, 0.05, seed=4)
        assert net.n_workers == 6 and net.n_firms == 6

    def test_invalid_probability(self):
        with pytest.raises(ValueError):
            er_generate(3, 3, 0.0, seed=0)


class TestCountFourCycles:
    def test_complete_4x4_is_36(self):
        assert count_four_cycles_total(complete_bipartite(4, 4)) == 36

    def test_count_concentration_grows_with_graph_size(self):
        # relative spread of the total count shrinks as the expected degree
        # grows (variance over squared mean falls like 1/(I*p))
        def cov(I, p, draws, base):
            counts = np.array(
                [
                    count_four_cycles_total(er_generate(I, I, p, seed=base + s))
                    for s in range(draws)
                ],
                dtype=float,
            )
            return counts.std(ddof=1) / counts.mean()

        small = cov(40, 0.1, 60, base=100)
        large = cov(120, 0.1, 60, base=500)
        assert large < small

    def test_fast_and_set_paths_agree(self):
        # the incidence-matrix path must match the set-intersection path
        import matchnet.diagnostics as diag

        net = er_generate(40, 35, 0.15, seed=9)
        nbrs = [frozenset(net.firm_neighbors(f)) for f in net.firms]
        from itertools import combinations

        slow = sum(
            len(a & b) * (len(a & b) - 1) // 2 for a, b in combinations(nbrs, 2)
        )
        assert diag.count_four_cycles_total(net) == slow

    def test_matches_brute_force_on_small_graphs(self):
        def brute(net):
            ws, fs = net.workers, net.firms
            count = 0
            for a in range(len(ws)):
                for b in range(a + 1, len(ws)):
                    for c in range(len(fs)):
                        for d in range(c + 1, len(fs)):
                            if (
                                net.has_match(ws[a], fs[c])
                                and net.has_match(ws[a], fs[d])
                                and net.has_match(ws[b], fs[c])
                                and net.has_match(ws[b], fs[d])
                            ):
                                count += 1
            return count

        for s in range(60):
            net = er_generate(6, 5, 0.4, seed=s)
            assert count_four_cycles_total(net) == brute(net)


class TestOutcomeLabelingExperiment:
    def test_first_distribution_biased_upward(self):
        est = outcome_labeling_bias_experiment(1, n_cycles=100_000, reps=20, seed=1)
        assert est == pytest.approx(5.0 / 9.0, abs=0.02)

    def test_second_distribution_biased_downward(self):
        # the denominator is noisy (per-cycle sd ~ 11 against mean 0.625),
        # so the ratio needs the large-L regime to settle
        est = outcome_labeling_bias_experiment(2, n_cycles=100_000, reps=50, seed=1)
        assert est == pytest.approx(-3.0 / 5.0, abs=0.02)

    def test_oracle_labels_restore_consistency(self):
        for dist in (1, 2):
            est = outcome_labeling_bias_experiment(
                dist, n_cycles=100_000, reps=20, seed=2, labeling="oracle"
            )
            assert abs(est) < 0.01

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            outcome_labeling_bias_experiment(3, 10, 1, 0)
        with pytest.raises(ValueError):
            outcome_labeling_bias_experiment(1, 10, 1, 0, labeling="rank")


class TestGrids:
    def test_default_grid_shape(self):
        cells = default_grid()
        assert len(cells) == 96  # 3 sigma x 4 L x 4 p x 2 beta0
        assert len({(c.sigma, c.n_cycles, c.p_correct, c.beta0) for c in cells}) == 96

    def test_read_grid_file(self, tmp_path):
        path = tmp_path / "grid.csv"
        path.write_text("sigma,L,p,beta0\n0.5,100,1.0,0\n2,500,0.85,1\n")
        cells = read_grid_file(path)
        assert cells == [GridCell(0.5, 100, 1.0, 0.0), GridCell(2.0, 500, 0.85, 1.0)]

    def test_grid_rejects_bad_cells_before_running(self, tmp_path):
        path = tmp_path / "grid.csv"
        path.write_text("sigma,L,p,beta0\n0.5,100,0.2,0\n")
        with pytest.raises(Exception, match="p_correct"):
            read_grid_file(path)

    def test_run_grid_and_format(self, tmp_path):
        cells = [GridCell(0.5, 20, 1.0, 0.0), GridCell(0.5, 20, 0.85, 0.0)]
        results = run_grid(cells, reps=50, seed=1)
        text = format_grid_tables(results)
        assert "# mse (beta0=0)" in text
        assert "p=1" in text and "p=0.85" in text
        lines = [l for l in text.splitlines() if l.startswith("0.5,20")]
        assert lines  # the sigma x L row exists

    def test_cell_seeds_differ(self):
        from matchnet.montecarlo import cell_seed

        a = cell_seed(1, GridCell(0.5, 100, 1.0, 0.0))
        b = cell_seed(1, GridCell(0.5, 100, 0.85, 0.0))
        assert a != b
