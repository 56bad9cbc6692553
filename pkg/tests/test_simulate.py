import itertools
import math

import numpy as np
import pytest
from scipy import stats

from lmselect import (
    LMParameters,
    ModelSpec,
    Scenario,
    draw_dataset,
    draw_unit,
    draw_units,
    log_manifest_probability,
    scenario_preset,
    validate,
)
from lmselect.simulate import replicate_rng, substream


class TestScenarioPresets:
    def test_scenario1_matrices(self):
        sc = scenario_preset(1, n=250, r=1)
        np.testing.assert_allclose(sc.params.transitions, [[0.9, 0.1], [0.1, 0.9]])
        np.testing.assert_allclose(sc.params.emissions[0], [[0.8, 0.2], [0.2, 0.8]])
        np.testing.assert_allclose(sc.params.initial, [0.5, 0.5])
        assert sc.spec.T == 5 and sc.spec.k == 2

    def test_scenario2_weak_persistence(self):
        sc = scenario_preset(2)
        np.testing.assert_allclose(sc.params.transitions, [[0.7, 0.3], [0.3, 0.7]])
        np.testing.assert_allclose(sc.params.emissions[0], [[0.8, 0.2], [0.2, 0.8]])

    def test_scenario3_noisy_emissions(self):
        sc = scenario_preset(3)
        np.testing.assert_allclose(sc.params.emissions[0], [[0.7, 0.3], [0.3, 0.7]])
        np.testing.assert_allclose(sc.params.transitions, [[0.9, 0.1], [0.1, 0.9]])

    def test_scenario4_three_states(self):
        sc = scenario_preset(4, r=3)
        assert sc.spec.k == 3 and sc.n == 500
        np.testing.assert_allclose(sc.params.initial, [1 / 3] * 3)
        np.testing.assert_allclose(
            sc.params.emissions[1], [[0.9, 0.1], [0.1, 0.9], [0.7, 0.3]]
        )
        np.testing.assert_allclose(np.diag(sc.params.transitions), [0.9] * 3)

    def test_scenario5_offdiagonal(self):
        sc = scenario_preset(5)
        np.testing.assert_allclose(np.diag(sc.params.transitions), [0.7] * 3)
        assert np.all(
            sc.params.transitions[~np.eye(3, dtype=bool)] == pytest.approx(0.15)
        )

    def test_all_presets_validate(self):
        for name in (1, 2, 3, 4, 5):
            for r in (1, 3, 5):
                sc = scenario_preset(name, r=r)
                assert validate(sc.params, sc.spec) == []
                assert sc.spec.r == r
                assert len(sc.params.emissions) == r

    def test_shared_emission_matrix_across_responses(self):
        sc = scenario_preset(1, r=3)
        for j in (1, 2):
            np.testing.assert_array_equal(sc.params.emissions[0], sc.params.emissions[j])

    def test_invalid_arguments(self):
        with pytest.raises(ValueError, match="unknown scenario"):
            scenario_preset(6)
        with pytest.raises(ValueError, match="n = 500"):
            scenario_preset(4, n=250)
        with pytest.raises(ValueError):
            scenario_preset(1, r=0)
        with pytest.raises(ValueError):
            Scenario("x", scenario_preset(1).spec, scenario_preset(1).params, n=0)


class TestDrawUnit:
    def test_degenerate_parameters_give_all_zeros(self):
        spec = ModelSpec(k=2, T=4, categories=(2,))
        params = LMParameters(
            [1.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], (np.array([[1.0, 0.0], [0.0, 1.0]]),)
        )
        rng = np.random.default_rng(0)
        pattern = draw_unit(params, spec, rng)
        np.testing.assert_array_equal(pattern, np.zeros((1, 4), dtype=int))

    def test_same_seed_same_pattern(self, scenario1):
        a = draw_unit(scenario1.params, scenario1.spec, np.random.default_rng(42))
        b = draw_unit(scenario1.params, scenario1.spec, np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)

    def test_labels_in_range(self):
        sc = scenario_preset(4, r=3)
        rng = np.random.default_rng(7)
        for _ in range(20):
            pattern = draw_unit(sc.params, sc.spec, rng)
            assert pattern.shape == (3, 5)
            assert pattern.min() >= 0 and pattern.max() <= 1


class TestDrawDataset:
    def test_total_frequency_is_n(self):
        sc = scenario_preset(1, n=37, r=1)
        ds = draw_dataset(sc, 0)
        assert ds.n == 37

    def test_single_unit_dataset(self):
        sc = scenario_preset(1, n=1, r=1)
        ds = draw_dataset(sc, 0)
        assert ds.n_patterns == 1
        assert ds.frequencies.tolist() == [1]

    def test_replicates_reproducible_in_isolation(self):
        sc = scenario_preset(1, n=50, r=2)
        in_sequence = [draw_units(sc, i) for i in range(4)]
        alone = draw_units(sc, 3)
        np.testing.assert_array_equal(in_sequence[3], alone)

    def test_replicates_differ(self):
        sc = scenario_preset(1, n=50, r=1)
        assert not np.array_equal(draw_units(sc, 0), draw_units(sc, 1))

    def test_master_seed_changes_data(self):
        sc = scenario_preset(1, n=50, r=1)
        a = draw_units(sc, 0, master_seed=1)
        b = draw_units(sc, 0, master_seed=2)
        assert not np.array_equal(a, b)

    def test_substreams_distinguish_scenarios_and_streams(self):
        a = substream(7, "scenario1", 0, 0).generate_state(2)
        b = substream(7, "scenario2", 0, 0).generate_state(2)
        c = substream(7, "scenario1", 0, 1).generate_state(2)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestMonteCarloConsistency:
    def test_empirical_frequencies_match_manifest_distribution(self, scenario1):
        # 100k draws over the 32 possible univariate patterns: chi-square
        # goodness of fit not rejected at the 0.001 level, and every
        # pattern's empirical share within 3 standard errors.
        n_draws = 100_000
        rng = replicate_rng(scenario1, 0, master_seed=99)
        counts = np.zeros(32)
        for _ in range(n_draws):
            pattern = draw_unit(scenario1.params, scenario1.spec, rng)
            idx = int("".join(map(str, pattern[0])), 2)
            counts[idx] += 1

        probs = np.empty(32)
        for idx, bits in enumerate(itertools.product(range(2), repeat=5)):
            probs[idx] = math.exp(
                log_manifest_probability(
                    scenario1.params, scenario1.spec, np.array([bits])
                )
            )
        result = stats.chisquare(counts, probs * n_draws)
        assert result.pvalue >= 0.001

        se = np.sqrt(probs * (1 - probs) / n_draws)
        np.testing.assert_array_less(np.abs(counts / n_draws - probs), 3 * se + 1e-12)
