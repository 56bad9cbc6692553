import numpy as np
import pytest

import oracles
from lmselect import (
    AllStartsFailed,
    Dataset,
    EMOptions,
    LMParameters,
    ModelSpec,
    ZeroProbabilityPattern,
    canonicalize_states,
    dataset_entropy,
    deterministic_start,
    draw_dataset,
    e_step,
    fit,
    log_likelihood,
    m_step,
    permute_states,
    random_start,
    scenario_preset,
    uniform_parameters,
)
from lmselect import em as em_module


def _scenario1_dataset(n=120, r=1, replicate=0):
    return draw_dataset(scenario_preset(1, n=n, r=r), replicate)


class TestEStep:
    def test_k1_counts_are_observed_frequencies(self):
        spec = ModelSpec(k=1, T=2, categories=(2,))
        units = np.array([[[0, 1]], [[1, 1]], [[0, 0]]])
        ds = Dataset.from_units(units)
        params = LMParameters([1.0], [[1.0]], (np.array([[0.5, 0.5]]),))
        counts = e_step(params, spec, ds)
        assert counts.initial == pytest.approx([3.0])
        np.testing.assert_allclose(counts.transitions, [[[3.0]]])
        # observed category counts per occasion: t=1 has (2,1), t=2 has (1,2)
        np.testing.assert_allclose(counts.emissions[0][0, 0], [2.0, 1.0])
        np.testing.assert_allclose(counts.emissions[0][1, 0], [1.0, 2.0])

    def test_single_unit_matches_path_enumeration(self, spec22):
        pattern = np.array([[0, 1]])
        ds = Dataset(pattern[np.newaxis], [1])
        rng = np.random.default_rng(21)
        params = oracles.random_parameters(spec22, rng)
        counts = e_step(params, spec22, ds)
        want_init, want_trans, want_emis = oracles.expected_counts(params, spec22, pattern)
        np.testing.assert_allclose(counts.initial, want_init, atol=1e-10)
        np.testing.assert_allclose(counts.transitions, want_trans, atol=1e-10)
        np.testing.assert_allclose(counts.emissions[0], want_emis[0], atol=1e-10)

    def test_counts_double_with_frequencies(self, scenario1):
        ds = _scenario1_dataset(n=40)
        doubled = Dataset(ds.patterns, ds.frequencies * 2)
        one = e_step(scenario1.params, scenario1.spec, ds)
        two = e_step(scenario1.params, scenario1.spec, doubled)
        np.testing.assert_allclose(two.initial, 2 * one.initial, rtol=1e-12)
        np.testing.assert_allclose(two.transitions, 2 * one.transitions, rtol=1e-12)

    def test_count_totals_match_sample_size(self, scenario1):
        ds = _scenario1_dataset(n=75)
        counts = e_step(scenario1.params, scenario1.spec, ds)
        n = ds.n
        assert counts.initial.sum() == pytest.approx(n, abs=1e-6)
        for t in range(scenario1.spec.T - 1):
            assert counts.transitions[t].sum() == pytest.approx(n, abs=1e-6)
        for a in counts.emissions:
            np.testing.assert_allclose(a.sum(axis=(1, 2)), n, atol=1e-6)

    def test_zero_probability_raises(self):
        spec = ModelSpec(k=2, T=1, categories=(2,))
        params = LMParameters(
            [0.5, 0.5], np.full((2, 2), 0.5), (np.array([[1.0, 0.0], [1.0, 0.0]]),)
        )
        ds = Dataset.from_units(np.array([[[1]]]))
        with pytest.raises(ZeroProbabilityPattern):
            e_step(params, spec, ds)


class TestMStep:
    def test_k1_gives_pooled_proportions(self):
        spec = ModelSpec(k=1, T=2, categories=(2,))
        units = np.array([[[0, 1]], [[1, 1]], [[0, 0]]])
        ds = Dataset.from_units(units)
        params = m_step(e_step(uniform_parameters(spec), spec, ds), spec)
        assert params.initial == pytest.approx([1.0])
        np.testing.assert_allclose(params.transitions, [[1.0]])
        # pooled over occasions: 3 zeros and 3 ones out of 6 cells
        np.testing.assert_allclose(params.emissions[0][0], [0.5, 0.5])

    def test_symmetric_counts_give_symmetric_transitions(self, spec22):
        counts = em_module.ExpectedCounts(
            initial=np.array([5.0, 5.0]),
            transitions=np.array([[[4.0, 1.0], [1.0, 4.0]]]),
            emissions=(np.full((2, 2, 2), 2.5),),
            n=10,
        )
        params = m_step(counts, spec22)
        np.testing.assert_allclose(params.transitions, params.transitions.T)
        np.testing.assert_allclose(params.transitions, [[0.8, 0.2], [0.2, 0.8]])

    def test_empty_state_falls_back_to_uniform(self, spec22):
        counts = em_module.ExpectedCounts(
            initial=np.array([10.0, 0.0]),
            transitions=np.array([[[6.0, 4.0], [0.0, 0.0]]]),
            emissions=(
                np.array([[[5.0, 5.0], [0.0, 0.0]], [[5.0, 5.0], [0.0, 0.0]]]),
            ),
            n=10,
        )
        params, fallbacks = em_module._m_step(counts, spec22)
        np.testing.assert_allclose(params.transitions[1], [0.5, 0.5])
        np.testing.assert_allclose(params.emissions[0][1], [0.5, 0.5])
        assert fallbacks == 2
        assert em_module.m_step(counts, spec22).transitions[1, 0] == 0.5

    def test_one_iteration_from_truth_keeps_validity_and_loglik(self, scenario1):
        ds = _scenario1_dataset(n=200)
        before = log_likelihood(scenario1.params, scenario1.spec, ds)
        updated = m_step(e_step(scenario1.params, scenario1.spec, ds), scenario1.spec)
        from lmselect import validate

        assert validate(updated, scenario1.spec) == []
        after = log_likelihood(updated, scenario1.spec, ds)
        assert after >= before - 1e-8


class TestFit:
    def test_k1_closed_form(self):
        spec = ModelSpec(k=1, T=2, categories=(2,))
        units = np.array([[[0, 1]], [[1, 1]], [[0, 0]], [[0, 1]]])
        ds = Dataset.from_units(units)
        result = fit(spec, ds)
        assert result.n_iter == 0
        assert result.start_type == "closed-form"
        assert result.converged
        # category proportions pooled over both occasions: 4/8 zeros
        np.testing.assert_allclose(result.params.emissions[0][0], [0.5, 0.5])
        counts = np.array([4.0, 4.0])
        want = counts @ np.log(result.params.emissions[0][0])
        assert result.log_likelihood == pytest.approx(want)

    def test_k1_closed_form_is_em_fixed_point(self):
        spec = ModelSpec(k=1, T=3, categories=(2,))
        ds = _scenario1_dataset(n=50)
        ds = Dataset(ds.patterns[:, :, :3], ds.frequencies)
        closed = fit(spec, ds)
        stepped = m_step(e_step(closed.params, spec, ds), spec)
        np.testing.assert_allclose(
            stepped.emissions[0], closed.params.emissions[0], atol=1e-12
        )

    def test_monotone_trace(self, fast_em):
        ds = _scenario1_dataset(n=100)
        result = fit(ModelSpec(k=2, T=5, categories=(2,)), ds, fast_em)
        assert np.all(np.diff(result.trace) >= -1e-8)

    def test_fixed_point_after_convergence(self, fast_em):
        spec = ModelSpec(k=2, T=5, categories=(2,))
        ds = _scenario1_dataset(n=100)
        result = fit(spec, ds, fast_em)
        refreshed = m_step(e_step(result.params, spec, ds), spec)
        delta = abs(
            log_likelihood(refreshed, spec, ds) - result.log_likelihood
        ) / (1.0 + abs(result.log_likelihood))
        assert delta < 10 * fast_em.tol

    def test_same_seed_is_bit_identical(self, fast_em):
        spec = ModelSpec(k=2, T=5, categories=(2,))
        ds = _scenario1_dataset(n=80)
        a = fit(spec, ds, fast_em)
        b = fit(spec, ds, fast_em)
        assert a.log_likelihood == b.log_likelihood
        assert a.start_index == b.start_index and a.n_iter == b.n_iter
        np.testing.assert_array_equal(a.params.initial, b.params.initial)
        np.testing.assert_array_equal(a.params.transitions, b.params.transitions)
        np.testing.assert_array_equal(a.params.emissions[0], b.params.emissions[0])
        np.testing.assert_array_equal(a.trace, b.trace)

    def test_unit_order_does_not_matter(self, fast_em):
        spec = ModelSpec(k=2, T=5, categories=(2,))
        rng = np.random.default_rng(9)
        units = rng.integers(0, 2, size=(60, 1, 5))
        a = fit(spec, Dataset.from_units(units), fast_em)
        b = fit(spec, Dataset.from_units(units[rng.permutation(60)]), fast_em)
        assert a.log_likelihood == b.log_likelihood
        np.testing.assert_array_equal(a.params.initial, b.params.initial)

    def test_recovers_scenario1_emissions(self):
        scenario = scenario_preset(1, n=250, r=3)
        ds = draw_dataset(scenario, 1)
        result = canonicalize_states(
            fit(scenario.spec, ds, EMOptions(seed=42))
        )
        # canonical order sorts by phi(category 0), so state 0 is the
        # (0.2, 0.8) state and state 1 the (0.8, 0.2) state
        want = np.array([[0.2, 0.8], [0.8, 0.2]])
        for j in range(3):
            np.testing.assert_allclose(result.params.emissions[j], want, atol=0.1)

    def test_permutation_leaves_loglik_unchanged(self, scenario1):
        ds = _scenario1_dataset(n=60)
        swapped = permute_states(scenario1.params, [1, 0])
        a = log_likelihood(scenario1.params, scenario1.spec, ds)
        b = log_likelihood(swapped, scenario1.spec, ds)
        assert a == pytest.approx(b, rel=1e-14)

    def test_numpy_and_fast_paths_agree(self, fast_em):
        spec = ModelSpec(k=3, T=5, categories=(2,))
        ds = _scenario1_dataset(n=80)
        freq = ds.frequencies.astype(float)
        start = deterministic_start(spec)
        onehots = em_module._pattern_onehots(ds, spec)
        options = EMOptions(max_iter=150, tol=1e-10, n_random_starts=0)
        p_np, tr_np, _, _ = em_module._run_em(start, spec, ds, freq, onehots, options)
        p_nb, tr_nb, _, _ = em_module._run_em_fast(start, spec, ds, freq, options)
        assert tr_np[-1] == pytest.approx(tr_nb[-1], abs=1e-9)
        np.testing.assert_allclose(p_np.initial, p_nb.initial, atol=1e-10)
        np.testing.assert_allclose(p_np.transitions, p_nb.transitions, atol=1e-10)
        np.testing.assert_allclose(p_np.emissions[0], p_nb.emissions[0], atol=1e-10)

    def test_heterogeneous_transitions_fit_runs(self, fast_em):
        spec = ModelSpec(k=2, T=3, categories=(2,), transition_homogeneous=False)
        rng = np.random.default_rng(3)
        units = rng.integers(0, 2, size=(50, 1, 3))
        result = fit(spec, Dataset.from_units(units), fast_em)
        assert result.params.transitions.shape == (2, 2, 2)
        assert np.all(np.diff(result.trace) >= -1e-8)

    def test_heterogeneous_emissions_fit_runs(self, fast_em):
        spec = ModelSpec(k=2, T=3, categories=(2,), emission_homogeneous=False)
        rng = np.random.default_rng(4)
        units = rng.integers(0, 2, size=(50, 1, 3))
        result = fit(spec, Dataset.from_units(units), fast_em)
        assert result.params.emissions[0].shape == (3, 2, 2)
        assert np.all(np.diff(result.trace) >= -1e-8)
        from lmselect import validate

        assert validate(result.params, spec) == []

    def test_heterogeneous_emissions_k1_closed_form(self):
        spec = ModelSpec(k=1, T=2, categories=(2,), emission_homogeneous=False)
        units = np.array([[[0, 1]], [[0, 1]], [[1, 1]], [[0, 0]]])
        result = fit(spec, Dataset.from_units(units))
        # per-occasion proportions: t=1 has 3/4 zeros, t=2 has 1/4 zeros
        np.testing.assert_allclose(result.params.emissions[0][0, 0], [0.75, 0.25])
        np.testing.assert_allclose(result.params.emissions[0][1, 0], [0.25, 0.75])

    def test_all_starts_failed_is_reported(self, monkeypatch, fast_em):
        def boom(*args, **kwargs):
            raise ZeroProbabilityPattern(0)

        monkeypatch.setattr(em_module, "_run_start", boom)
        ds = _scenario1_dataset(n=10)
        with pytest.raises(AllStartsFailed):
            fit(ModelSpec(k=2, T=5, categories=(2,)), ds, fast_em)


class TestStarts:
    def test_deterministic_start_rows_are_distinct(self):
        spec = ModelSpec(k=5, T=5, categories=(2,))
        params = deterministic_start(spec)
        from lmselect import validate

        assert validate(params, spec) == []
        rows = params.emissions[0]
        assert len({tuple(np.round(row, 12)) for row in rows}) == 5

    def test_random_start_is_valid_and_seed_dependent(self):
        spec = ModelSpec(k=3, T=4, categories=(2, 3))
        from lmselect import validate

        a = random_start(spec, np.random.default_rng(1))
        b = random_start(spec, np.random.default_rng(1))
        c = random_start(spec, np.random.default_rng(2))
        assert validate(a, spec) == []
        np.testing.assert_array_equal(a.initial, b.initial)
        assert not np.array_equal(a.initial, c.initial)


class TestCanonicalize:
    def _fitted(self, fast_em):
        ds = _scenario1_dataset(n=100)
        return fit(ModelSpec(k=2, T=5, categories=(2,)), ds, fast_em)

    def test_involution_and_idempotence(self, fast_em):
        result = canonicalize_states(self._fitted(fast_em))
        again = canonicalize_states(result)
        np.testing.assert_array_equal(result.params.initial, again.params.initial)
        np.testing.assert_array_equal(result.params.emissions[0], again.params.emissions[0])

    def test_restores_swapped_states(self, fast_em):
        result = canonicalize_states(self._fitted(fast_em))
        swapped = em_module.FitResult(
            params=permute_states(result.params, [1, 0]),
            log_likelihood=result.log_likelihood,
            n_iter=result.n_iter,
            trace=result.trace,
            converged=result.converged,
            start_index=result.start_index,
            start_type=result.start_type,
        )
        restored = canonicalize_states(swapped)
        np.testing.assert_array_equal(restored.params.initial, result.params.initial)
        np.testing.assert_array_equal(
            restored.params.transitions, result.params.transitions
        )

    def test_loglik_exactly_unchanged(self, fast_em):
        raw = self._fitted(fast_em)
        canonical = canonicalize_states(raw)
        assert canonical.log_likelihood == raw.log_likelihood
        ds = _scenario1_dataset(n=100)
        spec = ModelSpec(k=2, T=5, categories=(2,))
        assert log_likelihood(canonical.params, spec, ds) == pytest.approx(
            log_likelihood(raw.params, spec, ds), rel=1e-14
        )

    def test_sorted_by_first_emission_probability(self, fast_em):
        result = canonicalize_states(self._fitted(fast_em))
        phi0 = result.params.emissions[0][:, 0]
        assert np.all(np.diff(phi0) >= 0)
