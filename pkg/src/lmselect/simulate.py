"""Data generation from latent Markov parameterisations and study presets.

Five named presets cover the Monte Carlo design: two-state chains with
strong or weak persistence and sharp or noisy emissions (presets 1-3,
n = 250 or 500), and three-state chains with a mixed-quality emission
block (presets 4-5, n = 500).  All presets use T = 5 occasions and binary
responses; with several responses every response shares the same
emission matrix.

Randomness is fully reproducible: every replicate draws from a PCG64
stream seeded by SeedSequence(master_seed, spawn_key=(crc32(name),
replicate_index, stream)), so replicate i can be regenerated in
isolation and replicates are independent across indices.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .model import Dataset, LMParameters, ModelSpec, require_valid

DEFAULT_MASTER_SEED = 20130501


@dataclass(frozen=True)
class Scenario:
    """A named generative design: true model, sample size, replicate count."""

    name: str
    spec: ModelSpec
    params: LMParameters
    n: int
    n_replicates: int = 100

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        require_valid(self.params, self.spec)


_PRESET_TRANSITIONS = {
    1: [[0.9, 0.1], [0.1, 0.9]],
    2: [[0.7, 0.3], [0.3, 0.7]],
    3: [[0.9, 0.1], [0.1, 0.9]],
    4: [[0.90, 0.05, 0.05], [0.05, 0.90, 0.05], [0.05, 0.05, 0.90]],
    5: [[0.70, 0.15, 0.15], [0.15, 0.70, 0.15], [0.15, 0.15, 0.70]],
}

# Emission rows are states, columns are the binary response categories.
_PRESET_EMISSION_ROWS = {
    1: [[0.8, 0.2], [0.2, 0.8]],
    2: [[0.8, 0.2], [0.2, 0.8]],
    3: [[0.7, 0.3], [0.3, 0.7]],
    4: [[0.9, 0.1], [0.1, 0.9], [0.7, 0.3]],
    5: [[0.9, 0.1], [0.1, 0.9], [0.7, 0.3]],
}


def scenario_preset(
    name: int, n: int | None = None, r: int = 1, n_replicates: int = 100
) -> Scenario:
    """Build one of the five named study presets.

    Args:
        name: preset number, 1 to 5.
        n: sample size; defaults to 250 for presets 1-3 and is fixed at
            500 for presets 4-5 (passing anything else there is an error).
        r: number of binary responses, all sharing the emission matrix.
        n_replicates: Monte Carlo replicates the preset is meant to span.
    """
    if name not in _PRESET_TRANSITIONS:
        raise ValueError(f"unknown scenario {name!r}, valid names are 1..5")
    if r < 1:
        raise ValueError("r must be >= 1")
    if name in (4, 5):
        if n is None:
            n = 500
        elif n != 500:
            raise ValueError(f"scenario {name} is defined for n = 500 only")
    elif n is None:
        n = 250
    k = len(_PRESET_TRANSITIONS[name])
    spec = ModelSpec(k=k, T=5, categories=(2,) * r)
    emission = np.asarray(_PRESET_EMISSION_ROWS[name], dtype=float)
    params = LMParameters(
        initial=np.full(k, 1.0 / k),
        transitions=np.asarray(_PRESET_TRANSITIONS[name], dtype=float),
        emissions=(emission,) * r,
    )
    return Scenario(
        name=f"scenario{name}", spec=spec, params=params, n=n, n_replicates=n_replicates
    )


def _draw_index(cumulative: np.ndarray, rng: np.random.Generator) -> int:
    """Sample one index from a distribution given its cumulative sums."""
    idx = int(np.searchsorted(cumulative, rng.random(), side="right"))
    return min(idx, cumulative.shape[0] - 1)


def draw_unit(params: LMParameters, spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Sample one unit's response pattern, shape (r, T).

    The latent path starts from the initial distribution and follows the
    transition rows; each response at each occasion is then drawn from the
    emission row of the current state.  The path itself is discarded.
    """
    T, r = spec.T, spec.r
    cum_initial = np.cumsum(params.initial)
    pattern = np.empty((r, T), dtype=np.int64)
    state = _draw_index(cum_initial, rng)
    for t in range(T):
        if t > 0:
            cum_row = np.cumsum(params.transition_matrix(t + 1)[state])
            state = _draw_index(cum_row, rng)
        for j in range(r):
            cum_emit = np.cumsum(params.emission_matrix(j, t + 1)[state])
            pattern[j, t] = _draw_index(cum_emit, rng)
    return pattern


def substream(
    master_seed: int, scenario_name: str, replicate_index: int, stream: int = 0
) -> np.random.SeedSequence:
    """SeedSequence for one replicate of one scenario.

    ``stream`` separates independent uses within the same replicate
    (0 = data generation; callers may reserve further streams).
    """
    key = zlib.crc32(scenario_name.encode("utf-8"))
    return np.random.SeedSequence(
        master_seed, spawn_key=(key, int(replicate_index), int(stream))
    )


def replicate_rng(
    scenario: Scenario, replicate_index: int, master_seed: int = DEFAULT_MASTER_SEED
) -> np.random.Generator:
    """Data-generation stream for one replicate of `scenario`."""
    return np.random.default_rng(substream(master_seed, scenario.name, replicate_index, 0))


def draw_units(
    scenario: Scenario,
    replicate_index: int = 0,
    master_seed: int = DEFAULT_MASTER_SEED,
) -> np.ndarray:
    """Unit-level draws for one replicate, shape (n, r, T), in draw order."""
    rng = replicate_rng(scenario, replicate_index, master_seed)
    return np.stack(
        [draw_unit(scenario.params, scenario.spec, rng) for _ in range(scenario.n)]
    )


def draw_dataset(
    scenario: Scenario,
    replicate_index: int = 0,
    master_seed: int = DEFAULT_MASTER_SEED,
) -> Dataset:
    """Aggregated dataset for one replicate of `scenario`."""
    return Dataset.from_units(draw_units(scenario, replicate_index, master_seed))
