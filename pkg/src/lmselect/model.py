"""Model structure, parameter containers, and free-parameter counting.

A latent Markov model for longitudinal categorical data couples a hidden
first-order Markov chain over ``k`` states, observed at ``T`` occasions,
with ``r`` categorical response variables that are conditionally
independent given the current state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Absolute tolerance for row-stochasticity checks.  Well above double
# accumulation error for the supported sizes (k, c_j up to a few dozen).
STOCHASTIC_ATOL = 1e-10


def _frozen_array(values, dtype=float) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ModelSpec:
    """Structural description of a latent Markov model.

    Attributes:
        k: number of latent states (>= 1).
        T: number of time occasions (>= 1).
        categories: per-response number of categories ``c_j`` (each >= 2);
            labels run 0..c_j-1.
        transition_homogeneous: one transition matrix shared by all
            occasions t = 2..T when true, one matrix per occasion otherwise.
        emission_homogeneous: emission matrices shared across occasions
            when true.
    """

    k: int
    T: int
    categories: tuple[int, ...]
    transition_homogeneous: bool = True
    emission_homogeneous: bool = True

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(int(c) for c in self.categories))
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if not self.categories:
            raise ValueError("at least one response variable is required")
        for j, c in enumerate(self.categories):
            if c < 2:
                raise ValueError(f"response {j} has {c} categories, need >= 2")

    @property
    def r(self) -> int:
        """Number of response variables."""
        return len(self.categories)


@dataclass(frozen=True)
class LMParameters:
    """Probability parameters of a latent Markov model.

    Attributes:
        initial: initial-state distribution, shape (k,).
        transitions: row-stochastic transition matrix with rows indexed by
            the from-state; shape (k, k) when time homogeneous, else
            (T-1, k, k) with entry [t-2] governing the move into occasion t.
        emissions: one row-stochastic matrix per response, rows indexed by
            state and columns by category; shape (k, c_j) when time
            homogeneous, else (T, k, c_j).

    Instances are immutable (arrays are copies with the writeable flag
    cleared) and safe to share across threads or processes.
    """

    initial: np.ndarray
    transitions: np.ndarray
    emissions: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "initial", _frozen_array(self.initial))
        object.__setattr__(self, "transitions", _frozen_array(self.transitions))
        object.__setattr__(
            self, "emissions", tuple(_frozen_array(e) for e in self.emissions)
        )

    @property
    def k(self) -> int:
        return self.initial.shape[0]

    def transition_matrix(self, t: int) -> np.ndarray:
        """Transition matrix governing the move into occasion t (2-based)."""
        if self.transitions.ndim == 2:
            return self.transitions
        return self.transitions[t - 2]

    def emission_matrix(self, j: int, t: int = 1) -> np.ndarray:
        """Emission matrix of response j at occasion t (1-based)."""
        e = self.emissions[j]
        if e.ndim == 2:
            return e
        return e[t - 1]


def uniform_parameters(spec: ModelSpec) -> LMParameters:
    """All-uniform parameters matching `spec` (handy baseline and test fixture)."""
    k, T = spec.k, spec.T
    initial = np.full(k, 1.0 / k)
    trans = np.full((k, k), 1.0 / k)
    if not spec.transition_homogeneous:
        trans = np.tile(trans, (T - 1, 1, 1)) if T > 1 else np.empty((0, k, k))
    emissions = []
    for c in spec.categories:
        e = np.full((k, c), 1.0 / c)
        if not spec.emission_homogeneous:
            e = np.tile(e, (T, 1, 1))
        emissions.append(e)
    return LMParameters(initial, trans, tuple(emissions))


def permute_states(params: LMParameters, perm) -> LMParameters:
    """Relabel states so that new state i is old state ``perm[i]``."""
    perm = np.asarray(perm, dtype=int)
    initial = params.initial[perm]
    if params.transitions.ndim == 2:
        trans = params.transitions[np.ix_(perm, perm)]
    else:
        trans = params.transitions[:, perm][:, :, perm]
    emissions = []
    for e in params.emissions:
        emissions.append(e[perm] if e.ndim == 2 else e[:, perm])
    return LMParameters(initial, trans, tuple(emissions))


def count_free_parameters(spec: ModelSpec) -> int:
    """Number of free probabilities once sum-to-one constraints are removed.

    The count is ``k * sum_j (c_j - 1)`` for the emissions (times T when
    they are occasion specific), ``k - 1`` for the initial distribution,
    and ``k * (k - 1)`` for the transitions (times T - 1 when occasion
    specific).  Every selection index uses this count as its parameter
    penalty.
    """
    emission = spec.k * sum(c - 1 for c in spec.categories)
    if not spec.emission_homogeneous:
        emission *= spec.T
    initial = spec.k - 1
    transition = spec.k * (spec.k - 1)
    if not spec.transition_homogeneous:
        transition *= spec.T - 1
    return emission + initial + transition


def _check_rows(matrix: np.ndarray, what: str, violations: list[str]) -> None:
    if np.any(matrix < 0.0) or np.any(matrix > 1.0):
        bad = np.argwhere((matrix < 0.0) | (matrix > 1.0))[0]
        violations.append(f"{what} entry {tuple(bad)} outside [0, 1]")
    sums = matrix.sum(axis=-1)
    off = np.abs(sums - 1.0) > STOCHASTIC_ATOL
    if np.any(off):
        idx = tuple(np.argwhere(off)[0])
        value = sums[idx] if idx else float(sums)
        label = f" row {idx}" if idx else ""
        violations.append(f"{what}{label} sums to {value!r}")


def validate(params: LMParameters, spec: ModelSpec) -> list[str]:
    """Collect all invariant violations of `params` against `spec`.

    Returns an empty list when the parameters are valid.  Reported
    violations name shapes that disagree with the spec and rows that are
    not probability distributions (sum within ``STOCHASTIC_ATOL`` of 1,
    entries in [0, 1]).
    """
    violations: list[str] = []
    k, T = spec.k, spec.T

    if params.initial.shape != (k,):
        violations.append(f"initial shape {params.initial.shape}, expected {(k,)}")
    else:
        _check_rows(params.initial, "initial", violations)

    want_trans = (k, k) if spec.transition_homogeneous else (T - 1, k, k)
    if params.transitions.shape != want_trans:
        violations.append(
            f"transitions shape {params.transitions.shape}, expected {want_trans}"
        )
    elif T > 1 or spec.transition_homogeneous:
        _check_rows(params.transitions, "transition", violations)

    if len(params.emissions) != spec.r:
        violations.append(f"{len(params.emissions)} emission blocks, expected {spec.r}")
    else:
        for j, c in enumerate(spec.categories):
            want = (k, c) if spec.emission_homogeneous else (T, k, c)
            e = params.emissions[j]
            if e.shape != want:
                violations.append(
                    f"emissions[{j}] shape {e.shape}, expected {want}"
                )
            else:
                _check_rows(e, f"emission[{j}]", violations)
    return violations


def require_valid(params: LMParameters, spec: ModelSpec) -> None:
    """Raise ValueError listing every violation when `params` is invalid."""
    violations = validate(params, spec)
    if violations:
        raise ValueError("invalid parameters: " + "; ".join(violations))


@dataclass(frozen=True)
class Dataset:
    """Observed response configurations with their frequencies.

    Attributes:
        patterns: distinct response configurations, shape (P, r, T), with
            integer category labels; stored in lexicographic order so that
            a dataset is a pure function of its pattern-frequency map.
        frequencies: positive counts per pattern, shape (P,).
    """

    patterns: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        patterns = np.asarray(self.patterns, dtype=np.int64)
        freqs = np.asarray(self.frequencies, dtype=np.int64)
        if patterns.ndim != 3:
            raise ValueError(f"patterns must be (P, r, T), got shape {patterns.shape}")
        if freqs.shape != (patterns.shape[0],):
            raise ValueError("one frequency per pattern is required")
        if patterns.shape[0] == 0:
            raise ValueError("dataset is empty")
        if np.any(freqs <= 0):
            raise ValueError("frequencies must be positive")
        if np.any(patterns < 0):
            raise ValueError("category labels must be nonnegative")
        # Canonical order + duplicate merge: unique rows of the flattened
        # patterns, frequencies pooled.
        flat = patterns.reshape(patterns.shape[0], -1)
        uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
        pooled = np.bincount(inverse, weights=freqs).astype(np.int64)
        object.__setattr__(
            self, "patterns", _frozen_array(uniq.reshape(-1, *patterns.shape[1:]), np.int64)
        )
        object.__setattr__(self, "frequencies", _frozen_array(pooled, np.int64))

    @classmethod
    def from_units(cls, units) -> "Dataset":
        """Aggregate unit-level records of shape (n, r, T) into a dataset."""
        units = np.asarray(units, dtype=np.int64)
        if units.ndim != 3:
            raise ValueError(f"units must be (n, r, T), got shape {units.shape}")
        return cls(units, np.ones(units.shape[0], dtype=np.int64))

    @property
    def n(self) -> int:
        """Total sample size."""
        return int(self.frequencies.sum())

    @property
    def n_patterns(self) -> int:
        return self.patterns.shape[0]

    def check_compatible(self, spec: ModelSpec) -> None:
        """Raise ValueError if the patterns do not conform to `spec`."""
        _, r, T = self.patterns.shape
        if r != spec.r or T != spec.T:
            raise ValueError(
                f"dataset has r={r}, T={T}; spec expects r={spec.r}, T={spec.T}"
            )
        for j, c in enumerate(spec.categories):
            top = int(self.patterns[:, j, :].max())
            if top >= c:
                raise ValueError(
                    f"response {j} contains label {top}, valid labels are 0..{c - 1}"
                )
