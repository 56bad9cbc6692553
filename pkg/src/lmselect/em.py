"""Maximum-likelihood estimation by EM with deterministic-plus-random multistart.

The E-step turns posterior state probabilities into expected sufficient
statistics (initial-state, transition, and response counts); the M-step
has the usual closed-form ratio updates.  A fit runs one deterministic
start plus a configurable number of seeded random starts and keeps the
best final log-likelihood, with ties resolved by the lowest start index.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _fastem, inference
from .model import (
    Dataset,
    LMParameters,
    ModelSpec,
    permute_states,
    require_valid,
)

# Expected state occupancy below which an M-step row update would be 0/0;
# such rows fall back to uniform and the event is counted in diagnostics.
OCCUPANCY_FLOOR = 1e-12


class AllStartsFailed(RuntimeError):
    """Every EM start hit a zero-probability pattern at initialisation."""


@dataclass(frozen=True)
class EMOptions:
    """Knobs for `fit`.

    Convergence is declared when |l_it - l_{it-1}| / (1 + |l_it|) < tol.
    Random starts get independent substreams derived from (seed, start
    index) via numpy's SeedSequence, so a fit is reproducible bit for bit.
    """

    max_iter: int = 5000
    tol: float = 1e-8
    n_random_starts: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if self.n_random_starts < 0:
            raise ValueError("n_random_starts must be >= 0")


@dataclass(frozen=True)
class ExpectedCounts:
    """Expected complete-data frequencies given parameters and data.

    Attributes:
        initial: expected unit count per state at occasion 1, shape (k,).
        transitions: expected move counts, entry [t-2, v, u] for the move
            from v into u at occasion t = 2..T, shape (T-1, k, k).
        emissions: per response j, expected response counts with entry
            [t-1, u, y], shape (T, k, c_j).
        n: total sample size.
    """

    initial: np.ndarray
    transitions: np.ndarray
    emissions: tuple[np.ndarray, ...]
    n: int


@dataclass(frozen=True)
class FitResult:
    """Outcome of one EM fit (best start of a multistart run).

    The trace holds the log-likelihood of the current parameters at each
    EM iteration, including the initial ones; it is nondecreasing up to a
    1e-8 slack.  ``n_fallback_rows`` counts M-step rows that hit the
    empty-state fallback, for diagnostics.
    """

    params: LMParameters
    log_likelihood: float
    n_iter: int
    trace: np.ndarray
    converged: bool
    start_index: int
    start_type: str
    n_fallback_rows: int = 0

    def __post_init__(self):
        trace = np.array(self.trace, dtype=float)
        trace.flags.writeable = False
        object.__setattr__(self, "trace", trace)


def _pattern_onehots(dataset: Dataset, spec: ModelSpec) -> list[np.ndarray]:
    """Per response j, indicator array of shape (P, T, c_j)."""
    out = []
    for j, c in enumerate(spec.categories):
        out.append((dataset.patterns[:, j, :, np.newaxis] == np.arange(c)).astype(float))
    return out


def _counts_from_posteriors(
    marginal: np.ndarray,
    conditional: np.ndarray,
    freq: np.ndarray,
    onehots: list[np.ndarray],
    spec: ModelSpec,
) -> ExpectedCounts:
    initial = freq @ marginal[:, 0, :]
    if spec.T > 1:
        transitions = np.einsum(
            "p,ptv,ptvu->tvu", freq, marginal[:, :-1, :], conditional
        )
    else:
        transitions = np.empty((0, spec.k, spec.k))
    emissions = tuple(
        np.einsum("p,ptu,ptc->tuc", freq, marginal, onehots[j])
        for j in range(spec.r)
    )
    return ExpectedCounts(
        initial=initial,
        transitions=transitions,
        emissions=emissions,
        n=int(round(freq.sum())),
    )


def e_step(params: LMParameters, spec: ModelSpec, dataset: Dataset) -> ExpectedCounts:
    """Expected complete-data counts under `params`.

    Marginal posteriors weight the response and initial-state counts; the
    joint posterior of (U_{t-1}, U_t) weights the transition counts.
    Raises ZeroProbabilityPattern when some observed pattern cannot occur
    under `params`.
    """
    require_valid(params, spec)
    dataset.check_compatible(spec)
    marginal, conditional, _ = inference._posterior_arrays(params, spec, dataset.patterns)
    freq = dataset.frequencies.astype(float)
    return _counts_from_posteriors(
        marginal, conditional, freq, _pattern_onehots(dataset, spec), spec
    )


def _normalize_rows(matrix: np.ndarray) -> tuple[np.ndarray, int]:
    """Rows scaled to sum 1; near-empty rows become uniform (count returned)."""
    sums = matrix.sum(axis=-1, keepdims=True)
    degenerate = sums < OCCUPANCY_FLOOR
    k = matrix.shape[-1]
    out = np.where(degenerate, 1.0 / k, matrix / np.where(degenerate, 1.0, sums))
    return out, int(degenerate.sum())


def _m_step(counts: ExpectedCounts, spec: ModelSpec) -> tuple[LMParameters, int]:
    fallbacks = 0
    initial = counts.initial / counts.initial.sum()

    k, T = spec.k, spec.T
    if T == 1:
        # No transitions are observed; the matrix is vacuous.
        trans = np.full((k, k), 1.0 / k)
        if not spec.transition_homogeneous:
            trans = np.empty((0, k, k))
    elif spec.transition_homogeneous:
        trans, nf = _normalize_rows(counts.transitions.sum(axis=0))
        fallbacks += nf
    else:
        trans, nf = _normalize_rows(counts.transitions)
        fallbacks += nf

    emissions = []
    for j in range(spec.r):
        if spec.emission_homogeneous:
            e, nf = _normalize_rows(counts.emissions[j].sum(axis=0))
        else:
            e, nf = _normalize_rows(counts.emissions[j])
        emissions.append(e)
        fallbacks += nf
    return LMParameters(initial, trans, tuple(emissions)), fallbacks


def m_step(counts: ExpectedCounts, spec: ModelSpec) -> LMParameters:
    """Closed-form parameter update from expected counts.

    Each probability is the ratio of its expected count to the matching
    row total, with occasion indices pooled when the corresponding block
    is time homogeneous.  Rows whose expected occupancy is below
    ``OCCUPANCY_FLOOR`` fall back to uniform instead of dividing by zero.
    """
    return _m_step(counts, spec)[0]


def deterministic_start(spec: ModelSpec) -> LMParameters:
    """Fixed symmetric-breaking start: uniform chain, tilted emission rows.

    An exactly uniform start is an EM saddle point, so emission rows are
    perturbed off uniform by a fixed pattern with amplitude 0.1 / (1 + u//2)
    and sign alternating in (state + category), making all state rows
    distinct.
    """
    k, T = spec.k, spec.T
    initial = np.full(k, 1.0 / k)
    trans = np.full((k, k), 1.0 / k)
    if not spec.transition_homogeneous:
        trans = np.tile(trans, (T - 1, 1, 1)) if T > 1 else np.empty((0, k, k))
    emissions = []
    for c in spec.categories:
        u = np.arange(k)[:, np.newaxis]
        y = np.arange(c)[np.newaxis, :]
        amp = 0.1 / (1.0 + u // 2)
        sign = np.where((u + y) % 2 == 0, 1.0, -1.0)
        w = 1.0 + amp * sign
        e = w / w.sum(axis=1, keepdims=True)
        if not spec.emission_homogeneous:
            e = np.tile(e, (T, 1, 1))
        emissions.append(e)
    return LMParameters(initial, trans, tuple(emissions))


def random_start(spec: ModelSpec, rng: np.random.Generator) -> LMParameters:
    """Start with every distribution drawn as a normalised uniform row."""

    def rows(shape):
        w = rng.random(shape)
        return w / w.sum(axis=-1, keepdims=True)

    k, T = spec.k, spec.T
    initial = rows(k)
    if spec.transition_homogeneous:
        trans = rows((k, k))
    else:
        trans = rows((T - 1, k, k)) if T > 1 else np.empty((0, k, k))
    emissions = []
    for c in spec.categories:
        shape = (k, c) if spec.emission_homogeneous else (T, k, c)
        emissions.append(rows(shape))
    return LMParameters(initial, trans, tuple(emissions))


def _closed_form_k1(spec: ModelSpec, dataset: Dataset) -> FitResult:
    """Exact ML solution for the one-state model (independence fit)."""
    T = spec.T
    n = dataset.n
    freq = dataset.frequencies.astype(float)
    trans = np.ones((1, 1)) if spec.transition_homogeneous else np.ones((T - 1, 1, 1))
    emissions = []
    for j, c in enumerate(spec.categories):
        onehot = (dataset.patterns[:, j, :, np.newaxis] == np.arange(c)).astype(float)
        per_t = np.einsum("p,ptc->tc", freq, onehot)  # (T, c)
        if spec.emission_homogeneous:
            emissions.append((per_t.sum(axis=0) / (n * T))[np.newaxis, :])
        else:
            emissions.append((per_t / n)[:, np.newaxis, :])
    params = LMParameters(np.ones(1), trans, tuple(emissions))
    ll = inference.log_likelihood(params, spec, dataset)
    return FitResult(
        params=params,
        log_likelihood=ll,
        n_iter=0,
        trace=np.array([ll]),
        converged=True,
        start_index=0,
        start_type="closed-form",
    )


def _run_em(
    params: LMParameters,
    spec: ModelSpec,
    dataset: Dataset,
    freq: np.ndarray,
    onehots: list[np.ndarray],
    options: EMOptions,
):
    """EM iterations from one start; returns (params, trace, converged, fallbacks)."""
    trace: list[float] = []
    prev = None
    converged = False
    fallbacks = 0
    for it in range(options.max_iter + 1):
        marginal, conditional, logp = inference._posterior_arrays(
            params, spec, dataset.patterns
        )
        ll = float(freq @ logp)
        trace.append(ll)
        if prev is not None and abs(ll - prev) / (1.0 + abs(ll)) < options.tol:
            converged = True
            break
        if it == options.max_iter:
            break
        counts = _counts_from_posteriors(marginal, conditional, freq, onehots, spec)
        params, nf = _m_step(counts, spec)
        fallbacks += nf
        prev = ll
    return params, trace, converged, fallbacks


def _run_em_fast(
    start: LMParameters,
    spec: ModelSpec,
    dataset: Dataset,
    freq: np.ndarray,
    options: EMOptions,
):
    """Same contract as `_run_em`, delegated to the compiled kernel."""
    cats = np.array(spec.categories, dtype=np.int64)
    cmax = int(cats.max())
    emis = np.zeros((spec.r, spec.k, cmax))
    for j in range(spec.r):
        emis[j, :, : cats[j]] = start.emissions[j]
    initial, trans, emis, trace, n_trace, status, bad, fallbacks = _fastem.em_loop(
        dataset.patterns,
        freq,
        cats,
        np.array(start.initial),
        np.array(start.transitions),
        emis,
        options.max_iter,
        options.tol,
        OCCUPANCY_FLOOR,
    )
    if status == _fastem.ZERO_PROBABILITY:
        raise inference.ZeroProbabilityPattern(int(bad))
    params = LMParameters(
        initial, trans, tuple(emis[j, :, : cats[j]] for j in range(spec.r))
    )
    return params, list(trace[:n_trace]), status == _fastem.CONVERGED, int(fallbacks)


def _run_start(
    start: LMParameters,
    spec: ModelSpec,
    dataset: Dataset,
    freq: np.ndarray,
    onehots: list[np.ndarray],
    options: EMOptions,
):
    if (
        _fastem.HAVE_NUMBA
        and spec.transition_homogeneous
        and spec.emission_homogeneous
        and spec.T > 1
    ):
        return _run_em_fast(start, spec, dataset, freq, options)
    return _run_em(start, spec, dataset, freq, onehots, options)


def fit(spec: ModelSpec, dataset: Dataset, options: EMOptions = EMOptions()) -> FitResult:
    """Maximum-likelihood fit by multistart EM.

    Runs EM from the deterministic start (index 0) and from
    ``options.n_random_starts`` random starts, returning the result with
    the highest final log-likelihood (earliest start on ties).  The
    one-state model bypasses EM entirely: its maximum has a closed form.

    Raises AllStartsFailed when every start dies on a zero-probability
    pattern.
    """
    dataset.check_compatible(spec)
    if spec.k == 1:
        return _closed_form_k1(spec, dataset)

    freq = dataset.frequencies.astype(float)
    onehots = _pattern_onehots(dataset, spec)

    best: FitResult | None = None
    failures: list[str] = []
    for idx in range(options.n_random_starts + 1):
        if idx == 0:
            start = deterministic_start(spec)
            start_type = "deterministic"
        else:
            rng = np.random.default_rng(
                np.random.SeedSequence(options.seed, spawn_key=(idx,))
            )
            start = random_start(spec, rng)
            start_type = "random"
        try:
            params, trace, converged, fallbacks = _run_start(
                start, spec, dataset, freq, onehots, options
            )
        except inference.ZeroProbabilityPattern as err:
            failures.append(f"start {idx}: {err}")
            continue
        candidate = FitResult(
            params=params,
            log_likelihood=trace[-1],
            n_iter=len(trace) - 1,
            trace=np.array(trace),
            converged=converged,
            start_index=idx,
            start_type=start_type,
            n_fallback_rows=fallbacks,
        )
        if best is None or candidate.log_likelihood > best.log_likelihood:
            best = candidate
    if best is None:
        raise AllStartsFailed(
            "all EM starts failed on zero-probability patterns: " + "; ".join(failures)
        )
    return best


def canonical_permutation(params: LMParameters) -> np.ndarray:
    """State order sorted by the first response's category-0 probability.

    Ties break by ascending initial probability, then by original index.
    """
    e = params.emissions[0]
    phi0 = e[:, 0] if e.ndim == 2 else e[0, :, 0]
    k = params.k
    return np.lexsort((np.arange(k), params.initial, phi0))


def canonicalize_states(result: FitResult) -> FitResult:
    """Relabel states of a fit into canonical order; the likelihood is unchanged."""
    perm = canonical_permutation(result.params)
    return replace(result, params=permute_states(result.params, perm))
