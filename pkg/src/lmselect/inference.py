"""Manifest probabilities, posterior state probabilities, and entropies.

All pattern-level quantities are computed with scaled forward-backward
recursions.  The forward vector at occasion t is proportional to the
joint probability q(t, u) = p(U_t = u, Y_1..Y_t = y_1..y_t); the backward
vector is proportional to qbar(t, u) = p(Y_{t+1}..Y_T | U_t = u).  Both
are renormalised per occasion and the log scaling constants are
accumulated, which keeps every intermediate in a safe floating range for
arbitrary sequence lengths.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import Dataset, LMParameters, ModelSpec, require_valid

# entropy_exact enumerates the k**T latent configurations only up to this
# many; beyond it the chain decomposition (exact as well) must be used.
ENUMERATION_CAP = 100_000

_LOG_FLOOR = 1e-300


class ZeroProbabilityPattern(ValueError):
    """A response pattern has probability zero under the current parameters."""

    def __init__(self, pattern_index: int = 0):
        self.pattern_index = pattern_index
        super().__init__(
            f"pattern index {pattern_index} has zero manifest probability"
        )


@dataclass(frozen=True)
class ForwardBackwardTables:
    """Scaled forward/backward vectors for one response pattern.

    ``forward[t] * exp(log_forward_scale[t])`` reconstitutes the unscaled
    forward values q(t, .), and likewise for the backward side, so that
    for every t:  sum_u forward[t, u] * backward[t, u]
    * exp(log_forward_scale[t] + log_backward_scale[t]) = p(Y = y).
    """

    forward: np.ndarray
    backward: np.ndarray
    log_forward_scale: np.ndarray
    log_backward_scale: np.ndarray
    log_prob: float


@dataclass(frozen=True)
class PosteriorTables:
    """Posterior latent-state probabilities given one observed pattern.

    Attributes:
        marginal: f(t, u) = p(U_t = u | Y = y), shape (T, k); each row
            sums to 1.
        pairwise_conditional: rows v, columns u, entry [t-2, v, u] =
            p(U_t = u | U_{t-1} = v, Y = y) for t = 2..T, shape
            (T-1, k, k).  The joint posterior of (U_{t-1}, U_t) is
            recovered as marginal[t-2, v] * pairwise_conditional[t-2, v, u].
        log_prob: log manifest probability of the pattern.
    """

    marginal: np.ndarray
    pairwise_conditional: np.ndarray
    log_prob: float


def _as_patterns(pattern, spec: ModelSpec) -> np.ndarray:
    """Coerce a single (r, T) pattern (or (T,) when r = 1) to shape (1, r, T)."""
    arr = np.asarray(pattern, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.shape != (spec.r, spec.T):
        raise ValueError(
            f"pattern shape {arr.shape} does not match (r, T) = {(spec.r, spec.T)}"
        )
    for j, c in enumerate(spec.categories):
        if arr[j].min() < 0 or arr[j].max() >= c:
            raise ValueError(f"response {j} labels must lie in 0..{c - 1}")
    return arr[np.newaxis]


def _emission_probs(params: LMParameters, spec: ModelSpec, patterns: np.ndarray) -> np.ndarray:
    """Per-occasion joint emission probabilities, shape (P, T, k).

    Entry [p, t, u] is the product over responses j of
    p(Y_j^(t) = y_pj^(t) | U_t = u).
    """
    P, r, T = patterns.shape
    out = np.ones((P, T, spec.k))
    for j in range(r):
        e = params.emissions[j]
        if e.ndim == 2:
            out *= e.T[patterns[:, j, :]]  # (P, T, k)
        else:
            for t in range(T):
                out[:, t, :] *= e[t].T[patterns[:, j, t]]
    return out


def _forward_backward_arrays(params: LMParameters, spec: ModelSpec, patterns: np.ndarray):
    """Batched scaled forward-backward over all patterns.

    Returns (forward, backward, log_c, log_prob, obs) with shapes
    (P, T, k), (P, T, k), (P, T), (P,), (P, T, k).  The backward vectors
    reuse the forward normalisers (standard Rabiner scaling), which makes
    ``forward[t] * backward[t]`` the posterior marginal at t with no
    further normalisation.  Dead patterns (zero manifest probability) get
    log_prob = -inf.
    """
    P, _, T = patterns.shape
    k = spec.k
    obs = _emission_probs(params, spec, patterns)

    forward = np.empty((P, T, k))
    c_vals = np.empty((P, T))

    q = params.initial[np.newaxis, :] * obs[:, 0, :]
    c_vals[:, 0] = q.sum(axis=1)
    safe = np.where(c_vals[:, 0] <= 0.0, 1.0, c_vals[:, 0])
    forward[:, 0, :] = q / safe[:, np.newaxis]
    for t in range(1, T):
        pi = params.transition_matrix(t + 1)
        q = (forward[:, t - 1, :] @ pi) * obs[:, t, :]
        c_vals[:, t] = q.sum(axis=1)
        safe = np.where(c_vals[:, t] <= 0.0, 1.0, c_vals[:, t])
        forward[:, t, :] = q / safe[:, np.newaxis]

    backward = np.empty((P, T, k))
    backward[:, T - 1, :] = 1.0
    for t in range(T - 2, -1, -1):
        pi = params.transition_matrix(t + 2)
        safe = np.where(c_vals[:, t + 1] <= 0.0, 1.0, c_vals[:, t + 1])
        backward[:, t, :] = (
            (obs[:, t + 1, :] * backward[:, t + 1, :]) @ pi.T
        ) / safe[:, np.newaxis]

    with np.errstate(divide="ignore"):
        log_c = np.where(c_vals > 0.0, np.log(np.where(c_vals > 0.0, c_vals, 1.0)), -np.inf)
    log_prob = log_c.sum(axis=1)
    return forward, backward, log_c, log_prob, obs


def _posterior_arrays(params: LMParameters, spec: ModelSpec, patterns: np.ndarray):
    """Batched posterior marginals and pairwise conditionals.

    Returns (marginal, conditional, log_prob) with shapes (P, T, k),
    (P, T-1, k, k), (P,).  Raises ZeroProbabilityPattern if any pattern is
    unreachable under `params`.
    """
    forward, backward, _, log_prob, obs = _forward_backward_arrays(params, spec, patterns)
    if not np.all(np.isfinite(log_prob)):
        raise ZeroProbabilityPattern(int(np.flatnonzero(~np.isfinite(log_prob))[0]))
    P, T, k = forward.shape

    marginal = forward * backward
    # Shared scaling makes each row sum to 1 up to rounding; renormalise to
    # pin the invariant exactly.
    marginal /= marginal.sum(axis=2, keepdims=True)

    if T == 1:
        return marginal, np.empty((P, 0, k, k)), log_prob

    # joint[p, t-1, v, u] ∝ forward[t-1, v] * pi[v, u] * obs[t, u] * backward[t, u]
    e = obs[:, 1:, :] * backward[:, 1:, :]
    if params.transitions.ndim == 2:
        pi = params.transitions[np.newaxis, np.newaxis, :, :]
    else:
        pi = params.transitions[np.newaxis, :, :, :]
    joint = forward[:, :-1, :, np.newaxis] * pi * e[:, :, np.newaxis, :]
    joint /= joint.sum(axis=(2, 3), keepdims=True)
    rows = joint.sum(axis=3, keepdims=True)
    conditional = np.divide(
        joint, rows, out=np.full_like(joint, 1.0 / k), where=rows > 0.0
    )
    return marginal, conditional, log_prob


def forward_backward(params: LMParameters, spec: ModelSpec, pattern) -> ForwardBackwardTables:
    """Scaled forward-backward tables for a single pattern."""
    require_valid(params, spec)
    patterns = _as_patterns(pattern, spec)
    forward, backward, log_c, log_prob, _ = _forward_backward_arrays(params, spec, patterns)
    log_forward_scale = np.cumsum(log_c[0])
    # backward[t] carries the product of the forward normalisers of
    # occasions t+1..T, so its log scale is the complementary tail sum.
    log_backward_scale = log_forward_scale[-1] - log_forward_scale
    return ForwardBackwardTables(
        forward=forward[0],
        backward=backward[0],
        log_forward_scale=log_forward_scale,
        log_backward_scale=log_backward_scale,
        log_prob=float(log_prob[0]),
    )


def log_manifest_probability(params: LMParameters, spec: ModelSpec, pattern) -> float:
    """log p(Y = y) for one response pattern.

    Computed by the forward recursion with per-occasion rescaling; equals
    the log of the sum over all k**T latent paths of
    p(U = u) p(Y = y | U = u).  Returns -inf when every path has a zero
    factor (zero-probability pattern).
    """
    require_valid(params, spec)
    patterns = _as_patterns(pattern, spec)
    return float(_forward_backward_arrays(params, spec, patterns)[3][0])


def pattern_log_probabilities(
    params: LMParameters, spec: ModelSpec, dataset: Dataset
) -> np.ndarray:
    """log p(Y = y) for every distinct pattern in the dataset, shape (P,)."""
    require_valid(params, spec)
    dataset.check_compatible(spec)
    return _forward_backward_arrays(params, spec, dataset.patterns)[3]


def log_likelihood(params: LMParameters, spec: ModelSpec, dataset: Dataset) -> float:
    """Sample log-likelihood: sum over patterns of n_y * log p(Y = y).

    Returns -inf when some observed pattern has zero probability; use
    `pattern_log_probabilities` to locate the offending pattern.
    """
    logp = pattern_log_probabilities(params, spec, dataset)
    if not np.all(np.isfinite(logp)):
        return -np.inf
    return float(dataset.frequencies @ logp)


def posteriors(params: LMParameters, spec: ModelSpec, pattern) -> PosteriorTables:
    """Marginal and pairwise posterior state probabilities for one pattern.

    The marginal at occasion t is f(t, u) = q(t, u) qbar(t, u) / p(Y = y);
    the pairwise block for t = 2..T is derived from
    q(t-1, v) pi(u | v) phi(y_t | u) qbar(t, u) / p(Y = y), stored as the
    conditional of U_t given U_{t-1} = v (rows sum to 1).
    """
    require_valid(params, spec)
    patterns = _as_patterns(pattern, spec)
    marginal, conditional, log_prob = _posterior_arrays(params, spec, patterns)
    return PosteriorTables(
        marginal=marginal[0],
        pairwise_conditional=conditional[0],
        log_prob=float(log_prob[0]),
    )


def _xlogx(p: np.ndarray) -> np.ndarray:
    """x log x with the 0 log 0 := 0 convention."""
    return np.where(p > 0.0, p * np.log(np.clip(p, _LOG_FLOOR, None)), 0.0)


def _entropy_decompose_batch(marginal: np.ndarray, conditional: np.ndarray) -> np.ndarray:
    """Posterior path entropy per pattern via the Markov chain rule.

    H(U_1..U_T | y) = H(U_1 | y)
                      + sum_{t=2..T} sum_v f(t-1, v) H(U_t | U_{t-1}=v, y),
    exact because the posterior of U given Y is itself Markov.
    """
    first = -_xlogx(marginal[:, 0, :]).sum(axis=1)
    if conditional.shape[1] == 0:
        return first
    step = -(marginal[:, :-1, :, np.newaxis] * _xlogx(conditional)).sum(axis=(1, 2, 3))
    return first + step


def _entropy_marginal_batch(marginal: np.ndarray) -> np.ndarray:
    """Sum over occasions of the marginal posterior entropies, per pattern."""
    return -_xlogx(marginal).sum(axis=(1, 2))


def _entropy_enumerate(params: LMParameters, spec: ModelSpec, pattern: np.ndarray) -> float:
    """Posterior path entropy by explicit enumeration of k**T configurations."""
    k, T = spec.k, spec.T
    if k**T > ENUMERATION_CAP:
        raise ValueError(
            f"k**T = {k**T} exceeds the enumeration cap {ENUMERATION_CAP}; "
            "use the chain decomposition"
        )
    obs = _emission_probs(params, spec, pattern[np.newaxis])[0]  # (T, k)
    paths = np.array(list(itertools.product(range(k), repeat=T)), dtype=np.int64)
    weight = params.initial[paths[:, 0]] * obs[0, paths[:, 0]]
    for t in range(1, T):
        pi = params.transition_matrix(t + 1)
        weight = weight * pi[paths[:, t - 1], paths[:, t]] * obs[t, paths[:, t]]
    total = weight.sum()
    if total <= 0.0:
        raise ZeroProbabilityPattern(0)
    post = weight / total
    return float(-_xlogx(post).sum())


def entropy_exact(
    params: LMParameters, spec: ModelSpec, pattern, method: str = "decompose"
) -> float:
    """Entropy of the posterior over whole latent configurations, one unit.

    -sum over latent paths u_1..u_T of f(u | y) log f(u | y).  The default
    chain decomposition is exact for the Markov posterior and works for any
    k and T; ``method="enumerate"`` sums the k**T configurations explicitly
    (only allowed up to ENUMERATION_CAP) and agrees with the decomposition
    to floating precision.
    """
    require_valid(params, spec)
    arr = _as_patterns(pattern, spec)
    if method == "enumerate":
        return _entropy_enumerate(params, spec, arr[0])
    if method != "decompose":
        raise ValueError(f"unknown method {method!r}")
    marginal, conditional, _ = _posterior_arrays(params, spec, arr)
    return float(_entropy_decompose_batch(marginal, conditional)[0])


def entropy_marginal(params: LMParameters, spec: ModelSpec, pattern) -> float:
    """Sum over occasions of the entropy of the marginal posterior, one unit.

    Upper bound for `entropy_exact` (conditioning reduces entropy); the two
    coincide when the posterior factorises over occasions.
    """
    require_valid(params, spec)
    arr = _as_patterns(pattern, spec)
    marginal, _, _ = _posterior_arrays(params, spec, arr)
    return float(_entropy_marginal_batch(marginal)[0])


def entropy_normalized(params: LMParameters, spec: ModelSpec, pattern) -> float:
    """`entropy_marginal` divided by the number of occasions."""
    return entropy_marginal(params, spec, pattern) / spec.T


def _dataset_entropies(
    params: LMParameters, spec: ModelSpec, dataset: Dataset
) -> tuple[float, float, float]:
    """Frequency-weighted (exact, marginal, normalized) entropies in one pass."""
    if spec.k == 1:
        return 0.0, 0.0, 0.0
    marginal, conditional, _ = _posterior_arrays(params, spec, dataset.patterns)
    freq = dataset.frequencies.astype(float)
    exact = float(freq @ _entropy_decompose_batch(marginal, conditional))
    marg = float(freq @ _entropy_marginal_batch(marginal))
    return exact, marg, marg / spec.T


def dataset_entropy(
    params: LMParameters, spec: ModelSpec, dataset: Dataset, kind: str = "exact"
) -> float:
    """Sample entropy: sum over units of the chosen per-unit entropy.

    Distinct patterns are weighted by their frequencies.  Exactly 0 for a
    one-state model, whose posterior is degenerate.
    """
    require_valid(params, spec)
    dataset.check_compatible(spec)
    kinds = {"exact": 0, "marginal": 1, "normalized": 2}
    if kind not in kinds:
        raise ValueError(f"kind must be one of {sorted(kinds)}, got {kind!r}")
    return _dataset_entropies(params, spec, dataset)[kinds[kind]]
