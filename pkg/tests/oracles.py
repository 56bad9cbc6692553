"""Independent brute-force references for checking the library's fast paths.

Everything here enumerates the k**T latent paths with plain Python loops
and shares no code with the library implementation, so agreement between
the two is a meaningful check.
"""

import itertools
import math

import numpy as np

from lmselect.model import LMParameters, ModelSpec


def all_paths(spec):
    return itertools.product(range(spec.k), repeat=spec.T)


def path_probability(params, spec, path, pattern) -> float:
    """p(U = path, Y = pattern) as a plain product of parameter entries."""
    pattern = np.atleast_2d(pattern)
    p = params.initial[path[0]]
    for t in range(1, spec.T):
        p *= params.transition_matrix(t + 1)[path[t - 1], path[t]]
    for t in range(spec.T):
        for j in range(spec.r):
            p *= params.emission_matrix(j, t + 1)[path[t], pattern[j, t]]
    return float(p)


def manifest_probability(params, spec, pattern) -> float:
    return sum(path_probability(params, spec, path, pattern) for path in all_paths(spec))


def marginal_posteriors(params, spec, pattern) -> np.ndarray:
    """(T, k) matrix of p(U_t = u | Y = pattern) by full enumeration."""
    post = np.zeros((spec.T, spec.k))
    total = 0.0
    for path in all_paths(spec):
        p = path_probability(params, spec, path, pattern)
        total += p
        for t, u in enumerate(path):
            post[t, u] += p
    return post / total


def pairwise_joint_posteriors(params, spec, pattern) -> np.ndarray:
    """(T-1, k, k) array of p(U_{t-1} = v, U_t = u | Y = pattern)."""
    joint = np.zeros((spec.T - 1, spec.k, spec.k))
    total = 0.0
    for path in all_paths(spec):
        p = path_probability(params, spec, path, pattern)
        total += p
        for t in range(1, spec.T):
            joint[t - 1, path[t - 1], path[t]] += p
    return joint / total


def path_entropy(params, spec, pattern) -> float:
    """Shannon entropy of the posterior over whole latent paths."""
    probs = [path_probability(params, spec, path, pattern) for path in all_paths(spec)]
    total = sum(probs)
    h = 0.0
    for p in probs:
        q = p / total
        if q > 0.0:
            h -= q * math.log(q)
    return h


def unscaled_forward(params, spec, pattern) -> np.ndarray:
    """(T, k) unscaled forward table q(t, u); sums to p(y) at t = T."""
    pattern = np.atleast_2d(pattern)
    q = np.zeros((spec.T, spec.k))
    for u in range(spec.k):
        q[0, u] = params.initial[u]
        for j in range(spec.r):
            q[0, u] *= params.emission_matrix(j, 1)[u, pattern[j, 0]]
    for t in range(1, spec.T):
        pi = params.transition_matrix(t + 1)
        for u in range(spec.k):
            acc = 0.0
            for v in range(spec.k):
                acc += q[t - 1, v] * pi[v, u]
            for j in range(spec.r):
                acc *= params.emission_matrix(j, t + 1)[u, pattern[j, t]]
            q[t, u] = acc
    return q


def expected_counts(params, spec, pattern, weight=1.0):
    """(initial, transitions, emissions) expected counts for one pattern.

    Shapes match lmselect.em.ExpectedCounts: (k,), (T-1, k, k), and per
    response (T, k, c_j).
    """
    marg = marginal_posteriors(params, spec, pattern)
    joint = pairwise_joint_posteriors(params, spec, pattern)
    pattern = np.atleast_2d(pattern)
    initial = weight * marg[0]
    transitions = weight * joint
    emissions = []
    for j, c in enumerate(spec.categories):
        a = np.zeros((spec.T, spec.k, c))
        for t in range(spec.T):
            a[t, :, pattern[j, t]] = weight * marg[t]
        emissions.append(a)
    return initial, transitions, emissions


def random_parameters(spec, rng) -> LMParameters:
    """Valid random parameters (normalised uniform rows) for test inputs."""

    def rows(shape):
        w = rng.uniform(0.05, 1.0, size=shape)
        return w / w.sum(axis=-1, keepdims=True)

    trans = rows((spec.k, spec.k))
    if not spec.transition_homogeneous:
        trans = rows((spec.T - 1, spec.k, spec.k))
    emissions = tuple(
        rows((spec.k, c) if spec.emission_homogeneous else (spec.T, spec.k, c))
        for c in spec.categories
    )
    return LMParameters(rows(spec.k), trans, emissions)


def random_spec(rng, k_max=3, t_max=5, r_max=2, binary=True) -> ModelSpec:
    k = int(rng.integers(1, k_max + 1))
    T = int(rng.integers(1, t_max + 1))
    r = int(rng.integers(1, r_max + 1))
    cats = tuple(2 if binary else int(rng.integers(2, 4)) for _ in range(r))
    return ModelSpec(k=k, T=T, categories=cats)
