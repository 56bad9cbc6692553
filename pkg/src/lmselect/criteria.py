"""Latent-state selection criteria and the first-increase selection rule.

Two families of indices are computed from a sequence of fitted models
with k = 1, 2, ... states: penalised log-likelihood criteria (AIC, BIC,
AIC3, CAIC) and classification-based criteria that penalise poorly
separated states through the posterior entropy (NEC, NEC1, NEC2, CLC,
ICL-BIC).  By convention all NEC variants equal 1 at k = 1, which lets
them participate in the scan from the start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

# Canonical criterion order (the column order used in reports).
CRITERIA = ("BIC", "AIC", "AIC3", "CAIC", "NEC", "NEC1", "NEC2", "CLC", "ICL-BIC")


@dataclass(frozen=True)
class CriterionValues:
    """All nine selection indices for one fitted state count."""

    k: int
    log_likelihood: float
    n_parameters: int
    entropy: float
    entropy_marginal: float
    entropy_normalized: float
    aic: float
    bic: float
    aic3: float
    caic: float
    nec: float
    nec1: float
    nec2: float
    clc: float
    icl_bic: float

    def value(self, criterion: str) -> float:
        return {
            "AIC": self.aic,
            "BIC": self.bic,
            "AIC3": self.aic3,
            "CAIC": self.caic,
            "NEC": self.nec,
            "NEC1": self.nec1,
            "NEC2": self.nec2,
            "CLC": self.clc,
            "ICL-BIC": self.icl_bic,
        }[criterion]


@dataclass(frozen=True)
class SelectionReport:
    """Selected state count per criterion over an examined k range."""

    selected: dict[str, int]
    boundary: dict[str, bool]
    values: tuple[CriterionValues, ...]

    @property
    def k_values(self) -> tuple[int, ...]:
        return tuple(v.k for v in self.values)


def loglik_criteria(
    log_likelihood: float, n_parameters: int, n: int
) -> tuple[float, float, float, float]:
    """(AIC, BIC, AIC3, CAIC) for a fitted model.

    AIC  = -2 l + 2 p
    BIC  = -2 l + p log n
    AIC3 = -2 l + 3 p
    CAIC = -2 l + p (log n + 1), computed as BIC + p so the identity
    CAIC - BIC = p holds exactly in floating point.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n_parameters < 0:
        raise ValueError("n_parameters must be >= 0")
    minus2 = -2.0 * log_likelihood
    aic = minus2 + 2.0 * n_parameters
    bic = minus2 + n_parameters * math.log(n)
    aic3 = minus2 + 3.0 * n_parameters
    caic = bic + n_parameters
    return aic, bic, aic3, caic


def classification_criteria(
    log_likelihood_k: float,
    log_likelihood_1: float,
    bic_k: float,
    entropy: float,
    entropy_marginal: float,
    entropy_normalized: float,
    k: int,
) -> tuple[float, float, float, float, float]:
    """(NEC, NEC1, NEC2, CLC, ICL-BIC) for a fitted model.

    The NEC variants divide an entropy by the log-likelihood gain over the
    one-state model and are 1 by convention at k = 1.  A nonpositive gain
    at k >= 2 means the model adds no fit over one state; the NEC variants
    then return +inf.  CLC = -2 l + 2 EN and ICL-BIC = BIC + 2 EN use the
    exact posterior entropy.
    """
    clc = -2.0 * log_likelihood_k + 2.0 * entropy
    icl_bic = bic_k + 2.0 * entropy
    if k == 1:
        return 1.0, 1.0, 1.0, clc, icl_bic
    gain = log_likelihood_k - log_likelihood_1
    if gain <= 0.0:
        return math.inf, math.inf, math.inf, clc, icl_bic
    return (
        entropy / gain,
        entropy_marginal / gain,
        entropy_normalized / gain,
        clc,
        icl_bic,
    )


def criterion_values(
    k: int,
    log_likelihood: float,
    n_parameters: int,
    log_likelihood_1: float,
    n: int,
    entropy: float,
    entropy_marginal: float,
    entropy_normalized: float,
) -> CriterionValues:
    """Assemble all nine indices for one fitted state count."""
    aic, bic, aic3, caic = loglik_criteria(log_likelihood, n_parameters, n)
    nec, nec1, nec2, clc, icl_bic = classification_criteria(
        log_likelihood, log_likelihood_1, bic, entropy,
        entropy_marginal, entropy_normalized, k,
    )
    return CriterionValues(
        k=k,
        log_likelihood=log_likelihood,
        n_parameters=n_parameters,
        entropy=entropy,
        entropy_marginal=entropy_marginal,
        entropy_normalized=entropy_normalized,
        aic=aic,
        bic=bic,
        aic3=aic3,
        caic=caic,
        nec=nec,
        nec1=nec1,
        nec2=nec2,
        clc=clc,
        icl_bic=icl_bic,
    )


def _first_increase(ks: Sequence[int], vals: Sequence[float]) -> tuple[int, bool]:
    for i in range(len(vals) - 1):
        if vals[i + 1] > vals[i]:
            return ks[i], False
    return ks[-1], True


def _global_minimum(ks: Sequence[int], vals: Sequence[float]) -> tuple[int, bool]:
    best = min(range(len(vals)), key=lambda i: (vals[i], i))
    return ks[best], best == len(vals) - 1


def select_k(
    values: Sequence[CriterionValues], rule: str = "first-increase"
) -> SelectionReport:
    """Pick a state count per criterion from fits at k = 1..k_max.

    The default rule scans upward and selects the k just before the first
    strictly increasing step of the index; equal consecutive values do not
    stop the scan.  An index that never increases selects k_max with its
    boundary flag set.  ``rule="global-minimum"`` is available for
    sensitivity analysis.  With a single fitted k every criterion selects
    it, boundary flagged.
    """
    values = tuple(sorted(values, key=lambda v: v.k))
    if not values:
        raise ValueError("no criterion values supplied")
    ks = [v.k for v in values]
    if ks[0] != 1 or ks != list(range(1, len(ks) + 1)):
        raise ValueError(f"fits must cover consecutive k starting at 1, got {ks}")
    pick = {"first-increase": _first_increase, "global-minimum": _global_minimum}
    if rule not in pick:
        raise ValueError(f"unknown rule {rule!r}")
    selected: dict[str, int] = {}
    boundary: dict[str, bool] = {}
    for criterion in CRITERIA:
        vals = [v.value(criterion) for v in values]
        selected[criterion], boundary[criterion] = pick[rule](ks, vals)
    return SelectionReport(selected=selected, boundary=boundary, values=values)
