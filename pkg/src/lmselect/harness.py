"""Monte Carlo study orchestration: replicates, fits, selection frequencies.

A study cell is one (scenario, r, n) combination.  Each replicate draws a
dataset from its own substream, fits models with k = 1..k_max, evaluates
all selection criteria (posterior path entropy via the exact chain
decomposition), and applies the first-increase rule.  Cell results
aggregate how often each criterion picked each k.

Replicates are independent and may run in worker processes; records are
always reduced in replicate order, so the output is a pure function of
the configuration regardless of scheduling.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace

import numpy as np

from . import inference
from .criteria import CRITERIA, CriterionValues, criterion_values, select_k
from .em import AllStartsFailed, EMOptions, FitResult, fit
from .model import Dataset, ModelSpec, count_free_parameters
from .simulate import (
    DEFAULT_MASTER_SEED,
    Scenario,
    draw_dataset,
    scenario_preset,
    substream,
)


@dataclass(frozen=True)
class StudyConfig:
    """Configuration of a selection-frequency study."""

    scenarios: tuple[int, ...]
    r_values: tuple[int, ...] = (1, 3, 5)
    n_values: tuple[int, ...] = (250,)
    k_max: int = 5
    n_replicates: int = 100
    em: EMOptions = field(default_factory=EMOptions)
    master_seed: int = DEFAULT_MASTER_SEED

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(int(s) for s in self.scenarios))
        object.__setattr__(self, "r_values", tuple(int(r) for r in self.r_values))
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if not self.scenarios:
            raise ValueError("at least one scenario is required")
        if any(s not in (1, 2, 3, 4, 5) for s in self.scenarios):
            raise ValueError(f"scenario names must be in 1..5, got {self.scenarios}")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")

    def cells(self) -> list[tuple[int, int, int]]:
        """(scenario, n, r) combinations; presets 4-5 exist only at n = 500."""
        out = []
        for s in self.scenarios:
            ns = (500,) if s in (4, 5) else self.n_values
            for n in ns:
                for r in self.r_values:
                    out.append((s, n, r))
        return out


@dataclass(frozen=True)
class ReplicateRecord:
    """Audit record of one replicate: selections or a failure reason."""

    replicate: int
    selected: dict[str, int] | None
    error: str | None
    min_trace_step: float
    values: tuple[CriterionValues, ...] = ()


@dataclass(frozen=True)
class CellResult:
    """Selection frequencies of one (scenario, r, n) cell.

    ``frequencies[i, k-1]`` is the share of successful replicates in which
    criterion ``CRITERIA[i]`` selected k; each row sums to 1.
    """

    scenario: str
    r: int
    n: int
    k_max: int
    frequencies: np.ndarray
    replicates: tuple[ReplicateRecord, ...]
    n_failures: int


@dataclass(frozen=True)
class FrequencyTable:
    """All cell results of one study run."""

    cells: tuple[CellResult, ...]
    config: StudyConfig

    def cell(self, scenario: str | int, r: int, n: int | None = None) -> CellResult:
        name = scenario if isinstance(scenario, str) else f"scenario{scenario}"
        for c in self.cells:
            if c.scenario == name and c.r == r and (n is None or c.n == n):
                return c
        raise KeyError(f"no cell for scenario={name!r}, r={r}, n={n}")


@dataclass(frozen=True)
class KRangeResult:
    """Per-k fits and criterion values for one dataset."""

    values: tuple[CriterionValues, ...]
    fits: tuple[FitResult, ...]

    @property
    def min_trace_step(self) -> float:
        """Smallest iteration-to-iteration log-likelihood change over all fits."""
        steps = [np.diff(f.trace).min() for f in self.fits if f.trace.size > 1]
        return float(min(steps)) if steps else 0.0


def evaluate_k_range(
    dataset: Dataset,
    T: int,
    categories: tuple[int, ...],
    k_max: int,
    em_options: EMOptions = EMOptions(),
) -> KRangeResult:
    """Fit k = 1..k_max on one dataset and compute every criterion.

    The posterior path entropy feeding NEC, CLC and ICL-BIC is computed by
    the chain decomposition, which is exact for any k and T.
    """
    fits: list[FitResult] = []
    values: list[CriterionValues] = []
    ll_1 = None
    for k in range(1, k_max + 1):
        spec = ModelSpec(k=k, T=T, categories=categories)
        result = fit(spec, dataset, em_options)
        if k == 1:
            ll_1 = result.log_likelihood
        en, en1, en2 = inference._dataset_entropies(result.params, spec, dataset)
        values.append(
            criterion_values(
                k=k,
                log_likelihood=result.log_likelihood,
                n_parameters=count_free_parameters(spec),
                log_likelihood_1=ll_1,
                n=dataset.n,
                entropy=en,
                entropy_marginal=en1,
                entropy_normalized=en2,
            )
        )
        fits.append(result)
    return KRangeResult(values=tuple(values), fits=tuple(fits))


def _run_replicate(scenario: Scenario, config: StudyConfig, index: int) -> ReplicateRecord:
    dataset = draw_dataset(scenario, index, config.master_seed)
    em_seed = int(substream(config.master_seed, scenario.name, index, stream=1).generate_state(1)[0])
    options = replace(config.em, seed=em_seed)
    try:
        result = evaluate_k_range(
            dataset, scenario.spec.T, scenario.spec.categories, config.k_max, options
        )
    except (AllStartsFailed, inference.ZeroProbabilityPattern) as err:
        return ReplicateRecord(index, None, str(err), 0.0)
    report = select_k(result.values)
    return ReplicateRecord(
        replicate=index,
        selected=dict(report.selected),
        error=None,
        min_trace_step=result.min_trace_step,
        values=result.values,
    )


def run_cell(
    scenario: Scenario,
    config: StudyConfig,
    n_jobs: int = 1,
    progress=None,
) -> CellResult:
    """Run every replicate of one cell and aggregate selection frequencies.

    Failed replicates (a fit with no usable start) are excluded from the
    frequency denominator and counted in ``n_failures``; they stay in the
    audit records.  ``progress``, when given, is called as
    progress(cell_label, done, total) after each replicate.
    """
    label = f"{scenario.name} r={scenario.spec.r} n={scenario.n}"
    total = config.n_replicates
    records: list[ReplicateRecord] = [None] * total  # type: ignore[list-item]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = {
                pool.submit(_run_replicate, scenario, config, i): i for i in range(total)
            }
            done = 0
            for future in as_completed(futures):
                records[futures[future]] = future.result()
                done += 1
                if progress is not None:
                    progress(label, done, total)
    else:
        for i in range(total):
            records[i] = _run_replicate(scenario, config, i)
            if progress is not None:
                progress(label, i + 1, total)

    counts = np.zeros((len(CRITERIA), config.k_max))
    failures = 0
    for record in records:
        if record.selected is None:
            failures += 1
            continue
        for row, criterion in enumerate(CRITERIA):
            counts[row, record.selected[criterion] - 1] += 1.0
    successes = total - failures
    frequencies = counts / successes if successes else counts
    return CellResult(
        scenario=scenario.name,
        r=scenario.spec.r,
        n=scenario.n,
        k_max=config.k_max,
        frequencies=frequencies,
        replicates=tuple(records),
        n_failures=failures,
    )


def run_study(config: StudyConfig, n_jobs: int = 1, progress=None) -> FrequencyTable:
    """Run every configured cell and merge the results into one table."""
    cells = []
    for s, n, r in config.cells():
        scenario = scenario_preset(s, n=n, r=r, n_replicates=config.n_replicates)
        cells.append(run_cell(scenario, config, n_jobs=n_jobs, progress=progress))
    return FrequencyTable(cells=tuple(cells), config=config)
