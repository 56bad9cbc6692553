"""Score one dataset with all nine state-selection criteria.

Fits k = 1..5 on a single simulated sample and prints the criterion
table together with the first-increase selections, i.e. one replicate of
the Monte Carlo study.  The log-likelihood based indices (AIC, BIC,
AIC3, CAIC) penalise the parameter count; the classification based ones
(NEC family, CLC, ICL-BIC) penalise a diffuse posterior over the latent
states through its entropy.
"""

from lmselect import CRITERIA, EMOptions, select_k
from lmselect.harness import evaluate_k_range
from lmselect.simulate import draw_dataset, scenario_preset

scenario = scenario_preset(1, n=250, r=3)
dataset = draw_dataset(scenario, replicate_index=3)

result = evaluate_k_range(
    dataset, scenario.spec.T, scenario.spec.categories, k_max=5,
    em_options=EMOptions(seed=3),
)

header = f"{'k':>2} {'loglik':>10} {'#par':>4} {'EN':>8}  " + " ".join(
    f"{c:>9}" for c in CRITERIA
)
print(header)
for v in result.values:
    row = (
        f"{v.k:>2} {v.log_likelihood:>10.2f} {v.n_parameters:>4} {v.entropy:>8.2f}  "
        + " ".join(f"{v.value(c):>9.2f}" for c in CRITERIA)
    )
    print(row)

report = select_k(result.values)
print("\nselected number of latent states (first-increase rule):")
for criterion in CRITERIA:
    flag = "  [boundary]" if report.boundary[criterion] else ""
    print(f"  {criterion:>7}: k = {report.selected[criterion]}{flag}")
