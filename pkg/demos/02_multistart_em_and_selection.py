"""Multi-start EM, then three ways of turning the runs into one estimate.

The candidates come from one EM call; MAP, max-entropy and BMA selection
all look at that same set.

Run:  python demos/02_multistart_em_and_selection.py
"""

from bnselect import (EmConfig, MissingnessSpec, ScoreSlack, bma_estimate, chain, forward_sample,
                      inject_missingness, joint_divergence, multi_start_em, sample_true_params,
                      select_max_entropy, select_max_score)

structure = chain(5, 3, 5)
truth = sample_true_params(structure, seed=11)
data = inject_missingness(forward_sample(structure, truth, 300, seed=12),
                          MissingnessSpec.mcar(structure, {"B": 0.85}), seed=13)

candidates = multi_start_em(structure, data, EmConfig(num_starts=20, seed=14))
print(f"{len(candidates)} EM runs, best MAP score {candidates.best_score:.4f}")
print("run  score        entropy  iters")
for c in list(candidates)[:6]:
    print(f"{c.run_index:>3}  {c.score:11.4f}  {c.entropy:7.4f}  {c.iterations:5d}")
print("...")

slack = ScoreSlack(0.001)
print(f"\nscore threshold at eps={slack.epsilon}: {slack.threshold(candidates.best_score):.4f}")

estimates = {
    "map": select_max_score(candidates).params,
    "entropy": select_max_entropy(candidates, slack).params,
}
estimates["bma"], weights = bma_estimate(candidates)
print("largest BMA weights:", ", ".join(f"{w:.4f}" for w in sorted(weights.weights, reverse=True)[:3]))

print("\nKL(true || estimate) over the joint:")
for name, params in estimates.items():
    print(f"  {name:8s} {joint_divergence(structure, truth, params):.5f}")
