"""A short version of the BN3 5-3-5 study: 30 repetitions, four methods.

Writes rows.csv, repetitions.csv, summary.json and config.json under
demo-results/ and prints the Friedman ranking.  The full 200-repetition
runs are `bnselect run --preset bn3-535` and `--preset bn3-848`.

Run:  python demos/04_small_experiment.py
"""

from bnselect import load_preset, run_experiment, with_overrides

config = with_overrides(load_preset("bn3-535"), repetitions=30, seed=2024)
report = run_experiment(config, out_dir="demo-results/bn3-535-short")

summary = report.summary
friedman = summary["friedman"]
print(f"{summary['repetitions_completed']} repetitions, metric {summary['metric_kind']}")
print("method      median KL   rel. median   mean rank")
for m, rank in sorted(zip(friedman["methods"], friedman["mean_ranks"]), key=lambda t: t[1]):
    print(f"{m:10s}  {summary['medians'][m]:9.5f}   {summary['relative_medians'][m]:11.3f}   {rank:9.3f}")
print(f"Friedman chi2 = {friedman['statistic']:.3f}, p = {friedman['pvalue']:.3g}")
print("diagnostics:", {m: d for m, d in summary["diagnostics"].items() if d})
