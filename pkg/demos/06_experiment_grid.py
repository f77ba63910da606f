"""Run a planner x layout x repetition grid and summarize it."""
from harvestplan.experiment import format_summary, report, run_experiment

res = run_experiment(["static", "greedy", "random"], ["30-A", "30-B"], reps=5, seed=0, out_dir="results")
print(len(res.rows), "rows written to", res.csv_path)

# One block per planner: makespan mean/max/min, latency, and fruits left
# on the tree in each repetition.
summary, skipped = report(res.csv_path, "results/summary.json")
print(format_summary(summary))
