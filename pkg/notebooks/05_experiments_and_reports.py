"""
Running experiments
===================

A full run from recorded completions, averaged over trials, then rendered as
markdown and CSV. Published numbers can be added as hand-entered rows.
"""

import tempfile

from _fixture import REPLAY, mini_root

from dnpsql import ExperimentConfig, hand_entered, render_report, run_experiment
from dnpsql.grading import AggregateReport

root = mini_root()

cfg = ExperimentConfig(str(root), split="trial50", trials=3, output_dir=tempfile.mkdtemp())
cfg.backend.replay_path = str(REPLAY / "trial50.jsonl")
art = run_experiment(cfg)
s = art.report.strategies[0]
print("per-trial EX:", [round(t["all"].ex, 1) for t in s.trials], "mean:", round(s.mean["all"].ex, 1))
print("written to", cfg.output_dir)

cfg = ExperimentConfig(str(root), split="mini20", trials=1)
cfg.backend.replay_path = str(REPLAY / "mini20.jsonl")
mini = run_experiment(cfg).report

published = hand_entered("GR-DnP (reported)", 98.6, 75.1, 65.4, {"easy": 89.9, "medium": 79.1, "hard": 68.8, "extra": 49.4})
combined = mini + AggregateReport((published,))
print(render_report(combined, "markdown").decode())
print(render_report(combined, "csv").decode())
