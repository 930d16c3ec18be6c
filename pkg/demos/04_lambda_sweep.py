"""
Title: How much weight to give the self-supervised loss
Description: A small lambda sweep written to sweep.csv.
"""
"""
## The grid

The same lambda is used for the discriminator and the generator loss.
Lambda 0 is the plain augmented GAN, because a zero weight removes the
self-supervised term from the objective.
"""

import sys
from pathlib import Path

from augself.config import parse_config
from augself.trainer import LAMBDA_GRID, run_sweep

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 200
out = Path("demo_output/lambda_sweep")
cfg = parse_config(overrides=["data.fraction=0.1", f"train.steps={steps}", "train.eval_interval=100",
                              "eval.n_samples=300", f"out.dir={out}"])
print("lambda grid:", LAMBDA_GRID)

report = run_sweep(cfg, "lambda", jobs=1)

"""
## Results

Each row is one finished run. The full table is in `sweep.csv`.
"""

for point in report["points"]:
    print(f"{point['point']:>12}: final FD {point['final_fd']:.1f}, best FD {point['best_fd']:.1f}")
print("table written to", out / "sweep.csv")
