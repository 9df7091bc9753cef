"""How the number of Grover rotations grows with the size of the policy set.

Runs the scaling experiment at reduced size (50 runs per N) and fits the mean
rotation count against sqrt(N).
"""

from qpolicy import cli

config = cli.ExperimentConfig("qpi-scaling", policies=[64, 144, 256, 400], trials=50)
_, result = cli.run_experiment(config)

print(f"{'N':>5} {'success':>8} {'mean rotations':>15}")
for row in result.rows:
    print(f"{row[0]:>5} {float(row[4]):>8.2f} {float(row[5]):>15.2f}")
fit = result.summary["fit_mean_rotations_vs_sqrtN"]
print(f"mean rotations ~ {fit['slope']:.2f} * sqrt(N) + {fit['intercept']:.2f}  (R^2 = {fit['r2']:.3f})")
