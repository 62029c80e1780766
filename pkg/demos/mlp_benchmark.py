"""Desk-scale convergence race on a tanh classifier: the corrected AdamW-style
optimizer at its defaults against the plain baseline across a learning-rate
grid. The score is the number of steps needed to push the full-dataset
gradient norm below 1e-2, reported per seed and as a median.
"""

import numpy as np

from marsopt import compare_runs, config_from_dict, sweep


def make_config(kind, lr, beta1, beta2):
    return config_from_dict({
        "problem": {"kind": "mlp", "layers": [4, 16, 3], "n": 96, "batch_size": 8},
        "optimizer": {"kind": kind, "beta1": beta1, "beta2": beta2, "correction_mode": "exact"},
        "schedule": {"lr": {"kind": "cosine_warmup", "max_lr": lr, "min_lr": 2e-4,
                            "warmup_steps": 100},
                     "gamma": {"kind": "constant", "value": 0.025}},
        "run": {"total_steps": 3000, "seed": 0, "grad_threshold": 1e-2},
    })


def main():
    seeds = range(5)
    threshold = 1e-2

    groups = {"mars_adamw[lr=0.1]": sweep(make_config("mars_adamw", 0.1, 0.95, 0.99), seeds)}
    best_label, best_median = None, np.inf
    for lr in (0.005, 0.01, 0.02, 0.05, 0.1):
        label = f"adamw[lr={lr}]"
        logs = sweep(make_config("adamw", lr, 0.9, 0.95), seeds)
        groups[label] = logs
        steps = [log.summary["steps_to_threshold"] or np.inf for log in logs]
        med = float(np.median(steps))
        print(f"{label:>18}: per-seed steps {steps} -> median {med:g}")
        if med < best_median:
            best_label, best_median = label, med

    report = compare_runs({"mars": groups["mars_adamw[lr=0.1]"],
                           "adamw_tuned": groups[best_label]}, threshold=threshold)
    print()
    print(report.to_text())
    mars_median = report.medians["mars"]
    verdict = "<=" if mars_median <= best_median else ">"
    print(f"\ncorrected optimizer median {mars_median:g} {verdict} tuned baseline "
          f"median {best_median:g} ({best_label})")


if __name__ == "__main__":
    main()
