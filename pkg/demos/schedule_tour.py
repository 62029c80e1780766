"""A tour of the learning-rate and correction-scale schedules, plus the
theoretical step-size family eta_t = (s+t)^(-1/3) with its coupled momentum
coefficients beta1 = 1 - c*eta^2 and beta2 = 1 - eta^6.
"""

import numpy as np

from marsopt import GammaSchedule, LrSchedule, TheoryParams, gamma_at, lr_at, theory_betas


def sparkline(values, width=60):
    blocks = " .:-=+*#%@"
    lo, hi = min(values), max(values)
    span = (hi - lo) or 1.0
    idx = np.linspace(0, len(values) - 1, width).astype(int)
    return "".join(blocks[int((values[i] - lo) / span * (len(blocks) - 1))] for i in idx)


def main():
    total = 2000
    cosine = LrSchedule(kind="cosine_warmup", max_lr=1e-2, min_lr=1e-4,
                        warmup_steps=200, total_steps=total)
    wsd = LrSchedule(kind="wsd", max_lr=1e-2, min_lr=1e-4,
                     warmup_steps=200, total_steps=total)
    theory = LrSchedule(kind="theory", s=8)
    for name, sched in (("cosine", cosine), ("wsd", wsd), ("theory", theory)):
        curve = [lr_at(sched, t) for t in range(total + 1)]
        print(f"{name:>7}: {sparkline(curve)}  (peak {max(curve):.3g}, final {curve[-1]:.3g})")

    linear = GammaSchedule(kind="linear", start=0.0, end=1.0, total_steps=total)
    print(f"{'gamma':>7}: {sparkline([gamma_at(linear, t) for t in range(total + 1)])}"
          "  (linear 0 -> 1)")

    print("\ntheoretical coefficient schedule (L=1, rho=1 => c=33, s=8000):")
    params = TheoryParams(L=1.0, rho=1.0, s=8000.0)
    print(f"{'t':>8} {'eta_t':>10} {'beta1_t':>10} {'beta2_t':>14}")
    for t in (0, 100, 1000, 10_000, 100_000):
        eta = lr_at(LrSchedule(kind="theory", s=params.s), t)
        b1, b2 = theory_betas(params, t)
        print(f"{t:>8d} {eta:>10.5f} {b1:>10.6f} {b2:>14.12f}")

    print("\nstep-size inequality 1/eta_t - 1/eta_(t-1) <= eta_t (worst margin over 1e5 steps):")
    for s in (1, 8, 1000):
        t = np.arange(1, 100_001, dtype=np.float64)
        margin = np.max((s + t) ** (1 / 3) - (s + t - 1) ** (1 / 3) - (s + t) ** (-1 / 3))
        print(f"  s={s:>5}: {margin:+.3e}  (negative margin = inequality holds)")


if __name__ == "__main__":
    main()
