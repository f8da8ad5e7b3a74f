#!/usr/bin/env python3
"""Excision-radius continuation on the rank-1 preset: solve at each rung
of the epsilon ladder, warm-starting from the previous one, and report
the Cauchy trend of the solutions on the largest-rung domain.

    python scripts/run_continuation.py
"""

import numpy as np

from ebelab import flow
from ebelab.config import PRESETS, build_problem


def main():
    cfg = PRESETS["rank1_eps"]()

    def make(eps):
        return build_problem(cfg, epsilon=eps)

    runs, diffs, sups = flow.epsilon_continuation(
        make, cfg.eps_ladder, tol=cfg.tol, t_max=cfg.t_max)
    print("ladder:", cfg.eps_ladder)
    print("sup log-metric per rung:", [round(s, 5) for s in sups])
    print("successive differences on X_delta:",
          [round(d, 6) for d in diffs])
    trend = all(b < a for a, b in zip(diffs, diffs[1:]))
    print("Cauchy trend:", "decreasing" if trend else "NOT decreasing")
    return 0 if (not diffs or diffs[0] < 0.3 * max(sups[0], 1e-12)) else 4


if __name__ == "__main__":
    raise SystemExit(main())
