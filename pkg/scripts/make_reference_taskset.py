"""Write src/rtig/data/reference_taskset.json from the published means, periods and utilizations.

Worst cases are recovered as c_max = round((u_max_i - u_max_{i-1}) * t_i).  The
printed standard deviations cannot be realized on a positive support bounded by
those worst cases, so each task gets the maximum-entropy distribution on
{1, ..., c_max} with the published mean instead.
"""

import json
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

MEANS = [15.481, 5.556, 5.708, 3.38, 5.198, 4.057, 4.998, 3.786, 2.167, 7.453,
         16.812, 1.833, 2.167, 2.7, 5.448, 8.46, 2.167, 4.665, 2.4, 5.604,
         2.333, 3.334, 5.927, 4.535, 4.225, 6.246, 4.779, 2.167, 1.834]
PERIODS = [100, 114, 119, 121, 132, 133, 136, 144, 145, 146,
           159, 165, 165, 165, 166, 173, 181, 182, 183, 191,
           193, 200, 201, 214, 215, 268, 296, 298, 315]
U_MAX = [0.28, 0.3589, 0.443, 0.4926, 0.5683, 0.6285, 0.702, 0.7506, 0.7713, 0.874,
         1.0879, 1.1061, 1.1242, 1.1485, 1.2027, 1.301, 1.3175, 1.3615, 1.3834, 1.4357,
         1.4513, 1.4763, 1.531, 1.5637, 1.6009, 1.6494, 1.6764, 1.6865, 1.696]


def maxent_on_grid(support, mean):
    c = np.asarray(support, dtype=float)

    def probs(beta):
        z = beta * c
        w = np.exp(z - z.max())
        return w / w.sum()

    beta = brentq(lambda b: probs(b) @ c - mean, -50.0, 50.0, xtol=1e-15)
    p = probs(beta)
    p[-1] = 1.0 - p[:-1].sum()
    return p


def main(out=Path(__file__).resolve().parents[1] / "src/rtig/data/reference_taskset.json"):
    tasks, prev = [], 0.0
    for k, (m, t, um) in enumerate(zip(MEANS, PERIODS, U_MAX)):
        c_max = int(round((um - prev) * t))
        prev = um
        support = list(range(1, c_max + 1))
        p = maxent_on_grid(support, m)
        tasks.append({"id": f"tau{k}", "period": t, "deadline": t, "alpha": 0.0,
                      "dist": {"kind": "discrete", "values": support, "probs": p.tolist()}})
    out.write_text(json.dumps({"unit": "ms", "tasks": tasks}, indent=1) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
