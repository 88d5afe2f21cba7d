"""Regenerate the bundled GPU-hour pair fixture.

100 consistent pairs follow ``ln h1 = ln h2_base + 1.3 + e`` with the residual
made exactly orthogonal to ``[1, x]`` (so the fit has slope 1 and intercept 1.3)
and scaled to a fixed F statistic. 19 further pairs sit outside the
[0.10, 1.0] ratio band. Deterministic for a given seed.

Usage: python tools/make_pairs.py [out.csv]
"""

import csv
import sys
from pathlib import Path

import numpy as np

SEED = 20240417
N_CLEAN = 100
SIGMA = 0.4  # draw scale only; the final scale is set by TARGET_F
TARGET_F = 6525.0
TARGET_DW = 1.81


def clean_pairs(rng):
    x = rng.normal(9.0, 3.5, N_CLEAN)
    x = np.clip(x, np.log(50.0), np.log(5e7))
    X = np.column_stack([np.ones(N_CLEAN), x])
    # redraw until every clean ratio exp(-(1.3 + e)) stays inside the band
    while True:
        e = rng.normal(0.0, SIGMA, N_CLEAN)
        e -= X @ np.linalg.lstsq(X, e, rcond=None)[0]
        # with slope exactly 1, F = Sxx / s^2, so pick s^2 = Sxx / TARGET_F
        sxx = float(np.sum((x - x.mean()) ** 2))
        e *= np.sqrt(sxx / TARGET_F * (N_CLEAN - 2)) / np.linalg.norm(e)
        if np.all((e > -1.3 + 0.05) & (e < np.log(10) - 1.3 - 0.05)):
            break
    # reorder observations until the residual autocorrelation matches the target
    best, best_gap = None, np.inf
    for _ in range(20000):
        order = rng.permutation(N_CLEAN)
        r = e[order]
        dw = np.sum(np.diff(r) ** 2) / np.sum(r * r)
        if abs(dw - TARGET_DW) < best_gap:
            best, best_gap = order, abs(dw - TARGET_DW)
        if best_gap < 1e-3:
            break
    return x[best], x[best] + 1.3 + e[best]


def anomalous_pairs(rng):
    high = rng.uniform(np.log(1.5), np.log(30.0), 10)  # h2_base exceeds h1
    low = rng.uniform(np.log(0.005), np.log(0.08), 9)  # h2_base far below h1
    ln_ratio = np.concatenate([high, low])
    x = rng.uniform(np.log(1e3), np.log(1e7), ln_ratio.size)
    return x, x - ln_ratio


def main(out):
    rng = np.random.default_rng(SEED)
    xc, yc = clean_pairs(rng)
    xa, ya = anomalous_pairs(rng)
    rows = [(f"system-{i:03d}", yc[i], xc[i]) for i in range(N_CLEAN)]
    rows += [(f"outlier-{i:02d}", ya[i], xa[i]) for i in range(xa.size)]
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "gpu_h1", "gpu_h2_base"])
        for name, y, x in rows:
            w.writerow([name, repr(float(np.exp(y))), repr(float(np.exp(x)))])


if __name__ == "__main__":
    default = Path(__file__).resolve().parents[1] / "src" / "mltrain_lca" / "data" / "gpu_hour_pairs.csv"
    main(sys.argv[1] if len(sys.argv) > 1 else default)
