"""Regenerates the synthetic panel fixture under panel/ (seeded, committed)."""
import csv
import pathlib

import numpy as np

rng = np.random.default_rng(20240611)
out = pathlib.Path(__file__).parent / "panel"
out.mkdir(exist_ok=True)

months = [f"{y:04d}-{m:02d}" for y in range(1999, 2012) for m in range(1, 13)][11:]  # 1999-12 .. 2011-12
dates = months[1:]  # returns and factors from 2000-01
T, n, K, p, q = len(dates), 30, 2, 2, 2


def ar1(t, phi):
    x = np.empty(t)
    x[0] = rng.normal() / np.sqrt(1 - phi**2)
    for u in range(1, t):
        x[u] = phi * x[u - 1] + rng.normal()
    return x


inst = np.column_stack([0.02 + 0.005 * ar1(T + 1, 0.9), 0.01 + 0.01 * ar1(T + 1, 0.9)])
zs = (inst - inst.mean(0)) / inst.std(0)
fac = np.column_stack([0.006 + 0.004 * zs[:-1, 0] + 0.045 * rng.normal(size=T), 0.002 + 0.03 * rng.normal(size=T)])

with open(out / "factors.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["date", "mkt", "smb"])
    for u in range(T):
        w.writerow([dates[u]] + [f"{v:.10g}" for v in fac[u]])
with open(out / "instruments.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["date", "dy", "tsp"])
    for u in range(T + 1):
        w.writerow([months[u]] + [f"{v:.10g}" for v in inst[u]])

chars = rng.normal(size=(n, T + 1, q))
for i in range(n):
    for j in range(q):
        chars[i, :, j] = 3 + ar1(T + 1, 0.95)
start = rng.integers(0, T - 60, size=n)
start[:10] = 0

with open(out / "characteristics.csv", "w", newline="") as fc, open(out / "returns.csv", "w", newline="") as fr:
    wc, wr = csv.writer(fc), csv.writer(fr)
    wc.writerow(["asset_id", "date", "size", "bm"])
    wr.writerow(["asset_id", "date", "excess_return"])
    for i in range(n):
        aid = f"S{i + 1:03d}"
        a = rng.uniform(0.5, 1.5, size=K) * np.array([1, rng.choice([-1, 1])])
        tv = i % 3 != 0
        slope = rng.uniform(-0.4, 0.4, size=K) if tv else np.zeros(K)
        cslope = rng.uniform(-0.3, 0.3) if tv else 0.0
        for u in range(start[i], T + 1):
            wc.writerow([aid, months[u]] + [f"{v:.10g}" for v in chars[i, u]])
        for u in range(start[i], T):
            b = a + slope * zs[u, 0]
            b[0] += cslope * (chars[i, u, 0] - 3)
            lam = np.array([0.006 + 0.004 * zs[u, 0], 0.002])
            r = b @ lam + b @ (fac[u] - lam) + 0.06 * rng.normal()
            wr.writerow([aid, dates[u], f"{r:.10g}"])
