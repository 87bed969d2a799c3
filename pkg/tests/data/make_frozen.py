"""Regenerate frozen_oracles.json from the oracles alone (no package code).

Run from the repository root: ``python tests/data/make_frozen.py``.
"""

import json
import math
import sys
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))
import oracles  # noqa: E402


def main():
    rng = np.random.default_rng(20240611)
    out = {}

    # SHOE statistic of random 5-sample windows
    windows = []
    for _ in range(8):
        f = rng.normal([0.0, 0.0, 9.81], 0.3, (5, 3))
        w = rng.normal(0.0, 0.05, (5, 3))
        windows.append({
            "f": f.tolist(),
            "w": w.tolist(),
            "T": oracles.shoe_scalar(f.tolist(), w.tolist(), 0.1, 0.01, 9.81),
        })
    out["shoe_windows"] = windows

    # hexagon crossing sequences of random segments
    segs = []
    for radius in (0.3, 0.5, 0.8):
        for _ in range(10):
            a = rng.uniform(-5, 5, 2)
            ang = rng.uniform(0, 2 * math.pi)
            L = rng.uniform(0, 10 * radius)
            b = a + L * np.array([math.cos(ang), math.sin(ang)])
            segs.append({
                "radius": radius,
                "a": a.tolist(),
                "b": b.tolist(),
                "crossings": [[list(u), list(v)] for u, v in oracles.dense_crossings(a, b, radius)],
            })
    out["hex_segments"] = segs

    # extended-precision log of a running product
    S = rng.uniform(0.01, 1.0, 1000)
    out["likelihood"] = {"S": S.tolist(), "log_product": oracles.log_product_mp(S.tolist())}

    errs = rng.exponential(0.5, 200)
    out["rmse"] = {"errors": errs.tolist(), "value": oracles.rmse_mp(errs.tolist())}

    (HERE / "frozen_oracles.json").write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
