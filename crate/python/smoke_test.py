"""Smoke test for the levy_bsde_py extension.

Build and install with `maturin build --release` in crates/python, then
`pip install` the wheel and run this script.
"""
import json
import math

import levy_bsde_py as lb

cgmy = lb.LevyModel.cgmy(1.0, 5.0, 5.0, 0.5)
assert cgmy.name == "cgmy" and cgmy.bg_index == 0.5
assert abs(cgmy.tail_mass(0.1) - 2.64165183114454) < 1e-9

harm = lb.LevyModel.harmonic()
for n in range(2, 11):
    m2 = harm.partial_moment(2.0, 1.0 / n)
    assert 1.0 / n <= m2 <= 1.0 / (n - 1), (n, m2)
assert harm.partial_moment(1.0, 0.5) is None  # divergent

merton = lb.LevyModel.from_json('{"kind": "merton", "intensity": 2.0, "mean": 0.0, "stdev": 0.5}')
assert abs(merton.tail_mass(1e-12) - 2.0) < 1e-9

jumps = lb.simulate_level(cgmy, 0.1, horizon=1.0, seed=3)
assert all(0.0 < t <= 1.0 and abs(z) >= 0.1 for t, z in jumps)
assert jumps == lb.simulate_level(cgmy, 0.1, horizon=1.0, seed=3)

cfg = {"model": json.loads(cgmy.to_json()), "levels": [2, 4, 8, 16], "paths": 2000, "seed": 1}
r = lb.rate_process(json.dumps(cfg))
assert r["levels"] == [2, 4, 8, 16] and r["passed"]
assert all(a > b for a, b in zip(r["errors"], r["errors"][1:]))
print(f"process slope {r['slope']:.3f} (theory {r['theory_slope']:.3f})")

y0, se = lb.solve_regression(json.dumps(cfg), 4)
g0, nodes, u0 = lb.solve_grid(json.dumps(cfg), 4)
assert abs(y0 - g0) < 4 * se + 0.02 * abs(g0), (y0, se, g0)
print(f"Y0 grid {g0:.4f}, regression {y0:.4f} ± {se:.4f}")

est, se, bound, ok = lb.appendix_gap(1.0, 1000, paths=10_000, seed=2)
assert ok and abs(bound - (1 - math.exp(-1)) / 2) < 1e-12

try:
    lb.rate_process(json.dumps({**cfg, "paths": 0}))
except ValueError as e:
    print("rejected:", e)
else:
    raise AssertionError("bad config accepted")

print("smoke test ok")
