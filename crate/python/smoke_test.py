#!/usr/bin/env python3
"""Smoke test for the towerlab_py extension module.

Builds nothing itself: run `cargo build --release -p towerlab-py` first (or a
debug build), then `python3 python/smoke_test.py`. The script locates the
cdylib under target/, stages it as an importable module, and drives the main
types end to end.
"""

import math
import pathlib
import shutil
import sys
import tempfile


def stage_module() -> pathlib.Path:
    root = pathlib.Path(__file__).resolve().parents[1]
    candidates = [
        root / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libtowerlab_py.so", "libtowerlab_py.dylib", "towerlab_py.dll")
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("build the extension first: cargo build -p towerlab-py")
    stage = pathlib.Path(tempfile.mkdtemp(prefix="towerlab_py_"))
    suffix = ".pyd" if built.suffix == ".dll" else ".so"
    shutil.copy2(built, stage / f"towerlab_py{suffix}")
    return stage


sys.path.insert(0, str(stage_module()))
import towerlab_py as tl  # noqa: E402

checks = 0


def check(cond, what):
    global checks
    checks += 1
    if not cond:
        sys.exit(f"FAIL: {what}")
    print(f"ok: {what}")


# Spec construction and measure structure.
spec = tl.Spec.geometric(40)
check(spec.branch_count == 40, "geometric spec has 40 branches")
kac, masses = spec.level_masses()
check(abs(kac - 0.5) < 1e-10, "Kac constant of the geometric tower is 1/2")
check(abs(sum(masses) - 1.0) < 1e-12, "level masses normalize")
check(abs(spec.tail(3) - 0.125) < 1e-9, "tail(3) is 2^-3")

# Text round trip.
spec2 = tl.Spec.from_text(spec.to_text())
check(spec2.branch_count == spec.branch_count, "spec table round-trips")

# Points, stepping, separation, quotient.
p = tl.Point.new(spec, seed=7, future=[1, 0, 0], level=0, quotient=False)
q = p.step(spec)
check(q.level == 1, "point climbs below the roof")
r = tl.Point.new(spec, seed=7, future=[1, 0, 1], level=0, quotient=False)
check(p.separation(spec, r, 64) == 2, "separation at the first mismatch")
check(p.quotient().is_quotient, "quotient projection clears the past")
u, s = p.embed(spec, 30)
check(0.0 <= u < 1.0 and s == 0.0, "embedding lands in the square")

# Exact sampling and invariance of the level marginal.
pts = tl.srb_sample(spec, seed=3, count=20000)
freq = sum(1 for x in pts if x.level == 0) / len(pts)
check(abs(freq - 0.5) < 3 * math.sqrt(0.25 / len(pts)), "level-0 frequency near Kac")

# Transfer operator: decay of the centered level indicator fits exponential.
op = tl.Operator.build(spec, depth=1)
phi = op.vector("level", 0)
check(abs(op.integral(phi) - 0.5) < 1e-10, "operator integral matches the mass")
d = op.l1_decay(phi, 40)
check(all(b <= a + 1e-15 for a, b in zip(d, d[1:])), "L1 decay is nonincreasing")
fit = tl.fit_rate(list(range(5, 41)), d[5:41], hint="exponential")
check(fit["r_squared"] > 0.99, "geometric decay fits exponential")
check(abs(fit["tau"] - math.log(2)) < 0.05, "decay rate near log 2")

# Deviation estimators.
dev = tl.deviation_series(
    spec, level=0, epsilon=0.3, n_grid=[1, 5, 10, 20], j_max=200, ensemble=2000, seed=11
)
check(
    all(l <= m + 1e-15 for l, m in zip(dev["ld"], dev["mld"])),
    "mld dominates ld",
)
check(not dev["unstable"], "mld saturates below the horizon")

# Exact small-n large deviation on a Bernoulli model.
b2 = tl.Spec.bernoulli(2)
exact = tl.ld_exact_symbol(b2, 0, 0.137911, 8)
check(0.0 <= exact <= 1.0, "exact ld is a probability")

# Systems catalog.
ind = tl.lsv_inducing_spec(0.5, 40)
check(ind.max_return == 40, "inducing scheme reaches the requested depth")
check(abs(tl.lsv_step(0.0, 0.3) - 0.6) < 1e-15, "doubling limit of the map")
x, z = tl.solenoid_step(2, 0.5, 0.5, 0.3, 0.2)
check(abs(x - 0.6) < 1e-15 and abs(z - 0.25) < 1e-15, "skew product step")

print(f"\nall {checks} smoke checks passed")
