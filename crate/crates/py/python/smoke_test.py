"""Smoke test for the zoo_sdf_py extension.

Build first:
    cargo build --release -p zoo-sdf-py --features extension-module
then run:
    python3 crates/py/python/smoke_test.py [path/to/libzoo_sdf_py.so]
"""

import csv
import importlib.util
import json
import math
import random
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[3]


def find_library(argv):
    if len(argv) > 1:
        return Path(argv[1])
    for profile in ("release", "debug"):
        for name in ("libzoo_sdf_py.so", "libzoo_sdf_py.dylib"):
            p = ROOT / "target" / profile / name
            if p.exists():
                return p
    sys.exit("extension not built; see the module docstring")


def load(lib, workdir):
    target = workdir / "zoo_sdf_py.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("zoo_sdf_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def write_panel(d, t=240, seed=3):
    rng = random.Random(seed)
    dates = [f"{1990 + s // 12}-{s % 12 + 1:02d}" for s in range(t)]
    f = [[0.3 + rng.gauss(0, 1) for _ in range(3)] for _ in range(t)]
    r = [[0.5 * row[i % 3] + rng.gauss(0, 1) for i in range(6)] for row in f]
    for name, cols, rows in (("returns", [f"p{i}" for i in range(6)], r), ("factors", ["a", "b", "c"], f)):
        with open(d / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date"] + cols)
            for date, row in zip(dates, rows):
                w.writerow([date] + [repr(v) for v in row])
    with open(d / "meta.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "tradable", "asset_class", "kappa_tilt"])
        w.writerow(["a", "1", "stock", "0"])
        w.writerow(["b", "1", "bond", "0"])
        w.writerow(["c", "0", "nontradable", "0"])


def main():
    lib = find_library(sys.argv)
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        zs = load(lib, d)

        assert abs(zs.half_life(0.15, 0.81) - 17.98) < 0.01
        a, b = zs.sparsity_hyperparams(54, 5, 5)
        assert abs(a - 3.54) / 3.54 < 0.01 and abs(b - 34.66) / 34.66 < 0.01, (a, b)
        assert zs.portfolio_weights([1.0, 3.0]) == [0.25, 0.75]

        rng = random.Random(1)
        noise = [rng.gauss(0, 1) for _ in range(500)]
        stat, p = zs.ljung_box(noise, 10)
        assert stat >= 0 and 0 <= p <= 1
        fit = zs.fit_garch11(noise)
        assert fit["alpha"] + fit["beta"] < 1 and len(fit["conditional_variance"]) == 500

        try:
            zs.half_life(0.5, 0.6)
        except zs.NumericalError:
            pass
        else:
            raise AssertionError("expected NumericalError")
        try:
            zs.estimate(d / "missing.csv", d / "missing.csv", d / "missing.csv")
        except zs.DataError:
            pass
        else:
            raise AssertionError("expected DataError")

        write_panel(d)
        report = json.loads(
            zs.estimate(d / "returns.csv", d / "factors.csv", d / "meta.csv", draws=1500, burn_in=300, chains=2, seed=7)
        )
        assert [row["name"] for row in report["factors"]] == ["a", "b", "c"]
        assert all(0 <= row["prob"] <= 1 and math.isfinite(row["mpr"]) for row in report["factors"])
        again = json.loads(
            zs.estimate(d / "returns.csv", d / "factors.csv", d / "meta.csv", draws=1500, burn_in=300, chains=2, seed=7)
        )
        assert again == report
    print("zoo_sdf_py smoke test passed")


if __name__ == "__main__":
    main()
