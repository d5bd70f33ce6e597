"""Smoke test for the Python bindings.

Uses an installed `gradflow` module if there is one, otherwise the library
from `cargo build -p gradflow-py --release`.
"""

import importlib.util
import math
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import gradflow

        return gradflow
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libgradflow_py.so"
        if lib.exists():
            spec = importlib.util.spec_from_file_location("gradflow", lib)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            return module
    sys.exit("gradflow module not found; run `cargo build -p gradflow-py --release` first")


def main():
    gf = load()

    names = gf.presets()
    assert "stationary_smoke" in names and "barenblatt_m2_1d" in names, names

    r = [0.01, 0.5, 1.0, 2.0, 7.5]
    for got, x in zip(gf.eta("heat_gaussian", r), r):
        assert abs(got - x * (math.log(x) - 1.0)) <= 1e-8 * abs(x * (math.log(x) - 1.0))
    for got, x in zip(gf.eta("barenblatt_m2_1d", r), r):
        assert abs(got - (x * x - 2.0 * x)) <= 1e-9 * max(1.0, abs(x * x - 2.0 * x))

    # unit mass in 1D: the m = 2 profile integrates to one
    h = 0.001
    xs = [[-3.0 + h * (k + 0.5)] for k in range(6000)]
    mass = h * sum(gf.barenblatt(2.0, 1.0, xs))
    assert abs(mass - 1.0) < 1e-5, mass

    with tempfile.TemporaryDirectory() as out:
        res = gf.run("stationary_smoke", out=out)
        assert res["pass"], res["checks"]
        assert res["steps"] >= 1000
        e = res["energy"]
        assert max(abs(v - e[0]) for v in e) <= 1e-10
        assert (pathlib.Path(out) / "summary.csv").exists()

    ok, lines = gf.validate("barenblatt_m2_1d")
    assert ok and any("skipped" in l for l in lines), lines

    try:
        gf.run("[grid]\ndim = 1\n", text=True)
    except ValueError as err:
        assert "missing" in str(err), err
    else:
        raise AssertionError("config without [model] was accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
