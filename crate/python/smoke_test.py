"""Smoke test for the nplab Python extension.

Build and install with `maturin develop -m crates/nplab-py/Cargo.toml`, or put the
compiled library on the path as `nplab.so`, then run `python python/smoke_test.py`.
"""

import json
import math

import nplab


def main():
    circle = nplab.Curve.circle(1.0)
    spec = nplab.spectrum(nplab.Mesh.uniform(circle, 64))
    assert spec["half"] == 0.5
    assert max(abs(x) for x in spec["eigenvalues"]) < 1e-10

    ellipse = nplab.Curve.ellipse(1.0, 0.5)
    mesh = nplab.Mesh.uniform(ellipse, 128)
    vals = sorted(nplab.spectrum(mesh)["eigenvalues"])
    for n in (1, 2, 3):
        a = 0.5 * math.exp(-2 * n * 0.5)
        assert min(abs(v - a) for v in vals) < 1e-8
        assert min(abs(v + a) for v in vals) < 1e-8

    lens = nplab.Curve.lens(0.75 * math.pi, 2.0)
    assert abs(nplab.half_width(0.75 * math.pi) - 0.25) < 1e-14
    pred = nplab.essential_spectrum(lens, lens.symmetries[0])
    assert pred["full"] == [(-0.25, 0.25)]
    graded = nplab.Mesh.graded(lens, depth=8, base_panels=8, mirror=lens.symmetries[0])
    split = nplab.spectrum(graded, parity=True)
    assert set(split["parity"]) == {"even", "odd"}
    assert nplab.residuals(graded)["gauss_rms"] < 1e-3

    assert "circle" in nplab.list_scenarios()
    report = json.loads(nplab.run_scenario("circle"))
    assert report["passed"]
    print(f"nplab {nplab.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
