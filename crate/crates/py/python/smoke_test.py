"""Smoke test for the `mcam` extension module.

Build and stage the module, then run this script:

    cargo build -p mcam-py --release --features extension-module
    cp target/release/libmcam.so crates/py/python/mcam.so
    python3 crates/py/python/smoke_test.py
"""

import json
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import mcam  # noqa: E402


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    d = mcam.design("continuous")
    assert d["regime"] == "continuous", d["regime"]
    assert close(d["r_pix"], 11.0), d["r_pix"]

    assert mcam.regime(3432.0, 13500.0, 3432.0 / 13500.0) == "continuous"
    assert mcam.regime(3432.0, 13500.0, 1.0) == "tiled"

    assert mcam.frame_bytes() == 708_963_840
    t = mcam.throughput(binning=2)
    assert round(t["max_fps"], 1) == 28.2, t["max_fps"]

    assert len(mcam.scan_plan()) == 25
    assert len(mcam.scan_plan(overlap=0.0, per_axis=True)) == 12

    try:
        mcam.design("continuous", magnification=-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative magnification accepted")

    with tempfile.TemporaryDirectory() as out:
        s = mcam.run(json.dumps({"preset": "tiled"}), mode="design", out=out)
        assert s["details"]["regime"] == "tiled"
        assert os.path.exists(os.path.join(out, "manifest.json"))

    print("mcam", mcam.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
