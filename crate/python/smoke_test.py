"""Smoke test for the wmsense extension module.

Install the module and run from the repository root:

    pip install --no-build-isolation -e crates/py
    python3 python/smoke_test.py

Without an install it falls back to a cargo-built library
(`cargo build --release -p wmsense-py`).
"""

import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def import_wmsense():
    try:
        import wmsense  # noqa: F401  (already installed)
        return wmsense
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libwmsense.so"
        if lib.exists():
            tmp = Path(tempfile.mkdtemp())
            shutil.copy(lib, tmp / "wmsense.so")
            sys.path.insert(0, str(tmp))
            import wmsense
            return wmsense
    sys.exit("libwmsense.so not found; run `cargo build --release -p wmsense-py` first")


def main():
    wm = import_wmsense()
    fs = wm.SAMPLE_RATE_HZ
    order = 200

    noise_sets = [wm.gen_colored_noise(wm.NUM_SAMPLES, seed) for seed in (1, 2, 3)]
    profile = wm.NoiseProfile.build(noise_sets, order, fs)
    assert profile.order == order
    assert wm.NoiseProfile.from_json(profile.to_json()).avg_lags == profile.avg_lags

    calib = [
        wm.compute_test_statistics(profile.whiten(wm.estimate_autocorr(wm.gen_colored_noise(wm.NUM_SAMPLES, 100 + t), order)))[0]
        for t in range(120)
    ]
    thresholds, pfa = wm.calibrate_thresholds(calib, 0.1)
    assert len(thresholds) == 5 and all(t > 1 for t in thresholds)
    assert pfa <= 0.1

    table = wm.ThresholdTable.reference()
    assert len(table.rows) == 16
    assert wm.ThresholdTable.from_json(table.to_json()).rows == table.rows

    det = wm.Detector(profile, thresholds)
    cfg = {
        "sample_rate_hz": fs,
        "num_samples": wm.NUM_SAMPLES,
        "carriers_hz": [6e6, 9e6],
        "snr_db": -10.0,
        "mode": "loud",
        "seed": 7,
    }
    report = det.detect(wm.synthesize(json.dumps(cfg)), fs)
    assert report.num_signals == 2, report
    for est, true in zip(report.carriers_hz, cfg["carriers_hz"]):
        assert abs(est - true) < 100e3, (est, true)
    assert set(json.loads(report.to_json())) == {
        "num_signals", "carriers_hz", "ratios", "leading_singular_values", "thresholds_used"
    }

    try:
        wm.estimate_autocorr([0.0] * 10, 8)
    except ValueError:
        pass
    else:
        raise AssertionError("short buffer accepted")

    print("smoke test passed:", report)


if __name__ == "__main__":
    main()
