"""Smoke test for the aquasem_py extension module.

Build and install it first, e.g. `pip install --no-build-isolation ./crates/py`
(needs maturin), then run `python python/smoke_test.py`.
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import aquasem_py as aq


def main() -> int:
    assert aq.sanitize("a fish\n") == "a fish "
    assert aq.ber_bounds(0.5) == (0.0625, 0.5)

    out = aq.corrupt("a small red fish", 3, 0.5, 7)
    assert out["affected_units"] == 2 and out["total_units"] == 4
    assert len(out["corrupted"].split()) == 2
    assert aq.corrupt("abc", 1, 0.0, 0)["corrupted"] == "abc"

    img = aq.Image.synthetic(0, 32, 32)
    assert (img.width, img.height, img.channels) == (32, 32, 3)
    assert aq.Image.from_ppm(img.to_ppm()) == img
    assert math.isinf(aq.psnr(img, img))
    assert aq.ssim(img, img) == 1.0

    const_a = aq.Image(16, 16, 1, bytes([100] * 256))
    const_b = aq.Image(16, 16, 1, bytes([50] * 256))
    assert abs(aq.ssim(const_a, const_b) - 0.80011) < 1e-4

    scores = aq.compare(img, aq.Image.synthetic(1, 32, 32))
    assert 0.0 <= scores["clip_score_pct"] <= 100.0

    trial = aq.run_trial(img, 2, 0.2, seed=5, gen_seed=1, width=32, height=32)
    assert trial["status"]["state"] == "ok"
    again = aq.run_trial(img, 2, 0.2, seed=5, gen_seed=1, width=32, height=32)
    assert trial["metrics_vs_original"] == again["metrics_vs_original"]

    grid = aq.default_grid()
    assert len(grid["ratios"]) == 11 and grid["generations_per_caption"] == 10

    with tempfile.TemporaryDirectory() as tmp:
        data = Path(tmp) / "images"
        data.mkdir()
        for i in range(2):
            aq.Image.synthetic(i, 32, 32).save(str(data / f"img_{i}.ppm"))
        config = {
            "dataset_dir": str(data),
            "output_dir": str(Path(tmp) / "out"),
            "ratios": [0.0, 0.25, 0.5],
            "generations_per_caption": 2,
            "generation_width": 32,
            "generation_height": 32,
        }
        summary = aq.run_sweep(json.dumps(config), mock=True)
        assert summary["records"] == 3 * 3 * 2 * 2, summary
        assert summary["failed"] == 0 and summary["caption_calls"] == 2
        manifest = aq.render_report(str(Path(tmp) / "out" / "aggregates.csv"), str(Path(tmp) / "charts"))
        assert len(manifest["charts"]) == 9, manifest

    print("aquasem_py smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
