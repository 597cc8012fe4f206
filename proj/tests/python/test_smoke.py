import math

import numpy as np
import pytest

atomdet = pytest.importorskip("atomdet")

TINY = {
    "lattice": {"rows": 3, "cols": 3, "spacing": 20.0, "origin": [28.0, 28.0],
                "image_width": 96, "image_height": 96},
    "simulation": {"exposures_ms": [20, 60], "frames_per_exposure": 10, "seed": 5},
    "bound": {"psf_window": 21},
    "detectors": {"gns": {"psf_window": 21}},
    "benchmark": {"timing_repetitions": 1},
}


def test_preset_round_trip():
    desk = atomdet.preset_config("desk")
    assert desk["lattice"]["image_width"] == 256
    assert desk["simulation"]["rate"] == 2881.0
    with pytest.raises(ValueError):
        atomdet.preset_config("huge")


def test_pixel_pdf_normalized():
    q, p, d = atomdet.pixel_pdf(25.0, gain=1.0, offset=200.0, sigma=1.6)
    assert abs(np.trapezoid(p, q) - 1.0) < 1e-6
    assert abs(np.trapezoid(p * q, q) - 225.0) < 0.01
    assert abs(np.trapezoid(d, q)) < 1e-6


def test_fisher_weight_poisson_limit():
    assert atomdet.fisher_weight(40.0, gain=1.0, sigma=0.0) == pytest.approx(1 / 40.0, rel=1e-5)


def test_fn_rate_fit_matches_closed_form():
    x = 100.0
    t = 0.391 * x**0.951 + 2.160
    v = 4.183 * x**0.896 + 31.618
    direct = 0.5 * math.erfc(-(t - x) / math.sqrt(2 * v))
    assert atomdet.fn_rate_fit(x) == pytest.approx(direct, rel=1e-10)


def test_power_law_fit_exact():
    k = [10.0 * i for i in range(1, 9)]
    a, b, c = atomdet.power_law_fit(k, [2.0 * x**0.9 + 5.0 for x in k])
    assert (a, b, c) == pytest.approx((2.0, 0.9, 5.0), rel=1e-5)


def test_bound_ordering():
    rows = atomdet.bound_sweep([60.0], [], TINY)
    v = {r["scenario"]: r["variance_floor"] for r in rows}
    assert v["occ-nn"] <= v["occ-sn"] <= v["occ-an"]
    assert v["occ-sn"] > v["empty-sn"]


def test_simulate_and_detect():
    frames, truth, exposures = atomdet.simulate(TINY)
    assert frames.shape == (20, 96, 96)
    assert frames.dtype == np.uint16
    assert truth.shape == (20, 9)
    assert exposures[-1] == pytest.approx(0.06)
    again, _, _ = atomdet.simulate(TINY)
    assert np.array_equal(frames, again)

    k = len(frames) - 1
    gamma = 2881.0 * exposures[k]
    for algo in ("roi", "wiener", "rl", "gns"):
        est = atomdet.detect(frames[k], exposures[k], algo, config=TINY)
        assert est.shape == (9,)
        assert np.all(np.isfinite(est))
    est = atomdet.detect(frames[k], exposures[k], "gns", {"window": 21}, config=TINY)
    occupied = est[truth[k]]
    empty = est[~truth[k]]
    if occupied.size and empty.size:
        assert occupied.min() > empty.max()
        assert abs(occupied.mean() - gamma) < 0.25 * gamma
    with pytest.raises(ValueError):
        atomdet.detect(frames[k], exposures[k], "gns", "bogus=1", config=TINY)


def test_benchmark(tmp_path):
    metrics, bounds, rates = atomdet.benchmark(TINY, out=tmp_path, detectors=["roi", "gns"])
    assert len(metrics) == 2 * 2
    assert len(bounds) == 2 * 6
    assert (tmp_path / "metrics.csv").exists()
    assert any(name.startswith("gns") for name in rates)
    for row in metrics:
        assert 0.0 <= row["fp_rate"] <= 1.0
        assert 0.0 <= row["fn_rate"] <= 1.0
