import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfarkit.detector import DetectorConfig, Law, Parameterization, Strategy, order_statistic, resolve_alpha
from cfarkit.engine import (
    FFT_CROSSOVER_AREA,
    choose_engine,
    compute_statistic,
    convolve_fft,
    convolve_spatial,
    extract_rois,
    local_stats,
    order_statistic_map,
    run_detection,
    valid_region,
)
from cfarkit.errors import DomainMismatch, KernelTooLarge
from cfarkit.models import fit_mean_std
from cfarkit.raster import Domain, SarImage, to_log_power, to_magnitude
from cfarkit.simulator import SceneSpec, gen_scene
from cfarkit.stencil import StencilSpec, build_kernels, split_windows

EQ40 = build_kernels(StencilSpec(1, 1, 1, 1)).f_B


def philox(seed):
    return np.random.Generator(np.random.Philox(seed))


def gather(img, spec, r, c, support):
    h, w = spec.shape
    block = img[r - h // 2:r - h // 2 + h, c - w // 2:c - w // 2 + w]
    return block[support]


def test_valid_region():
    assert valid_region((10, 12), (5, 5)) == (2, 8, 2, 10)
    # even kernels: centre index kh // 2, so one row above and two below
    assert valid_region((10, 12), (4, 4)) == (1, 8, 1, 10)
    with pytest.raises(KernelTooLarge):
        valid_region((4, 4), (5, 5))


@pytest.mark.parametrize("kernel", [EQ40, np.arange(12.0).reshape(3, 4), philox(1).random((4, 5))])
def test_impulse_response(kernel):
    img = np.zeros((15, 17))
    img[7, 8] = 1.0
    kh, kw = kernel.shape
    ch, cw = kh // 2, kw // 2
    for conv, tol in ((convolve_spatial, 0.0), (convolve_fft, 1e-9)):
        out = conv(img, kernel)
        # the impulse response places k[a, b] at (7 + a - ch, 8 + b - cw)
        patch = out[7 - ch:7 - ch + kh, 8 - cw:8 - cw + kw]
        np.testing.assert_allclose(patch, kernel, atol=tol, rtol=0)
        # equivalently the flipped kernel centred on the impulse in correlation form
        assert np.nansum(np.abs(out)) == pytest.approx(np.abs(kernel).sum())


def test_constant_image():
    out = convolve_spatial(np.full((9, 9), 3.5), EQ40)
    r0, r1, c0, c1 = valid_region((9, 9), EQ40.shape)
    np.testing.assert_allclose(out[r0:r1, c0:c1], 3.5, rtol=1e-15)
    assert np.isnan(out[0, 0]) and np.isnan(out[8, 8])


@pytest.mark.parametrize("seed", range(3))
def test_fft_matches_spatial(seed):
    img = philox(seed).exponential(size=(64, 64))
    for k in (EQ40, philox(seed + 10).random((7, 6))):
        a, b = convolve_spatial(img, k), convolve_fft(img, k)
        assert np.array_equal(np.isnan(a), np.isnan(b))
        ok = ~np.isnan(a)
        assert np.max(np.abs(a[ok] - b[ok]) / np.abs(a[ok])) <= 1e-6


def test_spatial_thread_invariance():
    img = philox(2).exponential(size=(97, 61))
    k = build_kernels(StencilSpec(3, 3, 1, 2)).f_B
    ref = convolve_spatial(img, k, threads=1)
    for t in (2, 3, 8):
        assert np.array_equal(convolve_spatial(img, k, threads=t), ref, equal_nan=True)


def test_local_stats_constant():
    st_ = local_stats(np.full((12, 12), 2.0), build_kernels(StencilSpec(1, 1, 1, 1)))
    r0, r1, c0, c1 = valid_region((12, 12), (5, 5))
    np.testing.assert_allclose(st_.mu[r0:r1, c0:c1], 2.0)
    np.testing.assert_allclose(st_.sigma[r0:r1, c0:c1], 0.0, atol=1e-7)


def test_local_stats_zero_two_ring():
    img = np.array([[0.0, 2.0, 0.0], [2.0, 9.0, 2.0], [0.0, 2.0, 0.0]])
    st_ = local_stats(img, build_kernels(StencilSpec(1, 1, 0, 1)))
    assert st_.mu[1, 1] == pytest.approx(1.0) and st_.sigma[1, 1] == pytest.approx(1.0)


@pytest.mark.parametrize("engine", ["spatial", "fft"])
def test_local_stats_match_enumeration(engine):
    spec = StencilSpec(3, 3, 1, 2)
    rng = philox(4)
    img = rng.exponential(size=(60, 70))
    st_ = local_stats(img, build_kernels(spec), engine)
    support = spec.boundary_support()
    r0, r1, c0, c1 = valid_region(img.shape, spec.shape)
    tol = 1e-10 if engine == "spatial" else 1e-8
    for _ in range(100):
        r, c = rng.integers(r0, r1), rng.integers(c0, c1)
        mu, sd = fit_mean_std(gather(img, spec, r, c, support))
        assert st_.mu[r, c] == pytest.approx(mu, abs=tol)
        assert st_.sigma[r, c] == pytest.approx(sd, abs=max(tol, 1e-6 * sd))


def test_order_statistic_map_matches_direct():
    spec = StencilSpec(1, 1, 1, 2)
    rng = philox(5)
    img = rng.exponential(size=(40, 45))
    osm = order_statistic_map(img, spec, 0.75, max_block=5000)
    r0, r1, c0, c1 = valid_region(img.shape, spec.shape)
    assert np.all(np.isnan(osm[:r0])) and np.all(~np.isnan(osm[r0:r1, c0:c1]))
    for _ in range(100):
        r, c = rng.integers(r0, r1), rng.integers(c0, c1)
        assert osm[r, c] == order_statistic(gather(img, spec, r, c, spec.boundary_support()), 0.75)


def test_choose_engine():
    assert choose_engine(StencilSpec(3, 3, 1, 2)) == "spatial"
    assert StencilSpec(1, 1, 3, 4).area == FFT_CROSSOVER_AREA
    assert choose_engine(StencilSpec(1, 1, 3, 4)) == "spatial"
    assert choose_engine(StencilSpec(1, 1, 3, 5)) == "fft"
    assert choose_engine(StencilSpec(1, 1, 3, 5), crossover_area=10_000) == "spatial"
    with pytest.raises(ValueError):
        choose_engine(StencilSpec(), "gpu")


def direct_statistic(img, spec, config, r, c):
    x = gather(img, spec, r, c, spec.put_support()).mean()
    ring = gather(img, spec, r, c, spec.boundary_support())
    if config.parameterization is Parameterization.TWO:
        if config.strategy is Strategy.CA:
            mu, sd = fit_mean_std(ring)
        else:
            stats = [fit_mean_std(gather(img, spec, r, c, m)) for m in split_windows(spec).as_dict().values()]
            pick = min if config.strategy is Strategy.SOCA else max
            mu, sd = pick(stats, key=lambda ms: ms[0])
        return (x - mu) / (sd / math.sqrt(spec.put_count))
    if config.strategy is Strategy.OS:
        return x / order_statistic(ring, config.os_q)
    if config.strategy is Strategy.CA:
        return x / ring.mean()
    means = [gather(img, spec, r, c, m).mean() for m in split_windows(spec).as_dict().values()]
    return x / (min(means) if config.strategy is Strategy.SOCA else max(means))


@pytest.mark.parametrize("strategy", list(Strategy))
@pytest.mark.parametrize("param", list(Parameterization))
def test_statistic_matches_direct_stencil(strategy, param):
    if param is Parameterization.TWO and strategy is Strategy.OS:
        pytest.skip("no two-parameter OS")
    spec = StencilSpec(3, 1, 1, 2)
    cfg = DetectorConfig(strategy=strategy, parameterization=param)
    rng = philox(6)
    img = rng.exponential(size=(50, 40))
    stat, _ = compute_statistic(img, spec, cfg, "spatial")
    r0, r1, c0, c1 = valid_region(img.shape, spec.shape)
    for _ in range(100):
        r, c = rng.integers(r0, r1), rng.integers(c0, c1)
        assert stat[r, c] == pytest.approx(direct_statistic(img, spec, cfg, r, c), rel=1e-10)


def test_injected_target_detected_and_removable():
    spec = StencilSpec(1, 1, 2, 2)
    img, _ = gen_scene(SceneSpec(80, 80, seed=9))
    bright = img.pixels.copy()
    bright[40, 40] = 100.0
    cfg = DetectorConfig(pfa=1e-3)
    with_target = run_detection(SarImage(bright), spec, cfg, threads=1)
    without = run_detection(img, spec, cfg, threads=1)
    assert with_target.mask[40, 40]
    assert not without.mask[40, 40]


@pytest.mark.parametrize("strategy", list(Strategy))
def test_engines_give_identical_masks(strategy):
    img, _ = gen_scene(SceneSpec(128, 96, seed=3))
    spec = StencilSpec(1, 1, 3, 2)
    cfg = DetectorConfig(strategy=strategy, pfa=1e-2)
    a = run_detection(img, spec, cfg, engine="spatial", threads=2)
    b = run_detection(img, spec, cfg, engine="fft", threads=2)
    ok = a.valid_mask()
    dev = np.abs(a.statistic_map[ok] - b.statistic_map[ok]) / (1 + np.abs(a.statistic_map[ok]))
    assert dev.max() <= 1e-6
    assert np.array_equal(a.mask, b.mask)


def test_mask_respects_valid_region_and_pfa_monotone():
    img, _ = gen_scene(SceneSpec(100, 100, seed=4))
    spec = StencilSpec(1, 1, 1, 1)
    masks = [run_detection(img, spec, DetectorConfig(pfa=p)).mask for p in (1e-1, 1e-2, 1e-3)]
    for loose, tight in zip(masks, masks[1:]):
        assert np.all(loose | ~tight)
    m = run_detection(img, spec, DetectorConfig(pfa=0.5))
    assert not m.mask[~m.valid_mask()].any()
    assert m.valid_count == 96 * 96


def test_reflect_border_evaluates_everything():
    img, _ = gen_scene(SceneSpec(40, 30, seed=5))
    res = run_detection(img, StencilSpec(1, 1, 1, 1), DetectorConfig(pfa=1e-2), border="reflect")
    assert res.valid_region == (0, 30, 0, 40)
    assert not np.isnan(res.statistic_map).any()
    with pytest.raises(ValueError):
        run_detection(img, StencilSpec(), DetectorConfig(), border="wrap")


def test_domain_mismatch():
    img, _ = gen_scene(SceneSpec(30, 30, seed=6))
    with pytest.raises(DomainMismatch):
        run_detection(img, StencilSpec(), DetectorConfig(law=Law.LOG))
    with pytest.raises(DomainMismatch):
        run_detection(img, StencilSpec(), DetectorConfig(law=Law.LINEAR))
    run_detection(to_magnitude(img), StencilSpec(), DetectorConfig(law=Law.LINEAR))
    run_detection(to_log_power(img), StencilSpec(), DetectorConfig(law=Law.LOG))


def test_kernel_too_large():
    with pytest.raises(KernelTooLarge):
        run_detection(np.ones((5, 5)), StencilSpec(1, 1, 2, 2), DetectorConfig())


def test_zero_background_is_flagged():
    img = np.zeros((20, 20))
    img[10, 10] = 5.0
    stat, diag = compute_statistic(img, StencilSpec(), DetectorConfig(), "spatial")
    assert diag["nonpositive_background"] > 0
    assert np.isnan(stat[10, 10])
    stat, diag = compute_statistic(np.full((20, 20), 3.0), StencilSpec(), DetectorConfig(parameterization="two"), "spatial")
    assert diag["zero_sigma"] > 0


def test_calibration_on_moderate_scene():
    img, _ = gen_scene(SceneSpec(512, 512, seed=17))
    spec, pfa = StencilSpec(3, 3, 1, 2), 1e-2
    res = run_detection(img, spec, DetectorConfig(pfa=pfa))
    n = res.valid_count
    rate = res.mask.sum() / n
    assert abs(rate - pfa) <= 3 * math.sqrt(pfa * (1 - pfa) / n)


def test_explicit_alpha_and_alpha_monotonicity():
    img, _ = gen_scene(SceneSpec(64, 64, seed=8))
    spec = StencilSpec(1, 1, 1, 1)
    prev = None
    for a in (1.0, 2.0, 4.0, 8.0):
        m = run_detection(img, spec, DetectorConfig(), alpha=a).mask
        if prev is not None:
            assert np.all(prev | ~m)
        prev = m


# ------------------------------------------------------------------ ROIs


def test_rois_size_filter():
    mask = np.zeros((30, 30), dtype=bool)
    mask[2:5, 2] = True  # 3 pixels
    mask[10:12, 10:15] = True  # 10 pixels
    rois = extract_rois(mask, min_size=5)
    assert len(rois) == 1 and rois[0].pixel_count == 10
    assert rois[0].row == pytest.approx(10.5) and rois[0].col == pytest.approx(12.0)
    assert len(extract_rois(mask, max_size=5)) == 1


def test_rois_merge_by_separation():
    mask = np.zeros((30, 30), dtype=bool)
    mask[5:7, 5:10] = True
    mask[9:11, 5:10] = True  # 2 empty rows between the blobs
    assert len(extract_rois(mask)) == 2
    merged = extract_rois(mask, min_separation=5)
    assert len(merged) == 1 and merged[0].pixel_count == 20


def test_rois_eight_connected_and_empty():
    mask = np.zeros((5, 5), dtype=bool)
    mask[1, 1] = mask[2, 2] = True
    assert len(extract_rois(mask)) == 1
    assert extract_rois(np.zeros((5, 5), dtype=bool)) == []


def test_roi_peak_and_mean():
    mask = np.zeros((6, 6), dtype=bool)
    mask[2, 2:4] = True
    stat = np.zeros((6, 6))
    stat[2, 2], stat[2, 3] = 3.0, 5.0
    (roi,) = extract_rois(mask, statistic=stat)
    assert roi.peak == 5.0 and roi.mean == 4.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_rois_cover_mask(seed):
    mask = philox(seed).random((25, 25)) > 0.8
    rois = extract_rois(mask)
    assert sum(r.pixel_count for r in rois) == mask.sum()
