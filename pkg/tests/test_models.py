import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from cfarkit.errors import InsufficientSamples, InvalidPfa, OutOfSupport
from cfarkit.models import (
    BetaPrime,
    Exponential,
    G0Compound,
    Gamma,
    KCompound,
    Kde,
    LogNormal,
    NpConfig,
    Rayleigh,
    SqrtGamma,
    Weibull,
    alpha_ca_exponential,
    alpha_ca_exponential_block,
    alpha_gaussian,
    alpha_numeric,
    fit_mean,
    fit_mean_std,
    kde_bandwidth,
    kde_fit,
    np_likelihood_ratio,
    parse_model,
    pd_for_target,
)

CLOSED = [
    Exponential(2.0),
    Rayleigh(1.5),
    Gamma(3.0, 2.0),
    SqrtGamma(2.0, 1.0),
    Weibull(1.7, 2.0),
    LogNormal(0.3, 0.6),
    BetaPrime(3.0, 2.0),
]
COMPOUND = [KCompound(4.0, 4.0, 1), KCompound(2.5, 1.0, 3), G0Compound(3.0, 2.0, 1), G0Compound(4.0, 3.0, 2)]


def philox(seed):
    return np.random.Generator(np.random.Philox(seed))


# ---------------------------------------------------------------- estimators


def test_fit_mean_examples():
    assert fit_mean([2, 4, 6]) == 4
    assert fit_mean([5]) == 5
    assert fit_mean(philox(1).exponential(3.0, 10**6)) == pytest.approx(3.0, abs=0.01)


def test_fit_mean_std_examples():
    assert fit_mean_std([1, 1, 1]) == (1, 0)
    assert fit_mean_std([0, 2]) == (1, 1)
    m, s = fit_mean_std([1, 2, 3, 4])
    assert m == 2.5 and s == pytest.approx(math.sqrt(1.25), abs=1e-12)


def test_empty_estimators_raise():
    with pytest.raises(ValueError):
        fit_mean([])


# ---------------------------------------------------------------- alpha


def test_alpha_ca_exponential_values():
    assert alpha_ca_exponential(56, 1e-3) == pytest.approx(7.3516, abs=1e-3)
    assert alpha_ca_exponential(16, 1e-2) == pytest.approx(5.3363, abs=1e-3)


@pytest.mark.parametrize("n", [1, 8, 16, 56, 500])
@pytest.mark.parametrize("pfa", [1e-2, 1e-3, 1e-6])
def test_alpha_matches_ratio_distribution(n, pfa):
    # X / mean(N exponentials) is F(2, 2N) distributed
    assert alpha_ca_exponential(n, pfa) == pytest.approx(stats.f.isf(pfa, 2, 2 * n), rel=1e-9)


@pytest.mark.parametrize("n,m", [(56, 9), (16, 1), (24, 3)])
def test_block_alpha_matches_f_quantile(n, m):
    assert alpha_ca_exponential_block(n, m, 1e-3) == pytest.approx(stats.f.isf(1e-3, 2 * m, 2 * n), rel=1e-9)
    if m == 1:
        assert alpha_ca_exponential_block(n, 1, 1e-3) == pytest.approx(alpha_ca_exponential(n, 1e-3), rel=1e-12)


def test_alpha_large_n_limit():
    limit = -math.log(1e-3)
    assert limit == pytest.approx(6.9078, abs=1e-4)
    assert alpha_ca_exponential(10**6, 1e-3) == pytest.approx(limit, abs=1e-4)
    for n in (1, 10, 100, 10**4, 10**6):
        assert alpha_ca_exponential(n, 1e-3) > limit


@given(st.integers(1, 5000), st.floats(1e-9, 0.5))
def test_alpha_positive_and_decreasing_in_n(n, pfa):
    a = alpha_ca_exponential(n, pfa)
    assert a > 0
    assert alpha_ca_exponential(n + 1, pfa) <= a * (1 + 1e-12)


@pytest.mark.parametrize("n", [8, 16, 56])
@pytest.mark.parametrize("pfa", [1e-2, 1e-3])
def test_alpha_monte_carlo(n, pfa):
    trials = 2_000_000
    rng = philox(n * 1000 + int(-math.log10(pfa)))
    x = rng.exponential(size=trials)
    mu = rng.gamma(n, size=trials) / n
    hits = np.count_nonzero(x / mu > alpha_ca_exponential(n, pfa))
    sigma = math.sqrt(pfa * (1 - pfa) / trials)
    assert abs(hits / trials - pfa) <= 3 * sigma


def test_alpha_monte_carlo_brute_force():
    # explicit boundary rings rather than the gamma shortcut
    n, pfa, trials = 16, 1e-2, 400_000
    rng = philox(77)
    ring = rng.exponential(size=(trials, n))
    x = rng.exponential(size=trials)
    rate = np.mean(x / ring.mean(axis=1) > alpha_ca_exponential(n, pfa))
    assert abs(rate - pfa) <= 3 * math.sqrt(pfa * (1 - pfa) / trials)


def test_alpha_invalid_pfa():
    for bad in (0.0, 1.0, -0.1, 2.0):
        with pytest.raises(InvalidPfa, match=r"pfa must be in \(0,1\)"):
            alpha_ca_exponential(56, bad)
    with pytest.raises(ValueError):
        alpha_ca_exponential(0, 1e-3)


def test_alpha_numeric():
    assert alpha_numeric(Exponential(1.0), 1e-3) == pytest.approx(6.9078, abs=1e-4)
    a = alpha_numeric(Weibull(2.0, 1.0), 1e-2)
    assert a == pytest.approx(math.sqrt(-math.log(1e-2)), rel=1e-12)
    assert a == pytest.approx(2.1460, abs=1e-4)
    rng = philox(3)
    draws = Weibull(2.0, 1.0).sample(rng, 10**6)
    assert np.mean(draws > a) == pytest.approx(1e-2, abs=3 * math.sqrt(1e-2 * 0.99 / 1e6))


def test_alpha_gaussian():
    assert alpha_gaussian(1e-3) == pytest.approx(3.0902323, abs=1e-6)


def test_pd_for_target():
    assert pd_for_target(Exponential(10.0), 6.9078) == pytest.approx(math.exp(-0.69078), abs=1e-9)
    assert pd_for_target(Exponential(10.0), 6.9078) == pytest.approx(0.5012, abs=1e-4)
    for m in CLOSED + COMPOUND[:1]:
        assert pd_for_target(m, -np.inf) == 1.0
        assert pd_for_target(m, -1.0) == 1.0


@pytest.mark.parametrize("model", CLOSED + COMPOUND[:2], ids=lambda m: m.spec_string())
def test_pd_equals_pfa_for_background_target(model):
    for pfa in (1e-2, 1e-4):
        assert pd_for_target(model, alpha_numeric(model, pfa)) == pytest.approx(pfa, rel=1e-6)


def test_np_likelihood_ratio():
    bg = Exponential(1.0)
    ratio, label = np_likelihood_ratio(NpConfig(bg, bg), 2.0)
    assert ratio == 1.0 and label == "background"
    cfg = NpConfig(bg, Exponential(10.0), 0.99, 0.01)
    assert cfg.ratio_threshold == pytest.approx(99.0)
    x = 60.0
    expected = (0.1 * math.exp(-6.0)) / math.exp(-60.0)
    ratio, label = np_likelihood_ratio(cfg, x)
    assert ratio == pytest.approx(expected, rel=1e-9) and label == "target"
    assert np_likelihood_ratio(cfg, 1.0)[1] == "background"
    with pytest.raises(OutOfSupport):
        np_likelihood_ratio(cfg, -1.0)
    with pytest.raises(ValueError):
        NpConfig(bg, bg, 0.7, 0.7)


# ---------------------------------------------------------------- distributions


@pytest.mark.parametrize("model", CLOSED, ids=lambda m: m.spec_string())
def test_closed_form_normalisation(model):
    lo, hi = model.quantile(1e-12), model.isf(1e-12)
    total, _ = integrate.quad(model.pdf, lo, hi, limit=400, epsabs=1e-12, points=[model.quantile(0.5)])
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("model", COMPOUND, ids=lambda m: m.spec_string())
def test_compound_normalisation(model):
    lo, hi = float(model.quantile(1e-9)), float(model.isf(1e-9))
    grid = np.concatenate([np.geomspace(lo, hi, 4000)])
    total = integrate.trapezoid(model.pdf(grid) * grid, np.log(grid))
    assert total == pytest.approx(1.0, abs=1e-4)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6))
def test_quantile_round_trip_closed(p):
    for m in CLOSED:
        assert float(m.cdf(m.quantile(p))) == pytest.approx(p, rel=1e-7, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(1e-5, 1 - 1e-5))
def test_quantile_round_trip_compound(p):
    for m in COMPOUND[:3]:
        assert float(m.cdf(m.quantile(p))) == pytest.approx(p, rel=1e-6, abs=1e-10)
        assert float(m.sf(m.isf(p))) == pytest.approx(p, rel=1e-6, abs=1e-10)


def k_pdf_oracle(z, shape, rate, n):
    # compound of Gamma(shape, rate) backscatter with Gamma(n, n) speckle
    b = rate * n
    return (
        2.0 * b ** ((shape + n) / 2) * z ** ((shape + n) / 2 - 1) * special.kv(shape - n, 2 * np.sqrt(b * z))
        / (special.gamma(shape) * special.gamma(n))
    )


def g0_pdf_oracle(z, a, g, n):
    return np.exp(
        n * np.log(n) + special.gammaln(n + a) + a * np.log(g) + (n - 1) * np.log(z)
        - special.gammaln(n) - special.gammaln(a) - (n + a) * np.log(g + n * z)
    )


@pytest.mark.parametrize("shape,rate,n", [(4.0, 4.0, 1), (2.5, 1.0, 3), (0.8, 2.0, 2)])
def test_k_pdf_closed_form(shape, rate, n):
    m = KCompound(shape, rate, n)
    z = np.geomspace(float(m.quantile(1e-6)), float(m.isf(1e-6)), 50)
    np.testing.assert_allclose(m.pdf(z), k_pdf_oracle(z, shape, rate, n), rtol=1e-6)


@pytest.mark.parametrize("a,g,n", [(3.0, 2.0, 1), (4.0, 3.0, 2), (1.5, 0.5, 4)])
def test_g0_pdf_closed_form(a, g, n):
    m = G0Compound(a, g, n)
    z = np.geomspace(float(m.quantile(1e-6)), float(m.isf(1e-6)), 50)
    np.testing.assert_allclose(m.pdf(z), g0_pdf_oracle(z, a, g, n), rtol=1e-6)


def test_g0_single_look_is_beta_prime():
    g0, bp = G0Compound(3.0, 2.0, 1), BetaPrime(3.0, 2.0)
    z = np.geomspace(1e-4, 1e3, 400)
    assert np.max(np.abs(g0.cdf(z) - bp.cdf(z))) < 1e-3
    # Lomax survival (1 + z/gamma)^-a
    np.testing.assert_allclose(bp.sf(z), (1 + z / 2.0) ** -3.0, rtol=1e-12)


def test_k_large_shape_is_exponential():
    k = KCompound(1e4, 1e4, 1)
    z = np.linspace(0.0, 12.0, 600)
    assert np.max(np.abs(k.cdf(z) - (1 - np.exp(-z)))) < 0.01


def test_compound_means():
    assert KCompound(4, 2, 1).mean() == pytest.approx(2.0)
    assert G0Compound(3, 2, 1).mean() == pytest.approx(1.0)
    rng = philox(8)
    assert KCompound(4, 4, 2).sample(rng, 400_000).mean() == pytest.approx(1.0, rel=0.01)


@pytest.mark.parametrize("model", CLOSED + [KCompound(3.0, 3.0, 1), G0Compound(5.0, 4.0, 1)], ids=lambda m: m.spec_string())
def test_fit_recovers_parameters(model):
    x = model.sample(philox(21), 200_000)
    fitted = type(model).fit(x)
    assert float(fitted.mean()) == pytest.approx(float(model.mean()), rel=0.03)
    probe = np.asarray(model.quantile(np.array([0.1, 0.5, 0.9])), dtype=float)
    np.testing.assert_allclose(fitted.cdf(probe), [0.1, 0.5, 0.9], atol=0.01)


def test_samples_match_cdf():
    for m in CLOSED + COMPOUND[:2]:
        x = m.sample(philox(5), 50_000)
        ks = stats.kstest(x, lambda v: np.asarray(m.cdf(v), dtype=float)).statistic
        assert ks < 0.01, m.spec_string()


def test_invalid_parameters():
    for ctor in (lambda: Exponential(0.0), lambda: Weibull(-1, 1), lambda: KCompound(0, 1), lambda: G0Compound(1, -2)):
        with pytest.raises(ValueError):
            ctor()


def test_support_edges():
    m = Exponential(1.0)
    assert m.pdf(-1.0) == 0.0 and m.cdf(-1.0) == 0.0 and m.sf(-1.0) == 1.0


# ---------------------------------------------------------------- kde


def test_kde_peaks_at_cluster():
    kde = kde_fit(np.full(50, 3.0), bandwidth=0.5)
    grid = np.linspace(0, 6, 601)
    assert grid[np.argmax(kde.pdf(grid))] == pytest.approx(3.0)


def test_kde_tracks_exponential():
    x = philox(2).exponential(size=100_000)
    kde = kde_fit(x)
    assert float(kde.cdf(1.0)) == pytest.approx(1 - math.exp(-1), abs=0.02)
    assert float(kde.cdf(kde.quantile(0.3))) == pytest.approx(0.3, abs=1e-8)


def test_silverman():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert kde_bandwidth(x) == pytest.approx(1.06 * np.std(x) * 4 ** -0.2)
    with pytest.raises(InsufficientSamples):
        kde_fit([1.0])


# ---------------------------------------------------------------- spec strings


@pytest.mark.parametrize(
    "text,cls",
    [
        ("exp:mean=1.0", Exponential),
        ("weibull:shape=2,scale=1", Weibull),
        ("k:shape=4,rate=4,n=1", KCompound),
        ("g0:shape=3,gamma=2,n=1", G0Compound),
        ("betaprime:shape=3,gamma=2", BetaPrime),
    ],
)
def test_parse_model(text, cls):
    m = parse_model(text)
    assert isinstance(m, cls)
    assert parse_model(m.spec_string()) == m


def test_parse_kde_and_errors():
    m = parse_model("kde:bandwidth=auto", samples=np.arange(1.0, 30.0))
    assert isinstance(m, Kde)
    with pytest.raises(ValueError):
        parse_model("kde:bandwidth=auto")
    with pytest.raises(ValueError):
        parse_model("cauchy:loc=1")
    with pytest.raises(ValueError):
        parse_model("exp:scale=1")
