import math

import numpy as np
import pytest

from bandlets.errors import ParameterError, SpecError
from bandlets.geometry import FlowConfig
from bandlets.synthlab import (
    BlurSpec,
    EdgeCurve,
    RiskReport,
    SceneSpec,
    SmoothField,
    concentration_experiment,
    edge_scene,
    fit_slope,
    projection_norm_bound,
    make_rng,
    observe,
    render_scene,
    risk_curve,
)


def horizon(blur=None):
    return SceneSpec(2.0, (EdgeCurve("poly", (0.5,)),), (SmoothField(0.0), SmoothField(1.0)),
                     blur)


def test_horizon_render():
    img = render_scene(horizon(), 16)
    assert np.allclose(img[:8], 0) and np.allclose(img[8:], 1)
    off = render_scene(SceneSpec(2.0, (EdgeCurve("poly", (0.53,)),),
                                 (SmoothField(0.0), SmoothField(1.0))), 16)
    mixed = [r for r in range(16) if 0 < off[r].mean() < 1]
    assert len(mixed) == 1


def test_blur_lowers_gradient():
    side = 32
    sharp = render_scene(horizon(), side)
    soft = render_scene(horizon(BlurSpec(4 / side)), side)
    g = lambda a: np.abs(np.diff(a, axis=0)).max()
    assert g(soft) < g(sharp)


def test_constant_scene():
    img = render_scene(SceneSpec(2.0, (), (SmoothField(0.7),)), 8)
    assert np.allclose(img, 0.7)


def test_smooth_region_second_differences_bounded():
    spec = SceneSpec(2.0, (), (SmoothField(0.2, ((0.3, 1.0, 2.0, 0.5),)),))
    scaled = []
    for side in (16, 32, 64):
        f = render_scene(spec, side)
        scaled.append(np.abs(np.diff(f, 2, axis=1)).max() * side**2)
    assert max(scaled) / min(scaled) < 1.5


def test_tangential_edges_rejected():
    a = EdgeCurve("poly", (0.5, 0.0, 1.0))
    b = EdgeCurve("poly", (0.5, 0.0, -1.0))  # touch at x=0 with equal slope
    spec = SceneSpec(2.0, (EdgeCurve("poly", (0.25, 0.0, 1.0)), EdgeCurve("poly", (0.25,))),
                     (SmoothField(0), SmoothField(1)))
    with pytest.raises(SpecError):
        spec.validate()
    with pytest.raises(SpecError):
        render_scene(SceneSpec(2.0, (a, b), (SmoothField(0), SmoothField(1))), 8)
    # transversal crossing is fine, and tangency is allowed when alpha <= 1
    SceneSpec(2.0, (EdgeCurve("poly", (0.2, 0.6)), EdgeCurve("poly", (0.8, -0.6))),
              (SmoothField(0), SmoothField(1))).validate()
    SceneSpec(1.0, (a, b), (SmoothField(0), SmoothField(1))).validate()


def test_blur_spec():
    with pytest.raises(SpecError):
        BlurSpec(0.3)
    with pytest.raises(SpecError):
        BlurSpec(0.0)
    b = BlurSpec(0.1, alpha=2.0)
    k = b.kernel1d(100)
    assert k.sum() == pytest.approx(1.0)
    assert k.size == 21 and k[0] == 0 and k[-1] == 0
    assert b.power == 3
    assert b.norm_bound() == pytest.approx(0.1**-4)


def test_edge_scene_defaults():
    s = edge_scene()
    assert s.alpha == 2.0 and s.blur is not None and len(s.edges) == 1
    assert edge_scene(blur=None).blur is None
    with pytest.raises(SpecError):
        edge_scene(contrast=0)


def test_curves():
    c = EdgeCurve("sine", (0.5, 0.1, 2.0, 0.0))
    x = np.linspace(0, 1, 5)
    assert np.allclose(c(x), 0.5 + 0.1 * np.sin(4 * np.pi * x))
    h = 1e-6
    assert np.allclose(c.derivative(0.3), (c(0.3 + h) - c(0.3 - h)) / (2 * h), atol=1e-6)
    with pytest.raises(SpecError):
        EdgeCurve("spline", (1.0,))
    with pytest.raises(SpecError):
        EdgeCurve("sine", (1.0,))


def test_observe_zero_noise_and_determinism():
    f = render_scene(edge_scene(), 16)
    assert np.array_equal(observe(f, 0.0, 1), f)
    assert np.array_equal(observe(f, 0.1, 7), observe(f, 0.1, 7))
    assert not np.array_equal(observe(f, 0.1, 7), observe(f, 0.1, 8))
    assert not np.array_equal(observe(f, 0.1, 7, (0, 1)), observe(f, 0.1, 7, (1, 0)))
    with pytest.raises(ParameterError):
        observe(f, -0.1, 1)


def test_observe_noise_level_and_whiteness():
    side, sigma = 256, 0.01
    f = np.zeros((side, side))
    z = np.concatenate([observe(f, sigma, s).ravel() for s in (1, 2)])
    n = z.size
    target = sigma * side
    assert n >= 10**5
    assert abs(z.std() - target) < 3 * target / math.sqrt(2 * n)
    r = np.corrcoef(z[:-1], z[1:])[0, 1]
    assert abs(r) < 3 / math.sqrt(n)


def test_make_rng_rejects_bad_seed():
    with pytest.raises(ParameterError):
        make_rng(-1)
    with pytest.raises(ParameterError):
        make_rng(2**64)


def test_fit_slope():
    sig = np.array([2.0**-k for k in range(2, 7)])
    x = sig**2 * np.abs(np.log(sig))
    rows = list(zip(sig, 3.0 * x ** (2 / 3)))
    slope, icpt, se = fit_slope(rows)
    assert slope == pytest.approx(2 / 3, abs=1e-12)
    assert icpt == pytest.approx(math.log(3.0), abs=1e-12)
    s2, i2, _ = fit_slope([(s, 10 * m) for s, m in rows])
    assert s2 == pytest.approx(slope, abs=1e-12)
    assert i2 == pytest.approx(icpt + math.log(10), abs=1e-12)
    with pytest.raises(ParameterError):
        fit_slope([(0.1, 1), (0.1, 2), (0.2, 3)])
    with pytest.raises(ParameterError):
        fit_slope(rows[:2])
    with pytest.raises(ParameterError):
        fit_slope([(0.1, 1), (0.2, 0), (0.05, 3)])


def test_risk_report_csv_format():
    rep = RiskReport([(0.25, 2, 1.0 / 3, 0.0, 12.5, 4.0)], 0.61234567891234, 0.1, 0.02)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "sigma,trials,mse_mean,mse_stderr,psnr_mean,kept_mean"
    assert lines[1] == "0.25,2,0.3333333333,0,12.5,4"
    assert lines[2] == "# slope=0.6123456789 stderr=0.02"
    lo, hi = rep.confidence_interval()
    assert lo < rep.slope < hi


def test_risk_curve_small_run():
    spec = edge_scene()
    sig = [0.25, 0.125, 0.0625]
    rep, base = risk_curve(spec, sig, 2, 2.5, FlowConfig(), seed=3, compare_baseline=True)
    assert [r[0] for r in rep.rows] == sig
    assert all(r[1] == 2 and r[2] >= 0 for r in rep.rows)
    assert math.isfinite(rep.slope) and base.label == "wavelet"
    one = risk_curve(spec, sig, 1, 2.5, seed=3)
    assert all(r[3] == 0 for r in one.rows)
    threaded = risk_curve(spec, sig, 2, 2.5, seed=3, threads=3)
    assert threaded.to_csv() == rep.to_csv()


def test_risk_curve_monotone_in_sigma():
    rep = risk_curve(edge_scene(), [0.25, 0.125, 0.0625, 0.03125], 6, 2.5, seed=11)
    m = rep.mse
    se = np.array([r[3] for r in rep.rows])
    assert np.all(m[1:] <= m[:-1] + se[:-1])


def test_risk_curve_errors():
    with pytest.raises(ParameterError):
        risk_curve(edge_scene(), [0.1], 0)
    with pytest.raises(Exception):
        risk_curve(edge_scene(), [0.5], 1)


def test_concentration_bound_respected():
    r = concentration_experiment(64, [1, 2, 4, 8], 0.0, 5000, seed=2)
    assert r.bound == pytest.approx(2 / 64)
    assert not r.exhaustive
    assert r.frequency <= r.bound + 3 * r.binomial_se


def test_concentration_large_u_never_violated():
    r = concentration_experiment(64, None, 10.0, 10000, seed=4)
    assert r.violations == 0
    assert r.bound == pytest.approx(2 / 64 * math.exp(-10))


def test_concentration_full_space_never_violated():
    K = 16
    r = concentration_experiment(K, [K], 0.0, 5000, seed=5)
    assert r.violations == 0
    assert projection_norm_bound(K, K, 0) > math.sqrt(K) + math.sqrt(4 * K * math.log(K)) - 1e-12


def test_concentration_exhaustive_matches_sorted_supremum():
    K, trials = 8, 3000
    r = concentration_experiment(K, None, 0.0, trials, seed=6)
    assert r.exhaustive
    W = make_rng(6, K).standard_normal((trials, K))
    top = np.cumsum(np.sort(W**2, axis=1)[:, ::-1], axis=1)
    bad = np.zeros(trials, bool)
    for d in range(1, K + 1):
        bad |= np.sqrt(top[:, d - 1]) > projection_norm_bound(d, K, 0.0)
    assert r.violations == int(bad.sum())


@pytest.mark.parametrize("kw", [{"K": 1}, {"K": 8, "dims": [0]}, {"K": 8, "dims": [9]},
                                {"K": 8, "trials": 0}, {"K": 8, "u": -1}])
def test_concentration_rejects_bad_arguments(kw):
    with pytest.raises(ParameterError):
        concentration_experiment(**kw)
