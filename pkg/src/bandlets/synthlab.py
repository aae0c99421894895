"""Synthetic geometric images, noisy observations and Monte Carlo checks."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage, stats

from .errors import ParameterError, SpecError
from .estimator import (
    denoise,
    denoise_at,
    plan_from_sigma,
    psnr,
    risk_of,
)
from .geometry import FlowConfig
from .pyramid import check_image, is_power_of_two


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and an order-free substream path."""
    if seed < 0 or seed >= 2**64:
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


# --------------------------------------------------------------------------
# scenes


@dataclass(frozen=True)
class EdgeCurve:
    """Graph ``y = gamma(x)`` of a polynomial or a sinusoid over [0, 1].

    ``poly``: ``params`` are coefficients in increasing degree.
    ``sine``: ``params = (offset, amplitude, frequency, phase)``.
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("poly", "sine"):
            raise SpecError(f"unknown curve kind {self.kind!r}")
        if self.kind == "sine" and len(self.params) != 4:
            raise SpecError("sine curves take (offset, amplitude, frequency, phase)")
        if not self.params:
            raise SpecError("curve needs parameters")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "poly":
            return np.polynomial.polynomial.polyval(x, self.params)
        a0, amp, freq, ph = self.params
        return a0 + amp * np.sin(2 * np.pi * freq * x + ph)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "poly":
            return np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(self.params))
        _, amp, freq, ph = self.params
        return amp * 2 * np.pi * freq * np.cos(2 * np.pi * freq * x + ph)


@dataclass(frozen=True)
class SmoothField:
    """``offset + sum amp * cos(2 pi (kx x + ky y) + phase)`` over ``terms``."""

    offset: float = 0.0
    terms: tuple[tuple[float, float, float, float], ...] = ()

    def __call__(self, x, y):
        v = np.full(np.broadcast(x, y).shape, float(self.offset))
        for amp, kx, ky, ph in self.terms:
            v = v + amp * np.cos(2 * np.pi * (kx * x + ky * y) + ph)
        return v


@dataclass(frozen=True)
class BlurSpec:
    """Separable bump kernel ``(1 - (t/s)^2)^m`` on ``[-s, s]^2``.

    ``m = ceil(alpha) + 1`` makes the kernel C^alpha.  The Holder norm bound
    ``s^-(2 + alpha)`` is reported by :meth:`norm_bound` but not enforced.
    """

    support: float
    alpha: float = 2.0

    def __post_init__(self):
        if not 0 < self.support <= 0.25:
            raise SpecError(f"blur support must lie in (0, 1/4], got {self.support}")

    @property
    def power(self) -> int:
        return int(math.ceil(self.alpha)) + 1

    def norm_bound(self) -> float:
        return self.support ** -(2 + self.alpha)

    def kernel1d(self, n: int) -> np.ndarray:
        """Discrete 1D factor on a grid of spacing ``1/n``, summing to one."""
        r = int(math.floor(self.support * n))
        t = np.arange(-r, r + 1) / n
        k = np.clip(1 - (t / self.support) ** 2, 0, None) ** self.power
        if k.sum() == 0:
            return np.ones(1)
        return k / k.sum()


@dataclass(frozen=True)
class SceneSpec:
    """Piecewise smooth image separated by edge curves, optionally blurred.

    The region of a point is the bitmask ``sum_g [y > gamma_g(x)] << g``,
    taken modulo ``len(regions)``.
    """

    alpha: float
    edges: tuple[EdgeCurve, ...] = ()
    regions: tuple[SmoothField, ...] = (SmoothField(),)
    blur: Optional[BlurSpec] = None
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def validate(self, grid: int = 4097):
        if not self.alpha > 0:
            raise SpecError(f"alpha must be positive, got {self.alpha}")
        if not self.regions:
            raise SpecError("at least one region field is required")
        if self.alpha <= 1:
            return
        x = np.linspace(0, 1, grid)
        for a, b in combinations(self.edges, 2):
            d = a(x) - b(x)
            dd = a.derivative(x) - b.derivative(x)
            cross = np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]
            touch = np.nonzero(d == 0)[0]
            for i in np.concatenate([cross, touch]):
                if abs(dd[i]) < 1e-6:
                    raise SpecError("edge curves intersect tangentially")
            # near-contact without a sign change
            ad = np.abs(d)
            inner = np.nonzero((ad[1:-1] < ad[:-2]) & (ad[1:-1] <= ad[2:]) & (ad[1:-1] < 1e-9))[0] + 1
            for i in inner:
                if abs(dd[i]) < 1e-6:
                    raise SpecError("edge curves touch tangentially")


def edge_scene(alpha: float = 2.0, contrast: float = 4.0, blur: Optional[float] = 0.06) -> SceneSpec:
    """Default benchmark scene: one sinusoidal edge between two smooth regions.

    The jump across the edge is ``contrast`` and the regions carry a gentle
    cosine ripple of relative amplitude 5%.  ``blur=None`` keeps the edge sharp.
    """
    if not contrast > 0:
        raise SpecError(f"contrast must be positive, got {contrast}")
    curve = EdgeCurve("sine", (0.5, 0.12, 1.0, 0.3))
    ripple = 0.05 * contrast
    regions = (
        SmoothField(0.0, ((ripple, 1.0, 0.0, 0.0),)),
        SmoothField(contrast, ((ripple, 0.0, 1.0, 1.0),)),
    )
    b = BlurSpec(blur, alpha) if blur else None
    return SceneSpec(alpha, (curve,), regions, b, {"contrast": contrast, "blur": blur})


def render_scene(spec: SceneSpec, side: int, oversample: int = 4) -> np.ndarray:
    """Pixel averages of the scene on a ``side x side`` grid (row index = y)."""
    if not is_power_of_two(side) or side < 2:
        raise ParameterError(f"side must be a power of two >= 2, got {side}")
    if oversample < 4:
        raise ParameterError("oversample must be at least 4")
    spec.validate()
    n = side * oversample
    c = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(c, c)
    label = np.zeros((n, n), dtype=int)
    for g, curve in enumerate(spec.edges):
        label += (Y > curve(c)[None, :]).astype(int) << g
    label %= len(spec.regions)
    fine = np.zeros((n, n))
    for r, fld in enumerate(spec.regions):
        mask = label == r
        if mask.any():
            fine[mask] = fld(X[mask], Y[mask])
    if spec.blur is not None:
        k = spec.blur.kernel1d(n)
        fine = ndimage.convolve1d(fine, k, axis=0, mode="reflect")
        fine = ndimage.convolve1d(fine, k, axis=1, mode="reflect")
    return fine.reshape(side, oversample, side, oversample).mean(axis=(1, 3))


def observe(f, sigma: float, seed: int, stream: Sequence[int] = ()) -> np.ndarray:
    """White-noise observation: pixels plus i.i.d. ``N(0, (sigma*side)^2)``."""
    x = check_image(f)
    if sigma < 0:
        raise ParameterError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return x.copy()
    z = make_rng(seed, *stream).standard_normal(x.shape)
    return x + sigma * x.shape[0] * z


# --------------------------------------------------------------------------
# risk curves


def fit_slope(rows) -> tuple[float, float, float]:
    """OLS of ``log mse`` on ``log(sigma^2 |log sigma|)``: (slope, intercept, stderr)."""
    rows = [(float(s), float(m)) for s, m in rows]
    if len(rows) < 3:
        raise ParameterError("at least three (sigma, mse) rows are needed")
    sig = np.array([s for s, _ in rows])
    mse = np.array([m for _, m in rows])
    if len(np.unique(sig)) != sig.size:
        raise ParameterError("degenerate design: duplicated sigma values")
    if np.any(sig <= 0) or np.any(sig >= 1) or np.any(mse <= 0):
        raise ParameterError("need 0 < sigma < 1 and positive mse")
    x = np.log(sig**2 * np.abs(np.log(sig)))
    y = np.log(mse)
    res = stats.linregress(x, y)
    stderr = float(res.stderr) if len(rows) > 2 else 0.0
    return float(res.slope), float(res.intercept), stderr


@dataclass
class RiskReport:
    rows: list  # (sigma, trials, mse_mean, mse_stderr, psnr_mean, kept_mean)
    slope: float
    intercept: float
    slope_stderr: float
    label: str = "bandlet"

    HEADER = "sigma,trials,mse_mean,mse_stderr,psnr_mean,kept_mean"

    def confidence_interval(self, level: float = 0.95) -> tuple[float, float]:
        dof = max(len(self.rows) - 2, 1)
        t = stats.t.ppf(0.5 + level / 2, dof)
        return self.slope - t * self.slope_stderr, self.slope + t * self.slope_stderr

    def to_csv(self) -> str:
        lines = [self.HEADER]
        for s, n, m, se, ps, k in self.rows:
            lines.append(",".join([f"{s:.10g}", str(int(n)), f"{m:.10g}", f"{se:.10g}",
                                   f"{ps:.10g}", f"{k:.10g}"]))
        lines.append(f"# slope={self.slope:.10g} stderr={self.slope_stderr:.10g}")
        return "\n".join(lines) + "\n"

    @property
    def mse(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _upsample(img: np.ndarray, side: int) -> np.ndarray:
    r = side // img.shape[0]
    return np.kron(img, np.ones((r, r)))


def risk_curve(spec: SceneSpec, sigmas: Sequence[float], trials: int,
               lambda_tilde: Optional[float] = None, cfg: Optional[FlowConfig] = None,
               seed: int = 0, compare_baseline: bool = False, threads: int = 1,
               reference_side: Optional[int] = None):
    """Monte Carlo risk of the estimator over a grid of noise levels.

    Error is measured against the scene rendered at ``reference_side``
    (default: the finest plan side times 4) so that the discretisation bias
    ``||f - P_V f||^2`` is included.  Trial ``t`` at the ``i``-th sigma uses
    the noise substream ``(seed, i, t)``; the baseline reuses the same noise.
    Returns the bandlet report, plus the baseline report when requested.
    """
    cfg = cfg or FlowConfig()
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if len(sigmas) < 1:
        raise ParameterError("at least one sigma is required")
    plans = [plan_from_sigma(s, lambda_tilde, cfg) for s in sigmas]
    ref_side = reference_side or 4 * max(p.side for p in plans)
    ref = render_scene(spec, ref_side)

    rows, base_rows = [], []
    for i, plan in enumerate(plans):
        f = render_scene(spec, plan.side)

        def one(t, plan=plan, f=f, i=i):
            obs = observe(f, plan.sigma, seed, (i, t))
            F, sel = denoise(obs, plan, cfg)
            out = [risk_of(ref, _upsample(F, ref_side)), psnr(ref, _upsample(F, ref_side)),
                   sel.kept_count]
            if compare_baseline:
                B, bsel = denoise_at(obs, plan.T, cfg.without_flows())
                out += [risk_of(ref, _upsample(B, ref_side)), psnr(ref, _upsample(B, ref_side)),
                        bsel.kept_count]
            return out

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                res = np.array(list(ex.map(one, range(trials))), dtype=float)
        else:
            res = np.array([one(t) for t in range(trials)], dtype=float)
        m, se = _mean_se(res[:, 0])
        rows.append((plan.sigma, trials, m, se, float(res[:, 1].mean()), float(res[:, 2].mean())))
        if compare_baseline:
            m, se = _mean_se(res[:, 3])
            base_rows.append((plan.sigma, trials, m, se, float(res[:, 4].mean()),
                              float(res[:, 5].mean())))

    report = _report(rows, "bandlet")
    if compare_baseline:
        return report, _report(base_rows, "wavelet")
    return report


def _report(rows, label) -> RiskReport:
    if len(rows) >= 3:
        slope, intercept, se = fit_slope([(r[0], r[2]) for r in rows])
    else:
        slope = intercept = se = math.nan
    return RiskReport(rows, slope, intercept, se, label)


# --------------------------------------------------------------------------
# concentration of the projected noise


def projection_norm_bound(dim, K: int, u: float):
    """``sqrt(d) + sqrt(4 log(K) d + 2u)``."""
    d = np.asarray(dim, dtype=float)
    return np.sqrt(d) + np.sqrt(4 * math.log(K) * d + 2 * u)


@dataclass
class ConcentrationResult:
    K: int
    u: float
    dims: tuple[int, ...]
    trials: int
    violations: int
    exhaustive: bool

    @property
    def frequency(self) -> float:
        return self.violations / self.trials

    @property
    def bound(self) -> float:
        return 2.0 / self.K * math.exp(-self.u)

    @property
    def binomial_se(self) -> float:
        b = min(self.bound, 1.0)
        return math.sqrt(b * (1 - b) / self.trials)

    def as_dict(self) -> dict:
        return {
            "K": self.K, "u": self.u, "dims": " ".join(map(str, self.dims)),
            "trials": self.trials, "violations": self.violations,
            "frequency": self.frequency, "bound": self.bound,
            "binomial_se": self.binomial_se, "exhaustive": self.exhaustive,
        }


def concentration_experiment(K: int, dims: Optional[Sequence[int]] = None, u: float = 0.0,
                             trials: int = 10000, seed: int = 0) -> ConcentrationResult:
    """Empirical frequency of a uniform violation of the projected-noise bound.

    Subspaces are spanned by coordinate subsets of ``R^K`` of the listed
    dimensions (all ``1..K`` by default).  For ``K <= 12`` every subset is
    enumerated; otherwise the supremum over subsets of size ``d`` is taken
    through the ``d`` largest squared coordinates, which is the same maximum.
    """
    if K < 2:
        raise ParameterError(f"K must be >= 2, got {K}")
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if u < 0:
        raise ParameterError("u must be non-negative")
    dims = tuple(range(1, K + 1)) if dims is None else tuple(int(d) for d in dims)
    if not dims or min(dims) < 1 or max(dims) > K:
        raise ParameterError(f"dims must lie in [1, {K}]")
    W = make_rng(seed, K).standard_normal((trials, K))
    exhaustive = K <= 12
    bad = np.zeros(trials, dtype=bool)
    if exhaustive:
        for d in dims:
            b = projection_norm_bound(d, K, u)
            for subset in combinations(range(K), d):
                bad |= np.sqrt(np.sum(W[:, list(subset)] ** 2, axis=1)) > b
    else:
        top = np.cumsum(np.sort(W**2, axis=1)[:, ::-1], axis=1)
        for d in dims:
            bad |= np.sqrt(top[:, d - 1]) > projection_norm_bound(d, K, u)
    return ConcentrationResult(K, float(u), dims, trials, int(bad.sum()), exhaustive)
