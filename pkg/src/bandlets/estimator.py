"""Noise-level driven plan and the best-basis thresholding estimator.

Scaling convention (used everywhere in the package): an image array holds
pixel averages of a function on the unit square.  The orthonormal pixel
basis of ``V_N`` has coefficients ``pixels / side``, so

* a white-noise observation adds i.i.d. ``N(0, (sigma*side)^2)`` to pixels,
* thresholds, penalised costs and oracle values live in coefficient units,
* ``risk_of`` (mean squared pixel error) equals the continuous ``||f - F||^2``.

Logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InputError, OutOfRegimeError, ParameterError
from .geometry import FlowConfig, enumerate_flows
from .pyramid import check_image, daubechies, dwt2, max_depth
from .selection import Selection, best_geometry, reconstruct, widths_for

EPSILON = 3.0
KAPPA = 64.0
SIGMA_MAX = 0.25


def lambda0(K: int) -> float:
    """Threshold constant ``sqrt(32 + 8 / log K)`` for a dictionary of ``K`` vectors."""
    if K < 2:
        raise ParameterError(f"dictionary size must be >= 2, got {K}")
    return math.sqrt(32.0 + 8.0 / math.log(K))


def regime_lambda(p: int, K: int) -> float:
    """Smallest ``lambda_tilde`` covered by the final risk bound (``K0 = K``)."""
    return math.sqrt(2.0 * (p + 4)) * lambda0(K)


def dictionary_size(side: int, cfg: FlowConfig, depth: Optional[int] = None) -> int:
    """Number of dictionary vectors, counted by construction.

    The wavelet basis contributes ``side**2`` vectors; every admissible
    square and every non-trivial flow contributes its ``w**2`` bandlets.
    """
    depth = max_depth(side) if depth is None else depth
    K = side * side
    for d in range(1, depth + 1):
        S = side >> d
        for w in widths_for(S, cfg):
            K += 3 * S * S * (len(enumerate_flows(w, cfg)) - 1)
    return K


def scale_for_sigma(sigma: float) -> int:
    """The integer ``j <= 0`` with ``2**(j-1) < sigma <= 2**j``."""
    m, e = math.frexp(sigma)  # sigma = m * 2**e, 0.5 <= m < 1
    return e - 1 if m == 0.5 else e


@dataclass(frozen=True)
class EstimatorPlan:
    sigma: float
    j: int
    side: int
    N: int
    K_N: int
    lambda_tilde: float
    T: float
    lambda0: float
    regime_lambda: float
    p: int

    @property
    def in_regime(self) -> bool:
        return self.lambda_tilde >= self.regime_lambda

    @property
    def meets_threshold_rule(self) -> bool:
        """Whether ``T >= lambda0(K_N) sqrt(log K_N) sigma``."""
        return self.T >= self.lambda0 * math.sqrt(math.log(self.K_N)) * self.sigma

    def as_dict(self) -> dict:
        return {
            "sigma": self.sigma, "j": self.j, "N": self.N, "K_N": self.K_N,
            "T": self.T, "lambda0": self.lambda0, "lambda_tilde": self.lambda_tilde,
            "regime_lambda": self.regime_lambda, "p": self.p, "side": self.side,
            "regime": "guaranteed" if self.in_regime else "outside guaranteed regime",
        }


def plan_from_sigma(sigma: float, lambda_tilde: Optional[float] = None,
                    cfg: Optional[FlowConfig] = None, side: Optional[int] = None) -> EstimatorPlan:
    """Resolution, dictionary size and threshold for a known noise level.

    ``side`` defaults to ``2**-j``; passing it explicitly keeps the threshold
    rule but works at another resolution.  ``lambda_tilde`` defaults to the
    regime bound ``sqrt(2(p+4)) lambda0(K_N)``.
    """
    cfg = cfg or FlowConfig()
    sigma = float(sigma)
    if not sigma > 0 or not math.isfinite(sigma):
        raise ParameterError(f"sigma must be positive, got {sigma}")
    if sigma > SIGMA_MAX:
        raise OutOfRegimeError(f"sigma={sigma} exceeds 1/4; the risk bound assumes sigma <= 1/4")
    j = scale_for_sigma(sigma)
    side = 2 ** (-j) if side is None else int(side)
    check_image(np.zeros((side, side)))
    K = dictionary_size(side, cfg)
    lam0 = lambda0(K)
    reg = regime_lambda(cfg.p, K)
    lam = reg if lambda_tilde is None else float(lambda_tilde)
    if not lam > 0:
        raise ParameterError(f"lambda_tilde must be positive, got {lam}")
    T = lam * math.sqrt(abs(math.log(sigma))) * sigma
    return EstimatorPlan(sigma, j, side, side * side, K, lam, T, lam0, reg, cfg.p)


def denoise_at(obs, T: float, cfg: FlowConfig, threads: int = 1) -> tuple[np.ndarray, Selection]:
    """Best-basis thresholding of a pixel image at coefficient threshold ``T``."""
    x = check_image(obs)
    side = x.shape[0]
    filt = daubechies(cfg.p)
    pyr = dwt2(x / side, filt=filt)
    sel = best_geometry(pyr, T, cfg, threads=threads)
    return reconstruct(sel, pyr, filt) * side, sel


def denoise(obs, plan: EstimatorPlan, cfg: Optional[FlowConfig] = None,
            threads: int = 1) -> tuple[np.ndarray, Selection]:
    cfg = cfg or FlowConfig(p=plan.p)
    x = check_image(obs)
    if x.shape[0] != plan.side:
        raise InputError(f"observation side {x.shape[0]} does not match plan side {plan.side}")
    return denoise_at(x, plan.T, cfg, threads)


def denoise_wavelet_baseline(obs, T: float, cfg: Optional[FlowConfig] = None) -> np.ndarray:
    """Hard thresholding in the fixed wavelet basis."""
    cfg = (cfg or FlowConfig()).without_flows()
    return denoise_at(obs, T, cfg)[0]


@dataclass(frozen=True, eq=False)
class OracleReport:
    oracle_total: float
    oracle_total_details: float
    selection: Selection
    K_N: int
    sigma: float
    T: float

    @property
    def theorem1_bound(self) -> float:
        return (1 + EPSILON) * self.oracle_total + KAPPA * self.sigma**2 / self.K_N

    def as_dict(self) -> dict:
        c = self.selection.cost
        return {
            "T": self.T, "sigma": self.sigma, "K_N": self.K_N,
            "kept_count": c.kept, "residual_sq": c.residual_sq, "total_cost": c.total,
            "oracle_total": self.oracle_total,
            "oracle_total_details": self.oracle_total_details,
            "epsilon": EPSILON, "kappa": KAPPA, "theorem1_bound": self.theorem1_bound,
        }


def oracle_cost(f, T: float, cfg: Optional[FlowConfig] = None,
                sigma: Optional[float] = None) -> OracleReport:
    """Penalised cost of the oracle model for a clean image.

    ``oracle_total`` keeps and charges the approximation coefficients;
    ``oracle_total_details`` drops their penalty.  Without ``sigma`` the
    bound uses the largest noise level for which ``T`` satisfies the
    threshold rule, ``T / (lambda0(K) sqrt(log K))``.
    """
    cfg = cfg or FlowConfig()
    x = check_image(f)
    side = x.shape[0]
    pyr = dwt2(x / side, filt=daubechies(cfg.p))
    sel = best_geometry(pyr, T, cfg)
    K = dictionary_size(side, cfg)
    if sigma is None:
        sigma = T / (lambda0(K) * math.sqrt(math.log(K)))
    total = sel.cost.total
    return OracleReport(total, total - sel.approx_count * sel.T**2, sel, K, float(sigma), float(T))


def risk_of(f, F) -> float:
    """Continuous squared L2 error: the mean squared pixel difference."""
    a, b = np.asarray(f, dtype=float), np.asarray(F, dtype=float)
    if a.shape != b.shape:
        raise InputError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(f, F) -> float:
    """``-10 log10(||f - F||^2 / ||f||_inf^2)``; ``inf`` when ``F == f``."""
    a = np.asarray(f, dtype=float)
    peak = float(np.max(np.abs(a))) if a.size else 0.0
    if peak == 0.0:
        raise ParameterError("PSNR is undefined for an identically zero reference")
    err = risk_of(a, F)
    if err == 0.0:
        return math.inf
    return -10.0 * math.log10(err / peak**2)


def format_block(values: dict) -> str:
    """Flat ``key=value`` report block; floats use their shortest exact repr."""
    out = []
    for k, v in values.items():
        if isinstance(v, (float, np.floating)):
            v = repr(float(v))
        elif isinstance(v, bool):
            v = str(v).lower()
        out.append(f"{k}={v}")
    return "\n".join(out) + "\n"
