"""Penalised thresholding costs and the best bandlet basis search.

Every model is a subset of one orthonormal basis, so its penalised cost
``||x - P_M x||^2 + dim(M) T^2`` is minimised by hard thresholding and
equals ``sum_n min(c_n^2, T^2)`` over the basis coefficients.  This cost
is additive over subbands and over the leaves of a quadtree, which makes
the search a per-square brute force over flows followed by a bottom-up
merge of dyadic squares.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InputError, ParameterError
from .geometry import (
    DyadicSquare,
    FlowConfig,
    GeometricFlow,
    QuadNode,
    QuadtreeGeometry,
    build_alpert,
    enumerate_flows,
    root_squares,
    root_width,
    serialize_geometry,
)
from .pyramid import ORIENTATIONS, FilterPair, WaveletPyramid, idwt2

# A candidate must beat the incumbent by this relative margin; keeps
# round-off from overturning the coarse / no-flow tie-break.
TIE_RTOL = 1e-14


@dataclass(frozen=True)
class PenalizedCost:
    residual_sq: float
    kept: int
    T: float

    @property
    def total(self) -> float:
        return self.residual_sq + self.kept * self.T**2

    def __add__(self, other: "PenalizedCost") -> "PenalizedCost":
        if other.T != self.T:
            raise ParameterError("cannot add costs computed at different thresholds")
        return PenalizedCost(self.residual_sq + other.residual_sq, self.kept + other.kept, self.T)


def _check_T(T: float) -> float:
    T = float(T)
    if not T > 0 or not np.isfinite(T):
        raise ParameterError(f"threshold must be positive and finite, got {T}")
    return T


def threshold_select(coeffs, T: float) -> tuple[np.ndarray, PenalizedCost]:
    """Keep the coefficients with ``|c| > T``; return their indices and the cost."""
    T = _check_T(T)
    c = np.asarray(coeffs, dtype=float).ravel()
    if not np.all(np.isfinite(c)):
        raise InputError("coefficients must be finite")
    keep = np.abs(c) > T
    return np.flatnonzero(keep), PenalizedCost(float(np.sum(c[~keep] ** 2)), int(keep.sum()), T)


def _better(candidate, incumbent):
    return candidate < incumbent * (1.0 - TIE_RTOL)


def _blocks(band: np.ndarray, w: int) -> np.ndarray:
    """Row-major squares of width ``w`` as flattened rows (square order: y then x)."""
    S = band.shape[0]
    n = S // w
    return band.reshape(n, w, n, w).transpose(0, 2, 1, 3).reshape(n * n, w * w)


def _cost_rows(Y: np.ndarray, T2: float) -> np.ndarray:
    return np.minimum(Y * Y, T2).sum(axis=1)


def leaf_transform(block: np.ndarray, flow: Optional[GeometricFlow], p: int) -> np.ndarray:
    """Coefficients of a square in its leaf basis (raw wavelet or bandlet)."""
    if flow is None:
        return np.asarray(block, dtype=float).ravel()
    return build_alpert(block.shape[0], flow, p).matrix @ np.asarray(block, dtype=float).ravel()


def leaf_inverse(coeffs: np.ndarray, width: int, flow: Optional[GeometricFlow], p: int) -> np.ndarray:
    if flow is None:
        return np.asarray(coeffs, dtype=float).reshape(width, width)
    return (build_alpert(width, flow, p).matrix.T @ coeffs).reshape(width, width)


def square_cost(wav_coeffs, square: DyadicSquare, T: float, cfg: FlowConfig):
    """Best flow (or ``None``) for one square and its penalised cost."""
    T = _check_T(T)
    X = np.asarray(wav_coeffs, dtype=float)
    if X.shape != (square.width, square.width):
        raise InputError(f"block shape {X.shape} does not match square width {square.width}")
    best, best_flow = float(np.minimum(X * X, T * T).sum()), None
    for flow in enumerate_flows(square, cfg)[1:]:
        c = float(np.minimum(leaf_transform(X, flow, cfg.p) ** 2, T * T).sum())
        if _better(c, best):
            best, best_flow = c, flow
    _, cost = threshold_select(leaf_transform(X, best_flow, cfg.p), T)
    return best_flow, cost


def widths_for(size: int, cfg: FlowConfig) -> list[int]:
    """Admissible leaf widths for a subband of the given size, smallest first."""
    top = root_width(size, cfg.max_width)
    lo = min(cfg.min_width, top)
    out, w = [], lo
    while w <= top:
        out.append(w)
        w *= 2
    return out


def best_subband(band, T: float, cfg: FlowConfig, depth: int = 1, orient: str = "H"):
    """Optimal quadtree forest for one subband.

    Returns ``(roots, dp_total)`` where ``dp_total`` is the minimised sum of
    ``min(c^2, T^2)`` over the selected leaf coefficients.
    """
    T = _check_T(T)
    band = np.asarray(band, dtype=float)
    S = band.shape[0]
    if band.shape != (S, S):
        raise InputError("subband must be square")
    T2 = T * T
    widths = widths_for(S, cfg)
    best_cost, best_flow, dp = {}, {}, {}
    for w in widths:
        X = _blocks(band, w)
        cost = _cost_rows(X, T2)
        flow_ix = np.zeros(X.shape[0], dtype=int)
        flows = enumerate_flows(w, cfg)
        for k, flow in enumerate(flows[1:], start=1):
            c = _cost_rows(build_alpert(w, flow, cfg.p).forward_batch(X), T2)
            win = _better(c, cost)
            cost = np.where(win, c, cost)
            flow_ix = np.where(win, k, flow_ix)
        best_cost[w], best_flow[w] = cost, [flows[i] for i in flow_ix]
        if w == widths[0]:
            dp[w] = (cost.copy(), np.zeros(cost.size, dtype=bool))
        else:
            n = S // w
            child = dp[w // 2][0].reshape(n, 2, n, 2).sum(axis=(1, 3)).ravel()
            split = _better(child, cost)
            dp[w] = (np.where(split, child, cost), split)

    def grow(x, y, w):
        n = S // w
        i = (y // w) * n + (x // w)
        sq = DyadicSquare(depth, orient, x, y, w)
        if dp[w][1][i]:
            h = w // 2
            return QuadNode(sq, None, [grow(x + dx, y + dy, h) for dy in (0, h) for dx in (0, h)])
        return QuadNode(sq, best_flow[w][i])

    top = widths[-1]
    roots = [grow(sq.x, sq.y, top) for sq in root_squares(depth, orient, S, cfg.max_width)]
    return roots, float(dp[top][0].sum())


@dataclass(eq=False)
class Selection:
    """A basis of the dictionary plus the coefficients kept by thresholding.

    ``kept`` maps ``(depth, orient, x, y)`` of each leaf to sorted indices
    into that leaf's coefficient vector.  Approximation coefficients are
    always kept and counted in ``cost.kept``.
    """

    geometry: QuadtreeGeometry
    kept: dict
    cost: PenalizedCost
    approx_count: int
    p: int

    @property
    def T(self) -> float:
        return self.cost.T

    @property
    def kept_count(self) -> int:
        return self.cost.kept

    @property
    def detail_kept(self) -> int:
        return self.cost.kept - self.approx_count

    def summary(self) -> str:
        c = self.cost
        return serialize_geometry(self.geometry) + (
            f"kept_count={c.kept}\nresidual_sq={c.residual_sq:.17g}\ntotal_cost={c.total:.17g}\n"
        )


def _check_geometry(geom: QuadtreeGeometry, pyr: WaveletPyramid):
    if geom.side != pyr.side or geom.depth != pyr.depth:
        raise InputError(
            f"geometry ({geom.side}, depth {geom.depth}) does not match pyramid "
            f"({pyr.side}, depth {pyr.depth})"
        )


def evaluate_geometry(pyr: WaveletPyramid, geom: QuadtreeGeometry, T: float, p: int) -> Selection:
    """Threshold ``pyr`` at ``T`` in the basis described by ``geom``."""
    T = _check_T(T)
    _check_geometry(geom, pyr)
    kept = {}
    cost = PenalizedCost(0.0, pyr.approx.size, T)
    for d, o in geom.keys():
        band = pyr.subband(d, o)
        for leaf in (l for r in geom.trees[(d, o)] for l in r.leaves()):
            sq = leaf.square
            ix, c = threshold_select(leaf_transform(band[sq.slice()], leaf.flow, p), T)
            kept[(d, o, sq.x, sq.y)] = ix
            cost = cost + c
    return Selection(geom, kept, cost, pyr.approx.size, p)


def best_geometry(pyr: WaveletPyramid, T: float, cfg: FlowConfig, threads: int = 1) -> Selection:
    """Minimise the penalised thresholding cost over the whole dictionary."""
    T = _check_T(T)
    keys = [(d, o) for d in range(1, pyr.depth + 1) for o in ORIENTATIONS]

    def run(key):
        d, o = key
        return best_subband(pyr.subband(d, o), T, cfg, d, o)[0]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            forests = list(ex.map(run, keys))
    else:
        forests = [run(k) for k in keys]
    geom = QuadtreeGeometry(pyr.side, pyr.depth, cfg.max_width, dict(zip(keys, forests)))
    return evaluate_geometry(pyr, geom, T, cfg.p)


def project(sel: Selection, pyr: WaveletPyramid) -> WaveletPyramid:
    """Pyramid of the projection: kept coefficients only, mapped back to wavelets."""
    _check_geometry(sel.geometry, pyr)
    p = sel.p
    details = []
    for d in range(1, pyr.depth + 1):
        band_out = {}
        for o in ORIENTATIONS:
            band = pyr.subband(d, o)
            out = np.zeros_like(band)
            for leaf in (l for r in sel.geometry.trees[(d, o)] for l in r.leaves()):
                sq = leaf.square
                key = (d, o, sq.x, sq.y)
                if key not in sel.kept:
                    raise InputError(f"selection has no kept set for leaf {key}")
                y = leaf_transform(band[sq.slice()], leaf.flow, p)
                z = np.zeros_like(y)
                z[sel.kept[key]] = y[sel.kept[key]]
                out[sq.slice()] = leaf_inverse(z, sq.width, leaf.flow, p)
            band_out[o] = out
        details.append(band_out)
    return pyr.with_details(details)


def reconstruct(sel: Selection, pyr: WaveletPyramid, filt: FilterPair) -> np.ndarray:
    """Orthogonal projection of the image behind ``pyr`` on the selected model."""
    return idwt2(project(sel, pyr), filt)
