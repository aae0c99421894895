"""Periodic orthonormal wavelet transforms on square dyadic images.

An image of side ``2**J`` holds pixel values of a function on the unit
square.  ``dwt2`` maps it to a :class:`WaveletPyramid` by repeated
separable filtering with a Daubechies conjugate-mirror pair; the boundary
is treated periodically so every transform is exactly orthogonal.

Orientation names follow the tensor-product convention: ``"H"`` is
high-pass along the horizontal axis (columns) and low-pass along the
vertical axis (rows), ``"V"`` the reverse, ``"D"`` high-pass along both.
Depth 1 is the finest detail level.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Iterator

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import InputError, ParameterError

ORIENTATIONS = ("H", "V", "D")


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def check_image(img) -> np.ndarray:
    """Validate a square dyadic image and return it as a float array."""
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InputError(f"image must be square, got shape {arr.shape}")
    if arr.shape[0] < 2 or not is_power_of_two(arr.shape[0]):
        raise InputError(f"image side must be a power of two >= 2, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InputError("image contains non-finite values")
    return arr


def max_depth(side: int) -> int:
    return side.bit_length() - 1


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FilterPair:
    """Orthogonal low/high-pass pair with ``vanishing_moments`` moments."""

    vanishing_moments: int
    lowpass: tuple[float, ...]
    highpass: tuple[float, ...]

    @property
    def length(self) -> int:
        return len(self.lowpass)


@lru_cache(maxsize=None)
def daubechies(p: int = 2) -> FilterPair:
    """Minimum-phase Daubechies filters with ``p`` vanishing moments.

    Built by spectral factorisation of the half-band polynomial
    ``sum_k C(p-1+k, k) y**k`` with ``y = sin^2(w/2)``.
    """
    if int(p) != p or p < 1:
        raise ParameterError(f"vanishing moments must be a positive integer, got {p}")
    p = int(p)
    # z^(p-1) P(y) with y = -(z-1)^2 / (4z); coefficients in increasing powers of z
    poly = np.zeros(2 * p - 1)
    for k in range(p):
        term = P.polypow([-1.0, 1.0], 2 * k) * (comb(p - 1 + k, k) * (-0.25) ** k)
        shift = p - 1 - k
        poly[shift : shift + term.size] += term
    roots = P.polyroots(poly) if p > 1 else np.array([])
    inside = roots[np.abs(roots) < 1.0]
    q = np.real(P.polyfromroots(inside)) if inside.size else np.array([1.0])
    h = np.array([1.0])
    for _ in range(p):
        h = np.convolve(h, [1.0, 1.0])
    h = np.convolve(h, q)
    h = h * (np.sqrt(2.0) / h.sum())
    g = np.array([(-1) ** m * h[len(h) - 1 - m] for m in range(len(h))])
    return FilterPair(p, tuple(float(v) for v in h), tuple(float(v) for v in g))


@lru_cache(maxsize=64)
def analysis_matrix(n: int, filt: FilterPair) -> np.ndarray:
    """Orthogonal ``n x n`` one-level analysis operator with periodic wrap.

    Rows ``0..n/2-1`` produce scaling coefficients, rows ``n/2..n-1`` the
    details: ``a[k] = sum_m h[m] x[(2k+m) mod n]``.
    """
    if n < 2 or n % 2:
        raise ParameterError(f"signal length must be even and >= 2, got {n}")
    half = n // 2
    W = np.zeros((n, n))
    for k in range(half):
        for m, (hm, gm) in enumerate(zip(filt.lowpass, filt.highpass)):
            col = (2 * k + m) % n
            W[k, col] += hm
            W[half + k, col] += gm
    W.flags.writeable = False
    return W


@dataclass(frozen=True, eq=False)
class WaveletPyramid:
    """Wavelet coefficients of a square image, grouped by subband.

    ``details[d-1][o]`` is the ``(side >> d)``-square grid of depth ``d``
    and orientation ``o``.
    """

    approx: np.ndarray
    details: tuple[dict, ...]

    def __post_init__(self):
        object.__setattr__(self, "approx", _frozen(self.approx))
        frozen = tuple({o: _frozen(band[o]) for o in ORIENTATIONS} for band in self.details)
        object.__setattr__(self, "details", frozen)
        self._validate()

    def _validate(self):
        if not self.details:
            raise InputError("pyramid needs at least one detail level")
        side = self.side
        if not is_power_of_two(side):
            raise InputError(f"inconsistent pyramid side {side}")
        for d, band in enumerate(self.details, start=1):
            expected = (side >> d, side >> d)
            for o in ORIENTATIONS:
                if band[o].shape != expected:
                    raise InputError(
                        f"subband ({d},{o}) has shape {band[o].shape}, expected {expected}"
                    )
        if self.approx.shape != (side >> self.depth,) * 2:
            raise InputError(f"approx shape {self.approx.shape} inconsistent with depth")

    @property
    def depth(self) -> int:
        return len(self.details)

    @property
    def side(self) -> int:
        return 2 * self.details[0]["H"].shape[0]

    def subband(self, d: int, o: str) -> np.ndarray:
        return self.details[d - 1][o]

    def subbands(self) -> Iterator[tuple[int, str, np.ndarray]]:
        for d, band in enumerate(self.details, start=1):
            for o in ORIENTATIONS:
                yield d, o, band[o]

    def to_vector(self) -> np.ndarray:
        """Flatten as approx followed by subbands, coarsest depth first."""
        parts = [self.approx.ravel()]
        for d in range(self.depth, 0, -1):
            parts.extend(self.details[d - 1][o].ravel() for o in ORIENTATIONS)
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, vec, side: int, depth: int) -> "WaveletPyramid":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (side * side,):
            raise InputError(f"expected {side * side} coefficients, got {vec.shape}")
        a = side >> depth
        approx = vec[: a * a].reshape(a, a)
        pos = a * a
        details = [None] * depth
        for d in range(depth, 0, -1):
            s = side >> d
            band = {}
            for o in ORIENTATIONS:
                band[o] = vec[pos : pos + s * s].reshape(s, s)
                pos += s * s
            details[d - 1] = band
        return cls(approx, tuple(details))

    def replace_subband(self, d: int, o: str, values) -> "WaveletPyramid":
        details = [dict(band) for band in self.details]
        details[d - 1][o] = values
        return WaveletPyramid(self.approx, tuple(details))

    def with_details(self, details) -> "WaveletPyramid":
        return WaveletPyramid(self.approx, tuple(details))

    def energy(self) -> float:
        return float(np.sum(self.to_vector() ** 2))


def dwt2(img, depth: int | None = None, filt: FilterPair | None = None) -> WaveletPyramid:
    """Forward 2D periodic orthonormal wavelet transform.

    ``depth`` defaults to the full depth, leaving a single coarse coefficient.
    """
    x = check_image(img)
    side = x.shape[0]
    filt = filt or daubechies(2)
    depth = max_depth(side) if depth is None else depth
    if int(depth) != depth or depth < 1 or depth > max_depth(side):
        raise ParameterError(f"depth {depth} invalid for side {side}")
    details = []
    a = x
    for _ in range(int(depth)):
        n = a.shape[0]
        W = analysis_matrix(n, filt)
        y = W @ a @ W.T
        h = n // 2
        details.append({"H": y[:h, h:], "V": y[h:, :h], "D": y[h:, h:]})
        a = y[:h, :h]
    return WaveletPyramid(a, tuple(details))


def idwt2(pyr: WaveletPyramid, filt: FilterPair | None = None) -> np.ndarray:
    """Inverse of :func:`dwt2`."""
    if not isinstance(pyr, WaveletPyramid):
        raise InputError("idwt2 expects a WaveletPyramid")
    filt = filt or daubechies(2)
    a = np.array(pyr.approx)
    for d in range(pyr.depth, 0, -1):
        band = pyr.details[d - 1]
        h = a.shape[0]
        y = np.block([[a, band["H"]], [band["V"], band["D"]]])
        W = analysis_matrix(2 * h, filt)
        a = W.T @ y @ W
    return a


def zeros_like(pyr: WaveletPyramid) -> WaveletPyramid:
    return WaveletPyramid.from_vector(np.zeros(pyr.side**2), pyr.side, pyr.depth)
