"""Dyadic quadtrees, quantised polynomial flows and Alpert recombination.

A flow inside a dyadic square of width ``w`` is constant along one axis.
For ``axis="V"`` (vertically constant) the flow lines are the graphs
``row = t + c(col)``; for ``axis="H"`` they are ``col = t + c(row)``.  The
displacement ``c`` is the primitive of a polynomial tangent whose
coefficients are integers times the step ``1/w``, evaluated at the centred
coordinate ``u = (s + 0.5)/w - 0.5``:

    c(s) = sum_k q_k u**(k+1) / (k+1)        (in pixels)

Sites are grouped into discrete lines by ``t = transverse - round(c(s))``
and each line receives a multiscale Alpert basis: piecewise polynomials of
degree ``< p`` in the along-line coordinate ``s``, orthogonalised from fine
to coarse over a dyadic splitting of the line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Iterator, Optional

import numpy as np
import scipy.sparse as sp

from .errors import InputError, ParameterError
from .pyramid import ORIENTATIONS, is_power_of_two

AXES = ("H", "V")


@dataclass(frozen=True)
class FlowConfig:
    """Dictionary configuration shared by the geometry and selection code.

    ``degree`` defaults to ``min(p - 1, 2)``.  ``levels`` is the number of
    integer values per tangent coefficient before the slope cap is applied.
    Setting ``flows=False`` reduces the dictionary to the wavelet basis.
    """

    p: int = 2
    degree: Optional[int] = None
    levels: int = 9
    slope_cap: float = 1.0
    min_width: int = 2
    max_width: int = 16
    flows: bool = True

    def __post_init__(self):
        if self.p < 1:
            raise ParameterError(f"p must be >= 1, got {self.p}")
        if self.degree is None:
            object.__setattr__(self, "degree", min(self.p - 1, 2))
        if self.degree < 0 or self.degree > self.p - 1:
            raise ParameterError(f"flow degree must lie in [0, p-1], got {self.degree}")
        if self.levels < 1:
            raise ParameterError(f"levels must be >= 1, got {self.levels}")
        if self.slope_cap <= 0:
            raise ParameterError("slope_cap must be positive")
        for name in ("min_width", "max_width"):
            v = getattr(self, name)
            if not is_power_of_two(v):
                raise ParameterError(f"{name} must be a power of two, got {v}")
        if self.min_width > self.max_width:
            raise ParameterError("min_width exceeds max_width")

    def without_flows(self) -> "FlowConfig":
        return FlowConfig(self.p, self.degree, self.levels, self.slope_cap,
                          self.min_width, self.max_width, flows=False)


@dataclass(frozen=True, order=True)
class DyadicSquare:
    depth: int
    orient: str
    x: int
    y: int
    width: int

    def __post_init__(self):
        if self.orient not in ORIENTATIONS:
            raise InputError(f"unknown orientation {self.orient!r}")
        if not is_power_of_two(self.width):
            raise InputError(f"square width must be a power of two, got {self.width}")
        if self.x % self.width or self.y % self.width or self.x < 0 or self.y < 0:
            raise InputError(f"square corner ({self.x},{self.y}) not aligned to width {self.width}")

    def children(self) -> list["DyadicSquare"]:
        h = self.width // 2
        return [DyadicSquare(self.depth, self.orient, self.x + dx, self.y + dy, h)
                for dy in (0, h) for dx in (0, h)]

    def slice(self) -> tuple[slice, slice]:
        """Numpy index (rows, cols) of the square inside its subband."""
        return slice(self.y, self.y + self.width), slice(self.x, self.x + self.width)


@dataclass(frozen=True, order=True)
class GeometricFlow:
    axis: str
    coeffs: tuple[int, ...]
    step: float = field(compare=False, default=1.0)

    def __post_init__(self):
        if self.axis not in AXES:
            raise InputError(f"flow axis must be 'H' or 'V', got {self.axis!r}")
        object.__setattr__(self, "coeffs", tuple(int(c) for c in self.coeffs))

    def tangent(self, u):
        """Dequantised tangent (pixel displacement per pixel) at centred coordinate ``u``."""
        u = np.asarray(u, dtype=float)
        return sum(q * self.step * u**k for k, q in enumerate(self.coeffs))

    def displacement(self, width: int) -> np.ndarray:
        """Pixel displacement ``c(s)`` for along-line positions ``s = 0..width-1``."""
        u = (np.arange(width) + 0.5) / width - 0.5
        return sum(q * u ** (k + 1) / (k + 1) for k, q in enumerate(self.coeffs)) + 0.0 * u


def levels_for(width: int, cfg: FlowConfig) -> int:
    """Per-coefficient level count after applying the slope cap at this width.

    Zero when the square admits no flow: lines of a ``width <= p`` square
    hold at most ``p`` samples and would carry no vanishing-moment vector.
    """
    if width < 2 or width <= cfg.p or not cfg.flows:
        return 0
    span = int(np.floor(cfg.slope_cap * width / (cfg.degree + 1) + 1e-12))
    return min(cfg.levels, 2 * span + 1)


def flow_values(q: int) -> range:
    return range(-(q // 2), q - q // 2)


def enumerate_flows(square, cfg: FlowConfig) -> list[Optional[GeometricFlow]]:
    """Candidate flows for a square (or a bare width): no-flow first, then sorted flows."""
    width = square.width if isinstance(square, DyadicSquare) else int(square)
    q = levels_for(width, cfg)
    out: list[Optional[GeometricFlow]] = [None]
    if q == 0:
        return out
    step = 1.0 / width
    for axis in AXES:
        for coeffs in product(flow_values(q), repeat=cfg.degree + 1):
            out.append(GeometricFlow(axis, coeffs, step))
    return out


def flow_lines(width: int, flow: GeometricFlow) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """Group the sites of a ``width``-square into discrete flow lines.

    Returns ``(line_id, site_indices, positions)`` per line, ordered by line
    id; site indices are row-major offsets, positions the along-line coordinate.
    """
    shift = np.floor(flow.displacement(width) + 0.5).astype(int)
    s = np.arange(width)
    lines = {}
    for trans in range(width):
        t = trans - shift  # line id of each along-position at this transverse index
        for sj, tj in zip(s, t):
            lines.setdefault(int(tj), []).append((int(sj), trans))
    out = []
    for tid in sorted(lines):
        pts = sorted(lines[tid])
        pos = np.array([a for a, _ in pts])
        if flow.axis == "V":  # along = col, transverse = row
            idx = np.array([tr * width + a for a, tr in pts])
        else:  # along = row, transverse = col
            idx = np.array([a * width + tr for a, tr in pts])
        out.append((tid, idx, pos))
    return out


def _orth_columns(A: np.ndarray, tol: float = 1e-10):
    """Orthonormal bases of range(A) and its complement (full SVD)."""
    U, s, _ = np.linalg.svd(A, full_matrices=True)
    r = int(np.sum(s > tol * max(1.0, s[0] if s.size else 0.0)))
    return U[:, :r], U[:, r:]


def alpert_line_basis(positions, p: int):
    """Multiscale Alpert basis on a line of samples.

    Returns ``(Q, n_coarse, degenerate)``: ``Q`` is orthogonal with columns
    ordered coarse scaling vectors first, then detail vectors from coarse to
    fine.  Detail vectors are orthogonal to every polynomial of degree
    ``< p`` in ``positions``.  A line whose positions all coincide gets the
    identity and ``degenerate=True``.
    """
    Q, nc, deg = _line_basis_cached(tuple(float(v) for v in np.ravel(positions)), int(p))
    return Q.copy(), nc, deg


@lru_cache(maxsize=65536)
def _line_basis_cached(positions: tuple, p: int):
    pos = np.asarray(positions, dtype=float)
    n = pos.size
    if n == 0:
        return np.zeros((0, 0)), 0, False
    if n > 1 and np.all(pos == pos[0]):
        return np.eye(n), n, True
    order = np.argsort(pos, kind="stable")

    def vander(ix):
        t = pos[ix]
        c = 0.5 * (t.max() + t.min())
        r = 0.5 * (t.max() - t.min()) or 1.0
        return np.vander((t - c) / r, N=p, increasing=True)

    def build(ix):
        # returns scaling basis (len(ix) x k) and list of detail blocks in node coordinates
        m = ix.size
        if m <= p:
            S, D = _orth_columns(vander(ix))
            return S, [D] if D.shape[1] else []
        half = m // 2
        SL, DL = build(ix[:half])
        SR, DR = build(ix[half:])
        U = np.zeros((m, SL.shape[1] + SR.shape[1]))
        U[:half, : SL.shape[1]] = SL
        U[half:, SL.shape[1]:] = SR
        Qa, Qp = _orth_columns(U.T @ vander(ix))
        details = [U @ Qp] if Qp.shape[1] else []
        for blk in DL:
            details.append(np.vstack([blk, np.zeros((m - half, blk.shape[1]))]))
        for blk in DR:
            details.append(np.vstack([np.zeros((half, blk.shape[1])), blk]))
        return U @ Qa, details

    S, details = build(order)
    Q_sorted = np.hstack([S] + details) if details else S
    Q = np.empty_like(Q_sorted)
    Q[order] = Q_sorted
    return Q, S.shape[1], False


@dataclass(frozen=True, eq=False)
class AlpertBasis:
    """Orthogonal recombination of a ``width``-square along a flow.

    ``matrix`` maps row-major square coefficients to bandlet coefficients;
    its rows are the bandlet vectors.  ``coarse[i]`` marks rows that are
    per-line scaling vectors (all others carry vanishing moments).
    """

    width: int
    flow: GeometricFlow
    p: int
    matrix: sp.csr_matrix
    coarse: np.ndarray
    line_of_row: np.ndarray
    degenerate: bool

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def forward_batch(self, X: np.ndarray) -> np.ndarray:
        """Transform many squares at once; ``X`` has one flattened square per row."""
        return np.asarray((self.matrix @ X.T).T)

    def inverse_batch(self, Y: np.ndarray) -> np.ndarray:
        return np.asarray((self.matrix.T @ Y.T).T)


@lru_cache(maxsize=4096)
def build_alpert(square_width: int, flow: GeometricFlow, p: int) -> AlpertBasis:
    """Assemble the bandlet operator for one width and flow (cached)."""
    w = int(square_width)
    if w < 2 or not is_power_of_two(w):
        raise ParameterError(f"square width must be a power of two >= 2, got {w}")
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    dense = np.zeros((w * w, w * w))
    coarse, line_of_row = [], []
    degenerate = False
    r0 = 0
    for tid, idx, pos in flow_lines(w, flow):
        Q, nc, deg = alpert_line_basis(pos, p)
        degenerate |= deg
        n = idx.size
        dense[r0 : r0 + n, idx] = Q.T
        coarse.extend([True] * nc + [False] * (n - nc))
        line_of_row.extend([tid] * n)
        r0 += n
    dense[np.abs(dense) < 1e-15] = 0.0
    M = sp.csr_matrix(dense)
    return AlpertBasis(w, flow, p, M, np.array(coarse), np.array(line_of_row), degenerate)


def alpert_forward(coeffs, basis: AlpertBasis) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (basis.width, basis.width):
        raise InputError(f"expected {basis.width}x{basis.width} block, got {c.shape}")
    return basis.matrix @ c.ravel()


def alpert_inverse(bcoeffs, basis: AlpertBasis) -> np.ndarray:
    b = np.asarray(bcoeffs, dtype=float)
    if b.shape != (basis.width * basis.width,):
        raise InputError(f"expected {basis.width ** 2} coefficients, got {b.shape}")
    return (basis.matrix.T @ b).reshape(basis.width, basis.width)


# --------------------------------------------------------------------------
# quadtrees


@dataclass(eq=False)
class QuadNode:
    square: DyadicSquare
    flow: Optional[GeometricFlow] = None
    children: Optional[list["QuadNode"]] = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    def preorder(self) -> Iterator["QuadNode"]:
        yield self
        for c in self.children or ():
            yield from c.preorder()

    def leaves(self) -> Iterator["QuadNode"]:
        for n in self.preorder():
            if n.is_leaf:
                yield n

    def __eq__(self, other):
        if not isinstance(other, QuadNode):
            return NotImplemented
        return (self.square == other.square and self.flow == other.flow
                and self.children == other.children)


def root_width(subband_size: int, max_width: int) -> int:
    return min(subband_size, max_width)


def root_squares(depth: int, orient: str, size: int, max_width: int) -> list[DyadicSquare]:
    R = root_width(size, max_width)
    return [DyadicSquare(depth, orient, x, y, R)
            for y in range(0, size, R) for x in range(0, size, R)]


@dataclass(eq=False)
class QuadtreeGeometry:
    """Per-subband forests of quadtrees over a pyramid of ``side``/``depth``."""

    side: int
    depth: int
    max_width: int
    trees: dict  # (depth, orient) -> list[QuadNode]

    def subband_size(self, d: int) -> int:
        return self.side >> d

    def keys(self):
        return [(d, o) for d in range(1, self.depth + 1) for o in ORIENTATIONS]

    def leaves(self) -> Iterator[QuadNode]:
        for key in self.keys():
            for root in self.trees[key]:
                yield from root.leaves()

    def __eq__(self, other):
        if not isinstance(other, QuadtreeGeometry):
            return NotImplemented
        return (self.side, self.depth, self.max_width) == (other.side, other.depth, other.max_width) \
            and all(self.trees[k] == other.trees[k] for k in self.keys())

    def check_tiling(self):
        """Raise InputError unless every subband is tiled exactly by its leaves."""
        for d, o in self.keys():
            S = self.subband_size(d)
            cover = np.zeros((S, S), dtype=int)
            for root in self.trees[(d, o)]:
                for leaf in root.leaves():
                    sq = leaf.square
                    if sq.x + sq.width > S or sq.y + sq.width > S:
                        raise InputError(f"leaf {sq} outside subband of size {S}")
                    cover[sq.slice()] += 1
            if not np.all(cover == 1):
                raise InputError(f"leaves do not tile subband ({d},{o})")


def uniform_geometry(side: int, depth: int, max_width: int) -> QuadtreeGeometry:
    """Geometry made of unsplit root squares without flows (the wavelet basis)."""
    trees = {}
    for d in range(1, depth + 1):
        for o in ORIENTATIONS:
            trees[(d, o)] = [QuadNode(sq) for sq in root_squares(d, o, side >> d, max_width)]
    return QuadtreeGeometry(side, depth, max_width, trees)


def _leaf_record(node: QuadNode) -> str:
    sq = node.square
    head = f"{sq.depth},{sq.orient},{sq.x},{sq.y},{sq.width}"
    if node.flow is None:
        return head + ",-"
    return head + f",{node.flow.axis}," + ",".join(str(c) for c in node.flow.coeffs)


def serialize_geometry(geom: QuadtreeGeometry) -> str:
    """Canonical text form: header line, then leaf records in pre-order."""
    lines = [f"# geometry side={geom.side} depth={geom.depth} max_width={geom.max_width}"]
    for key in geom.keys():
        for root in geom.trees[key]:
            lines.extend(_leaf_record(n) for n in root.leaves())
    return "\n".join(lines) + "\n"


def parse_geometry(text: str) -> QuadtreeGeometry:
    """Inverse of :func:`serialize_geometry`; ``key=value`` summary lines are ignored."""
    header = None
    leaves = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].split()[:1] == ["geometry"]:
                header = dict(tok.split("=", 1) for tok in line[1:].split()[1:])
            continue
        if "=" in line:
            continue
        f = line.split(",")
        if len(f) < 6:
            raise InputError(f"malformed leaf record: {line!r}")
        sq = DyadicSquare(int(f[0]), f[1], int(f[2]), int(f[3]), int(f[4]))
        if f[5] == "-":
            if len(f) != 6:
                raise InputError(f"no-flow leaf carries coefficients: {line!r}")
            flow = None
        else:
            flow = GeometricFlow(f[5], tuple(int(c) for c in f[6:]), 1.0 / sq.width)
        if sq in leaves:
            raise InputError(f"duplicate leaf {sq}")
        leaves[sq] = flow
    if header is None:
        raise InputError("missing '# geometry' header")
    side, depth, mw = int(header["side"]), int(header["depth"]), int(header["max_width"])

    def grow(sq: DyadicSquare) -> QuadNode:
        if sq in leaves:
            return QuadNode(sq, leaves.pop(sq))
        if sq.width == 1:
            raise InputError(f"no leaf covers {sq}")
        return QuadNode(sq, None, [grow(c) for c in sq.children()])

    trees = {}
    for d in range(1, depth + 1):
        for o in ORIENTATIONS:
            trees[(d, o)] = [grow(sq) for sq in root_squares(d, o, side >> d, mw)]
    if leaves:
        raise InputError(f"{len(leaves)} leaf records do not fit the quadtree")
    return QuadtreeGeometry(side, depth, mw, trees)
