"""Nystrom discretization: patch pieces, Fejer nodes and node geometry.

Each base patch of a :class:`~cornerbie.geometry.Boundary` carries its own
change of variables ``s = S(Theta)`` (graded on patches whose ``s = 0`` end
is a corner, identity otherwise). Refinement splits the ``Theta`` range of
every base patch into ``subdivisions`` equal pieces; a piece is the unit of
the Chebyshev/Fejer discretization and is parametrized by a local
``theta in [0, 1]`` with ``Theta = a + h theta``.

Splitting in ``Theta`` (rather than shrinking the corner patch in physical
space) keeps the Jacobian ``dS/dTheta`` well resolved on every piece, which
is what makes refinement converge at high order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chebcov import IDENTITY, CovSpec, cov_eval, fejer_rule
from .geometry import Boundary, LinePatch, Patch

__all__ = ["Piece", "Discretization", "build_discretization", "distance_to_piece"]


@dataclass(frozen=True, eq=False)
class Piece:
    """Sub-range ``[a, a + h]`` of the graded parameter of a base patch."""

    base: Patch
    base_index: int
    a: float
    h: float
    cov: CovSpec

    @property
    def orientation(self) -> int:
        return self.base.orientation

    @property
    def anchor(self) -> Optional[int]:
        """Corner at ``s = 0`` of the base patch (shared by all its pieces)."""
        return self.base.corner_id

    @property
    def corner_id(self) -> Optional[int]:
        """Corner touched by this piece, if any."""
        return self.base.corner_id if self.a == 0.0 else None

    @property
    def straight(self) -> bool:
        return isinstance(self.base, LinePatch)

    def big_theta(self, theta):
        return self.a + self.h * np.asarray(theta, dtype=float)

    def param(self, theta):
        """``(s, ds/dtheta)`` for the local parameter."""
        s, ds = cov_eval(self.cov, np.clip(self.big_theta(theta), 0.0, 1.0))
        return s, ds * self.h

    def point(self, theta):
        return self.base.point(self.param(theta)[0])

    def normal(self, theta):
        return self.base.normal(self.param(theta)[0])

    def tangent(self, theta):
        return self.base.tangent(self.param(theta)[0])

    def jacobian(self, theta):
        """``L(s(theta)) ds/dtheta``."""
        s, ds = self.param(theta)
        return self.base.line_element(s) * ds

    @property
    def endpoints(self):
        return self.point(np.array([0.0, 1.0]))

    @property
    def chord_length(self) -> float:
        a, b = self.endpoints
        return float(np.hypot(*(b - a)))


@dataclass(frozen=True, eq=False)
class Discretization:
    boundary: Boundary
    Q: int
    cov: CovSpec
    use_cov: bool
    subdivisions: int
    pieces: tuple
    theta: np.ndarray  # (Q,) Fejer nodes, decreasing
    weights: np.ndarray  # (Q,)
    s: np.ndarray  # (M, Q) base-patch parameter
    dsdth: np.ndarray  # (M, Q) ds / d(local theta)
    L: np.ndarray  # (M, Q) line element |dr/ds|
    Lt: np.ndarray  # (M, Q) L ds/dtheta
    pos: np.ndarray  # (M, Q, 2)
    normal: np.ndarray  # (M, Q, 2)
    tangent: np.ndarray  # (M, Q, 2)
    orientation: np.ndarray  # (M,)
    prox: np.ndarray  # (M,) near-interaction radius per piece
    prox_factor: float
    collinear: np.ndarray = field(repr=False)  # (M, M) straight pieces on one line

    @property
    def M(self) -> int:
        return len(self.pieces)

    @property
    def N(self) -> int:
        return self.M * self.Q

    @property
    def patches(self):
        return self.pieces

    def flat(self, name):
        a = getattr(self, name)
        return a.reshape((self.N,) + a.shape[2:])

    def same_base(self, q, p) -> bool:
        return self.pieces[q].base_index == self.pieces[p].base_index

    def shares_corner(self, q, p) -> bool:
        """Pieces of two different base patches anchored at one corner."""
        a, b = self.pieces[q].anchor, self.pieces[p].anchor
        return not self.same_base(q, p) and a is not None and a == b

    def corner_pieces(self, cid):
        return [q for q, pc in enumerate(self.pieces) if pc.corner_id == cid]


def distance_to_piece(points, piece, samples=257):
    """Distance from points to a piece (exact for straight pieces)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if piece.straight:
        A, B = piece.endpoints
        e = B - A
        t = np.clip(((pts - A) @ e) / (e @ e), 0.0, 1.0)
        d = pts - (A + t[:, None] * e)
        return np.hypot(d[:, 0], d[:, 1])
    u = np.linspace(0.0, 1.0, samples)
    P = piece.point(u)
    d = pts[:, None, :] - P[None, :, :]
    dist = np.hypot(d[..., 0], d[..., 1])
    j = np.argmin(dist, axis=1)
    lo = np.clip(j - 1, 0, samples - 1) / (samples - 1)
    hi = np.clip(j + 1, 0, samples - 1) / (samples - 1)
    v = np.linspace(0.0, 1.0, 65)
    uu = lo[:, None] + (hi - lo)[:, None] * v[None, :]
    P2 = piece.point(uu)
    d2 = pts[:, None, :] - P2
    return np.min(np.hypot(d2[..., 0], d2[..., 1]), axis=1)


def _collinear(pieces):
    M = len(pieces)
    out = np.zeros((M, M), dtype=bool)
    lines = [(q, p.base) for q, p in enumerate(pieces) if p.straight]
    for q, a in lines:
        ua = a.edge / np.hypot(*a.edge)
        for p, b in lines:
            if a is b:
                out[q, p] = True
                continue
            ub = b.edge / np.hypot(*b.edge)
            if abs(ua[0] * ub[1] - ua[1] * ub[0]) > 1e-14:
                continue
            w = b.start - a.start
            if abs(ua[0] * w[1] - ua[1] * w[0]) <= 1e-14 * max(1.0, np.hypot(*w)):
                out[q, p] = True
    return out


def _proximity(piece, prox_factor):
    # Graded pieces compress physical distance: a target a fixed distance D
    # away sits much closer to the piece in the local parameter than on an
    # ungraded piece. Extend the piece by prox_factor * h in the graded
    # parameter and use the physical length of that extension.
    chord = piece.chord_length
    if piece.cov.kind == "identity":
        return prox_factor * chord
    end = piece.a + piece.h
    s = cov_eval(piece.cov, np.array([piece.a, end, min(end + prox_factor * piece.h, 1.0)]))[0]
    # arc length of the extension (Gauss-Legendre, 8 points)
    x, w = np.polynomial.legendre.leggauss(8)
    half = 0.5 * (s[2] - s[1])
    reach = float(half * np.sum(w * piece.base.line_element(s[1] + half * (x + 1.0))))
    return max(prox_factor * chord, reach)


def build_discretization(boundary: Boundary, Q: int = 10, p: float = 6, use_cov: bool = True,
                         cov_kind: str = "graded_w", subdivisions: int = 1,
                         prox_factor: float = 2.0) -> Discretization:
    """Fejer nodes on every piece; corner patches get the graded change of variables.

    ``subdivisions`` splits every base patch into that many pieces of equal
    graded-parameter length. ``prox_factor`` sets the near-interaction
    radius of each piece as a multiple of its chord length.
    """
    if Q % 2 or Q < 2:
        raise ValueError("Q must be even and >= 2")
    if not p >= 2:
        raise ValueError("change-of-variables order must be >= 2")
    if int(subdivisions) != subdivisions or subdivisions < 1:
        raise ValueError("subdivisions must be a positive integer")
    if not prox_factor > 0:
        raise ValueError("prox_factor must be positive")
    rule = fejer_rule(Q)
    theta = rule.nodes
    cov = CovSpec(cov_kind, p)
    n = int(subdivisions)
    pieces = []
    for b, base in enumerate(boundary.patches):
        c = cov if (use_cov and base.has_corner_at_zero) else IDENTITY
        for j in range(n):
            pieces.append(Piece(base, b, j / n, 1.0 / n, c))
    pieces = tuple(pieces)
    M = len(pieces)
    s = np.empty((M, Q))
    ds = np.empty((M, Q))
    L = np.empty((M, Q))
    pos = np.empty((M, Q, 2))
    nrm = np.empty((M, Q, 2))
    tan = np.empty((M, Q, 2))
    for q, pc in enumerate(pieces):
        s[q], ds[q] = pc.param(theta)
        L[q] = pc.base.line_element(s[q])
        pos[q] = pc.base.point(s[q])
        nrm[q] = pc.base.normal(s[q])
        tan[q] = pc.base.tangent(s[q])
    orient = np.array([pc.orientation for pc in pieces], dtype=float)
    prox = np.array([_proximity(pc, prox_factor) for pc in pieces])
    return Discretization(
        boundary=boundary, Q=Q, cov=cov, use_cov=use_cov, subdivisions=n, pieces=pieces, theta=theta,
        weights=rule.weights, s=s, dsdth=ds, L=L, Lt=L * ds, pos=pos, normal=nrm, tangent=tan,
        orientation=orient, prox=prox, prox_factor=float(prox_factor), collinear=_collinear(pieces),
    )
