"""Scatterer boundaries as ordered lists of smooth patches.

Every patch is parametrized on ``s in [0, 1]``. A patch that touches a corner
is parametrized *from* that corner, so the corner is ``point(0)``; when this
runs against the counterclockwise traversal the patch carries
``orientation = -1`` and its tangent is flipped.

Besides positions and derivatives each patch knows how to form differences
of nearby points without catastrophic cancellation:

* ``offset(s)``: ``r(s) - r(0)``, i.e. ``s * R(s)`` in remainder form;
* ``chord(s, s2, ds)``: ``r(s) - r(s2)`` given an accurate ``ds = s - s2``;
* ``normal_gap(s, s2, ds)``: ``(r(s) - r(s2)) . n(s)``, the numerator of the
  adjoint double-layer kernel, which decays quadratically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Patch",
    "LinePatch",
    "CurvePatch",
    "TeardropCurve",
    "CircleCurve",
    "Boundary",
    "make_polygon",
    "make_square",
    "make_parallelogram",
    "make_teardrop",
    "make_circle",
    "unit_tangent",
    "unit_normal",
    "line_element",
    "anchored_difference",
    "GeometryError",
]

_TAYLOR_GAP_SWITCH = 0.05
_TAYLOR_GAP_TERMS = 16


class GeometryError(ValueError):
    pass


def _check_s(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0) or np.any(s > 1.0) or not np.all(np.isfinite(s)):
        raise GeometryError("patch parameter must lie in [0, 1]")
    return s


def _perp(v, orientation):
    # outward normal of a counterclockwise tangent t is (t_y, -t_x)
    return orientation * np.stack([v[..., 1], -v[..., 0]], axis=-1)


class Patch:
    corner_id: Optional[int]
    orientation: int
    straight: bool = False

    @property
    def has_corner_at_zero(self) -> bool:
        return self.corner_id is not None

    def point(self, s):
        raise NotImplementedError

    def deriv(self, s):
        raise NotImplementedError

    def deriv2(self, s):
        raise NotImplementedError

    def offset(self, s):
        raise NotImplementedError

    def chord(self, s, s2, ds):
        raise NotImplementedError

    def normal_gap(self, s, s2, ds):
        raise NotImplementedError

    def remainder(self, s):
        """``R(s)`` with ``r(s) = r(0) + s R(s)``."""
        s = np.asarray(s, dtype=float)
        safe = np.where(s > 0, s, 1.0)
        out = self.offset(s) / safe[..., None]
        return np.where((s > 0)[..., None], out, self.deriv(s))

    def line_element(self, s):
        d = self.deriv(s)
        return np.hypot(d[..., 0], d[..., 1])

    def tangent(self, s):
        d = self.deriv(s)
        L = np.hypot(d[..., 0], d[..., 1])
        return self.orientation * d / L[..., None]

    def normal(self, s):
        d = self.deriv(s)
        L = np.hypot(d[..., 0], d[..., 1])
        return _perp(d / L[..., None], self.orientation)

    def curvature(self, s):
        """Signed curvature, positive where the curve bends toward the interior."""
        d = self.deriv(s)
        dd = self.deriv2(s)
        L = np.hypot(d[..., 0], d[..., 1])
        return self.orientation * (d[..., 0] * dd[..., 1] - d[..., 1] * dd[..., 0]) / L**3

    @property
    def chord_length(self) -> float:
        a, b = self.point(np.array([0.0, 1.0]))
        return float(np.hypot(*(b - a)))


@dataclass(frozen=True, eq=False)
class LinePatch(Patch):
    """Straight segment ``r(s) = start + s (end - start)``."""

    start: np.ndarray
    end: np.ndarray
    corner_id: Optional[int] = None
    orientation: int = 1
    straight: bool = field(default=True, init=False)

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "end", np.asarray(self.end, dtype=float))
        object.__setattr__(self, "edge", self.end - self.start)

    def point(self, s):
        s = np.asarray(s, dtype=float)
        return self.start + s[..., None] * self.edge

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        return np.broadcast_to(self.edge, s.shape + (2,)).copy()

    def deriv2(self, s):
        s = np.asarray(s, dtype=float)
        return np.zeros(s.shape + (2,))

    def offset(self, s):
        s = np.asarray(s, dtype=float)
        return s[..., None] * self.edge

    def chord(self, s, s2, ds):
        ds = np.asarray(ds, dtype=float)
        return ds[..., None] * self.edge

    def normal_gap(self, s, s2, ds):
        return np.zeros(np.broadcast(np.asarray(s), np.asarray(ds)).shape)

    def remainder(self, s):
        return self.deriv(s)


def _sin_shift(x, k):
    # sin(x + k pi / 2) without rounding the shifted argument
    k %= 4
    if k == 0:
        return np.sin(x)
    if k == 1:
        return np.cos(x)
    if k == 2:
        return -np.sin(x)
    return -np.cos(x)


class TeardropCurve:
    """``c(z) = (2 sin(z/2), -beta sin z)``; negative beta gives the mirror image."""

    def __init__(self, beta):
        self.beta = float(beta)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.stack([2.0 * np.sin(0.5 * z), -self.beta * np.sin(z)], axis=-1)

    def derivative(self, z, k):
        z = np.asarray(z, dtype=float)
        return np.stack([2.0 * 0.5**k * _sin_shift(0.5 * z, k), -self.beta * _sin_shift(z, k)], axis=-1)

    def diff(self, z1, z2, dz):
        m = 0.5 * (np.asarray(z1) + np.asarray(z2))
        dz = np.asarray(dz, dtype=float)
        return np.stack(
            [4.0 * np.cos(0.5 * m) * np.sin(0.25 * dz), -2.0 * self.beta * np.cos(m) * np.sin(0.5 * dz)],
            axis=-1,
        )


class CircleCurve:
    """``c(z) = center + radius (cos z, sin z)``."""

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return self.center + self.radius * np.stack([np.cos(z), np.sin(z)], axis=-1)

    def derivative(self, z, k):
        z = np.asarray(z, dtype=float)
        return self.radius * np.stack([_sin_shift(z, k + 1), _sin_shift(z, k)], axis=-1)

    def diff(self, z1, z2, dz):
        m = 0.5 * (np.asarray(z1) + np.asarray(z2))
        h = 2.0 * self.radius * np.sin(0.5 * np.asarray(dz, dtype=float))
        return np.stack([-np.sin(m) * h, np.cos(m) * h], axis=-1)


@dataclass(frozen=True, eq=False)
class CurvePatch(Patch):
    """Patch ``r(s) = curve(z0 + span * s)`` of a closed-form curve."""

    curve: object
    z0: float
    span: float
    corner_id: Optional[int] = None
    orientation: int = 1

    def _z(self, s):
        return self.z0 + self.span * np.asarray(s, dtype=float)

    def point(self, s):
        return self.curve(self._z(s))

    def deriv(self, s):
        return self.span * self.curve.derivative(self._z(s), 1)

    def deriv2(self, s):
        return self.span**2 * self.curve.derivative(self._z(s), 2)

    def offset(self, s):
        s = np.asarray(s, dtype=float)
        return self.curve.diff(self._z(s), self.z0, self.span * s)

    def chord(self, s, s2, ds):
        return self.curve.diff(self._z(s), self._z(s2), self.span * np.asarray(ds, dtype=float))

    def normal_gap(self, s, s2, ds):
        s, s2, ds = np.broadcast_arrays(
            np.asarray(s, dtype=float), np.asarray(s2, dtype=float), np.asarray(ds, dtype=float)
        )
        shape = s.shape
        s, s2, ds = s.ravel(), s2.ravel(), ds.ravel()
        z = self._z(s)
        dz = self.span * ds
        d1 = self.curve.derivative(z, 1)
        n = _perp(d1 / np.hypot(d1[..., 0], d1[..., 1])[..., None], self.orientation)
        direct = np.sum(self.chord(s, s2, ds) * n, axis=-1)
        small = np.abs(dz) < _TAYLOR_GAP_SWITCH
        if not np.any(small):
            return direct.reshape(shape)
        zs, dzs, ns = z[small], dz[small], n[small]
        # r(z) - r(z - dz) = -sum_{k>=1} c^(k)(z) (-dz)^k / k!, and c'(z) . n = 0
        acc = np.zeros_like(zs)
        fact = 1.0
        for k in range(2, _TAYLOR_GAP_TERMS):
            fact *= k
            ck = np.sum(self.curve.derivative(zs, k) * ns, axis=-1)
            acc -= ck * (-dzs) ** k / fact
        out = direct.copy()
        out[small] = acc
        return out.reshape(shape)


def unit_tangent(patch: Patch, s):
    return patch.tangent(_check_s(s))


def unit_normal(patch: Patch, s):
    return patch.normal(_check_s(s))


def line_element(patch: Patch, s):
    return patch.line_element(_check_s(s))


def anchored_difference(patch_q: Patch, s, patch_p: Patch, s2, ds=None):
    """``r_q(s) - r_p(s2)`` for points on one patch or on two patches sharing a corner.

    For ``patch_q is patch_p`` the accurate parameter difference ``ds = s - s2``
    may be supplied (it defaults to plain subtraction).
    """
    if patch_q is patch_p:
        if ds is None:
            ds = np.asarray(s, dtype=float) - np.asarray(s2, dtype=float)
        return patch_q.chord(s, s2, ds)
    if patch_q.corner_id is None or patch_q.corner_id != patch_p.corner_id:
        raise GeometryError("anchored difference needs a shared corner or a single patch")
    return patch_q.offset(s) - patch_p.offset(s2)


@dataclass(frozen=True)
class Boundary:
    """Closed curve split into patches listed in counterclockwise order."""

    patches: tuple
    corners: dict  # corner_id -> (point, interior angle)
    name: str = "boundary"
    params: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return len(self.patches)

    def corner_point(self, cid):
        return np.asarray(self.corners[cid][0], dtype=float)

    def corner_angle(self, cid) -> float:
        return float(self.corners[cid][1])

    def corner_patches(self, cid):
        return [q for q, p in enumerate(self.patches) if p.corner_id == cid]

    def polyline(self, per_patch=64):
        """Counterclockwise closed polyline through sampled patch points."""
        pts = []
        s = np.linspace(0.0, 1.0, per_patch + 1)[:-1]
        for p in self.patches:
            ss = s if p.orientation > 0 else 1.0 - s
            pts.append(p.point(ss))
        return np.concatenate(pts)

    def bounding_box(self):
        pts = self.polyline()
        return pts.min(axis=0), pts.max(axis=0)

    @property
    def diameter(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.hypot(*(hi - lo)))

    def contains(self, points, per_patch=256):
        """Even-odd test: True for points inside the scatterer."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        poly = self.polyline(per_patch)
        x1, y1 = poly[:, 0], poly[:, 1]
        x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
        px, py = pts[:, 0:1], pts[:, 1:2]
        cond = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        crossings = np.sum(cond & (px < xint), axis=1)
        return crossings % 2 == 1

    def exterior_bisector(self, cid):
        """Unit vector pointing away from the interior, halving the exterior angle."""
        dirs = []
        for q in self.corner_patches(cid):
            d = self.patches[q].deriv(np.array(0.0))
            dirs.append(d / np.hypot(*d))
        v = -(dirs[0] + dirs[1])
        nv = np.hypot(*v)
        if nv < 1e-12:
            raise GeometryError("degenerate corner")
        return v / nv

    def arclength(self, n=2000):
        # Fejer rule per patch; exact for straight patches
        from .chebcov import fejer_rule

        rule = fejer_rule(32)
        total = 0.0
        for p in self.patches:
            total += float(np.sum(p.line_element(rule.nodes) * rule.weights))
        return total

    def signed_area(self):
        poly = self.polyline(256)
        x, y = poly[:, 0], poly[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def closure_gap(self) -> float:
        """Largest mismatch between consecutive patch endpoints."""
        gaps = []
        ends = []
        for p in self.patches:
            a, b = p.point(np.array([0.0, 1.0]))
            ends.append((a, b) if p.orientation > 0 else (b, a))
        for i, (_, b) in enumerate(ends):
            a_next = ends[(i + 1) % len(ends)][0]
            gaps.append(np.hypot(*(a_next - b)))
        return float(max(gaps))


def _interior_angle(d_out, d_in):
    # d_out: direction leaving the corner along the ccw traversal,
    # d_in: direction from the corner back along the incoming side
    cross = d_out[0] * d_in[1] - d_out[1] * d_in[0]
    dot = d_out @ d_in
    ang = math.atan2(cross, dot)
    return ang % (2 * math.pi)


def make_polygon(vertices: Sequence, n: int = 1, name="polygon", params=None) -> Boundary:
    """Polygon with every side split at its midpoint and each half split into ``n`` patches.

    The half-side piece touching a vertex is the corner patch (parametrized
    from the vertex); the remaining pieces are ordinary patches traversed
    counterclockwise.
    """
    V = np.asarray(vertices, dtype=float)
    if n < 1:
        raise GeometryError("need at least one patch per half-side")
    nv = len(V)
    patches = []
    corners = {}
    for i in range(nv):
        A, B = V[i], V[(i + 1) % nv]
        Mid = 0.5 * (A + B)
        t = np.linspace(0.0, 1.0, n + 1)
        # first half: A -> Mid, corner patch at A
        pts = A + t[:, None] * (Mid - A)
        patches.append(LinePatch(A, pts[1], corner_id=i, orientation=1))
        for j in range(1, n):
            patches.append(LinePatch(pts[j], pts[j + 1]))
        # second half: Mid -> B, corner patch at B parametrized from B
        pts = Mid + t[:, None] * (B - Mid)
        for j in range(0, n - 1):
            patches.append(LinePatch(pts[j], pts[j + 1]))
        patches.append(LinePatch(B, pts[n - 1], corner_id=(i + 1) % nv, orientation=-1))
    for i in range(nv):
        P, nxt, prv = V[i], V[(i + 1) % nv], V[i - 1]
        d_out = (nxt - P) / np.hypot(*(nxt - P))
        d_in = (prv - P) / np.hypot(*(prv - P))
        corners[i] = (P.copy(), _interior_angle(d_out, d_in))
    return Boundary(tuple(patches), corners, name=name, params=dict(params or {}, n=n))


def make_square(side: float = 2.0, n: int = 1) -> Boundary:
    """Square centred at the origin; ``8 n`` patches, corners ids 0..3 starting bottom-left."""
    if not side > 0:
        raise GeometryError("side must be positive")
    h = 0.5 * side
    verts = [(-h, -h), (h, -h), (h, h), (-h, h)]
    return make_polygon(verts, n, name="square", params={"side": side})


def make_parallelogram(acute_angle: float, side_a: float = 2.0, side_b: float = 2.0 * math.sqrt(2.0), n: int = 1) -> Boundary:
    """Parallelogram centred at its centroid.

    Corner 0 (bottom-left) and corner 2 carry the acute angle; corners 1 and
    3 the obtuse one. ``side_a`` is the horizontal base.
    """
    if not 0.0 < acute_angle < 0.5 * math.pi:
        raise GeometryError("acute angle must lie in (0, pi/2)")
    if not (side_a > 0 and side_b > 0):
        raise GeometryError("side lengths must be positive")
    c, s = math.cos(acute_angle), math.sin(acute_angle)
    verts = np.array([(0.0, 0.0), (side_a, 0.0), (side_a + side_b * c, side_b * s), (side_b * c, side_b * s)])
    verts -= verts.mean(axis=0)
    return make_polygon(
        verts, n, name="parallelogram", params={"acute_angle": acute_angle, "side_a": side_a, "side_b": side_b}
    )


def make_teardrop(alpha: float, n: int = 1) -> Boundary:
    """Teardrop ``(2 sin(z/2), -beta sin z)``, ``beta = tan(alpha pi / 2)``.

    Corner at the origin with interior angle ``alpha * pi``. Each half
    ``z in [0, pi]``, ``[pi, 2 pi]`` is split into ``n`` patches; the two
    corner patches are parametrized from the corner.
    """
    if not 0.0 < alpha < 1.0:
        raise GeometryError("alpha must lie in (0, 1)")
    beta = math.tan(0.5 * alpha * math.pi)
    curve = TeardropCurve(beta)
    mirror = TeardropCurve(-beta)
    h = math.pi / n
    patches = [CurvePatch(curve, 0.0, h, corner_id=0, orientation=1)]
    for j in range(1, 2 * n - 1):
        patches.append(CurvePatch(curve, j * h, h))
    patches.append(CurvePatch(mirror, 0.0, h, corner_id=0, orientation=-1))
    corners = {0: (np.zeros(2), alpha * math.pi)}
    return Boundary(tuple(patches), corners, name="teardrop", params={"alpha": alpha, "beta": beta, "n": n})


def make_circle(radius: float = 1.0, n: int = 4, center=(0.0, 0.0)) -> Boundary:
    """Smooth circle split into ``n`` equal arcs (no corners)."""
    curve = CircleCurve(center, radius)
    h = 2 * math.pi / n
    patches = tuple(CurvePatch(curve, j * h, h) for j in range(n))
    return Boundary(patches, {}, name="circle", params={"radius": radius, "n": n})
