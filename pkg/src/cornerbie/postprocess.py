"""Incident fields, scattered-field evaluation and error metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chebcov import cheb_transform_matrix, cheb_vandermonde, cov_invert
from .discretization import Discretization
from .kernels import evaluate_kernels
from .quadrature import GkEngine, offsurface_weights
from .specfun import hankel1_0, hankel1_1

__all__ = [
    "IncidentField",
    "FieldSample",
    "eval_field",
    "eval_field_mfie",
    "eval_field_cfier",
    "relative_error",
    "corner_exponent",
    "corner_density",
    "corner_point",
    "field_grid",
    "estimate_umax",
    "local_exponent",
]


@dataclass(frozen=True)
class IncidentField:
    """Plane wave ``exp(i k d.r)`` or monopole ``H_0^(1)(k |r - r0|)``."""

    kind: str
    k: float
    direction: tuple = (1.0, 0.0)
    source: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("plane_wave", "monopole"):
            raise ValueError(f"unknown incident field {self.kind!r}")
        if not self.k > 0:
            raise ValueError("wavenumber must be positive")

    def value(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "plane_wave":
            d = np.asarray(self.direction, dtype=float)
            d = d / np.hypot(*d)
            return np.exp(1j * self.k * (pts @ d))
        rr = pts - np.asarray(self.source, dtype=float)
        return hankel1_0(self.k * np.hypot(rr[:, 0], rr[:, 1]))

    def gradient(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "plane_wave":
            d = np.asarray(self.direction, dtype=float)
            d = d / np.hypot(*d)
            return 1j * self.k * self.value(pts)[:, None] * d[None, :]
        rr = pts - np.asarray(self.source, dtype=float)
        rho = np.hypot(rr[:, 0], rr[:, 1])
        return (-self.k * hankel1_1(self.k * rho) / rho)[:, None] * rr

    def normal_derivative(self, points, normals):
        return np.sum(self.gradient(points) * np.atleast_2d(normals), axis=1)


@dataclass(frozen=True)
class FieldSample:
    point: np.ndarray
    value: complex
    corner_distance: float


def corner_point(boundary, cid, d):
    """Point at distance ``d`` from corner ``cid`` along the exterior bisector.

    Returns ``(point, offset)``; ``offset`` is exact and should be used for
    near-corner quadrature.
    """
    off = d * boundary.exterior_bisector(cid)
    return boundary.corner_point(cid) + off, off


def _layer_sum(disc, k, points, dens, kernels, coef, engine, corner, offsets, jacobian):
    """``sum_kernels coef * int H psi dtheta`` at off-surface points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    P = len(pts)
    M, Q = disc.M, disc.Q
    table, near = offsurface_weights(disc, k, pts, kernels, engine, corner, offsets, jacobian)
    src = disc.flat("pos")
    ns = disc.flat("normal")
    w = np.tile(disc.weights, M)
    if jacobian:
        w = w * disc.flat("Lt")
    out = np.zeros(P, dtype=complex)
    # far part in point blocks to bound memory
    step = max(1, 200000 // disc.N)
    nearf = np.repeat(near, Q, axis=1)
    for lo in range(0, P, step):
        sl = slice(lo, lo + step)
        diff = pts[sl, None, :] - src[None, :, :]
        d = np.hypot(diff[..., 0], diff[..., 1])
        nf = nearf[sl]
        d = np.where(nf, 1.0, d)
        gap_s = np.einsum("ijc,jc->ij", diff, ns)
        Ks = evaluate_kernels(k, kernels, d, None, gap_s, None)
        for K, c, f in zip(Ks, coef, dens):
            out[sl] += c * np.sum(np.where(nf, 0.0, K) * (w * f)[None, :], axis=1)
    C = cheb_transform_matrix(Q)
    for kk, (c, f) in enumerate(zip(coef, dens)):
        coeffs = (C @ f.reshape(M, Q).T).T  # (M, Q)
        vals = np.einsum("jm,jm->j", table.beta[:, kk, :], coeffs[table.src])
        np.add.at(out, table.target, c * vals)
    return out, table


def eval_field_mfie(disc: Discretization, k, psi, points, engine: GkEngine = GkEngine(), corner=None, offsets=None):
    """Scattered field ``int G psi dtheta`` of the single-layer representation."""
    out, _ = _layer_sum(disc, k, points, [np.asarray(psi)], ("single_layer",), (1.0,), engine, corner, offsets, False)
    return out


def eval_field_cfier(disc: Discretization, k, psi, R, points, eta=1.0, engine: GkEngine = GkEngine(), corner=None,
                     offsets=None, jacobian=False):
    """Scattered field ``-i eta int G psi dtheta + int dG/dn' (Lt R psi) dtheta``.

    ``R`` is the regularizer matrix (node values of the regularizer applied
    to the unknown). With ``jacobian=True`` the unknown is the plain density
    and the line element is kept in the quadrature weights instead.
    """
    psi = np.asarray(psi)
    Rpsi = R @ psi
    g = Rpsi if jacobian else disc.flat("Lt") * Rpsi
    out, _ = _layer_sum(disc, k, points, [psi, g], ("single_layer", "double_layer"), (-1j * eta, 1.0), engine,
                        corner, offsets, jacobian)
    return out


def eval_field(formulation, disc, k, x, points, R=None, eta=1.0, engine: GkEngine = GkEngine(), corner=None,
               offsets=None):
    if formulation.startswith("MFIE"):
        return eval_field_mfie(disc, k, x, points, engine, corner, offsets)
    if R is None:
        raise ValueError("CFIE-R field evaluation needs the regularizer matrix")
    return eval_field_cfier(disc, k, x, R, points, eta, engine, corner, offsets,
                            jacobian=formulation == "CFIE_R_INTERMEDIATE")


def relative_error(u, u_ref, u_max):
    """``|u - u_ref| / |u_max|``."""
    if not abs(u_max) > 0:
        raise ValueError("u_max must be positive")
    return np.abs(np.asarray(u) - np.asarray(u_ref)) / abs(u_max)


def field_grid(boundary, n=100, scale=1.25, box=None):
    """Exterior points of an ``n x n`` grid; ``box = (xmin, xmax, ymin, ymax)``."""
    if box is None:
        lo, hi = boundary.bounding_box()
        c = 0.5 * (lo + hi)
        h = 0.5 * scale * (hi - lo)
        box = (c[0] - h[0], c[0] + h[0], c[1] - h[1], c[1] + h[1])
    xs = np.linspace(box[0], box[1], n)
    ys = np.linspace(box[2], box[3], n)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    inside = boundary.contains(pts)
    return pts, ~inside


def estimate_umax(disc, incident, field_fn, n=100, scale=1.25):
    """Largest total-field magnitude over the exterior points of a grid."""
    pts, ext = field_grid(disc.boundary, n, scale)
    P = pts[ext]
    total = field_fn(P) + incident.value(P)
    return float(np.max(np.abs(total)))


def corner_density(disc: Discretization, psi, base_index, d):
    """``phi = psi / Lt`` at Cartesian distance ``d`` from the corner of a base patch.

    Distances are converted to the graded parameter by inverting the
    change of variables; valid while ``d`` is below the base patch chord.
    """
    base = disc.boundary.patches[base_index]
    if base.corner_id is None:
        raise ValueError("patch does not touch a corner")
    d = np.atleast_1d(np.asarray(d, dtype=float))
    # parameter s with |offset(s)| = d (exact for straight patches)
    s = d / float(np.hypot(*base.deriv(np.array(0.0))))
    for _ in range(3):
        off = base.offset(s)
        s = s * d / np.hypot(off[:, 0], off[:, 1])
    pieces = [q for q, pc in enumerate(disc.pieces) if pc.base_index == base_index]
    cov = disc.pieces[pieces[0]].cov
    T = cov_invert(cov, s)
    n = disc.subdivisions
    idx = np.minimum((T * n).astype(int), n - 1)
    out = np.empty(len(d), dtype=complex)
    C = cheb_transform_matrix(disc.Q)
    P = np.asarray(psi).reshape(disc.M, disc.Q)
    for j in np.unique(idx):
        sel = idx == j
        pc = disc.pieces[pieces[j]]
        theta = (T[sel] - pc.a) / pc.h
        vals = cheb_vandermonde(theta, disc.Q) @ (C @ P[pieces[j]])
        out[sel] = vals / pc.jacobian(theta)
    return out


def corner_exponent(phi_fn, d, step=np.log(10.0) / 8.0):
    """Log-derivative ``nu(d) = d/dt log phi(e^t)`` by central differences.

    ``phi_fn`` maps distances to density values. Returns ``(nu, flags)``
    where ``flags`` marks points at which ``phi`` changes sign or vanishes
    inside the stencil.
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    t = np.log(d)
    fp = np.asarray(phi_fn(np.exp(t + step)))
    fm = np.asarray(phi_fn(np.exp(t - step)))
    f0 = np.asarray(phi_fn(d))
    flags = (f0 == 0) | (np.real(fp * np.conj(f0)) <= 0) | (np.real(fm * np.conj(f0)) <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        nu = (fp - fm) / (2.0 * step * f0)
    return nu, flags


def local_exponent(theta, values):
    """Least-squares slope of ``log|values|`` against ``log theta``."""
    x = np.log(np.asarray(theta, dtype=float))
    y = np.log(np.abs(np.asarray(values)))
    A = np.column_stack([x, np.ones_like(x)])
    return float(np.linalg.lstsq(A, y, rcond=None)[0][0])
