"""Fejer quadrature, Chebyshev series on [0, 1] and graded changes of variables.

Chebyshev series here are always expansions in ``T_m(2s - 1)``; the
differentiation routine returns the derivative with respect to ``s`` (the
factor 2 from ``x = 2s - 1`` is included).

The corner change of variables is ``s(theta) = w(pi theta) / pi`` with the
sigmoidal ``w`` built from the cubic ``v``. It is written so that both
``s(theta)`` and differences ``s(theta) - s(theta')`` keep full relative
precision when ``theta`` is tiny or when ``theta' -> theta``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "FejerRule",
    "ChebSeries",
    "CovSpec",
    "fejer_rule",
    "cheb_vandermonde",
    "cheb_transform",
    "cheb_transform_matrix",
    "cheb_eval",
    "cheb_differentiate",
    "cheb_derivative_coeffs",
    "cheb_diff_matrix",
    "cov_eval",
    "cov_diff",
    "cov_invert",
]


@dataclass(frozen=True)
class FejerRule:
    Q: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class ChebSeries:
    """Coefficients ``a_m`` of ``sum_m a_m T_m(2s - 1)`` on ``[0, 1]``."""

    coeffs: np.ndarray

    def __call__(self, s):
        return cheb_eval(self, s)


@dataclass(frozen=True)
class CovSpec:
    """Change of variables ``s = s(theta)`` on ``[0, 1]``.

    ``kind`` is one of ``"identity"``, ``"graded_w"`` or ``"monomial"``.
    """

    kind: str = "graded_w"
    order: float = 6

    def __post_init__(self):
        if self.kind not in ("identity", "graded_w", "monomial"):
            raise ValueError(f"unknown change of variables {self.kind!r}")
        if self.kind != "identity" and not self.order >= 2:
            raise ValueError("change-of-variables order must be >= 2")


IDENTITY = CovSpec("identity", 2)


@lru_cache(maxsize=None)
def _fejer(Q):
    j = np.arange(Q)
    zeta = np.cos(np.pi * (2 * j + 1) / (2 * Q))
    k = np.arange(1, Q // 2 + 1)
    terms = np.cos(np.outer(2 * j + 1, k) * np.pi / Q) / (4.0 * k * k - 1.0)
    W = (2.0 / Q) * (1.0 - 2.0 * terms.sum(axis=1))
    nodes = (zeta + 1.0) / 2.0
    nodes.flags.writeable = False
    weights = W / 2.0
    weights.flags.writeable = False
    return nodes, weights


def fejer_rule(Q: int) -> FejerRule:
    """Fejer's first rule with ``Q`` points on ``[0, 1]`` (nodes decreasing)."""
    if int(Q) != Q or Q <= 0:
        raise ValueError("Q must be a positive integer")
    if Q % 2:
        raise ValueError("only even Q is supported")
    nodes, weights = _fejer(int(Q))
    return FejerRule(int(Q), nodes, weights)


def cheb_vandermonde(s, Q):
    """Matrix ``V[i, m] = T_m(2 s_i - 1)`` for ``m < Q``."""
    x = 2.0 * np.asarray(s, dtype=float) - 1.0
    V = np.empty(x.shape + (Q,))
    V[..., 0] = 1.0
    if Q > 1:
        V[..., 1] = x
    for m in range(2, Q):
        V[..., m] = 2.0 * x * V[..., m - 1] - V[..., m - 2]
    return V


@lru_cache(maxsize=None)
def _transform_matrix(Q):
    nodes, _ = _fejer(Q)
    C = (2.0 / Q) * cheb_vandermonde(nodes, Q).T
    C[0] *= 0.5
    C.flags.writeable = False
    return C


def cheb_transform_matrix(Q: int) -> np.ndarray:
    """Matrix mapping samples at the ``Q`` Fejer nodes to coefficients."""
    return _transform_matrix(int(Q))


def cheb_transform(samples) -> ChebSeries:
    samples = np.asarray(samples)
    Q = samples.shape[0]
    if Q % 2:
        raise ValueError("only even Q is supported")
    return ChebSeries(cheb_transform_matrix(Q) @ samples)


def cheb_eval(series: ChebSeries, s):
    """Clenshaw evaluation of a Chebyshev series on ``[0, 1]``."""
    a = np.asarray(series.coeffs)
    x = 2.0 * np.asarray(s, dtype=float) - 1.0
    b1 = np.zeros(np.broadcast(x, a[0]).shape, dtype=np.result_type(a, x))
    b2 = np.zeros_like(b1)
    for m in range(a.shape[0] - 1, 0, -1):
        b1, b2 = 2.0 * x * b1 - b2 + a[m], b1
    return x * b1 - b2 + a[0]


def cheb_derivative_coeffs(coeffs) -> np.ndarray:
    """Coefficients of ``d/ds`` of a series in ``T_m(2s - 1)``."""
    c = np.asarray(coeffs)
    Q = c.shape[0]
    d = np.zeros((Q + 1,) + c.shape[1:], dtype=np.result_type(c, float))
    for i in range(Q - 1, 0, -1):
        d[i - 1] = d[i + 1] + 2.0 * i * c[i]
    d[0] *= 0.5
    # chain rule for x = 2s - 1
    return 2.0 * d[:Q]


def cheb_differentiate(series: ChebSeries) -> ChebSeries:
    return ChebSeries(cheb_derivative_coeffs(series.coeffs))


@lru_cache(maxsize=None)
def _diff_matrix(Q):
    nodes, _ = _fejer(Q)
    V = cheb_vandermonde(nodes, Q)
    Dc = cheb_derivative_coeffs(np.eye(Q))
    D = V @ Dc @ _transform_matrix(Q)
    D.flags.writeable = False
    return D


def cheb_diff_matrix(Q: int) -> np.ndarray:
    """Nodal differentiation matrix on the Fejer nodes (``d/ds``)."""
    return _diff_matrix(int(Q))


# --- change of variables -------------------------------------------------

def _check_theta(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0.0) or np.any(theta > 1.0) or not np.all(np.isfinite(theta)):
        raise ValueError("theta must lie in [0, 1]")
    return theta


def _vbracket(u, p):
    # v(pi u) = u * B(u); B stays within [3/8, 3/2] on [0, 2]
    c = 0.5 - 1.0 / p
    return (1.5 - 2.0 / p) + u * (c * u - 3.0 * c)


def _ratio(theta, p):
    # v(pi theta) / v(2 pi - pi theta)
    return theta * _vbracket(theta, p) / ((2.0 - theta) * _vbracket(2.0 - theta, p))


def _graded(theta, p):
    rho = _ratio(theta, p)
    rp = rho**p
    s = 2.0 * rp / (1.0 + rp)
    # derivative via logarithmic differentiation of rho
    u = theta
    c = 0.5 - 1.0 / p
    B = _vbracket(u, p)
    Bb = _vbracket(2.0 - u, p)
    dB = 2.0 * c * u - 3.0 * c
    dBb = -(2.0 * c * (2.0 - u) - 3.0 * c)
    v, vb = u * B, (2.0 - u) * Bb
    dv, dvb = B + u * dB, -Bb + (2.0 - u) * dBb
    # d(rho)/rho = dv/v - dvb/vb ; write v-factor without division by u
    with np.errstate(divide="ignore", invalid="ignore"):
        dlog = np.where(u > 0, dv / np.where(u > 0, v, 1.0) - dvb / vb, 0.0)
    ds = 2.0 * p * rp / (1.0 + rp) ** 2 * dlog
    ds = np.where(u > 0, ds, 0.0)
    return s, ds


def cov_eval(cov: CovSpec, theta):
    """Return ``(s(theta), ds/dtheta)``."""
    theta = _check_theta(theta)
    if cov.kind == "identity":
        return theta.copy(), np.ones_like(theta)
    p = cov.order
    if cov.kind == "monomial":
        return theta**p, p * theta ** (p - 1)
    return _graded(theta, p)


def _power_diff(a, b, p):
    # a**p - b**p without cancellation, a, b >= 0
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    big = np.maximum(a, b)
    small = np.minimum(a, b)
    sign = np.where(a >= b, 1.0, -1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(big > 0, (big - small) / np.where(big > 0, big, 1.0), 0.0)
        out = -(big**p) * np.expm1(p * np.log1p(-rel))
    return sign * np.where(big > 0, out, 0.0)


def cov_diff(cov: CovSpec, theta, theta2, dt=None):
    """``s(theta) - s(theta2)`` with relative accuracy set by ``theta - theta2``.

    ``dt`` may supply an accurately formed ``theta - theta2``.
    """
    theta = np.asarray(theta, dtype=float)
    theta2 = np.asarray(theta2, dtype=float)
    dt = theta - theta2 if dt is None else np.asarray(dt, dtype=float)
    if cov.kind == "identity":
        return dt
    p = cov.order
    if cov.kind == "monomial":
        return _power_diff(theta, theta2, p)
    # s = 2 rho^p / (1 + rho^p);  rho = (1/2 + g(t)) / (1/2 - g(t)), t = theta - 1,
    # g(t) = c t^3 + t / p, so rho1 - rho2 = (g1 - g2) / ((1/2 - g1)(1/2 - g2)).
    c = 0.5 - 1.0 / p
    t1, t2 = theta - 1.0, theta2 - 1.0
    dg = dt * (c * (t1 * t1 + t1 * t2 + t2 * t2) + 1.0 / p)
    vb1 = (2.0 - theta) * _vbracket(2.0 - theta, p)
    vb2 = (2.0 - theta2) * _vbracket(2.0 - theta2, p)
    rho1 = _ratio(theta, p)
    rho2 = _ratio(theta2, p)
    drho = dg / (vb1 * vb2)
    # rho1^p - rho2^p = rho2^p * expm1(p * log1p(drho / rho2)), symmetric choice of base
    base = np.where(rho2 >= rho1, rho2, rho1)
    d = np.where(rho2 >= rho1, drho, -drho)
    with np.errstate(divide="ignore", invalid="ignore"):
        pdiff = base**p * np.expm1(p * np.log1p(d / np.where(base > 0, base, 1.0)))
    pdiff = np.where(base > 0, pdiff, 0.0)
    pdiff = np.where(rho2 >= rho1, pdiff, -pdiff)
    r1p, r2p = rho1**p, rho2**p
    return 2.0 * pdiff / ((1.0 + r1p) * (1.0 + r2p))


def cov_invert(cov: CovSpec, s, tol=1e-15):
    """Solve ``s(theta) = s`` for ``theta`` by safeguarded Newton iteration."""
    s = np.asarray(s, dtype=float)
    if cov.kind == "identity":
        return s.copy()
    if cov.kind == "monomial":
        return s ** (1.0 / cov.order)
    lo = np.zeros_like(s)
    hi = np.ones_like(s)
    # s ~ C theta^p near 0 gives a good starting guess
    C = float(_graded(np.array(1e-3), cov.order)[0]) / 1e-3**cov.order
    th = np.clip((s / C) ** (1.0 / cov.order), 0.0, 1.0)
    for _ in range(100):
        val, der = _graded(th, cov.order)
        f = val - s
        lo = np.where(f < 0, th, lo)
        hi = np.where(f > 0, th, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(der > 0, f / der, 0.0)
        new = th - step
        bad = (new <= lo) | (new >= hi) | ~np.isfinite(new)
        new = np.where(bad, 0.5 * (lo + hi), new)
        if np.all(np.abs(new - th) <= tol * np.maximum(new, 1e-300)):
            th = new
            break
        th = new
    return th
