"""Helmholtz kernels in 2D.

Kernels are functions of precomputed source-target geometry so that callers
can feed differences formed by the cancellation-free paths in
:mod:`cornerbie.geometry`. The convention throughout is ``diff = r - r'``
(target minus source).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .specfun import hankel1_0, hankel1_1, mod_bessel_k0

__all__ = [
    "KERNELS",
    "SourceTargetGeom",
    "green",
    "green_reg",
    "adjoint_double_layer",
    "double_layer",
    "weighted_single_layer",
    "f_factor",
    "adjoint_double_layer_diagonal",
    "evaluate_kernels",
]

# tag -> formula: ADL = dG/dn(r), WSL = G (n(r).n(r')), SL = G, REG = G_{ik},
# DL = dG/dn(r') (field representation only)
KERNELS = ("adjoint_double_layer", "weighted_single_layer", "single_layer", "regularizer")
_INV_2PI = 1.0 / (2.0 * np.pi)


@dataclass(frozen=True)
class SourceTargetGeom:
    difference: np.ndarray
    distance: np.ndarray
    target_normal: np.ndarray
    source_normal: np.ndarray
    # (r - r') . n(r); pass an accurately formed value where it decays quadratically
    normal_gap: np.ndarray = None

    @classmethod
    def from_points(cls, target, source, target_normal, source_normal):
        diff = np.asarray(target, dtype=float) - np.asarray(source, dtype=float)
        return cls(diff, np.hypot(diff[..., 0], diff[..., 1]), np.asarray(target_normal, float),
                   np.asarray(source_normal, float))

    def gap(self):
        if self.normal_gap is not None:
            return self.normal_gap
        return np.sum(self.difference * self.target_normal, axis=-1)


def _positive(k, d):
    if not np.all(np.asarray(d) > 0):
        raise ValueError("kernel evaluated at zero distance")
    if not k > 0:
        raise ValueError("wavenumber must be positive")


def green(k, distance):
    """``G_k = (i/4) H_0^(1)(k d)``."""
    _positive(k, distance)
    return 0.25j * hankel1_0(k * np.asarray(distance, dtype=float))


def green_reg(k, distance):
    """Regularizer kernel ``G_{ik} = K_0(k d) / (2 pi)`` (real, positive)."""
    _positive(k, distance)
    return _INV_2PI * mod_bessel_k0(k * np.asarray(distance, dtype=float))


def adjoint_double_layer(k, geom: SourceTargetGeom):
    """``dG_k/dn(r) = -(ik/4) H_1^(1)(k d) (r - r').n(r) / d``."""
    d = geom.distance
    _positive(k, d)
    return -0.25j * k * hankel1_1(k * d) * geom.gap() / d


def double_layer(k, geom: SourceTargetGeom):
    """``dG_k/dn(r') = (ik/4) H_1^(1)(k d) (r - r').n(r') / d``."""
    d = geom.distance
    _positive(k, d)
    num = np.sum(geom.difference * geom.source_normal, axis=-1)
    return 0.25j * k * hankel1_1(k * d) * num / d


def weighted_single_layer(k, geom: SourceTargetGeom):
    ndot = np.sum(geom.target_normal * geom.source_normal, axis=-1)
    return green(k, geom.distance) * ndot


def f_factor(geom: SourceTargetGeom):
    """``(r - r').n(r) / |r - r'|^2``; bounded on smooth patches."""
    return geom.gap() / geom.distance**2


def adjoint_double_layer_diagonal(curvature):
    """Limit of ``dG/dn(r)`` as ``r' -> r`` along a smooth curve: ``-kappa / (4 pi)``."""
    return -np.asarray(curvature, dtype=float) * 0.5 * _INV_2PI


def evaluate_kernels(k, names, distance, gap_target=None, gap_source=None, ndot=None):
    """Vectorized evaluation of several kernels sharing the Hankel values.

    ``names`` may contain any of ``KERNELS`` plus ``"double_layer"``.
    Returns a list of complex arrays in the order of ``names``.
    """
    x = k * distance
    need0 = any(n in ("weighted_single_layer", "single_layer") for n in names)
    need1 = any(n in ("adjoint_double_layer", "double_layer") for n in names)
    h0 = hankel1_0(x) if need0 else None
    h1 = hankel1_1(x) if need1 else None
    out = []
    for n in names:
        if n == "single_layer":
            out.append(0.25j * h0)
        elif n == "weighted_single_layer":
            out.append(0.25j * h0 * ndot)
        elif n == "adjoint_double_layer":
            out.append(-0.25j * k * h1 * gap_target / distance)
        elif n == "double_layer":
            out.append(0.25j * k * h1 * gap_source / distance)
        elif n == "regularizer":
            out.append((_INV_2PI * mod_bessel_k0(x)).astype(complex))
        else:
            raise ValueError(f"unknown kernel {n!r}")
    return out
