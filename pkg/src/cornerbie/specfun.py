"""Bessel, Hankel and modified Bessel functions of orders 0 and 1.

Small and moderate arguments go through the Cephes rational approximations
shipped with :mod:`scipy.special` (``j0``, ``y0``, ``j1``, ``y1``, ``k0``,
``k1``). Those lose a few digits in the phase reduction for large arguments,
so for ``x >= ASYMPTOTIC_SWITCH`` the Hankel functions are evaluated from
their asymptotic expansion with the phase built from ``cos(x)``/``sin(x)``
directly.

All functions accept scalars or arrays and raise :class:`DomainError` for
non-positive or non-finite input.
"""
from __future__ import annotations

import numpy as np
from scipy import special

__all__ = [
    "DomainError",
    "hankel1_0",
    "hankel1_1",
    "bessel_j0",
    "bessel_y0",
    "bessel_j1",
    "bessel_y1",
    "mod_bessel_k0",
    "mod_bessel_k1",
]

ASYMPTOTIC_SWITCH = 25.0
_ASYMPTOTIC_TERMS = 32
_SQRT_HALF = np.sqrt(0.5)


class DomainError(ValueError):
    """Raised when a special function is called outside ``x > 0``."""


def _check(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x <= 0.0):
        raise DomainError("argument must be finite and strictly positive")
    return x


def _hankel_asymptotic(order, x):
    # H_nu(x) ~ sqrt(2/(pi x)) (P + iQ) exp(i(x - nu pi/2 - pi/4))
    mu = 4.0 * order * order
    inv8x = 1.0 / (8.0 * x)
    term = np.ones_like(x)
    P = np.ones_like(x)
    Q = np.zeros_like(x)
    for k in range(1, _ASYMPTOTIC_TERMS):
        term = term * (mu - (2 * k - 1) ** 2) * inv8x / k
        sign = -1.0 if (k // 2) % 2 else 1.0
        if k % 2:
            Q = Q + sign * term
        else:
            P = P + sign * term
    c, s = np.cos(x), np.sin(x)
    if order == 0:
        cphase, sphase = (c + s) * _SQRT_HALF, (s - c) * _SQRT_HALF
    else:
        cphase, sphase = (s - c) * _SQRT_HALF, -(c + s) * _SQRT_HALF
    amp = np.sqrt(2.0 / (np.pi * x))
    J = amp * (P * cphase - Q * sphase)
    Y = amp * (P * sphase + Q * cphase)
    return J, Y


def _jy(order, x):
    x = _check(x)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if order == 0:
        J, Y = special.j0(x), special.y0(x)
    else:
        J, Y = special.j1(x), special.y1(x)
    big = x >= ASYMPTOTIC_SWITCH
    if np.any(big):
        J = np.array(J, copy=True)
        Y = np.array(Y, copy=True)
        J[big], Y[big] = _hankel_asymptotic(order, x[big])
    if scalar:
        return J[0], Y[0]
    return J, Y


def bessel_j0(x):
    return _jy(0, x)[0]


def bessel_y0(x):
    return _jy(0, x)[1]


def bessel_j1(x):
    return _jy(1, x)[0]


def bessel_y1(x):
    return _jy(1, x)[1]


def hankel1_0(x):
    """First-kind Hankel function ``H_0^(1)(x) = J_0(x) + i Y_0(x)``."""
    J, Y = _jy(0, x)
    return J + 1j * Y


def hankel1_1(x):
    """First-kind Hankel function ``H_1^(1)(x) = J_1(x) + i Y_1(x)``."""
    J, Y = _jy(1, x)
    return J + 1j * Y


def mod_bessel_k0(x):
    """Modified Bessel function of the second kind ``K_0(x)``.

    Underflows to 0 for ``x`` beyond roughly 700.
    """
    return special.k0(_check(x))


def mod_bessel_k1(x):
    return special.k1(_check(x))
