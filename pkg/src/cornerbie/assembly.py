"""Dense Nystrom matrices for the corner-regularized MFIE and CFIE-R.

All formulations except ``CFIE_R_INTERMEDIATE`` act on the regularized
unknown ``psi = phi * Lt`` where ``Lt = L(s(theta)) ds/dtheta`` is the line
element including the change-of-variables Jacobian.

Building blocks (``N x N`` with ``N = M Q``):

* ``A``: adjoint double layer, ``(A psi)_i ~ int dG/dn(r_i) psi dtheta'``;
* ``Sw``: weighted single layer ``G n(r).n(r')``;
* ``S``: single layer;
* ``R``: regularizer with kernel ``K_0(k d) / 2 pi``;
* ``D``: block-diagonal Chebyshev differentiation in ``theta``.

Far entries are ``H(r_i, r_j) w_j``; rows of near pairs are replaced by
``beta^T C`` with ``C`` the samples-to-coefficients matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .chebcov import cheb_diff_matrix, cheb_transform_matrix
from .discretization import Discretization
from .kernels import KERNELS, evaluate_kernels
from .quadrature import GkEngine, WeightTable, precompute_weights

__all__ = [
    "FORMULATIONS",
    "OperatorMatrix",
    "Operators",
    "build_operators",
    "kernel_matrix",
    "assemble_mfie",
    "assemble_regularizer",
    "assemble_cfier",
    "assemble_intermediate",
    "assemble",
    "assemble_rhs",
    "theta_diff_matrix",
]

FORMULATIONS = ("MFIE_CR", "CFIE_R_CR", "CFIE_R_noCov", "CFIE_R_INTERMEDIATE")


@dataclass
class OperatorMatrix:
    formulation: str
    k: float
    eta: float
    entries: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    def __matmul__(self, x):
        return self.entries @ x


@dataclass
class Operators:
    """Kernel matrices shared by the formulations at one wavenumber."""

    disc: Discretization
    k: float
    mats: dict
    table: WeightTable
    flagged: int = 0

    def __getitem__(self, name):
        return self.mats[name]


def kernel_matrix(disc: Discretization, k, kernel, table: WeightTable, jacobian=False):
    """Dense matrix of one kernel: Fejer far sums plus near Chebyshev rows."""
    N, Q, M = disc.N, disc.Q, disc.M
    pos = disc.flat("pos")
    nrm = disc.flat("normal")
    near = np.zeros((N, M), dtype=bool)
    near[table.target, table.src] = True
    nearf = np.repeat(near, Q, axis=1)
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    d = np.where(nearf, 1.0, d)
    gap_t = np.einsum("ijc,ic->ij", diff, nrm)
    coll = np.repeat(np.repeat(disc.collinear, Q, axis=0), Q, axis=1)
    gap_t = np.where(coll, 0.0, gap_t)
    ndot = nrm @ nrm.T
    K = evaluate_kernels(k, (kernel,), d, gap_t, None, ndot)[0]
    w = np.tile(disc.weights, M)
    if jacobian:
        w = w * disc.flat("Lt")
    A = K * w[None, :]
    A[nearf] = 0.0
    C = cheb_transform_matrix(Q)
    blocks = table.beta[:, table.kernel_index(kernel), :] @ C
    rows = np.repeat(table.target, Q)
    cols = (table.src[:, None] * Q + np.arange(Q)[None, :]).ravel()
    A[rows, cols] = blocks.ravel()
    return A


def theta_diff_matrix(disc: Discretization):
    """Block-diagonal ``d/dtheta`` on every patch."""
    D = cheb_diff_matrix(disc.Q)
    return block_diag(*([D] * disc.M))


def build_operators(disc: Discretization, k, kernels=KERNELS, engine: GkEngine = GkEngine(), table=None,
                    jacobian=False) -> Operators:
    if table is None:
        table = precompute_weights(disc, k, kernels, engine, jacobian=jacobian)
    mats = {name: kernel_matrix(disc, k, name, table, jacobian) for name in kernels}
    return Operators(disc, float(k), mats, table, int(np.sum(table.flags)))


def _ops(disc, k, ops, kernels, engine):
    if ops is None:
        ops = build_operators(disc, k, kernels, engine)
    missing = [n for n in kernels if n not in ops.mats]
    if missing:
        raise KeyError(f"missing weight entries for kernels {missing}")
    return ops


def assemble_mfie(disc: Discretization, k, ops: Operators = None, engine: GkEngine = GkEngine()) -> OperatorMatrix:
    """``-psi/2 + Lt * A psi``."""
    ops = _ops(disc, k, ops, ("adjoint_double_layer",), engine)
    Lt = disc.flat("Lt")
    E = Lt[:, None] * ops["adjoint_double_layer"]
    E[np.diag_indices_from(E)] -= 0.5
    return OperatorMatrix("MFIE_CR" if disc.use_cov else "MFIE_noCov", float(k), 0.0, E,
                          {"flagged": ops.flagged, "N": disc.N})


def assemble_regularizer(disc: Discretization, k, ops: Operators = None, engine: GkEngine = GkEngine()) -> OperatorMatrix:
    """Map from ``psi`` to the regularizer values at all nodes."""
    ops = _ops(disc, k, ops, ("regularizer",), engine)
    return OperatorMatrix("REGULARIZER", float(k), 0.0, ops["regularizer"].copy(), {"N": disc.N})


def assemble_cfier(disc: Discretization, k, eta=1.0, ops: Operators = None,
                   engine: GkEngine = GkEngine()) -> OperatorMatrix:
    """Corner-regularized CFIE-R acting on ``psi``.

    ``(i eta / 2) psi - i eta Lt A psi + k^2 Lt Sw (Lt R psi) + sgn D S sgn D R psi``
    where ``sgn`` is the patch orientation turning ``d/dtheta`` into the
    counterclockwise tangential derivative.
    """
    ops = _ops(disc, k, ops, KERNELS, engine)
    Lt = disc.flat("Lt")
    sgn = np.repeat(disc.orientation, disc.Q)
    R = ops["regularizer"]
    D = theta_diff_matrix(disc)
    E = -1j * eta * Lt[:, None] * ops["adjoint_double_layer"]
    E += k * k * Lt[:, None] * (ops["weighted_single_layer"] @ (Lt[:, None] * R))
    E += sgn[:, None] * (D @ (ops["single_layer"] @ (sgn[:, None] * (D @ R))))
    E[np.diag_indices_from(E)] += 0.5j * eta
    name = "CFIE_R_CR" if disc.use_cov else "CFIE_R_noCov"
    return OperatorMatrix(name, float(k), float(eta), E, {"flagged": ops.flagged, "N": disc.N, "R": R})


def assemble_intermediate(disc: Discretization, k, eta=1.0, engine: GkEngine = GkEngine(), ops_jac=None,
                          table_plain=None) -> OperatorMatrix:
    """CFIE-R on graded meshes with the plain density ``phi`` as unknown.

    The line element stays inside every integral and the outer tangential
    derivative keeps its ``1 / Lt`` factor.
    """
    if ops_jac is None:
        ops_jac = build_operators(disc, k, ("adjoint_double_layer", "weighted_single_layer", "regularizer"),
                                  engine, jacobian=True)
    if table_plain is None:
        table_plain = precompute_weights(disc, k, ("single_layer",), engine)
    S = kernel_matrix(disc, k, "single_layer", table_plain)
    Lt = disc.flat("Lt")
    sgn = np.repeat(disc.orientation, disc.Q)
    R = ops_jac["regularizer"]
    D = theta_diff_matrix(disc)
    E = -1j * eta * ops_jac["adjoint_double_layer"]
    E += k * k * (ops_jac["weighted_single_layer"] @ R)
    E += (sgn / Lt)[:, None] * (D @ (S @ (sgn[:, None] * (D @ R))))
    E[np.diag_indices_from(E)] += 0.5j * eta
    return OperatorMatrix("CFIE_R_INTERMEDIATE", float(k), float(eta), E,
                          {"flagged": ops_jac.flagged + int(np.sum(table_plain.flags)), "N": disc.N, "R": R})


def assemble(formulation, disc: Discretization, k, eta=1.0, ops=None, engine: GkEngine = GkEngine()) -> OperatorMatrix:
    if formulation == "MFIE_CR":
        return assemble_mfie(disc, k, ops, engine)
    if formulation in ("CFIE_R_CR", "CFIE_R_noCov"):
        return assemble_cfier(disc, k, eta, ops, engine)
    if formulation == "CFIE_R_INTERMEDIATE":
        return assemble_intermediate(disc, k, eta, engine)
    raise ValueError(f"unknown formulation {formulation!r}")


def assemble_rhs(disc: Discretization, incident, scale_by_jacobian=True):
    """``-(du_inc/dn) Lt`` at every node (``Lt`` omitted for plain-density unknowns)."""
    pos = disc.flat("pos")
    dn = incident.normal_derivative(pos, disc.flat("normal"))
    if scale_by_jacobian:
        return -dn * disc.flat("Lt")
    return -dn
