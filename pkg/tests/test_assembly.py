import numpy as np
import pytest
from scipy.special import h1vp, hankel1, jvp

from cornerbie import assembly as asm
from cornerbie import quadrature as quad
from cornerbie.chebcov import cheb_transform_matrix
from cornerbie.discretization import build_discretization
from cornerbie.geometry import make_circle, make_square
from cornerbie.postprocess import IncidentField, corner_point, eval_field


def mie_neumann(k, R, points, terms=60):
    """Exact scattered field of a unit plane wave along +x off a sound-hard circle."""
    r = np.hypot(points[:, 0], points[:, 1])
    th = np.arctan2(points[:, 1], points[:, 0])
    u = np.zeros(len(points), dtype=complex)
    for n in range(-terms, terms + 1):
        a = -(1j**n) * jvp(n, k * R) / h1vp(n, k * R)
        u += a * hankel1(n, k * r) * np.exp(1j * n * th)
    return u


@pytest.fixture(scope="module")
def square_ops():
    disc = build_discretization(make_square(2.0), Q=10, subdivisions=2)
    return disc, asm.build_operators(disc, 4.0)


@pytest.mark.parametrize("formulation", ["MFIE_CR", "CFIE_R_CR"])
def test_circle_against_series(formulation):
    k, R = 5.0, 1.0
    disc = build_discretization(make_circle(R, 8), Q=10, subdivisions=4)
    inc = IncidentField("plane_wave", k)
    A = asm.assemble(formulation, disc, k)
    x = np.linalg.solve(A.entries, asm.assemble_rhs(disc, inc))
    pts = np.array([[1.5, 0.0], [0.0, -2.0], [-1.0 - 1e-3, 0.0], [3.0, 4.0]])
    u = eval_field(formulation, disc, k, x, pts, R=A.meta.get("R"))
    ref = mie_neumann(k, R, pts)
    assert np.max(np.abs(u - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_matvec_matches_independent_far_and_near_sums(square_ops):
    disc, ops = square_ops
    k = ops.k
    A = asm.assemble_mfie(disc, k, ops=ops)
    rng = np.random.default_rng(7)
    psi = rng.normal(size=disc.N) + 1j * rng.normal(size=disc.N)
    y = A @ psi
    C = cheb_transform_matrix(disc.Q)
    pos, nrm, Lt = disc.flat("pos"), disc.flat("normal"), disc.flat("Lt")
    P = psi.reshape(disc.M, disc.Q)
    for i in rng.choice(disc.N, 12, replace=False):
        acc = 0.0
        for q in range(disc.M):
            try:
                e = ops.table.entry(i, q)
            except KeyError:
                e = None
            if e is None:
                acc += quad.far_apply(disc, k, pos[i], q, "adjoint_double_layer", P[q], nrm[i])
            else:
                acc += quad.near_apply(ops.table, e, "adjoint_double_layer", C @ P[q])
        expect = -0.5 * psi[i] + Lt[i] * acc
        assert abs(y[i] - expect) <= 1e-12 * np.linalg.norm(y, np.inf)


def test_cov_switch_is_inert_without_corners():
    b = make_circle(1.0, 6)
    k = 3.0
    on = build_discretization(b, subdivisions=1, use_cov=True)
    off = build_discretization(b, subdivisions=1, use_cov=False)
    A1 = asm.assemble_cfier(on, k).entries
    A2 = asm.assemble_cfier(off, k).entries
    assert np.array_equal(A1, A2)


def test_rhs_decays_at_corner(square_ops):
    disc, _ = square_ops
    inc = IncidentField("plane_wave", 4.0, (0.6, 0.8))
    rhs = asm.assemble_rhs(disc, inc)
    plain = asm.assemble_rhs(disc, inc, scale_by_jacobian=False)
    gmax = np.max(np.abs(plain))
    Lt = disc.flat("Lt")
    q = disc.corner_pieces(0)[0]
    i = q * disc.Q + int(np.argmin(disc.theta))  # node nearest the corner
    assert abs(rhs[i]) <= Lt[i] * gmax
    assert abs(rhs[i]) < 1e-8 * np.max(np.abs(rhs))


def test_assembly_is_deterministic(square_ops):
    disc, ops = square_ops
    again = asm.build_operators(disc, ops.k)
    a = asm.assemble_cfier(disc, ops.k, ops=ops).entries
    b = asm.assemble_cfier(disc, ops.k, ops=again).entries
    assert np.array_equal(a, b)


def test_square_monopole_small_ladder():
    # interior monopole: the exterior scattered field is exactly minus the incident field
    k = 10.0
    inc = IncidentField("monopole", k, source=(0.1, 0.05))
    b = make_square(2.0)
    P, off = corner_point(b, 3, 1e-8)
    errs = []
    for n in (3, 6):
        disc = build_discretization(b, Q=10, subdivisions=n)
        A = asm.assemble_cfier(disc, k)
        x = np.linalg.solve(A.entries, asm.assemble_rhs(disc, inc))
        u = eval_field("CFIE_R_CR", disc, k, x, [P], R=A.meta["R"], corner=3, offsets=[off])
        ref = -inc.value([P])
        errs.append(abs(u[0] - ref[0]) / abs(ref[0]))
    assert errs[1] < 1e-6 and errs[1] < errs[0] / 100


def test_intermediate_and_nocov_shapes(square_ops):
    disc, _ = square_ops
    A = asm.assemble("CFIE_R_INTERMEDIATE", disc, 4.0)
    assert A.entries.shape == (disc.N, disc.N)
    nocov = build_discretization(make_square(2.0), subdivisions=2, use_cov=False)
    B = asm.assemble("CFIE_R_noCov", nocov, 4.0)
    assert B.formulation == "CFIE_R_noCov"
    with pytest.raises(ValueError):
        asm.assemble("EFIE", disc, 4.0)
