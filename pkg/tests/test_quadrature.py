import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cornerbie import quadrature as quad
from cornerbie.chebcov import cheb_transform_matrix
from cornerbie.discretization import build_discretization, distance_to_piece
from cornerbie.geometry import make_parallelogram, make_square, make_teardrop
from cornerbie.kernels import green


@pytest.mark.parametrize("f,a,b,exact", [
    (lambda x: x**-0.5, 0.0, 1.0, 2.0),
    (np.log, 0.0, 1.0, -1.0),
    (np.sin, 0.0, np.pi, 2.0),
    (lambda x: np.cos(100 * x), 0.0, 1.0, np.sin(100.0) / 100.0),
    (lambda x: 1.0 / (1e-4 + x * x), -1.0, 1.0, 2e2 * np.arctan(1e2)),
])
def test_gk_known_integrals(f, a, b, exact):
    val, err, ok = quad.gk_integrate(f, a, b)
    assert ok
    assert abs(val - exact) <= 1e-12 * max(1.0, abs(exact))
    assert err <= 1e-10 * max(1.0, abs(exact))


def test_gk_reversed_limits_and_breakpoints():
    v1, _, _ = quad.gk_integrate(np.exp, 1.0, 0.0)
    assert abs(v1 + (np.e - 1.0)) < 1e-14
    v2, _, ok = quad.gk_integrate(lambda x: np.abs(x - 0.3), 0.0, 1.0, points=(0.3,))
    assert ok and abs(v2 - (0.045 + 0.245)) < 1e-15


def test_gk_flags_exhausted_limit():
    eng = quad.GkEngine(rtol=1e-14, atol=1e-14, limit=2)
    _, _, ok = quad.gk_integrate(lambda x: np.sqrt(np.abs(x - 1.0 / 3.0)), 0.0, 1.0, engine=eng)
    assert not ok


def test_gk_batch_vector_components():
    breaks = [[0.0, 1.0], [0.0, 0.5, 2.0]]

    def f(j, x):
        p = np.where(j == 0, 1.0, 2.0)
        return np.stack([x**p, np.exp(-x) * p], axis=-1)

    out = quad.gk_batch(f, breaks, 2)
    assert np.all(out.converged)
    assert np.allclose(out.values[0], [0.5, 1 - np.exp(-1)], rtol=1e-14)
    assert np.allclose(out.values[1], [8.0 / 3.0, 2 * (1 - np.exp(-2))], rtol=1e-14)


def test_engine_validation():
    with pytest.raises(ValueError):
        quad.GkEngine(rtol=0.0, atol=0.0)
    with pytest.raises(ValueError):
        quad.GkEngine(limit=0)


@pytest.fixture(scope="module")
def small_disc():
    return build_discretization(make_square(2.0), Q=10, p=6, subdivisions=2)


@pytest.fixture(scope="module")
def small_table(small_disc):
    return quad.precompute_weights(small_disc, 5.0)


def test_precompute_converges_and_is_deterministic(small_disc, small_table):
    assert not np.any(small_table.flags)
    again = quad.precompute_weights(small_disc, 5.0)
    assert np.array_equal(again.beta, small_table.beta)
    # a different evaluation batching must not change a single bit
    rechunked = quad.precompute_weights(small_disc, 5.0, engine=quad.GkEngine(max_points=450))
    assert np.array_equal(rechunked.beta, small_table.beta)


@settings(max_examples=25)
@given(st.integers(0, 10**6), st.floats(-3, 3), st.floats(-3, 3))
def test_weight_table_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    table = _LINEARITY_TABLE
    e = int(rng.integers(len(table.target)))
    c1 = rng.normal(size=table.Q) + 1j * rng.normal(size=table.Q)
    c2 = rng.normal(size=table.Q) + 1j * rng.normal(size=table.Q)
    for name in table.kernels:
        lhs = quad.near_apply(table, e, name, a * c1 + b * c2)
        rhs = a * quad.near_apply(table, e, name, c1) + b * quad.near_apply(table, e, name, c2)
        scale = np.sum(np.abs(table.beta[e, table.kernel_index(name)])) * (abs(a) + abs(b)) * 10
        assert abs(lhs - rhs) <= 1e-14 * max(scale, 1e-300)


_LINEARITY_TABLE = quad.precompute_weights(build_discretization(make_square(2.0), Q=10, subdivisions=1), 3.0)


def _smooth_psi(disc, q):
    th = disc.theta
    return np.cos(2.0 * th) + 1j * th**2


RESOLVED = {
    "square": (lambda: make_square(2.0), 8),
    "parallelogram": (lambda: make_parallelogram(np.pi / 4), 8),
    "teardrop": (lambda: make_teardrop(0.5, 2), 12),
}


@pytest.mark.parametrize("geometry", sorted(RESOLVED))
def test_far_near_consistency(geometry):
    # on pieces that resolve the geometry, the Fejer far rule is accurate just beyond the proximity radius
    build, sub = RESOLVED[geometry]
    boundary = build()
    disc = build_discretization(boundary, Q=10, subdivisions=sub)
    wide = build_discretization(boundary, Q=10, subdivisions=sub, prox_factor=1e6)
    k = 5.0
    C = cheb_transform_matrix(disc.Q)
    for q, piece in enumerate(disc.pieces):
        mid = piece.point(np.array([0.5]))[0]
        n = piece.normal(np.array([0.5]))[0]
        target = mid + n * disc.prox[q] * 1.05
        assert distance_to_piece(target, piece)[0] > disc.prox[q]
        psi = _smooth_psi(disc, q)
        for kern in ("single_layer", "double_layer"):
            far = quad.far_apply(disc, k, target, q, kern, psi)
            table, _ = quad.offsurface_weights(wide, k, target[None, :], (kern,))
            nv = quad.near_apply(table, table.entry(0, q), kern, C @ psi)
            assert abs(far - nv) <= 1e-9 * max(1.0, abs(nv))


def test_near_weights_against_direct_integration(small_disc):
    # single layer at a point very close to a piece, checked by adaptive GK on the parametrization
    disc = small_disc
    q = 2
    piece = disc.pieces[q]
    target = piece.point(np.array([0.37]))[0] + 1e-6 * piece.normal(np.array([0.37]))[0]
    k = 5.0
    table, near = quad.offsurface_weights(disc, k, target[None, :], ("single_layer",))
    e = table.entry(0, q)
    psi = _smooth_psi(disc, q)
    nv = quad.near_apply(table, e, "single_layer", cheb_transform_matrix(disc.Q) @ psi)

    def f(t):
        r = piece.point(t)
        d = np.hypot(*(target - r).T)
        dens = np.cos(2.0 * t) + 1j * t**2
        return green(k, d) * dens

    ref, _, ok = quad.gk_integrate(f, 0.0, 1.0, points=(0.37,))
    assert ok
    assert abs(nv - ref) <= 1e-11 * abs(ref)


def test_table_save_load_round_trip(tmp_path, small_disc, small_table):
    key = quad.table_key(small_disc, 5.0, small_table.kernels, quad.GkEngine())
    path = tmp_path / "w.bin"
    quad.save_table(path, small_table, key)
    back = quad.load_table(path, key)
    assert np.array_equal(back.beta, small_table.beta)
    assert np.array_equal(back.target, small_table.target)
    assert np.array_equal(back.src, small_table.src)
    assert back.kernels == small_table.kernels and back.k == small_table.k
    other = quad.table_key(small_disc, 6.0, small_table.kernels, quad.GkEngine())
    assert other != key
    with pytest.raises(ValueError):
        quad.load_table(path, other)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nope" + path.read_bytes()[4:])
    with pytest.raises(ValueError):
        quad.load_table(bad)
