import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cornerbie import specfun as sf

# mpmath (50 digits) values of H0^(1), H1^(1)
HANKEL = [
    (1e-10, 1.0 - 14.732516272697242043j, 5.0e-11 - 6366197723.6758134315j),
    (1e-3, 0.999999750000015625 - 4.471416611375923269j, 0.00049999993750000260417 - 636.62216723113942807j),
    (0.1, 0.99750156206604003228 - 1.5342386513503668441j, 0.049937526036241997556 - 6.4589510947020269877j),
    (1.0, 0.76519768655796655145 + 0.088256964215676957983j, 0.44005058574493351596 - 0.78121282130028871655j),
    (2.5, -0.048383776468197996327 + 0.49807035961523188783j, 0.49709410246427403801 + 0.14591813796678579888j),
    (7.3, 0.28821694763501438437 + 0.062773886374037648286j, 0.08257043049325788024 - 0.28459437186807209037j),
    (24.9, 0.083245968353015681694 - 0.13649918399676511316j, -0.13485569953140874334 - 0.086002557595554441547j),
    (25.1, 0.10827567149994928907 - 0.11676770763803710441j, -0.11463478413442272782 - 0.11062223322783082844j),
    (60.0, -0.091471804089061869531 + 0.047358952209449399203j, 0.046598383758166317869 + 0.091869609369866895264j),
    (250.0, -0.026053373425204233664 - 0.043216845440366267701j,
     -0.043269038410330749511 + 0.025966992185484582261j),
    (1e4, -0.0070961603533888014773 + 0.0036478055589866058867j,
     0.0036474507555295803441 + 0.007096342752536495135j),
]

# mpmath values of K0, K1
MODK = [
    (1e-10, 23.141782445598869289, 9999999999.9999999988),
    (1e-3, 7.0236888005623813436, 999.99623815608557428),
    (0.1, 2.4270690247020166125, 9.8538447808706061348),
    (1.0, 0.42102443824070833334, 0.60190723019723457474),
    (2.5, 0.062347553200366186029, 0.073890816347747063649),
    (7.3, 0.00030836221306093174528, 0.00032884199678432625429),
    (30.0, 2.1324774964630563712e-14, 2.1677320018915494249e-14),
    (200.0, 1.2256819797765334517e-88, 1.228742373472985812e-88),
    (700.0, 4.669776431685376881e-306, 4.6731107967079661091e-306),
]


@pytest.mark.parametrize("x,h0,h1", HANKEL)
def test_hankel_against_mpmath(x, h0, h1):
    assert abs(sf.hankel1_0(x) - h0) <= 1e-13 * abs(h0)
    assert abs(sf.hankel1_1(x) - h1) <= 1e-13 * abs(h1)


@pytest.mark.parametrize("x,k0,k1", MODK)
def test_modified_bessel_against_mpmath(x, k0, k1):
    assert abs(sf.mod_bessel_k0(x) - k0) <= 1e-13 * k0
    assert abs(sf.mod_bessel_k1(x) - k1) <= 1e-13 * k1


def test_hankel_small_argument_limits():
    x = 1e-10
    # H0 ~ 1 + (2i/pi)(log(x/2) + gamma), H1 ~ x/2 - 2i/(pi x)
    h0 = 1.0 + 2j / np.pi * (np.log(x / 2) + np.euler_gamma)
    assert abs(sf.hankel1_0(x) - h0) < 1e-12 * abs(h0)
    assert abs(sf.hankel1_1(x).imag + 2 / (np.pi * x)) < 1e-12 * 2 / (np.pi * x)


def test_array_shapes_preserved():
    x = np.linspace(0.5, 40.0, 12).reshape(3, 4)
    for fn in (sf.hankel1_0, sf.hankel1_1, sf.mod_bessel_k0, sf.mod_bessel_k1):
        assert fn(x).shape == (3, 4)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, np.inf])
def test_domain_errors(bad):
    for fn in (sf.hankel1_0, sf.hankel1_1, sf.mod_bessel_k0, sf.mod_bessel_k1):
        with pytest.raises(sf.DomainError):
            fn(bad)
    with pytest.raises(sf.DomainError):
        sf.hankel1_0(np.array([1.0, bad]))


def test_asymptotic_switch_is_continuous():
    x = sf.ASYMPTOTIC_SWITCH
    lo, hi = np.nextafter(x, 0.0), np.nextafter(x, np.inf)
    for fn in (sf.hankel1_0, sf.hankel1_1):
        assert abs(fn(lo) - fn(hi)) < 1e-14


log_x = st.floats(min_value=-3.0, max_value=3.0)


@given(log_x)
def test_wronskian_jy(t):
    x = 10.0**t
    w = sf.bessel_j0(x) * sf.bessel_y1(x) - sf.bessel_j1(x) * sf.bessel_y0(x)
    ref = -2.0 / (np.pi * x)
    assert abs(w - ref) <= 1e-12 * abs(ref)


@given(log_x)
def test_wronskian_hankel(t):
    # H0 conj(H1) - conj(H0) H1 = 4i / (pi x) for real x
    x = 10.0**t
    h0, h1 = sf.hankel1_0(x), sf.hankel1_1(x)
    w = h0 * np.conj(h1) - np.conj(h0) * h1
    ref = 4j / (np.pi * x)
    assert abs(w - ref) <= 1e-12 * abs(ref)


@given(st.floats(min_value=-3.0, max_value=np.log10(50.0)))
def test_green_consistency_imaginary_argument(t):
    # (i/4) H0(i x) = K0(x) / (2 pi); mpmath supplies H0 at imaginary argument
    import mpmath

    x = 10.0**t
    with mpmath.workdps(60):
        lhs = complex(0.25j * mpmath.hankel1(0, 1j * mpmath.mpf(x)))
    rhs = sf.mod_bessel_k0(x) / (2.0 * np.pi)
    assert abs(lhs - rhs) <= 1e-12 * abs(rhs)


@given(st.floats(min_value=-3.0, max_value=np.log10(50.0)))
def test_modified_wronskian(t):
    # I0 K1 + I1 K0 = 1 / x
    from scipy.special import i0, i1

    x = 10.0**t
    w = i0(x) * sf.mod_bessel_k1(x) + i1(x) * sf.mod_bessel_k0(x)
    assert abs(w - 1.0 / x) <= 1e-12 / x


@given(st.floats(min_value=0.2, max_value=200.0))
def test_hankel_derivative_identity(x):
    h = 1e-5 * max(1.0, x) ** 0.5
    fd = (sf.hankel1_0(x + h) - sf.hankel1_0(x - h)) / (2 * h)
    assert abs(fd + sf.hankel1_1(x)) <= 1e-7 * max(1.0, abs(sf.hankel1_1(x)))
