import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crvolume.jets import (
    Jet,
    JetDomainError,
    SingularJetError,
    TruncationError,
    monomials,
    nest_through_chart,
)


def vars_at(z, w, order, batch=None):
    base = np.array([z, np.conj(z), w, np.conj(w)], dtype=complex)
    return Jet.variables(base, order)


def test_monomial_count():
    assert len(monomials(4, 6)) == math.comb(10, 4) == 210
    assert monomials(4, 1)[0] == (0, 0, 0, 0)


def test_bilinear_and_monomial_partials():
    z, zb, w, wb = vars_at(0.5, 0.0, 2)
    assert np.isclose((z * zb).wirtinger_partial((1, 1, 0, 0)), 1)
    z, zb, w, wb = vars_at(0.3, 0.2, 3)
    assert np.isclose((z * z * zb).wirtinger_partial((2, 1, 0, 0)), 2)


def test_geometric_series():
    z, *_ = vars_at(0.0, 0.0, 5)
    f = 1 / (1 - z)
    for k in range(4):
        assert np.isclose(f.coeff((k, 0, 0, 0)), 1)


def test_log_sqrt_series():
    z, *_ = vars_at(0.0, 0.0, 4)
    lg = (1 + z).log()
    assert np.isclose(lg.wirtinger_partial((1, 0, 0, 0)), 1)
    assert np.isclose(lg.wirtinger_partial((2, 0, 0, 0)), -1)
    assert np.isclose((1 + z).sqrt().wirtinger_partial((1, 0, 0, 0)), 0.5)


def test_exp_log_round_trip():
    z, zb, w, wb = vars_at(0.2, -0.3j, 4)
    f = 2 + z + w * wb
    g = f.log().exp()
    assert np.max(np.abs(g.coeffs - f.coeffs)) <= 1e-12


def test_errors():
    z, zb, w, wb = vars_at(0.0, 0.0, 3)
    with pytest.raises(SingularJetError):
        1 / z
    with pytest.raises(JetDomainError, match="-1"):
        (z - 1).log()
    with pytest.raises(JetDomainError):
        (z - 1).sqrt()
    with pytest.raises(TruncationError):
        z.wirtinger_partial((2, 2, 0, 0))


def test_ball_partial():
    z, zb, w, wb = vars_at(0.6, 0.8, 2)
    rho = z * zb + w * wb - 1
    assert np.isclose(rho.value, 0)
    assert np.isclose(rho.wirtinger_partial((1, 0, 0, 0)), 0.6)


def test_mixed_partial_vs_finite_differences():
    # exp(Re z * Im w) = exp(x v); d_z d_zbar d_w d_wbar = (1/16) d_x^2 d_v^2 here.
    # The stencil runs in 30-digit arithmetic so that h^4 roundoff stays out.
    z0, w0 = 0.3 + 0.2j, -0.1 + 0.4j
    z, zb, w, wb = vars_at(z0, w0, 4)
    f = (((z + zb) / 2) * ((w - wb) / 2j)).exp()
    exact = f.wirtinger_partial((1, 1, 1, 1))

    mp.mp.dps = 30
    x0, v0 = mp.mpf(z0.real), mp.mpf(w0.imag)

    def fd(h):
        h = mp.mpf(h)
        tot = mp.mpf(0)
        for a, ca in ((-1, 1), (0, -2), (1, 1)):
            for b, cb in ((-1, 1), (0, -2), (1, 1)):
                tot += ca * cb * mp.exp((x0 + a * h) * (v0 + b * h))
        return tot / h**4 / 16

    rich = float((4 * fd("5e-4") - fd("1e-3")) / 3)
    assert abs(exact - rich) / abs(exact) <= 1e-6


def test_conjugate_swap():
    z, zb, w, wb = vars_at(0.3 + 0.4j, 0.1 - 0.5j, 4)
    assert np.allclose(z.conjugate_swap().coeffs, zb.coeffs)
    rho = z * zb + w * wb - 1 + 0.1 * (z * z * wb * wb + zb * zb * w * w)
    assert np.max(np.abs(rho.conjugate_swap().coeffs - rho.coeffs)) <= 1e-13
    f = (2 + z * w + 1j * zb).exp()
    assert np.array_equal(f.conjugate_swap().conjugate_swap().coeffs, f.coeffs)


def test_truncation_consistency():
    def build(order):
        z, zb, w, wb = vars_at(0.2 + 0.1j, 0.3j, order)
        return (1 + z * zb + w * wb).sqrt().log() / (2 + z * wb) + (z * w).exp()
    hi, lo = build(5), build(4)
    assert np.array_equal(hi.truncate(4).coeffs.shape, lo.coeffs.shape)
    assert np.max(np.abs(hi.truncate(4).coeffs - lo.coeffs)) <= 1e-14


coeffs = st.lists(
    st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False),
    min_size=70, max_size=70,
)


@settings(max_examples=30, deadline=None)
@given(coeffs, coeffs)
def test_leibniz_convolution(ca, cb):
    base = np.zeros(4, dtype=complex)
    a = Jet(np.array(ca), 4, base)
    b = Jet(np.array(cb), 4, base)
    p = a * b
    mons = monomials(4, 4)
    index = {m: k for k, m in enumerate(mons)}
    expect = np.zeros(70, dtype=complex)
    for i, mi in enumerate(mons):
        for j, mj in enumerate(mons):
            s = tuple(x + y for x, y in zip(mi, mj))
            if sum(s) <= 4:
                expect[index[s]] += ca[i] * cb[j]
    assert np.allclose(p.coeffs, expect, rtol=0, atol=1e-12)


def test_batched_matches_pointwise():
    zs = np.array([0.1, 0.2 + 0.3j, -0.4j])
    ws = np.array([0.5, -0.1j, 0.3])
    base = np.array([zs, zs.conj(), ws, ws.conj()])
    z, zb, w, wb = Jet.variables(base, 4)
    f = (1 + z * zb + 2 * w * wb).log() * z
    for k in range(3):
        zk, zbk, wk, wbk = vars_at(zs[k], ws[k], 4)
        g = (1 + zk * zbk + 2 * wk * wbk).log() * zk
        assert np.allclose(f.coeffs[:, k], g.coeffs, atol=1e-14)


def test_nest_circle():
    t = Jet.variables(np.zeros(1), 4)[0]
    z, zb, w, wb = vars_at(1.0, 0.0, 4)
    f = z * zb
    chart = [t.exp() * 0 + _cos(t), _cos(t), _sin(t), _sin(t)]
    g = nest_through_chart(f, chart)
    assert np.isclose(g.wirtinger_partial((2,)), -2)


def _cos(t):
    return ((1j * t).exp() + (-1j * t).exp()) / 2


def _sin(t):
    return ((1j * t).exp() - (-1j * t).exp()) / 2j


def test_nest_constant_curve():
    t = Jet.variables(np.zeros(1), 3)[0]
    z, zb, w, wb = vars_at(0.3, 0.4j, 3)
    f = (z * w + zb).exp()
    const = [t * 0 + v for v in (0.3, 0.3, 0.4j, -0.4j)]
    g = nest_through_chart(f, const)
    assert np.isclose(g.value, f.value)
    assert np.allclose(g.coeffs[1:], 0)


def test_nest_chain_rule_vs_fd():
    rng = np.random.default_rng(3)
    c = rng.normal(size=4) + 1j * rng.normal(size=4)
    s0 = np.array([0.2, -0.1])

    def curve(s1, s2):
        z = 0.3 + c[0] * s1 + c[1] * s2 * s1
        w = -0.2j + c[2] * s2 + c[3] * s1**2
        return z, w

    def func(z, w):
        return 1 / (2 + z * np.conj(z) + z * w) * np.exp(np.conj(w))

    p = Jet.variables(s0, 3)
    s1, s2 = p
    zc = 0.3 + c[0] * s1 + c[1] * s2 * s1
    wc = -0.2j + c[2] * s2 + c[3] * s1 * s1
    chart = [zc, zc.conjugate_swap(), wc, wc.conjugate_swap()]
    z, zb, w, wb = Jet.variables(np.array([zc.value, zb_ := np.conj(zc.value), wc.value, np.conj(wc.value)]), 3)
    f = 1 / (2 + z * zb + z * w) * wb.exp()
    g = nest_through_chart(f, chart)

    def fd(h):
        return (
            func(*curve(s0[0] + h, s0[1] + h)) - func(*curve(s0[0] + h, s0[1] - h))
            - func(*curve(s0[0] - h, s0[1] + h)) + func(*curve(s0[0] - h, s0[1] - h))
        ) / (4 * h * h)

    rich = (4 * fd(5e-4) - fd(1e-3)) / 3
    exact = g.wirtinger_partial((1, 1))
    assert abs(exact - rich) / abs(exact) <= 1e-6
