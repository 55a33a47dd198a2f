"""Acceptance suite: one printed PASS/FAIL line per criterion, then an assert.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed even
under output capture.
"""

import itertools
import math
import time

import mpmath as mp
import numpy as np
import pytest

from crvolume.cgb import chern_densities, einstein_residual, renormalized_cgb
from crvolume.crgeom import (
    boundary_fields,
    boundary_point_radial,
    build_mesh,
    covariant_derivs,
    integrate_boundary,
    webster_at,
)
from crvolume.dsl import ExprNode, builtin_domain, lit, parse_expression
from crvolume.expand import expansion_at, v_and_L
from crvolume.jets import Jet, monomials
from crvolume.renorm import (
    ball_closed_forms,
    ball_profiles_numeric,
    conformal_anomaly,
    lee_transform,
    renormalized_volume,
    rescaled_spec,
    validate_special_phi,
    volume_of_sublevel,
)

PI2 = math.pi**2
BALL = builtin_domain("unit_ball")
BUMP = builtin_domain("bumped_ball", 0.05, 2)


@pytest.fixture
def say(capsys):
    def _say(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return _say


def random_upsilon(rng, amp=0.3):
    terms = ["re(z)", "im(w)", "abs2(z)", "re(z*w)", "im(z*conj(w))", "re(w*w)", "abs2(z)*abs2(w)"]
    c = rng.uniform(-amp, amp, len(terms))
    return parse_expression(" + ".join(f"({float(ci)!r})*{t}" for ci, t in zip(c, terms)))


def ball_points(n, seed, rmax=0.95):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, 4))
    v /= np.linalg.norm(v, axis=1)[:, None]
    r = rmax * rng.uniform(0.02, 1, n) ** 0.25
    return r * (v[:, 0] + 1j * v[:, 1]), r * (v[:, 2] + 1j * v[:, 3])


def test_criterion_01_ball_invariants(say):
    mesh = build_mesh(BALL, (5, 5, 5))
    t = boundary_fields(BALL, mesh.z, mesh.w)
    ds = float(np.max(np.abs(t["scal"] - 2)))
    da = float(np.max(np.abs(t["A11"])))
    ok = mesh.size >= 100 and ds <= 1e-8 and da <= 1e-8
    assert say(1, ok, f"{mesh.size} points: max|Scal-2|={ds:.1e}, max|A11|={da:.1e} (tol 1e-8)")


def test_criterion_02_special_phi_contract(say):
    out = validate_special_phi(BALL, n_interior=50)
    ok = out["contact_form"] <= 1e-8 and out["phi_on_boundary"] <= 1e-8 and out["norm_deviation"] <= 1e-8
    assert say(2, ok, f"contact-form mismatch={out['contact_form']:.1e}, phi|M={out['phi_on_boundary']:.1e}, "
                      f"max||d log(-phi)|^2-1| over 50 interior points={out['norm_deviation']:.1e} (tol 1e-8)")


def test_criterion_03_expansion_coefficients(say):
    mesh = build_mesh(BALL, (5, 5, 5))
    e = expansion_at(boundary_fields(BALL, mesh.z, mesh.w))
    errs = [float(np.max(np.abs(e.hprime - 0.5))), float(np.max(np.abs(e.hdprime - 0.25))),
            float(np.max(np.abs(e.rprime + 0.125)))]
    phi = np.linspace(-3.9, -0.01, 12)
    prof = ball_profiles_numeric(BALL, phi)
    perr = {q: float(np.max(np.abs(prof[q] - ball_closed_forms(q, phi)))) for q in ("htilde", "r", "s")}
    ok = max(errs) <= 1e-8 and max(perr.values()) <= 1e-10
    assert say(3, ok, f"h'/h''/r' errors {errs[0]:.1e}/{errs[1]:.1e}/{errs[2]:.1e} (tol 1e-8); pointwise "
                      f"htilde/r/s vs closed forms {perr['htilde']:.1e}/{perr['r']:.1e}/{perr['s']:.1e} (tol 1e-10)")


def test_criterion_04_volume_renormalization(say):
    t0 = time.perf_counter()
    fit = renormalized_volume(BALL.with_mesh((64, 64, 64)))
    elapsed = time.perf_counter() - t0
    dc0 = abs(fit.c0 / (PI2 / 2) - 1)
    dc1 = abs(fit.c1 / (PI2 / 2) - 1)
    dV = abs(fit.V - 1.850554)
    ok = dV <= 1e-4 and abs(fit.L) <= 1e-5 and dc0 <= 1e-4 and dc1 <= 1e-4 and elapsed <= 600
    assert say(4, ok, f"64^3 mesh in {elapsed:.0f} s: V={fit.V:.10f} (|V-1.850554|={dV:.1e}, "
                      f"|V-3pi^2/16|={abs(fit.V - 3 * PI2 / 16):.1e}), L={fit.L:.1e}, "
                      f"c0,c1 rel err {dc0:.1e},{dc1:.1e}")


def test_criterion_05_spot_volume(say):
    v = volume_of_sublevel(BALL, -1.0, (16, 16, 16))
    err = abs(v - 81 * PI2 / 512)
    assert say(5, err <= 1e-6, f"Vol(phi<-1)={v:.12f}, |error|={err:.1e} (tol 1e-6)")


def test_criterion_06_L_vanishes_beyond_ball(say):
    out = v_and_L(BUMP, build_mesh(BUMP, (16, 16, 16)))
    ratio = abs(out["L"]) / out["L_abs_scale"]
    assert say(6, ratio <= 1e-4, f"bumped_ball(0.05,2) 16^3: L={out['L']:.2e}, absolute-integrand "
                                 f"integral={out['L_abs_scale']:.3f}, ratio={ratio:.1e} (tol 1e-4)")


def test_criterion_07_anomaly_consistency(say):
    mesh = build_mesh(BALL, (8, 8, 8))
    rng = np.random.default_rng(2024)
    route, lin_err = [], []
    h = 1e-3
    for _ in range(10):
        ups = random_upsilon(rng)
        a = conformal_anomaly(BALL, ups, mesh)
        route.append(abs(a.full - a.via_f_expansion) / abs(a.full))
        fp = conformal_anomaly(BALL, ExprNode("mul", (lit(h), ups)), mesh).full
        fm = conformal_anomaly(BALL, ExprNode("mul", (lit(-h), ups)), mesh).full
        lin_err.append(abs((fp - fm) / (2 * h) - a.linearized))
    const = max(abs(conformal_anomaly(BALL, c, mesh).full) for c in ("0.5", "-1.2", "2"))
    ok = max(route) <= 1e-6 and max(lin_err) <= 1e-5 and const <= 1e-10
    assert say(7, ok, f"10 random Upsilon: max route rel diff={max(route):.1e} (tol 1e-6), "
                      f"max |central FD - linearized|={max(lin_err):.1e} (tol 1e-5), constant={const:.1e} (tol 1e-10)")


def test_criterion_08_lee_covariance(say):
    rng = np.random.default_rng(8)
    mesh = build_mesh(BUMP, (3, 3, 3))
    worst = 0.0
    for _ in range(5):
        ups = random_upsilon(rng)
        t = boundary_fields(BUMP, mesh.z, mesh.w, fields={"u": ups})
        pred = lee_transform(t, {k[2:]: v for k, v in t.items() if k.startswith("u.")})
        got = webster_at(rescaled_spec(BUMP, ups), mesh.z, mesh.w)
        worst = max(worst, float(np.max(np.abs(got.scal.value.real - pred["scal"]))),
                    float(np.max(np.abs(got.A11.value - pred["A11"]))))
    assert say(8, worst <= 1e-6, f"5 random Upsilon on bumped_ball: max |Scal, A11 deviation|={worst:.1e} (tol 1e-6)")


def test_criterion_09_chern_gauss_bonnet(say):
    z, w = ball_points(40, seed=9)
    rep = chern_densities(BALL, z, w)
    pw = float(np.max(np.abs(rep.renorm_density)))
    fit = renormalized_volume(BALL, resolution=(8, 8, 8))
    led = renormalized_cgb(BALL, fit.V, build_mesh(BALL, (16, 16, 16)))
    mu = -1.0  # Burns-Epstein invariant of the sphere
    ok = (pw <= 1e-8 and abs(led.interior_integral) <= 1e-6 and abs(led.script_V - 1) <= 1e-6
          and abs(led.chi_estimate - 1) <= 2e-4 and abs(led.script_V + mu) <= 1e-6)
    assert say(9, ok, f"pointwise |c2-c1^2/3|<={pw:.1e}, interior={led.interior_integral:.1e} "
                      f"(+-{led.interior_convergence:.0e}), script V={led.script_V:.10f}, "
                      f"chi={led.chi_estimate:.10f}, script V + mu(S)={led.script_V + mu:.1e}")


def test_criterion_10_einstein_residual(say):
    z, w = ball_points(40, seed=10)
    res, _ = einstein_residual(BALL, z, w)
    uz, uw = np.array([0.6 + 0.2j]), np.array([0.5 - 0.59j])
    n = np.sqrt(abs(uz) ** 2 + abs(uw) ** 2)
    uz, uw = uz / n, uw / n
    d = 0.04 / 2.0 ** np.arange(5)
    t = boundary_point_radial(BUMP, uz, uw)[0] - d
    _, rel = einstein_residual(BUMP, t * uz[0], t * uw[0])
    slopes = np.diff(np.log(rel)) / np.diff(np.log(d))
    order = 2 * slopes[-1] - slopes[-2]  # Richardson on the local slopes
    ok = float(np.max(res)) <= 1e-10 and order >= 2 - 0.02
    assert say(10, ok, f"ball max|Ric+3 omega|={np.max(res):.1e} (tol 1e-10); bumped local slopes "
                       f"{', '.join(f'{s:.3f}' for s in slopes)}, extrapolated order {order:.3f} (need >= 2)")


def test_criterion_11_divergence_formula(say):
    mesh = build_mesh(BUMP, (12, 12, 12))
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        c = rng.normal(size=5).tolist()
        f = parse_expression(
            f"{c[0]!r}*re(z*w) + {c[1]!r}*im(z)^2 + {c[2]!r}*exp(re(w)) + {c[3]!r}*abs2(z)*re(w)"
            f" + {c[4]!r}*log(2 + abs2(z))"
        )
        d = covariant_derivs(BUMP, mesh.z, mesh.w, f)
        total = abs(integrate_boundary(mesh, d["lap_b"].real))
        worst = max(worst, total / integrate_boundary(mesh, np.abs(d["lap_b"])))
    assert say(11, worst <= 1e-6, f"20 random fields on bumped_ball 12^3: max |int lap_b f| / int |lap_b f| "
                                  f"= {worst:.1e} (mesh tolerance 1e-6)")


# -- jet engine vs finite differences ---------------------------------------------

BATTERY = {
    "exp(z wbar) log(2+|z|^2+|w|^2)": lambda z, zb, w, wb, o: o.exp(z * wb) * o.log(2 + z * zb + w * wb),
    "sqrt(1+|z|^2+0.3 Re(2zw))": lambda z, zb, w, wb, o: o.sqrt(1 + z * zb + 0.3 * (z * w + zb * wb)),
    "exp(Re z Im w)/(3-|z|^2-|w|^2)": lambda z, zb, w, wb, o: o.exp((z + zb) * (w - wb) / 4j) / (3 - z * zb - w * wb),
    "exp(z^2+wbar) sqrt(2+zbar w+z wbar)": lambda z, zb, w, wb, o: o.exp(z * z + wb) * o.sqrt(2 + zb * w + z * wb),
}


class _JetOps:
    exp = staticmethod(lambda x: x.exp())
    log = staticmethod(lambda x: x.log())
    sqrt = staticmethod(lambda x: x.sqrt())


class _MpOps:
    exp = staticmethod(mp.exp)
    log = staticmethod(mp.log)
    sqrt = staticmethod(mp.sqrt)


# second-order central stencils for d^n/dx^n, offsets -2..2
_STENCIL = {0: {0: 1}, 1: {-1: -0.5, 1: 0.5}, 2: {-1: 1, 0: -2, 1: 1},
            3: {-2: -0.5, -1: 1, 1: -1, 2: 0.5}, 4: {-2: 1, -1: -4, 0: 6, 1: -4, 2: 1}}


def _real_partials(f, x0, h):
    """All partials of f: R^4 -> C with total order <= 4 by tensor stencils (mpmath)."""
    h = mp.mpf(h)
    cache = {}

    def val(off):
        if off not in cache:
            x = [x0[i] + off[i] * h for i in range(4)]
            z, w = mp.mpc(x[0], x[1]), mp.mpc(x[2], x[3])
            cache[off] = f(z, mp.conj(z), w, mp.conj(w), _MpOps)
        return cache[off]

    out = {}
    for alpha in itertools.product(range(5), repeat=4):
        if sum(alpha) > 4:
            continue
        tot = mp.mpc(0)
        for offs in itertools.product(*[_STENCIL[a].items() for a in alpha]):
            coef = mp.mpf(1)
            for _, c in offs:
                coef *= c
            tot += coef * val(tuple(o for o, _ in offs))
        out[alpha] = tot / h ** sum(alpha)
    return out


def _wirtinger_from_real(real, idx):
    """d_z^a d_zbar^b d_w^c d_wbar^d from real partials in (x1, y1, x2, y2)."""
    # d_z = (d_x - i d_y)/2, d_zbar = (d_x + i d_y)/2; expand as polynomials in (d_x, d_y)
    def expand(a, b):
        poly = {(0, 0): mp.mpc(1)}
        for sgn, k in ((-1, a), (1, b)):
            for _ in range(k):
                new = {}
                for (p, q), c in poly.items():
                    new[(p + 1, q)] = new.get((p + 1, q), 0) + c / 2
                    new[(p, q + 1)] = new.get((p, q + 1), 0) + c * sgn * 1j / 2
                poly = new
        return poly

    pz, pw = expand(idx[0], idx[1]), expand(idx[2], idx[3])
    return sum(cz * cw * real[(p, q, r, s)] for (p, q), cz in pz.items() for (r, s), cw in pw.items())


def test_criterion_12_jet_engine(say):
    mp.mp.dps = 30
    z0, w0 = 0.31 + 0.17j, -0.12 + 0.41j
    x0 = [mp.mpf(z0.real), mp.mpf(z0.imag), mp.mpf(w0.real), mp.mpf(w0.imag)]
    worst, count = 0.0, 0
    for name, f in BATTERY.items():
        vars4 = Jet.variables(np.array([z0, np.conj(z0), w0, np.conj(w0)]), 4)
        jet = f(*vars4, _JetOps)
        r1, r2 = _real_partials(f, x0, "1e-3"), _real_partials(f, x0, "5e-4")
        for idx in monomials(4, 4):
            fd1, fd2 = _wirtinger_from_real(r1, idx), _wirtinger_from_real(r2, idx)
            oracle = complex((4 * fd2 - fd1) / 3)
            exact = complex(jet.wirtinger_partial(idx))
            scale = max(abs(exact), 1e-3)
            worst = max(worst, abs(exact - oracle) / scale)
            count += 1
    assert say(12, worst <= 1e-6, f"{count} Wirtinger partials (order <= 4, {len(BATTERY)} transcendental "
                                  f"functions) vs 30-digit FD: max rel err={worst:.1e} (tol 1e-6)")
