"""Renormalized volume, expansion fitting, Bergman-ball closed forms and the
conformal anomaly of the renormalized volume."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .crgeom import BoundaryMesh, boundary_fields, build_mesh, integrate_boundary, solid_angle_directions
from .dsl import DomainSpec, ExprNode, eval_expression_jet, eval_expression_numpy, lit, parse_expression
from .expand import expansion_at

__all__ = [
    "VolumeExpansion",
    "AnomalyReport",
    "UnsupportedDomainError",
    "FitError",
    "ball_closed_forms",
    "volume_of_sublevel",
    "volume_samples",
    "fit_volume_expansion",
    "renormalized_volume",
    "conformal_anomaly",
    "anomaly_integrands",
    "lee_transform",
    "rescaled_spec",
    "validate_special_phi",
    "ball_exact_volume",
    "ball_profiles_numeric",
    "BALL_V",
]

BALL_V = 3 * math.pi**2 / 16


class UnsupportedDomainError(ValueError):
    pass


class FitError(ArithmeticError):
    pass


# -- Bergman ball closed forms ------------------------------------------

def ball_closed_forms(query: str, x):
    """Exact ball profiles.

    ``phi`` takes R in (0, 1]; ``htilde``, ``r``, ``s`` and ``dv`` take phi in (-4, 0].
    ``dv`` is the phi-density of the Bergman volume per unit solid angle,
    phi^-3 (-1/2 - phi/4 + phi^3/64 + phi^4/512).
    """
    x = np.asarray(x, dtype=float)
    if query == "phi":
        if np.any((x <= 0) | (x > 1)):
            raise ValueError("R must lie in (0, 1]")
        out = 4 * (x - 1) / (x + 1)
    else:
        if np.any((x <= -4) | (x > 0)):
            raise ValueError("phi must lie in (-4, 0]")
        if query == "htilde":
            out = (4 + x) / (4 - x)
        elif query == "r":
            out = 2 * x / (x**2 - 16)
        elif query == "s":
            out = (x**2 - 16) ** 2 / 256
        elif query == "dv":
            if np.any(x == 0):
                raise ValueError("dv profile is singular at phi = 0")
            out = x**-3 * (-0.5 - x / 4 + x**3 / 64 + x**4 / 512)
        else:
            raise ValueError(f"unknown ball quantity {query!r}")
    return float(out) if out.ndim == 0 else out


def ball_exact_volume(eps):
    """Bergman volume of {phi < eps} on the unit ball."""
    eps = np.asarray(eps, dtype=float)

    def F(p):
        return p**-2 / 4 + p**-1 / 4 + p / 64 + p**2 / 1024

    return 2 * math.pi**2 * (F(eps) - F(-4.0))


def ball_profiles_numeric(spec: DomainSpec, phi, n_quad: int = 16, n_panels: int = 12,
                          direction=(0.6, 0.8j)) -> dict:
    """h-tilde, r and s at levels ``phi`` computed from the geometry of a
    radially symmetric domain, independently of the closed forms.

    r is read off the special-phi frame, s solves N s = 2 r s with s = 1 on M
    (composite Gauss-Legendre in phi), and h-tilde follows from the volume form
    F^*(dv) = -(1/4) h-tilde s phi^-3 d phi ^ theta ^ d theta, whose left side is
    det g R^3 (dR/dphi) d phi d sigma with theta ^ d theta = 2 d sigma.
    """
    from .crgeom import boundary_point_radial, frame_at

    if spec.special_phi is None:
        raise UnsupportedDomainError(f"{spec.name} has no special_phi")
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if np.any(phi >= 0):
        raise ValueError("levels must be negative")
    uz = np.array([direction[0]], dtype=complex)
    uw = np.array([direction[1]], dtype=complex)
    norm = math.sqrt(abs(uz[0]) ** 2 + abs(uw[0]) ** 2)
    uz, uw = uz / norm, uw / norm
    t0 = boundary_point_radial(spec, uz, uw)

    def phi_fn(z, w):
        return eval_expression_numpy(spec.special_phi, z, w, spec.params).real

    def radius(levels):
        levels = np.asarray(levels, dtype=float)
        n = levels.size
        return _ray_root(phi_fn, np.repeat(uz, n), np.repeat(uw, n), np.zeros(n), np.repeat(t0, n), levels)

    def r_at(t):
        f = frame_at(spec, t * uz[0], t * uw[0], use_special_phi=True, order=2)
        return f.r.value.real

    x, wx = np.polynomial.legendre.leggauss(n_quad)
    r_out = r_at(radius(phi))
    s_out = np.empty_like(phi)
    for k, p in enumerate(phi):
        # panels graded geometrically toward the lower limit, where r may blow up
        ends = np.concatenate([[0.0], p * (1 - 0.5 ** np.arange(1, n_panels)), [p]])
        total = 0.0
        for a, b in zip(ends[:-1], ends[1:]):
            nodes = a + 0.5 * (b - a) * (x + 1)
            total += float(np.sum(0.5 * (b - a) * wx * 2 * r_at(radius(nodes))))
        s_out[k] = math.exp(total)
    R = radius(phi)
    pj = eval_expression_jet(spec.special_phi, (R * uz[0], R * uw[0]), 1, spec.params)
    dphi_dR = 2 * np.real(pj.coeff((1, 0, 0, 0)) * uz[0] + pj.coeff((0, 0, 1, 0)) * uw[0])
    detg = _bergman_density(spec, R * uz[0], R * uw[0])
    h = -2 * phi**3 * detg * R**3 / (dphi_dR * s_out)
    return {"phi": phi, "R": R, "htilde": h, "r": r_out, "s": s_out}


# -- sublevel volumes -----------------------------------------------------

def _bergman_density(spec: DomainSpec, z, w):
    """det(ddbar log(-1/rho)) from the 2-jet of rho."""
    j = eval_expression_jet(spec.rho, (z, w), 2, spec.params)
    r = j.value.real
    r1 = (j.coeff((1, 0, 0, 0)), j.coeff((0, 0, 1, 0)))
    rb = (j.coeff((0, 1, 0, 0)), j.coeff((0, 0, 0, 1)))
    H = ((j.coeff((1, 1, 0, 0)), j.coeff((1, 0, 0, 1))),
         (j.coeff((0, 1, 1, 0)), j.coeff((0, 0, 1, 1))))
    g = [[-H[a][b] / r + r1[a] * rb[b] / r**2 for b in range(2)] for a in range(2)]
    return (g[0][0] * g[1][1] - g[0][1] * g[1][0]).real


def _ray_root(fn, uz, uw, lo, hi, target, iters=100):
    """Bisection for fn(t u) = target on [lo, hi] (fn increasing along rays)."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = fn(mid * uz, mid * uw) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 4e-16 * hi):
            break
    return 0.5 * (lo + hi)


def volume_of_sublevel(spec: DomainSpec, eps: float | Sequence[float], resolution: Optional[Sequence[int]] = None,
                       n_radial: int = 48, chunk: int = 4096):
    """Bergman-type volume of {phi < eps} by Hopf directions x radial Gauss-Legendre.

    The radial variable is y = -log(1 - t/t0) with t0 the boundary radius,
    which absorbs the (t0 - t)^-3 growth of the volume density.
    """
    if spec.special_phi is None:
        raise UnsupportedDomainError(
            f"{spec.name}: sublevel volumes need a global special defining function; supply special_phi"
        )
    scalar = np.ndim(eps) == 0
    eps_arr = np.atleast_1d(np.asarray(eps, dtype=float))
    if np.any(eps_arr >= 0):
        raise ValueError("eps must be negative")
    resolution = tuple(spec.mesh_resolution if resolution is None else resolution)
    from .crgeom import boundary_point_radial

    uz, uw, wts = solid_angle_directions(resolution)
    x, wx = np.polynomial.legendre.leggauss(n_radial)

    def phi_fn(z, w):
        return eval_expression_numpy(spec.special_phi, z, w, spec.params).real

    # Sorted levels are integrated shell by shell: [0, t(eps_0)], [t(eps_0), t(eps_1)], ...
    order = np.argsort(eps_arr)
    phi0 = float(phi_fn(0.0, 0.0))
    xs, wxs = np.polynomial.legendre.leggauss(max(8, n_radial // 3))
    totals = np.zeros(len(eps_arr))
    for s in range(0, len(uz), chunk):
        cz, cw, cwt = uz[s:s + chunk], uw[s:s + chunk], wts[s:s + chunk]
        t0 = boundary_point_radial(spec, cz, cw)
        y_prev = np.zeros_like(t0)
        acc = np.zeros_like(t0)
        for n_shell, k in enumerate(order):
            e = eps_arr[k]
            if e <= phi0:
                continue
            te = _ray_root(phi_fn, cz, cw, np.zeros_like(t0), t0, e)
            ye = -np.log1p(-te / t0)
            nodes, nw = (x, wx) if n_shell == 0 else (xs, wxs)
            h = 0.5 * (ye - y_prev)
            y = y_prev[None, :] + h[None, :] * (nodes[:, None] + 1)
            wy = h[None, :] * nw[:, None]
            t = t0[None, :] * (-np.expm1(-y))
            dtdy = t0[None, :] * np.exp(-y)
            dens = _bergman_density(spec, t * cz[None, :], t * cw[None, :])
            acc = acc + np.sum(wy * dens * t**3 * dtdy, axis=0)
            y_prev = ye
            totals[k] += np.sum(cwt * acc)
    return float(totals[0]) if scalar else totals


def volume_samples(spec: DomainSpec, window=(-0.5, -0.05), n: int = 24, **kw):
    """Log-spaced eps samples in ``window`` with their sublevel volumes."""
    a, b = sorted(window)
    if b >= 0:
        raise ValueError("eps window must be negative")
    eps = -np.geomspace(-a, -b, n)
    return eps, volume_of_sublevel(spec, eps, **kw)


# -- expansion fit --------------------------------------------------------

@dataclass
class VolumeExpansion:
    c0: float
    c1: float
    L: float
    V: float
    fit_residual: float
    epsilon_range: tuple
    L_uncertainty: Optional[float] = None
    V_uncertainty: Optional[float] = None
    condition: float = float("nan")
    extra: dict = field(default_factory=dict)


FIT_POWERS_EXTRA = (1, 2)


def _design(eps, extra_powers):
    cols = [eps**-2.0, eps**-1.0, np.log(-eps), np.ones_like(eps)]
    cols += [eps ** float(p) for p in extra_powers]
    return np.stack(cols, axis=1)


def _lstsq(eps, vol, extra_powers, max_cond):
    A = _design(eps, extra_powers)
    norms = np.linalg.norm(A, axis=0)
    Q, R = np.linalg.qr(A / norms)
    cond = float(np.linalg.cond(R))
    if not np.isfinite(cond) or cond > max_cond:
        raise FitError(f"volume fit ill-conditioned (condition number {cond:.3g})")
    coef = np.linalg.solve(R, Q.T @ vol) / norms
    resid = float(np.max(np.abs(A @ coef - vol)))
    return coef, resid, cond


def fit_volume_expansion(samples, extra_powers: Sequence[int] = FIT_POWERS_EXTRA,
                         max_cond: float = 1e12) -> VolumeExpansion:
    """Least-squares fit of Vol(eps) = c0/eps^2 + c1/eps + L log(-eps) + V + sum_k d_k eps^k.

    Columns are normalised and solved through QR.  When each half of the
    samples (sorted by eps) can support the fit on its own, the spread of L and
    V between the two disjoint windows is reported as their uncertainty.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FitError("samples must be (eps, volume) pairs")
    arr = arr[np.argsort(arr[:, 0])]
    eps, vol = arr[:, 0], arr[:, 1]
    if np.any(eps >= 0):
        raise FitError("eps samples must be negative")
    nb = 4 + len(extra_powers)
    if len(eps) < max(8, nb + 1):
        raise FitError(f"need at least {max(8, nb + 1)} samples, got {len(eps)}")
    coef, resid, cond = _lstsq(eps, vol, extra_powers, max_cond)
    out = VolumeExpansion(
        c0=float(coef[0]), c1=float(coef[1]), L=float(coef[2]), V=float(coef[3]),
        fit_residual=resid, epsilon_range=(float(eps[0]), float(eps[-1])), condition=cond,
    )
    half = len(eps) // 2
    if half >= nb + 2:
        parts = [_lstsq(eps[:half], vol[:half], extra_powers, max_cond * 1e3)[0],
                 _lstsq(eps[half:], vol[half:], extra_powers, max_cond * 1e3)[0]]
        out.L_uncertainty = float(abs(parts[0][2] - parts[1][2]))
        out.V_uncertainty = float(abs(parts[0][3] - parts[1][3]))
    return out


def renormalized_volume(spec: DomainSpec, window=(-0.5, -0.05), n: int = 24, **kw) -> VolumeExpansion:
    eps, vol = volume_samples(spec, window, n, **kw)
    return fit_volume_expansion(np.column_stack([eps, vol]))


# -- special phi validation ---------------------------------------------

def validate_special_phi(spec: DomainSpec, n_interior: int = 50, seed: int = 0, tol: float = 1e-8) -> dict:
    """Check the special defining function contract at sample points.

    Returns the maximum deviations of the boundary contact form
    ((i/2)(dbar phi - d phi) against the one of rho, compared through d phi = d rho on M)
    and of |d log(-phi)|^2 in the metric ddbar log(-1/rho) from 1 at interior points.
    """
    if spec.special_phi is None:
        raise UnsupportedDomainError(f"{spec.name} has no special_phi")
    from .crgeom import boundary_point_radial

    rng = np.random.default_rng(seed)
    eta = rng.uniform(0, np.pi / 2, n_interior)
    uz = np.cos(eta) * np.exp(1j * rng.uniform(0, 2 * np.pi, n_interior))
    uw = np.sin(eta) * np.exp(1j * rng.uniform(0, 2 * np.pi, n_interior))
    t0 = boundary_point_radial(spec, uz, uw)

    zb, wb = t0 * uz, t0 * uw
    pj = eval_expression_jet(spec.special_phi, (zb, wb), 1, spec.params)
    rj = eval_expression_jet(spec.rho, (zb, wb), 1, spec.params)
    idx = [(1, 0, 0, 0), (0, 0, 1, 0)]
    contact = max(float(np.max(np.abs(pj.coeff(i) - rj.coeff(i)))) for i in idx)
    phi_bd = float(np.max(np.abs(pj.value)))

    t = t0 * rng.uniform(0.05, 0.98, n_interior)
    z, w = t * uz, t * uw
    pj = eval_expression_jet(spec.special_phi, (z, w), 1, spec.params)
    rj = eval_expression_jet(spec.rho, (z, w), 2, spec.params)
    r = rj.value.real
    r1 = (rj.coeff((1, 0, 0, 0)), rj.coeff((0, 0, 1, 0)))
    rb = (rj.coeff((0, 1, 0, 0)), rj.coeff((0, 0, 0, 1)))
    H = ((rj.coeff((1, 1, 0, 0)), rj.coeff((1, 0, 0, 1))), (rj.coeff((0, 1, 1, 0)), rj.coeff((0, 0, 1, 1))))
    g = np.array([[-H[a][b] / r + r1[a] * rb[b] / r**2 for b in range(2)] for a in range(2)])
    g = np.moveaxis(g, -1, 0)
    ginv = np.linalg.inv(g)
    alpha = np.stack([pj.coeff((1, 0, 0, 0)), pj.coeff((0, 0, 1, 0))], axis=1) / pj.value[:, None]
    # |alpha|^2 = g^{j kbar} alpha_j conj(alpha_k); ginv[a, b] pairs with (k = a, j = b)
    norm = np.einsum("nkj,nj,nk->n", ginv, alpha, np.conj(alpha)).real
    out = {"contact_form": contact, "phi_on_boundary": phi_bd, "norm_deviation": float(np.max(np.abs(norm - 1)))}
    out["ok"] = all(v <= tol for v in out.values())
    return out


# -- Lee transform and anomaly --------------------------------------------

def lee_transform(table: dict, ups: dict) -> dict:
    """Scal and A_11 of e^{2 Upsilon} theta from theta-data and Upsilon derivatives.

    ``ups`` holds f, f_1, f_1bar, f_11 and lap_b of Upsilon in the theta frame.
    """
    u = np.real(ups["f"])
    g = np.real(ups["f_1"] * ups["f_1bar"])
    scal = np.exp(-2 * u) * (table["scal"] + 4 * np.real(ups["lap_b"]) - 8 * g)
    A = np.exp(-2 * u) * (table["A11"] + 2j * ups["f_11"] - 4j * ups["f_1"] ** 2)
    return {"scal": scal, "A11": A, "absA2": np.abs(A) ** 2}


def rescaled_spec(spec: DomainSpec, upsilon: ExprNode) -> DomainSpec:
    """Domain spec with rho replaced by e^{2 Upsilon} rho (contact form e^{2 Upsilon} theta)."""
    rho = ExprNode("mul", (ExprNode("exp", (ExprNode("mul", (lit(2.0), upsilon)),)), spec.rho))
    return DomainSpec(f"{spec.name}*e^(2U)", rho, None, spec.params, spec.mesh_resolution, spec.jet_order)


def anomaly_integrands(table: dict, ups: dict) -> dict:
    """Pointwise integrands of the three anomaly routes and f', f''."""
    scal = table["scal"]
    absA2 = table["absA2"]
    lin = table["lap_scal"] - 8 * table["imA_up"]
    A_up = np.conj(table["A11"])  # A^{11}
    u = np.real(ups["f"])
    u1, u1b = ups["f_1"], ups["f_1bar"]
    g = np.real(u1 * u1b)  # Upsilon_1 Upsilon^1
    uT = np.real(ups["f_T"])
    lap = np.real(ups["lap_b"])
    cross = np.real(ups["f_11"] * u1b * u1b)  # Re(Upsilon_11 Upsilon^1 Upsilon^1)
    imA = np.imag(u1 * u1 * A_up)  # Im(Upsilon_1 Upsilon_1 A^11)

    full = lin * u / 96 + scal * g / 16 - 0.25 * (g**2 + imA + uT**2 / 4 - 2 * cross + g * lap)

    eta1 = expansion_at(table).eta1
    f1 = g
    f2 = 0.5 * 2 * np.real(u1 * eta1) - g**2 - uT**2 / 4 - scal * g / 4 + 2 * cross - g * lap - imA
    via = f2 / 4 + scal * f1 / 8 + lin * u / 48
    linear = lin * u / 96
    return {"full": full, "via_f_expansion": via, "linearized": linear, "f_prime": f1, "f_dprime": f2}


@dataclass
class AnomalyReport:
    full: float
    via_f_expansion: float
    linearized: float
    f_prime_boundary: dict
    f_dprime_boundary: dict
    scale: float


def _summary(x):
    x = np.asarray(x, dtype=float)
    return {"min": float(np.min(x)), "max": float(np.max(x)), "mean": float(np.mean(x))}


def conformal_anomaly(spec: DomainSpec, upsilon, mesh: Optional[BoundaryMesh] = None,
                      table: Optional[dict] = None) -> AnomalyReport:
    """V_{e^{2U} theta} - V_theta by the three routes, integrated over M."""
    if isinstance(upsilon, str):
        upsilon = parse_expression(upsilon)
    mesh = build_mesh(spec) if mesh is None else mesh
    data = boundary_fields(spec, mesh.z, mesh.w, fields={"u": upsilon})
    ups = {k[2:]: v for k, v in data.items() if k.startswith("u.")}
    vals = anomaly_integrands(data if table is None else {**data, **table}, ups)
    ints = {k: integrate_boundary(mesh, vals[k]) for k in ("full", "via_f_expansion", "linearized")}
    scale = integrate_boundary(mesh, np.abs(vals["full"]) + np.abs(vals["via_f_expansion"]))
    return AnomalyReport(ints["full"], ints["via_f_expansion"], ints["linearized"],
                         _summary(vals["f_prime"]), _summary(vals["f_dprime"]), scale)
