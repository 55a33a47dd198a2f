"""Interior Kaehler curvature of the metric ddbar log(-1/rho) and the
renormalized Chern-Gauss-Bonnet ledger."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .crgeom import (
    BoundaryMesh,
    boundary_fields,
    boundary_point_radial,
    build_mesh,
    integrate_boundary,
    solid_angle_directions,
)
from .dsl import DomainSpec
from .jets import Jet

__all__ = [
    "A_CONST",
    "B_CONST",
    "CurvatureReport",
    "ChernGaussBonnetLedger",
    "MetricError",
    "kahler_jets",
    "metric_and_ricci",
    "einstein_residual",
    "chern_densities",
    "interior_integral",
    "renormalized_cgb",
    "s_theta",
    "top_coefficient",
]

A_CONST = -1.0 / (128 * math.pi**2)
B_CONST = 1.0 / (8 * math.pi**2)
_IDX = ((0, 1), (2, 3))  # (holomorphic, antiholomorphic) variable of z and w


class MetricError(ArithmeticError):
    pass


@dataclass
class CurvatureReport:
    det_g: np.ndarray
    einstein_residual: np.ndarray
    einstein_residual_rel: np.ndarray
    c1sq_density: Optional[np.ndarray] = None
    c2_density: Optional[np.ndarray] = None
    renorm_density: Optional[np.ndarray] = None


@dataclass
class KahlerJets:
    g: list  # g[j][k] = d_j d_kbar u, jets of order K-2
    logdet: Jet
    det: Jet


def kahler_jets(spec: DomainSpec, z, w, order: int = 4) -> KahlerJets:
    """Metric g_{j kbar} = d_j d_kbar log(-1/rho) as jets at interior points."""
    from .crgeom import ambient_variables

    v = ambient_variables(z, w, order)
    rho = spec.rho_jet(v)
    if np.any(rho.value.real >= 0):
        raise MetricError("point outside the domain (rho >= 0)")
    u = (-1.0 / rho).log()
    g = [[u.derivative(_IDX[j][0]).derivative(_IDX[k][1]) for k in range(2)] for j in range(2)]
    det = g[0][0] * g[1][1] - g[0][1] * g[1][0]
    if np.any(det.value.real <= 0):
        raise MetricError("metric not positive definite")
    return KahlerJets(g, det.log(), det)


def _ricci(kj: KahlerJets) -> list:
    L = kj.logdet
    return [[-L.derivative(_IDX[j][0]).derivative(_IDX[k][1]) for k in range(2)] for j in range(2)]


def metric_and_ricci(spec: DomainSpec, z, w, order: int = 4) -> dict:
    kj = kahler_jets(spec, z, w, order)
    ric = _ricci(kj)
    return {
        "g": np.array([[x.value for x in row] for row in kj.g]),
        "ricci": np.array([[x.value for x in row] for row in ric]),
        "det_g": kj.det.value.real,
        "jets": kj,
        "ricci_jets": ric,
    }


def einstein_residual(spec: DomainSpec, z, w, order: int = 4):
    """max_{j,k} |Ric_{j kbar} + 3 g_{j kbar}|, absolute and divided by max |g_{j kbar}|."""
    m = metric_and_ricci(spec, z, w, order)
    res = np.max(np.abs(m["ricci"] + 3 * m["g"]).reshape(4, -1), axis=0)
    gmax = np.max(np.abs(m["g"]).reshape(4, -1), axis=0)
    return res, res / gmax


def _inverse2(g):
    det = g[0][0] * g[1][1] - g[0][1] * g[1][0]
    inv = det.reciprocal()
    # ginv[k][j] pairs with g[j][k]: sum_k g_{j kbar} g^{kbar l} = delta
    return [[g[1][1] * inv, -g[0][1] * inv], [-g[1][0] * inv, g[0][0] * inv]]


def curvature_tensor(kj: KahlerJets):
    """Theta^a_{b, m lbar} = -d_lbar (g^{a cbar} d_m g_{b cbar}) at the base points."""
    g = kj.g
    gi = _inverse2(g)  # gi[c][a] = g^{a cbar}
    theta = np.empty((2, 2, 2, 2) + g[0][0].batch_shape, dtype=complex)
    for m in range(2):
        dg = [[g[b][c].derivative(_IDX[m][0]) for c in range(2)] for b in range(2)]
        for a in range(2):
            for b in range(2):
                conn = gi[0][a] * dg[b][0] + gi[1][a] * dg[b][1]
                for l in range(2):
                    theta[a, b, m, l] = -conn.derivative(_IDX[l][1]).value
    return theta


def top_coefficient(alpha, beta):
    """Coefficient of dz^dzbar^dw^dwbar in alpha ^ beta for (1,1)-forms with components [m][l]."""
    return (alpha[0][0] * beta[1][1] + alpha[1][1] * beta[0][0]
            - alpha[0][1] * beta[1][0] - alpha[1][0] * beta[0][1])


# dz^dzbar^dw^dwbar = (-2i)^2 dx1 dy1 dx2 dy2
_EU = -4.0


def chern_densities(spec: DomainSpec, z, w, order: int = 4) -> CurvatureReport:
    """Densities of c1^2, c2 and c2 - c1^2/3 against Euclidean volume.

    c1 = (i/2pi) tr Theta and c2 = (i/2pi)^2 (1/2)(tr Theta ^ tr Theta - tr(Theta ^ Theta)),
    the degree-2 part of det(I + (i/2pi) Theta).
    """
    kj = kahler_jets(spec, z, w, order)
    th = curvature_tensor(kj)
    tr = th[0, 0] + th[1, 1]
    k2 = (1j / (2 * np.pi)) ** 2
    trtr = top_coefficient(tr, tr)
    trTT = sum(top_coefficient(th[a, b], th[b, a]) for a in range(2) for b in range(2))
    c1sq = _EU * k2 * trtr
    c2 = _EU * k2 * 0.5 * (trtr - trTT)
    ric = _ricci(kj)
    R = np.array([[x.value for x in row] for row in ric])
    G = np.array([[x.value for x in row] for row in kj.g])
    res = np.max(np.abs(R + 3 * G).reshape(4, -1), axis=0)
    gmax = np.max(np.abs(G).reshape(4, -1), axis=0)
    return CurvatureReport(
        det_g=kj.det.value.real,
        einstein_residual=res,
        einstein_residual_rel=res / gmax,
        c1sq_density=c1sq.real,
        c2_density=c2.real,
        renorm_density=(c2 - c1sq / 3).real,
    )


def interior_integral(spec: DomainSpec, resolution=(8, 8, 8), n_radial: int = 32, cutoff: float = 1e-3,
                      chunk: int = 1024) -> dict:
    """Integral of c2 - c1^2/3 over {t < (1 - cutoff) t0} along rays, with a
    convergence estimate from the contribution of the outer tenfold cutoff band."""
    uz, uw, wts = solid_angle_directions(resolution)
    x, wx = np.polynomial.legendre.leggauss(n_radial)
    total = {cutoff: 0.0, cutoff * 10: 0.0}
    for s in range(0, len(uz), chunk):
        cz, cw, cwt = uz[s:s + chunk], uw[s:s + chunk], wts[s:s + chunk]
        t0 = boundary_point_radial(spec, cz, cw)
        for cut in total:
            ymax = -math.log(cut)
            y = 0.5 * ymax * (x + 1)
            wy = 0.5 * ymax * wx
            t = t0[None, :] * (-np.expm1(-y))[:, None]
            dtdy = t0[None, :] * np.exp(-y)[:, None]
            rep = chern_densities(spec, (t * cz).ravel(), (t * cw).ravel())
            dens = rep.renorm_density.reshape(t.shape)
            total[cut] += float(np.sum(cwt[None, :] * wy[:, None] * dens * t**3 * dtdy))
    value = total[cutoff]
    return {"value": value, "convergence": abs(value - total[cutoff * 10]), "cutoff": cutoff}


def s_theta(scal, absA2):
    """Non-divergence part of the boundary integrand, a Scal^2 + b |A|^2."""
    return A_CONST * np.asarray(scal) ** 2 + B_CONST * np.asarray(absA2)


@dataclass
class ChernGaussBonnetLedger:
    interior_integral: float
    interior_convergence: float
    V_used: float
    boundary_curvature_integral: float
    script_V: float
    chi_estimate: float
    a_const: float = A_CONST
    b_const: float = B_CONST


def renormalized_cgb(spec: DomainSpec, V: float, mesh: Optional[BoundaryMesh] = None,
                     interior_resolution=(8, 8, 8), n_radial: int = 32, cutoff: float = 1e-3,
                     table: Optional[dict] = None, tol: float = 1e-4) -> ChernGaussBonnetLedger:
    """Assemble int(c2 - c1^2/3), the invariant (1/pi^2)(6V - (1/128) int(Scal^2 - 16|A|^2)) and chi."""
    mesh = build_mesh(spec) if mesh is None else mesh
    table = boundary_fields(spec, mesh.z, mesh.w) if table is None else table
    bci = integrate_boundary(mesh, table["scal"] ** 2 - 16 * table["absA2"])
    inner = interior_integral(spec, interior_resolution, n_radial, cutoff)
    if inner["convergence"] > tol * max(1.0, abs(inner["value"])):
        raise MetricError(
            f"interior Chern integral not converged (change {inner['convergence']:.2e} across cutoffs)"
        )
    script_v = (6 * V - bci / 128) / math.pi**2
    return ChernGaussBonnetLedger(
        interior_integral=inner["value"],
        interior_convergence=inner["convergence"],
        V_used=float(V),
        boundary_curvature_integral=bci,
        script_V=script_v,
        chi_estimate=inner["value"] + script_v,
    )
