"""Boundary expansion of the approximately Einstein metric in two complex dimensions.

With the normalised frame (h = 1) the coefficients of the expansion in the
special defining function are local in Scal, A_11 and their covariant
derivatives.  All functions accept scalars or arrays of point values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .crgeom import BoundaryMesh, boundary_fields, build_mesh, integrate_boundary
from .dsl import DomainSpec

__all__ = [
    "ExpansionData",
    "ExpansionContractError",
    "expansion_at",
    "metric_profile",
    "v_and_L",
    "predicted_c",
    "REQUIRED_KEYS",
]

REQUIRED_KEYS = ("scal", "absA2", "lap_scal", "imA_up", "scal_1bar", "divA")


class ExpansionContractError(ValueError):
    pass


@dataclass(frozen=True)
class ExpansionData:
    hprime: np.ndarray
    hdprime: np.ndarray
    rprime: np.ndarray
    eta1: np.ndarray
    v: tuple
    s2: np.ndarray


def expansion_at(table: Mapping[str, np.ndarray], h_tol: float = 1e-8) -> ExpansionData:
    """Expansion coefficients from a table of boundary invariants.

    ``table`` needs Scal, |A|^2, Delta_b Scal, Im A_{11,}^{11}, Scal^1 (which is
    Scal_{1bar} for h = 1) and the torsion divergence A^1_{1bar,}^{1bar}.
    """
    missing = [k for k in REQUIRED_KEYS if k not in table]
    if missing:
        raise ExpansionContractError(f"derived table lacks {', '.join(missing)}")
    if "h" in table and np.max(np.abs(np.asarray(table["h"]) - 1)) > h_tol:
        raise ExpansionContractError("frame is not normalised (h != 1)")
    scal = np.asarray(table["scal"], dtype=float)
    absA2 = np.asarray(table["absA2"], dtype=float)
    lap = np.asarray(table["lap_scal"], dtype=float)
    imA = np.asarray(table["imA_up"], dtype=float)

    hprime = scal / 4
    hdprime = scal**2 / 16 - absA2
    rprime = 0.5 * (-(5 / 3) * hdprime + scal**2 / 24 - (2 / 3) * absA2 + lap / 12 - (2 / 3) * imA)
    eta1 = (-np.asarray(table["scal_1bar"]) / 4 - 1j * np.asarray(table["divA"])) / 3
    v0 = np.full_like(scal, -0.25)
    v1 = -scal / 16
    v2 = -(2 * rprime + hdprime) / 8
    return ExpansionData(hprime, hdprime, rprime, eta1, (v0, v1, v2), rprime)


def v2_direct(table: Mapping[str, np.ndarray]) -> np.ndarray:
    """-(1/8)((1/12) Delta_b Scal - (2/3) Im A_{11,}^{11}), the closed form of v^2."""
    return -((np.asarray(table["lap_scal"]) / 12) - (2 / 3) * np.asarray(table["imA_up"])) / 8


def metric_profile(e: ExpansionData, phi: float):
    """Second-order profile 1 + h' phi + h'' phi^2 / 2."""
    return 1 + e.hprime * phi + 0.5 * e.hdprime * phi**2


def _halve(res: Sequence[int]) -> tuple:
    return tuple(max(2, int(r) // 2) for r in res)


def v_and_L(spec: DomainSpec, mesh: Optional[BoundaryMesh] = None, table: Optional[dict] = None,
            coarse: bool = True) -> dict:
    """Boundary integrals of v^0, v^1, v^2; L = int v^2.

    The L uncertainty is the change against a mesh of half the resolution.
    The absolute-integrand scale int(|Delta_b Scal|/96 + |Im A_{11,}^{11}|/12) is also returned.
    """
    mesh = build_mesh(spec) if mesh is None else mesh
    table = boundary_fields(spec, mesh.z, mesh.w) if table is None else table
    e = expansion_at(table)
    ints = [integrate_boundary(mesh, v) for v in e.v]
    scale = integrate_boundary(mesh, np.abs(table["lap_scal"]) / 96 + np.abs(table["imA_up"]) / 12)
    out = {"int_v0": ints[0], "int_v1": ints[1], "int_v2": ints[2], "L": ints[2],
           "L_abs_scale": scale, "L_uncertainty": None}
    if coarse:
        cm = build_mesh(spec, _halve(mesh.resolution))
        ct = boundary_fields(spec, cm.z, cm.w)
        out["L_uncertainty"] = abs(integrate_boundary(cm, expansion_at(ct).v[2]) - ints[2])
    return out


def predicted_c(spec: DomainSpec, mesh: Optional[BoundaryMesh] = None, table: Optional[dict] = None) -> dict:
    """c0 = -(1/2) int v^0 and c1 = -int v^1 over theta ^ dtheta."""
    mesh = build_mesh(spec) if mesh is None else mesh
    if table is None:
        table = boundary_fields(spec, mesh.z, mesh.w)
    e = expansion_at(table)
    return {"c0": -0.5 * integrate_boundary(mesh, e.v[0]), "c1": -integrate_boundary(mesh, e.v[1])}
