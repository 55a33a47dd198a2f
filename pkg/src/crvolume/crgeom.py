"""Pseudohermitian geometry of level sets of a defining function.

Everything is computed on batches of points with jets, so every quantity
(frame, connection form, Webster curvature, torsion) is available together
with its ambient Taylor expansion and can be differentiated again by the
frame vector fields.  Vector fields are tuples of four jet components on
(d/dz, d/dzbar, d/dw, d/dwbar); 1-forms are tuples on (dz, dzbar, dw, dwbar);
2-forms are dicts keyed by index pairs (a, b) with a < b.  ``None`` stands
for an identically zero component.

Pairing conventions (fixed by the unit ball, frame W = (wbar, -zbar)):

* (alpha ^ beta)(X, Y) = alpha(X) beta(Y) - alpha(Y) beta(X)
* Levi form h = ddbar phi (W, Wbar) = phi_{j kbar} W^j conj(W^k)
* transverse curvature r = phi_{j kbar} xi^j conj(xi^k)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dsl import DomainSpec, ExprNode, eval_expression_jet, eval_expression_jets
from .jets import Jet, JetError

__all__ = [
    "GeometryError",
    "DegenerateLeviError",
    "StructureEquationError",
    "NotStarShapedError",
    "BoundaryFrame",
    "PointData",
    "BoundaryMesh",
    "boundary_point_radial",
    "ambient_variables",
    "frame_from_phi",
    "frame_at",
    "webster_from_frame",
    "webster_at",
    "FrameCalculus",
    "covariant_derivs",
    "boundary_fields",
    "build_mesh",
    "integrate_boundary",
    "hopf_directions",
    "solid_angle_directions",
]

STRUCTURE_TOL = 1e-9
CHUNK = 512


class GeometryError(ArithmeticError):
    pass


class DegenerateLeviError(GeometryError):
    pass


class StructureEquationError(GeometryError):
    pass


class NotStarShapedError(GeometryError):
    pass


# -- small exterior-calculus helpers ------------------------------------

def _sum(terms):
    terms = [t for t in terms if t is not None]
    if not terms:
        return None
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def _mul(a, b):
    if a is None or b is None:
        return None
    return a * b


def apply_vector(V: Sequence, f: Jet) -> Jet:
    """Directional derivative V f = sum_a V^a d_a f (drops one jet order)."""
    out = _sum(_mul(V[a], f.derivative(a)) for a in range(4) if V[a] is not None)
    if out is None:
        return f.derivative(0) * 0.0
    return out


def pair1(alpha: Sequence, X: Sequence):
    return _sum(_mul(alpha[a], X[a]) for a in range(4))


def d1(alpha: Sequence) -> dict:
    """Exterior derivative of a 1-form: (d alpha)_{ab} = d_a alpha_b - d_b alpha_a."""
    out = {}
    for a in range(4):
        for b in range(a + 1, 4):
            t1 = alpha[b].derivative(a) if alpha[b] is not None else None
            t2 = alpha[a].derivative(b) if alpha[a] is not None else None
            if t1 is None and t2 is None:
                continue
            out[(a, b)] = t1 if t2 is None else (-t2 if t1 is None else t1 - t2)
    return out


def pair2(omega: dict, X: Sequence, Y: Sequence):
    terms = []
    for (a, b), c in omega.items():
        terms.append(_mul(c, _sum([_mul(X[a], Y[b]), None if _mul(X[b], Y[a]) is None else -_mul(X[b], Y[a])])))
    return _sum(terms)


def conj_vector(V: Sequence) -> tuple:
    """Formal conjugate of a vector field: swap the z/zbar and w/wbar slots."""
    sw = [None if v is None else v.conjugate_swap() for v in V]
    return (sw[1], sw[0], sw[3], sw[2])


conj_form = conj_vector


# -- frames -------------------------------------------------------------

def ambient_variables(z, w, order: int) -> list[Jet]:
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    z, w = np.broadcast_arrays(z, w)
    base = np.stack([z, np.conj(z), w, np.conj(w)])
    return Jet.variables(base, order)


@dataclass
class BoundaryFrame:
    """Jet-valued adapted frame of the level sets of ``phi`` at a batch of points."""

    phi: Jet
    dphi_10: tuple  # the (1,0) form d phi, components (phi_z, 0, phi_w, 0)
    dphi_01: tuple
    levi: tuple  # ((phi_zzb, phi_zwb), (phi_wzb, phi_wwb))
    W: tuple
    Wbar: tuple
    xi: tuple
    xibar: tuple
    T: tuple
    theta1: tuple
    theta1bar: tuple
    h: Jet
    r: Jet

    @property
    def dphi(self) -> tuple:
        return tuple(_sum([a, b]) for a, b in zip(self.dphi_10, self.dphi_01))

    @property
    def theta(self) -> tuple:
        return tuple(
            None if (a is None and b is None) else _sum([None if b is None else 0.5j * b, None if a is None else -0.5j * a])
            for a, b in zip(self.dphi_10, self.dphi_01)
        )

    def levi_form(self, X: Sequence, Y: Sequence):
        """ddbar phi(X, conj Y) restricted to (1,0) parts: phi_{j kbar} X^j conj(Y^k)."""
        Yb = conj_vector(Y)
        xs = (X[0], X[2])
        ys = (Yb[1], Yb[3])
        return _sum(_mul(_mul(self.levi[j][k], xs[j]), ys[k]) for j in range(2) for k in range(2))


def frame_from_phi(phi: Jet, gauge: Optional[Jet] = None) -> BoundaryFrame:
    """Adapted frame of the level sets of ``phi`` (a jet of order >= 2).

    ``gauge``, if given, is a unit-modulus jet multiplying W (frame rotation).
    """
    if phi.order < 2:
        raise JetError("frame construction needs a jet of order >= 2")
    pz, pzb, pw, pwb = (phi.derivative(a) for a in range(4))
    hzz, hzw = pz.derivative(1), pz.derivative(3)
    hwz, hww = pw.derivative(1), pw.derivative(3)
    levi = ((hzz, hzw), (hwz, hww))

    # (1,0) direction annihilated by d phi, normalised to h = 1
    Wz, Ww = pw, -pz
    Wzb, Wwb = Wz.conjugate_swap(), Ww.conjugate_swap()
    hraw = hzz * Wz * Wzb + hzw * Wz * Wwb + hwz * Ww * Wzb + hww * Ww * Wwb
    hval = hraw.value
    if np.any(np.abs(hval.imag) > 1e-8 * np.abs(hval)) or np.any(hval.real <= 0):
        k = int(np.argmin(np.ravel(hval.real)))
        raise DegenerateLeviError(f"Levi form not positive (value {np.ravel(hval)[k]:.3g})")
    scale = hraw.sqrt().reciprocal()
    if gauge is not None:
        scale = scale * gauge
    Wz, Ww = Wz * scale, Ww * scale
    W = (Wz, None, Ww, None)
    Wbar = conj_vector(W)

    # xi: d phi(xi) = 1 and ddbar phi(xi, Wbar) = 0
    m0 = hzz * Wbar[1] + hzw * Wbar[3]
    m1 = hwz * Wbar[1] + hww * Wbar[3]
    det = pz * m1 - pw * m0
    if np.any(np.abs(det.value) < 1e-14):
        raise DegenerateLeviError("singular system for the transverse field xi")
    inv = det.reciprocal()
    xz, xw = m1 * inv, -m0 * inv
    xi = (xz, None, xw, None)
    xibar = conj_vector(xi)
    T = tuple(None if a is None and b is None else _sum([None if a is None else 1j * a, None if b is None else -1j * b])
              for a, b in zip(xi, xibar))

    # theta^1: dual to (W, xi) on (1,0) vectors
    detP = Wz * xw - xz * Ww
    invP = detP.reciprocal()
    theta1 = (xw * invP, None, -xz * invP, None)
    theta1bar = conj_vector(theta1)

    h = hzz * Wz * Wbar[1] + hzw * Wz * Wbar[3] + hwz * Ww * Wbar[1] + hww * Ww * Wbar[3]
    r = hzz * xz * xibar[1] + hzw * xz * xibar[3] + hwz * xw * xibar[1] + hww * xw * xibar[3]
    return BoundaryFrame(
        phi=phi,
        dphi_10=(pz, None, pw, None),
        dphi_01=(None, pzb, None, pwb),
        levi=levi,
        W=W,
        Wbar=Wbar,
        xi=xi,
        xibar=xibar,
        T=T,
        theta1=theta1,
        theta1bar=theta1bar,
        h=h,
        r=r,
    )


def frame_at(spec: DomainSpec, z, w, use_special_phi: bool = True, order: Optional[int] = None) -> BoundaryFrame:
    order = spec.jet_order if order is None else order
    phi = spec.phi_jet(ambient_variables(z, w, order), use_special_phi)
    return frame_from_phi(phi)


# -- Webster curvature and torsion -------------------------------------

_LS_MATRIX = np.array(
    [[1, 0, 0], [0, 1, 0], [0, 1, 0], [0, 0, -1j]], dtype=complex
)
_LS_PINV = np.linalg.pinv(_LS_MATRIX)


@dataclass
class PointData:
    """Webster data of the level sets at a batch of points, as jets.

    ``A11`` is the torsion with lower indices, read as conj(A^1_{1bar}).
    The connection form is phi_1^1 = a theta^1 + b theta^1bar + c d'phi + e d''phi.
    """

    frame: BoundaryFrame
    scal: Jet
    A11: Jet
    A_up: Jet  # A^1_{1bar}
    a: Jet
    b: Jet
    c: Jet
    e: Jet
    residual: np.ndarray

    @property
    def conn_form(self) -> tuple:
        f = self.frame
        return tuple(
            _sum([_mul(self.a, f.theta1[k]), _mul(self.b, f.theta1bar[k]),
                  _mul(self.c, f.dphi_10[k]), _mul(self.e, f.dphi_01[k])])
            for k in range(4)
        )


def _swap(j: Jet) -> Jet:
    return j.conjugate_swap()


def webster_from_frame(frame: BoundaryFrame, tol: float = STRUCTURE_TOL) -> PointData:
    """Solve the structure equation for phi_1^1 and tau^1, then read Scal.

    Evaluated on the frame pairs the equation
    d theta^1 = theta^1 ^ phi_1^1 - i d'phi ^ tau^1 + i W^1(r) dphi ^ theta + (r/2) dphi ^ theta^1
    gives
    b = D(W,Wbar), c = D(W,xi) + r/2 = -conj D(W,xibar) - r/2, -iA = D(xi,Wbar),
    and the consistency rows D(xi,xibar) + Wbar(r) = 0, D(Wbar,xibar) = 0,
    where D = d theta^1.  Metric compatibility with h = 1 fixes a = -conj b, e = -conj c.
    """
    f = frame
    if f.phi.order < 4:
        raise JetError("Webster curvature needs jet order >= 4")
    D = d1(f.theta1)
    r = f.r
    rhs = [
        pair2(D, f.W, f.Wbar),
        pair2(D, f.W, f.xi) + 0.5 * r,
        -_swap(pair2(D, f.W, f.xibar)) - 0.5 * r,
        pair2(D, f.xi, f.Wbar),
    ]
    k = min(x.order for x in rhs)
    rhs = [x.truncate(k) for x in rhs]
    x = [_sum(_LS_PINV[i, j] * rhs[j] for j in range(4)) for i in range(3)]
    b, c, A_up = x
    rows = [
        _sum(_LS_MATRIX[j, i] * x[i] for i in range(3)) - rhs[j] for j in range(4)
    ]
    rows.append(_sum([pair2(D, f.xi, f.xibar), apply_vector(f.Wbar, r)]))
    rows.append(pair2(D, f.Wbar, f.xibar))
    rows = [y for y in rows if y is not None]
    scale = 1.0 + max(float(np.max(np.abs(y.coeffs))) for y in rhs)
    residual = np.max(
        np.stack([np.max(np.abs(y.coeffs), axis=0) for y in rows]), axis=0
    ) / scale
    if np.any(residual > tol):
        raise StructureEquationError(
            f"structure-equation residual {float(np.max(residual)):.3e} exceeds {tol:g}"
        )
    a = -_swap(b)
    e = -_swap(c)
    pd = PointData(f, None, _swap(A_up), A_up, a, b, c, e, residual)
    conn = pd.conn_form
    scal = pair2(d1(conn), f.W, f.Wbar)
    pd.scal = scal
    return pd


def webster_at(spec: DomainSpec, z, w, use_special_phi: bool = False, order: Optional[int] = None) -> PointData:
    return webster_from_frame(frame_at(spec, z, w, use_special_phi, order))


# -- covariant derivatives ---------------------------------------------

class FrameCalculus:
    """Covariant derivatives in the normalised frame (h = 1).

    With nabla W = phi_1^1 (x) W, phi_1^1(W) = a and phi_1^1(Wbar) = b, and
    the conjugate connection form is -phi_1^1.
    """

    def __init__(self, pd: PointData):
        self.pd = pd
        self.f = pd.frame

    def d1(self, g: Jet) -> Jet:
        return apply_vector(self.f.W, g)

    def d1bar(self, g: Jet) -> Jet:
        return apply_vector(self.f.Wbar, g)

    def dT(self, g: Jet) -> Jet:
        return apply_vector(self.f.T, g)

    def scalar(self, g: Jet) -> dict:
        pd = self.pd
        g1, g1b = self.d1(g), self.d1bar(g)
        g11 = self.d1(g1) - pd.a * g1
        g11b = self.d1bar(g1) - pd.b * g1
        g1b1 = self.d1(g1b) + pd.a * g1b
        g1b1b = self.d1bar(g1b) + pd.b * g1b
        return {
            "f": g,
            "f_1": g1,
            "f_1bar": g1b,
            "f_T": self.dT(g),
            "f_11": g11,
            "f_11bar": g11b,
            "f_1bar1": g1b1,
            "f_1bar1bar": g1b1b,
            "lap_b": -(g11b + g1b1),
        }

    def torsion(self) -> dict:
        """Derivatives of A_11: A_{11,1bar} and A_{11,1bar 1bar}."""
        pd = self.pd
        A = pd.A11
        A1b = self.d1bar(A) - 2.0 * pd.b * A
        A1b1b = self.d1bar(A1b) - pd.b * A1b
        return {"A_11": A, "A_11_1bar": A1b, "A_11_1bar1bar": A1b1b}


def _val(j: Jet) -> np.ndarray:
    return np.asarray(j.value)


def derived_table(pd: PointData) -> dict:
    """Pointwise values of Scal, A and the covariant derivatives the expansion needs."""
    fc = FrameCalculus(pd)
    s = fc.scalar(pd.scal)
    t = fc.torsion()
    A = _val(pd.A11)
    A1b = _val(t["A_11_1bar"])
    A1b1b = _val(t["A_11_1bar1bar"])
    scal = _val(pd.scal)
    return {
        "scal": scal.real,
        "scal_imag": scal.imag,
        "A11": A,
        "absA2": np.abs(A) ** 2,
        "scal_1": _val(s["f_1"]),
        "scal_1bar": _val(s["f_1bar"]),
        "scal_T": _val(s["f_T"]).real,
        "lap_scal": _val(s["lap_b"]).real,
        "A_11_1bar": A1b,
        "A_11_1bar1bar": A1b1b,
        # A_{11,}^{11} = A_{11,1bar1bar} with h = 1; A^1_{1bar,}^{1bar} = conj(A_{11,1bar})
        "imA_up": A1b1b.imag,
        "divA": np.conj(A1b),
        "r": _val(pd.frame.r).real,
        "h": _val(pd.frame.h).real,
        "residual": pd.residual,
    }


def scalar_table(pd: PointData, g: Jet) -> dict:
    fc = FrameCalculus(pd)
    return {k: _val(v) for k, v in fc.scalar(g).items()}


def covariant_derivs(spec: DomainSpec, z, w, field: ExprNode, order: Optional[int] = None,
                     use_special_phi: bool = False) -> dict:
    """f_1, f_1bar, f_T, f_11, f_11bar, f_1bar1 and Delta_b f of an expression field."""
    order = spec.jet_order if order is None else order
    out = boundary_fields(spec, z, w, fields={"f": field}, order=order,
                          use_special_phi=use_special_phi, derived=False)
    return {k[2:]: v for k, v in out.items() if k.startswith("f.")}


def boundary_fields(
    spec: DomainSpec,
    z,
    w,
    fields: Optional[dict] = None,
    order: Optional[int] = None,
    use_special_phi: bool = False,
    derived: bool = True,
    phi_builder: Optional[Callable[[list], Jet]] = None,
    chunk: int = CHUNK,
) -> dict:
    """Evaluate Webster data (and optional scalar fields) at many points.

    ``fields`` maps names to expressions; their covariant derivatives are
    returned under keys ``"<name>.<derivative>"``.  ``phi_builder`` overrides
    the defining function (a callable taking the four ambient jets).
    """
    order = spec.jet_order if order is None else order
    z = np.ravel(np.asarray(z, dtype=complex))
    w = np.ravel(np.asarray(w, dtype=complex))
    parts: dict[str, list] = {}
    for s in range(0, len(z), chunk):
        vars_ = ambient_variables(z[s:s + chunk], w[s:s + chunk], order)
        phi = phi_builder(vars_) if phi_builder else spec.phi_jet(vars_, use_special_phi)
        pd = webster_from_frame(frame_from_phi(phi))
        row = derived_table(pd) if derived else {"residual": pd.residual}
        for name, expr in (fields or {}).items():
            g = eval_expression_jets(expr, vars_, spec.params) if isinstance(expr, ExprNode) else expr(vars_)
            for k, v in scalar_table(pd, g).items():
                row[f"{name}.{k}"] = v
        for k, v in row.items():
            parts.setdefault(k, []).append(np.atleast_1d(v))
    return {k: np.concatenate(v) for k, v in parts.items()}


# -- boundary mesh ------------------------------------------------------

def hopf_directions(resolution: Sequence[int]):
    """Hopf-coordinate nodes and product weights for integrals over S^3 directions.

    Returns (eta, xi1, xi2, uz, uw, weights) with weights for d eta d xi1 d xi2.
    """
    ne, n1, n2 = (int(x) for x in resolution)
    x, wx = np.polynomial.legendre.leggauss(ne)
    eta = (x + 1) * (np.pi / 4)
    weta = wx * (np.pi / 4)
    a1 = 2 * np.pi * np.arange(n1) / n1
    a2 = 2 * np.pi * np.arange(n2) / n2
    E, X1, X2 = np.meshgrid(eta, a1, a2, indexing="ij")
    WE = np.broadcast_to(weta[:, None, None], E.shape)
    weights = (WE * (2 * np.pi / n1) * (2 * np.pi / n2)).ravel()
    E, X1, X2 = E.ravel(), X1.ravel(), X2.ravel()
    uz = np.cos(E) * np.exp(1j * X1)
    uw = np.sin(E) * np.exp(1j * X2)
    return E, X1, X2, uz, uw, weights


def solid_angle_directions(resolution: Sequence[int]):
    """Unit directions and weights for integrals over the Euclidean unit 3-sphere.

    Uses s = sin^2(eta), in which the Hopf solid-angle element
    sin(eta) cos(eta) d eta d xi1 d xi2 becomes (1/2) ds d xi1 d xi2.
    Returns (uz, uw, weights); the weights sum to 2 pi^2.
    """
    ns, n1, n2 = (int(x) for x in resolution)
    x, wx = np.polynomial.legendre.leggauss(ns)
    sv = 0.5 * (x + 1)
    ws = 0.25 * wx
    a1 = 2 * np.pi * np.arange(n1) / n1
    a2 = 2 * np.pi * np.arange(n2) / n2
    S, X1, X2 = np.meshgrid(sv, a1, a2, indexing="ij")
    weights = np.broadcast_to(ws[:, None, None], S.shape) * (2 * np.pi / n1) * (2 * np.pi / n2)
    S, X1, X2 = S.ravel(), X1.ravel(), X2.ravel()
    uz = np.sqrt(1 - S) * np.exp(1j * X1)
    uw = np.sqrt(S) * np.exp(1j * X2)
    return uz, uw, weights.ravel()


def boundary_point_radial(spec: DomainSpec, uz, uw, t_max: float = 1e3, tol: float = 1e-12):
    """Radius t > 0 with rho(t u) = 0 along unit directions u (vectorised)."""
    uz = np.asarray(uz, dtype=complex)
    uw = np.asarray(uw, dtype=complex)

    def rho(t):
        return spec.rho_numpy(t * uz, t * uw).real

    if np.any(rho(np.zeros(uz.shape)) >= 0):
        raise NotStarShapedError("rho(0) >= 0: domain does not contain the origin")
    lo = np.zeros(uz.shape)
    hi = np.ones(uz.shape)
    while True:
        bad = rho(hi) <= 0
        if not bad.any():
            break
        if np.any(hi[bad] >= t_max):
            raise NotStarShapedError(f"no sign change of rho along a ray within t <= {t_max:g}")
        hi = np.where(bad, hi * 2, hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        neg = rho(mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
        if np.all(hi - lo <= 1e-9 * hi):
            break
    t = 0.5 * (lo + hi)
    for _ in range(4):
        j = eval_expression_jet(spec.rho, (t * uz, t * uw), 1, spec.params)
        drho = 2 * (j.coeff((1, 0, 0, 0)) * uz + j.coeff((0, 0, 1, 0)) * uw).real
        step = j.value.real / drho
        t = t - step
        if np.all(np.abs(step) <= 1e-16 * np.maximum(1, t)):
            break
    res = np.abs(rho(t))
    if np.any(res > tol * np.maximum(1.0, np.abs(t) ** 2)):
        raise NotStarShapedError(f"radial root residual {float(np.max(res)):.2e} above {tol:g}")
    return t


@dataclass
class BoundaryMesh:
    spec_name: str
    resolution: tuple
    eta: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    t: np.ndarray
    z: np.ndarray
    w: np.ndarray
    weights: np.ndarray
    density: np.ndarray  # |theta ^ dtheta| per unit d eta d xi1 d xi2

    @property
    def size(self) -> int:
        return len(self.z)

    @property
    def measure(self) -> np.ndarray:
        return self.weights * self.density


def _contact_density(spec, z, w, uz, uw, t, eta, x1, x2, use_special_phi):
    vars_ = ambient_variables(z, w, 2)
    phi = spec.phi_jet(vars_, use_special_phi)
    rho = spec.rho_jet(vars_)
    pz, pw = phi.coeff((1, 0, 0, 0)), phi.coeff((0, 0, 1, 0))
    H = [[phi.coeff((1, 1, 0, 0)), phi.coeff((1, 0, 0, 1))],
         [phi.coeff((0, 1, 1, 0)), phi.coeff((0, 0, 1, 1))]]
    rz, rw = rho.coeff((1, 0, 0, 0)), rho.coeff((0, 0, 1, 0))
    ce, se = np.cos(eta), np.sin(eta)
    e1, e2 = np.exp(1j * x1), np.exp(1j * x2)
    du = [(-se * e1, ce * e2), (1j * uz, 0 * uw), (0 * uz, 1j * uw)]

    def drho(v):
        return 2 * (rz * v[0] + rw * v[1]).real

    dru = drho((uz, uw))
    X = []
    for dz, dw in du:
        dt = -t * drho((dz, dw)) / dru
        X.append((dt * uz + t * dz, dt * uw + t * dw))

    def th(v):
        return (pz * v[0] + pw * v[1]).imag

    def dth(v, u):
        q = (H[0][0] * v[0] * np.conj(u[0]) + H[0][1] * v[0] * np.conj(u[1])
             + H[1][0] * v[1] * np.conj(u[0]) + H[1][1] * v[1] * np.conj(u[1]))
        return -2 * q.imag

    vol = th(X[0]) * dth(X[1], X[2]) - th(X[1]) * dth(X[0], X[2]) + th(X[2]) * dth(X[0], X[1])
    return np.abs(vol)


def build_mesh(spec: DomainSpec, resolution: Optional[Sequence[int]] = None,
               use_special_phi: bool = False) -> BoundaryMesh:
    """Hopf-coordinate boundary mesh with cached theta ^ dtheta densities."""
    resolution = tuple(spec.mesh_resolution if resolution is None else resolution)
    eta, x1, x2, uz, uw, wts = hopf_directions(resolution)
    t = boundary_point_radial(spec, uz, uw)
    z, w = t * uz, t * uw
    dens = np.concatenate([
        _contact_density(spec, z[s:s + 8192], w[s:s + 8192], uz[s:s + 8192], uw[s:s + 8192],
                         t[s:s + 8192], eta[s:s + 8192], x1[s:s + 8192], x2[s:s + 8192],
                         use_special_phi)
        for s in range(0, len(z), 8192)
    ])
    return BoundaryMesh(spec.name, resolution, eta, x1, x2, t, z, w, wts, dens)


def integrate_boundary(mesh: BoundaryMesh, values) -> float | complex:
    """Integral of pointwise values against theta ^ dtheta."""
    values = np.asarray(values)
    out = np.sum(mesh.measure * values)
    return float(out) if not np.iscomplexobj(out) else complex(out)
