"""Defining-function expressions, domain specs and built-in domains.

Grammar (whitespace insensitive)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' INTEGER)?
    atom    := NUMBER | 'i' | 'pi' | 'z' | 'w' | NAME
             | FUNC '(' expr ')' | '(' expr ')'

``FUNC`` is one of conj, re, im, abs2, log, exp, sqrt.  Any other NAME is a
real parameter resolved from ``DomainSpec.params`` at evaluation time.
"""

from __future__ import annotations

import logging
import math
import re as _re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import yaml

from .jets import Jet, JetError

__all__ = [
    "ExprNode",
    "DomainSpec",
    "ExpressionSyntaxError",
    "ExpressionEvalError",
    "ConfigError",
    "PseudoconvexityError",
    "parse_expression",
    "print_expression",
    "eval_expression_jet",
    "eval_expression_jets",
    "eval_expression_numpy",
    "builtin_domain",
    "parse_builtin",
    "load_domain_spec",
    "check_pseudoconvex",
    "FUNCTIONS",
]

log = logging.getLogger(__name__)

FUNCTIONS = ("conj", "re", "im", "abs2", "log", "exp", "sqrt")
_BINARY = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "powi": 4}


@dataclass(frozen=True)
class ExprNode:
    """Immutable expression tree node.

    ``kind`` is one of ``lit``, ``var``, ``param``, ``neg``, ``add``, ``sub``,
    ``mul``, ``div``, ``powi`` or a function name from :data:`FUNCTIONS`.
    """

    kind: str
    children: tuple = ()
    value: complex = 0j
    name: str = ""
    power: int = 0

    def params(self) -> set[str]:
        out = {self.name} if self.kind == "param" else set()
        for c in self.children:
            out |= c.params()
        return out

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children), default=0)

    def __str__(self) -> str:
        return print_expression(self)


def lit(v) -> ExprNode:
    return ExprNode("lit", value=complex(v))


# -- parsing -----------------------------------------------------------

class ExpressionSyntaxError(ValueError):
    def __init__(self, text: str, position: int, expected: Sequence[str], found: str):
        self.text = text
        self.position = position
        self.expected = tuple(sorted(set(expected)))
        self.found = found
        super().__init__(
            f"syntax error at position {position}: expected one of "
            f"{', '.join(self.expected)}; found {found!r}"
        )


_TOKEN = _re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


@dataclass
class _Tok:
    kind: str  # num, name, op, end
    text: str
    pos: int  # 1-based


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    i = 0
    n = len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        m = _TOKEN.match(text, i)
        if not m or m.end() == i:
            raise ExpressionSyntaxError(text, i + 1, ["number", "name", "operator"], text[i])
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), start + 1))
        i = m.end()
    toks.append(_Tok("end", "", n + 1))
    return toks


_ATOM_START = ["number", "name", "(", "-"]


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.k = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.k]

    def fail(self, expected):
        t = self.cur
        raise ExpressionSyntaxError(self.text, t.pos, expected, t.text or "end of input")

    def eat(self, op: str):
        if self.cur.kind == "op" and self.cur.text == op:
            self.k += 1
            return
        self.fail([op])

    def parse(self) -> ExprNode:
        node = self.expr()
        if self.cur.kind != "end":
            self.fail(["+", "-", "*", "/", "^", "end of input"])
        return node

    def expr(self) -> ExprNode:
        node = self.term()
        while self.cur.kind == "op" and self.cur.text in "+-":
            kind = "add" if self.cur.text == "+" else "sub"
            self.k += 1
            node = ExprNode(kind, (node, self.term()))
        return node

    def term(self) -> ExprNode:
        node = self.unary()
        while self.cur.kind == "op" and self.cur.text in "*/":
            kind = "mul" if self.cur.text == "*" else "div"
            self.k += 1
            node = ExprNode(kind, (node, self.unary()))
        return node

    def unary(self) -> ExprNode:
        if self.cur.kind == "op" and self.cur.text == "-":
            self.k += 1
            return ExprNode("neg", (self.unary(),))
        return self.power()

    def power(self) -> ExprNode:
        base = self.atom()
        if self.cur.kind == "op" and self.cur.text == "^":
            self.k += 1
            t = self.cur
            if t.kind != "num" or not t.text.isdigit():
                self.fail(["non-negative integer"])
            self.k += 1
            return ExprNode("powi", (base,), power=int(t.text))
        return base

    def atom(self) -> ExprNode:
        t = self.cur
        if t.kind == "num":
            self.k += 1
            return lit(float(t.text))
        if t.kind == "name":
            self.k += 1
            if t.text in FUNCTIONS:
                self.eat("(")
                arg = self.expr()
                self.eat(")")
                return ExprNode(t.text, (arg,))
            if t.text == "i":
                return lit(1j)
            if t.text == "pi":
                return lit(math.pi)
            if t.text in ("z", "w"):
                return ExprNode("var", name=t.text)
            return ExprNode("param", name=t.text)
        if t.kind == "op" and t.text == "(":
            self.k += 1
            node = self.expr()
            self.eat(")")
            return node
        self.fail(_ATOM_START)


def parse_expression(text: str) -> ExprNode:
    """Parse ``text`` into an :class:`ExprNode` tree."""
    return _Parser(text).parse()


# -- printing ----------------------------------------------------------

def _fmt_real(x: float) -> str:
    if x == math.pi:
        return "pi"
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _fmt_lit(v: complex) -> str:
    if v.imag == 0:
        return _fmt_real(v.real)
    if v.real == 0 and v.imag == 1:
        return "i"
    if v.real == 0:
        return f"{_fmt_real(v.imag)}*i"
    return f"({_fmt_real(v.real)} + {_fmt_real(v.imag)}*i)"


def _prec(node: ExprNode) -> int:
    if node.kind == "lit":
        v = node.value
        if v.imag == 0 and v.real >= 0 or v == 1j:
            return 5
        return 0
    return _PREC.get(node.kind, 5)


def print_expression(node: ExprNode) -> str:
    """Render with the fewest parentheses that parse back to the same tree."""
    k = node.kind
    if k == "lit":
        return _fmt_lit(node.value)
    if k in ("var", "param"):
        return node.name
    if k in FUNCTIONS:
        return f"{k}({print_expression(node.children[0])})"
    if k == "neg":
        c = node.children[0]
        s = print_expression(c)
        return "-" + (f"({s})" if _prec(c) < 3 else s)
    if k == "powi":
        c = node.children[0]
        s = print_expression(c)
        return (f"({s})" if _prec(c) < 5 else s) + f"^{node.power}"
    p = _PREC[k]
    a, b = node.children
    sa, sb = print_expression(a), print_expression(b)
    if _prec(a) < p:
        sa = f"({sa})"
    if _prec(b) <= p:
        sb = f"({sb})"
    return f"{sa} {_BINARY[k]} {sb}"


# -- evaluation --------------------------------------------------------

class ExpressionEvalError(ArithmeticError):
    """Evaluation failure annotated with the AST path of the failing node."""

    def __init__(self, path: str, node: ExprNode, cause: Exception):
        self.path = path
        self.node = node
        self.cause = cause
        super().__init__(f"at {path} [{print_expression(node)}]: {cause}")


def _param(node: ExprNode, params: Mapping[str, float]):
    try:
        return float(params[node.name])
    except KeyError:
        raise KeyError(f"unknown parameter {node.name!r}") from None


def eval_expression_jets(
    node: ExprNode, variables: Sequence[Jet], params: Mapping[str, float] | None = None
) -> Jet:
    """Evaluate with the four formal variables supplied as jets."""
    params = params or {}
    z, zb, w, wb = variables
    cache: dict[int, Jet] = {}

    def ev(n: ExprNode, path: str):
        key = id(n)
        if key in cache:
            return cache[key]
        k = n.kind
        try:
            if k == "lit":
                out = n.value
            elif k == "param":
                out = _param(n, params)
            elif k == "var":
                out = z if n.name == "z" else w
            else:
                args = [ev(c, f"{path}[{j}].{c.kind}") for j, c in enumerate(n.children)]
                out = _apply_jet(k, args, n, z)
        except ExpressionEvalError:
            raise
        except (JetError, KeyError, ZeroDivisionError) as exc:
            raise ExpressionEvalError(path, n, exc) from exc
        cache[key] = out
        return out

    out = ev(node, node.kind)
    if not isinstance(out, Jet):
        out = Jet.constant(out, z.base, z.order) * 1.0
        out = Jet(np.broadcast_to(out.coeffs, (out.coeffs.shape[0],) + z.batch_shape).copy(), z.order, z.base)
    return out


def _swap(x):
    return x.conjugate_swap() if isinstance(x, Jet) else np.conj(x)


def _apply_jet(k: str, args: list, n: ExprNode, ref: Jet):
    if k == "neg":
        return -args[0]
    if k in _BINARY:
        a, b = args
        if k == "add":
            return a + b
        if k == "sub":
            return a - b
        if k == "mul":
            return a * b
        if not isinstance(b, Jet) and b == 0:
            raise ZeroDivisionError("division by literal zero")
        return a / b
    if k == "powi":
        return args[0] ** n.power
    x = args[0]
    if k == "conj":
        return _swap(x)
    if k == "re":
        return (x + _swap(x)) * 0.5
    if k == "im":
        return (x - _swap(x)) * (-0.5j)
    if k == "abs2":
        return x * _swap(x)
    if not isinstance(x, Jet):
        x = Jet.constant(x, ref.base, ref.order)
        x = Jet(np.broadcast_to(x.coeffs, (x.coeffs.shape[0],) + ref.batch_shape).copy(), ref.order, ref.base)
    return getattr(x, k)()


def eval_expression_jet(
    node: ExprNode,
    point,
    order: int,
    params: Mapping[str, float] | None = None,
) -> Jet:
    """Jet of the expression at ``point = (z, w)`` (scalars or arrays)."""
    z0 = np.asarray(point[0], dtype=complex)
    w0 = np.asarray(point[1], dtype=complex)
    z0, w0 = np.broadcast_arrays(z0, w0)
    base = np.stack([z0, np.conj(z0), w0, np.conj(w0)])
    return eval_expression_jets(node, Jet.variables(base, order), params)


def eval_expression_numpy(node: ExprNode, z, w, params: Mapping[str, float] | None = None):
    """Plain pointwise evaluation, independent of the jet machinery."""
    params = params or {}
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)

    def ev(n: ExprNode):
        k = n.kind
        if k == "lit":
            return n.value
        if k == "param":
            return _param(n, params)
        if k == "var":
            return z if n.name == "z" else w
        a = [ev(c) for c in n.children]
        if k == "neg":
            return -a[0]
        if k == "add":
            return a[0] + a[1]
        if k == "sub":
            return a[0] - a[1]
        if k == "mul":
            return a[0] * a[1]
        if k == "div":
            return a[0] / a[1]
        if k == "powi":
            return a[0] ** n.power
        x = np.asarray(a[0], dtype=complex)
        return {
            "conj": np.conj,
            "re": lambda v: np.real(v) + 0j,
            "im": lambda v: np.imag(v) + 0j,
            "abs2": lambda v: (v * np.conj(v)),
            "log": np.log,
            "exp": np.exp,
            "sqrt": np.sqrt,
        }[k](x)

    with np.errstate(all="ignore"):
        return ev(node) + 0 * z * w


# -- domain specs ------------------------------------------------------

class ConfigError(ValueError):
    """Invalid domain document; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class PseudoconvexityError(ValueError):
    pass


DEFAULT_MESH = (64, 64, 64)
DEFAULT_ORDER = 6


@dataclass(frozen=True)
class DomainSpec:
    name: str
    rho: ExprNode
    special_phi: ExprNode | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    mesh_resolution: tuple = DEFAULT_MESH
    jet_order: int = DEFAULT_ORDER

    def rho_jet(self, variables: Sequence[Jet]) -> Jet:
        return eval_expression_jets(self.rho, variables, self.params)

    def phi_jet(self, variables: Sequence[Jet], use_special_phi: bool = True) -> Jet:
        if use_special_phi and self.special_phi is not None:
            return eval_expression_jets(self.special_phi, variables, self.params)
        return self.rho_jet(variables)

    def rho_numpy(self, z, w):
        return eval_expression_numpy(self.rho, z, w, self.params)

    def with_mesh(self, mesh: Sequence[int]) -> "DomainSpec":
        return DomainSpec(self.name, self.rho, self.special_phi, self.params, tuple(mesh), self.jet_order)

    def with_order(self, order: int) -> "DomainSpec":
        return DomainSpec(self.name, self.rho, self.special_phi, self.params, self.mesh_resolution, order)


def _num(x) -> str:
    return _fmt_real(float(x)) if float(x) >= 0 else f"(-{_fmt_real(-float(x))})"


_BALL_RHO = "z*conj(z) + w*conj(w) - 1"
_BALL_PHI = "4*(sqrt(z*conj(z) + w*conj(w)) - 1)/(sqrt(z*conj(z) + w*conj(w)) + 1)"


def builtin_domain(name: str, *params, levi_check: str = "error", mesh=DEFAULT_MESH,
                   jet_order: int = DEFAULT_ORDER) -> DomainSpec:
    """Built-in domains: unit_ball, ball(R), ellipsoid(a, b), bumped_ball(delta, k)."""
    if name == "unit_ball":
        if params:
            raise ConfigError("name", "unit_ball takes no parameters")
        return DomainSpec("unit_ball", parse_expression(_BALL_RHO), parse_expression(_BALL_PHI),
                          {}, tuple(mesh), jet_order)
    if name == "ball":
        (R,) = _nparams(name, params, 1)
        if R <= 0:
            raise ConfigError("params.R", "radius must be positive")
        rho = parse_expression(f"z*conj(z) + w*conj(w) - {_num(R)}^2")
        return DomainSpec(f"ball({R:g})", rho, None, {"R": float(R)}, tuple(mesh), jet_order)
    if name == "ellipsoid":
        a, b = _nparams(name, params, 2)
        if a <= 0 or b <= 0:
            raise ConfigError("params", "ellipsoid semi-axes must be positive")
        rho = parse_expression(f"z*conj(z)/{_num(a)}^2 + w*conj(w)/{_num(b)}^2 - 1")
        return DomainSpec(f"ellipsoid({a:g},{b:g})", rho, None, {"a": float(a), "b": float(b)},
                          tuple(mesh), jet_order)
    if name == "bumped_ball":
        delta, k = _nparams(name, params, 2)
        if float(k) != int(k) or k < 1:
            raise ConfigError("params.k", "k must be a positive integer")
        k = int(k)
        rho = parse_expression(f"{_BALL_RHO} + {_num(delta)}*re(z^{k}*conj(w)^{k})")
        spec = DomainSpec(f"bumped_ball({delta:g},{k})", rho, None, {"delta": float(delta), "k": k},
                          tuple(mesh), jet_order)
        if levi_check != "off":
            check_pseudoconvex(spec, policy=levi_check)
        return spec
    raise ConfigError("name", f"unknown builtin domain {name!r}; known: unit_ball, ball, ellipsoid, bumped_ball")


def _nparams(name, params, n):
    if len(params) != n:
        raise ConfigError("params", f"{name} takes {n} parameter(s), got {len(params)}")
    return [float(p) for p in params]


_BUILTIN_CALL = _re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def parse_builtin(text: str, **kw) -> DomainSpec:
    """Parse strings such as ``"bumped_ball(0.05, 2)"`` into a builtin domain."""
    m = _BUILTIN_CALL.match(text)
    if not m:
        raise ConfigError("domain", f"cannot parse builtin domain {text!r}")
    args = []
    if m.group(2) and m.group(2).strip():
        try:
            args = [float(a) for a in m.group(2).split(",")]
        except ValueError:
            raise ConfigError("domain", f"non-numeric parameter in {text!r}") from None
    return builtin_domain(m.group(1), *args, **kw)


def check_pseudoconvex(spec: DomainSpec, n: int = 12, policy: str = "error", tol: float = 1e-10) -> float:
    """Check the Levi form is positive on a boundary sample; return its minimum.

    ``policy`` is ``"error"`` (raise), ``"warn"`` (log a warning) or ``"off"``.
    """
    eta = (np.arange(n) + 0.5) * (np.pi / 2) / n
    ang = 2 * np.pi * np.arange(2 * n) / (2 * n)
    E, A1, A2 = np.meshgrid(eta, ang, ang, indexing="ij")
    uz = np.cos(E) * np.exp(1j * A1)
    uw = np.sin(E) * np.exp(1j * A2)
    uz, uw = uz.ravel(), uw.ravel()

    def rho(t):
        return spec.rho_numpy(t * uz, t * uw).real

    lo = np.zeros_like(uz.real)
    hi = np.ones_like(lo)
    for _ in range(60):
        bad = rho(hi) <= 0
        if not bad.any():
            break
        hi[bad] *= 2
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        neg = rho(mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    t = 0.5 * (lo + hi)
    j = eval_expression_jet(spec.rho, (t * uz, t * uw), 2, spec.params)
    rz, rw = j.coeff((1, 0, 0, 0)), j.coeff((0, 0, 1, 0))
    hzz, hzw = j.coeff((1, 1, 0, 0)), j.coeff((1, 0, 0, 1))
    hwz, hww = j.coeff((0, 1, 1, 0)), j.coeff((0, 0, 1, 1))
    # Levi form on the (1,0) tangent vector (rho_w, -rho_z)
    a, b = rw, -rz
    levi = (hzz * a * np.conj(a) + hzw * a * np.conj(b) + hwz * b * np.conj(a) + hww * b * np.conj(b)).real
    levi = levi / (np.abs(rz) ** 2 + np.abs(rw) ** 2)
    k = int(np.argmin(levi))
    if levi[k] <= tol and policy != "off":
        msg = (f"{spec.name}: Levi form not positive at boundary point "
               f"z={t[k] * uz[k]:.6g}, w={t[k] * uw[k]:.6g} (value {levi[k]:.3g})")
        if policy == "warn":
            log.warning(msg)
        else:
            raise PseudoconvexityError(msg)
    return float(levi[k])


_ALLOWED = {"name", "rho", "special_phi", "params", "mesh", "jet_order", "levi_check"}


def load_domain_spec(document) -> DomainSpec:
    """Build a validated :class:`DomainSpec` from a YAML/JSON document or mapping."""
    if isinstance(document, (str, bytes)):
        try:
            doc = yaml.safe_load(document)
        except yaml.YAMLError as exc:
            raise ConfigError("<document>", f"not valid YAML: {exc}") from None
    else:
        doc = document
    if not isinstance(doc, Mapping):
        raise ConfigError("<document>", "top level must be a mapping")
    extra = set(doc) - _ALLOWED
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown field")
    if "rho" not in doc:
        raise ConfigError("rho", "required field missing")
    name = doc.get("name", "custom")
    if not isinstance(name, str):
        raise ConfigError("name", "must be a string")

    def expr(key):
        text = doc[key]
        if not isinstance(text, str):
            raise ConfigError(key, "must be an expression string")
        try:
            return parse_expression(text)
        except ExpressionSyntaxError as exc:
            raise ConfigError(key, str(exc)) from exc

    rho = expr("rho")
    phi = expr("special_phi") if doc.get("special_phi") is not None else None

    params = doc.get("params") or {}
    if not isinstance(params, Mapping):
        raise ConfigError("params", "must be a mapping of names to real numbers")
    clean = {}
    for k, v in params.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"params.{k}", "must be a real number")
        clean[str(k)] = float(v)

    mesh = doc.get("mesh", list(DEFAULT_MESH))
    if (not isinstance(mesh, (list, tuple)) or len(mesh) != 3
            or not all(isinstance(m, int) and not isinstance(m, bool) and m > 0 for m in mesh)):
        raise ConfigError("mesh", "must be three positive integers")
    order = doc.get("jet_order", DEFAULT_ORDER)
    if not isinstance(order, int) or isinstance(order, bool) or order < 4:
        raise ConfigError("jet_order", "must be an integer >= 4")

    for key, node in (("rho", rho), ("special_phi", phi)):
        if node is None:
            continue
        missing = node.params() - set(clean)
        if missing:
            raise ConfigError(f"{key}", f"undefined parameter {sorted(missing)[0]!r}")

    spec = DomainSpec(name, rho, phi, clean, tuple(mesh), order)
    _check_real(spec)
    policy = doc.get("levi_check", "error")
    if policy not in ("error", "warn", "off"):
        raise ConfigError("levi_check", "must be one of error, warn, off")
    if policy != "off":
        try:
            check_pseudoconvex(spec, policy=policy)
        except PseudoconvexityError as exc:
            raise ConfigError("rho", str(exc)) from exc
    return spec


def _check_real(spec: DomainSpec, n: int = 64, seed: int = 0):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=n) * 0.5 + 1j * rng.normal(size=n) * 0.5
    w = rng.normal(size=n) * 0.5 + 1j * rng.normal(size=n) * 0.5
    vals = spec.rho_numpy(z, w)
    ok = np.isfinite(vals)
    scale = np.maximum(1.0, np.abs(vals[ok]))
    if np.any(np.abs(vals[ok].imag) > 1e-12 * scale):
        raise ConfigError("rho", "expression is not real-valued at sampled points")
    if not np.all(np.isfinite(spec.rho_numpy(0.0, 0.0))) or spec.rho_numpy(0.0, 0.0).real >= 0:
        raise ConfigError("rho", "must be negative at the origin (star-shaped domains about 0)")
