"""Exact vector-field algebra over the ring of exponential polynomials.

Coefficients are finite sums ``c * x^alpha * exp(lambda . x)``.  The ring is
closed under products and partial derivatives, so Lie brackets of fields with
such coefficients are computed exactly; numerics only enter when the bracket
flag is evaluated at a point and its rank is taken.

Text grammar for one coefficient (variables are ``x1 .. xn``)::

    expr  := term (('+' | '-') term)*
    term  := [number '*'] factor ('*' factor)*
    factor:= 'x'i ['^' k] | 'exp(' linear ')' | number | '(' expr ')'

Products and integer powers of sums are expanded.  Anything outside the ring
(``sin``, negative or fractional powers of ``xi``, non-linear exponents, other
symbols) is rejected.  A field is written as a parenthesised comma-separated
component list, e.g. ``(1, 0)`` or ``(0, x1)``; ``str`` of a field prints the
canonical form and re-parsing it gives back an equal object.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError, HormanderError, ParseError

DEFAULT_RANK_TOL = 1e-9

# Local homogeneous dimension of the exponential-coefficient fields on the unit
# disk; kept for documentation only, nothing computes it.
EXP_FIELDS_LOCAL_HOMOGENEOUS_DIM = 4


def _fmt(v: float) -> str:
    return repr(float(v))


class CoefficientExpr:
    """Immutable sum of terms ``c * x^alpha * exp(lam . x)`` in ``n`` variables."""

    __slots__ = ("n", "_terms")

    def __init__(self, n: int, terms=()):
        self.n = int(n)
        acc: dict[tuple, float] = {}
        items = terms.items() if isinstance(terms, dict) else terms
        for item in items:
            if isinstance(terms, dict):
                (alpha, lam), c = item
            else:
                c, alpha, lam = item
            alpha = tuple(int(a) for a in alpha)
            lam = tuple(float(v) + 0.0 for v in lam)
            if len(alpha) != self.n or len(lam) != self.n:
                raise ValueError("term arity does not match dimension %d" % self.n)
            if any(a < 0 for a in alpha):
                raise ValueError("negative monomial exponent")
            key = (alpha, lam)
            acc[key] = acc.get(key, 0.0) + float(c)
        self._terms = tuple(
            (c, a, l) for (a, l), c in sorted(acc.items()) if c != 0.0
        )

    # construction helpers
    @classmethod
    def zero(cls, n):
        return cls(n)

    @classmethod
    def constant(cls, n, c):
        return cls(n, [(c, (0,) * n, (0.0,) * n)])

    @classmethod
    def variable(cls, n, j, power=1):
        alpha = [0] * n
        alpha[j] = power
        return cls(n, [(1.0, alpha, (0.0,) * n)])

    @classmethod
    def exponential(cls, n, lam, c=1.0):
        return cls(n, [(c, (0,) * n, lam)])

    @property
    def terms(self):
        return self._terms

    def is_zero(self):
        return not self._terms

    # ring operations
    def _coerce(self, other):
        if isinstance(other, CoefficientExpr):
            if other.n != self.n:
                raise ValueError("dimension mismatch")
            return other
        return CoefficientExpr.constant(self.n, float(other))

    def __add__(self, other):
        other = self._coerce(other)
        return CoefficientExpr(self.n, list(self._terms) + list(other._terms))

    __radd__ = __add__

    def __neg__(self):
        return CoefficientExpr(self.n, [(-c, a, l) for c, a, l in self._terms])

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, CoefficientExpr):
            s = float(other)
            return CoefficientExpr(self.n, [(s * c, a, l) for c, a, l in self._terms])
        other = self._coerce(other)
        out = []
        for (c1, a1, l1), (c2, a2, l2) in itertools.product(self._terms, other._terms):
            out.append((
                c1 * c2,
                tuple(x + y for x, y in zip(a1, a2)),
                tuple(x + y for x, y in zip(l1, l2)),
            ))
        return CoefficientExpr(self.n, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if int(k) != k or k < 0:
            raise ValueError("only non-negative integer powers stay in the ring")
        out = CoefficientExpr.constant(self.n, 1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def diff(self, j: int) -> "CoefficientExpr":
        """Partial derivative with respect to ``x_{j+1}`` (0-based ``j``)."""
        out = []
        for c, a, l in self._terms:
            if a[j] > 0:
                a2 = list(a)
                a2[j] -= 1
                out.append((c * a[j], a2, l))
            if l[j] != 0.0:
                out.append((c * l[j], a, l))
        return CoefficientExpr(self.n, out)

    def evaluate(self, points) -> np.ndarray:
        """Values at ``points`` of shape ``(N, n)`` (or a single point)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.n:
            raise ValueError("points must have %d columns" % self.n)
        out = np.zeros(pts.shape[0])
        for c, a, l in self._terms:
            val = np.full(pts.shape[0], c)
            for j in range(self.n):
                if a[j]:
                    val = val * pts[:, j] ** a[j]
            if any(l):
                val = val * np.exp(pts @ np.asarray(l))
            out += val
        return out

    # comparison / printing
    def __eq__(self, other):
        return (
            isinstance(other, CoefficientExpr)
            and self.n == other.n
            and self._terms == other._terms
        )

    def __hash__(self):
        return hash((self.n, self._terms))

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for c, a, l in self._terms:
            factors = [_fmt(c)]
            for j, k in enumerate(a):
                if k == 1:
                    factors.append("x%d" % (j + 1))
                elif k > 1:
                    factors.append("x%d^%d" % (j + 1, k))
            if any(l):
                lin = " + ".join(
                    "%s*x%d" % (_fmt(v), j + 1) for j, v in enumerate(l) if v != 0.0
                )
                factors.append("exp(%s)" % lin)
            parts.append("*".join(factors))
        return " + ".join(parts)

    def __repr__(self):
        return "CoefficientExpr(%d, %r)" % (self.n, str(self))

    @classmethod
    def parse(cls, text: str, n: int) -> "CoefficientExpr":
        return _parse_coefficient(text, n)


_VAR_RE = re.compile(r"^x([1-9][0-9]*)$")


def _parse_coefficient(text: str, n: int) -> CoefficientExpr:
    import sympy

    src = str(text).strip()
    if not src:
        raise ParseError("empty coefficient")
    # identifiers not preceded by a digit/dot (that would be a float exponent)
    for name in re.findall(r"(?<![0-9.])[A-Za-z_][A-Za-z_0-9]*", src):
        if name == "exp":
            continue
        m = _VAR_RE.match(name)
        if m is None:
            raise ParseError("unknown symbol %r in %r" % (name, src))
        if int(m.group(1)) > n:
            raise ParseError("variable %s exceeds dimension %d" % (name, n))
    xs = [sympy.Symbol("x%d" % (j + 1), real=True) for j in range(n)]
    local = {"exp": sympy.exp}
    local.update({str(s): s for s in xs})
    try:
        expr = sympy.sympify(src.replace("^", "**"), locals=local, rational=True)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ParseError("cannot parse coefficient %r: %s" % (src, exc)) from exc
    expr = sympy.expand(expr)
    terms = []
    for term in sympy.Add.make_args(expr):
        if term == 0:
            continue
        coeff = 1.0
        alpha = [0] * n
        lam = [0.0] * n
        for fac in sympy.Mul.make_args(term):
            if fac.is_number:
                val = complex(fac)
                if val.imag != 0 or not np.isfinite(val.real):
                    raise ParseError("non-real constant in %r" % src)
                coeff *= val.real
                continue
            if fac.is_Symbol:
                alpha[xs.index(fac)] += 1
                continue
            if fac.is_Pow and fac.base.is_Symbol:
                e = fac.exp
                if not (e.is_Integer and e >= 0):
                    raise ParseError("power %s is outside the coefficient ring" % fac)
                alpha[xs.index(fac.base)] += int(e)
                continue
            if isinstance(fac, sympy.exp) or (fac.is_Pow and fac.base == sympy.E):
                arg = fac.args[0] if isinstance(fac, sympy.exp) else fac.exp
                poly = sympy.Poly(arg, *xs)
                if poly.total_degree() > 1:
                    raise ParseError("exponent %s is not linear" % arg)
                for j, x in enumerate(xs):
                    lam[j] += float(poly.coeff_monomial(x))
                const = poly.coeff_monomial(1)
                if const != 0:
                    coeff *= float(sympy.exp(const))
                continue
            raise ParseError("factor %s is outside the coefficient ring" % fac)
        terms.append((coeff, alpha, lam))
    return CoefficientExpr(n, terms)


def _split_top_level(s: str) -> list[str]:
    depth = 0
    parts, cur = [], []
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts]


@dataclass(frozen=True)
class VectorField:
    """``sum_j components[j] * d/dx_{j+1}``."""

    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a vector field needs at least one component")
        n = len(comps)
        fixed = []
        for c in comps:
            if not isinstance(c, CoefficientExpr):
                c = CoefficientExpr.constant(n, float(c))
            if c.n != n:
                raise ValueError("component count must equal ambient dimension")
            fixed.append(c)
        object.__setattr__(self, "components", tuple(fixed))

    @property
    def dim(self) -> int:
        return len(self.components)

    def __call__(self, f: CoefficientExpr) -> CoefficientExpr:
        """Directional derivative X f."""
        out = CoefficientExpr.zero(self.dim)
        for j, a in enumerate(self.components):
            if not a.is_zero():
                out = out + a * f.diff(j)
        return out

    def is_zero(self):
        return all(c.is_zero() for c in self.components)

    def __add__(self, other):
        return VectorField(tuple(a + b for a, b in zip(self.components, other.components)))

    def __neg__(self):
        return VectorField(tuple(-a for a in self.components))

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s):
        return VectorField(tuple(a * s for a in self.components))

    def evaluate(self, points) -> np.ndarray:
        """Component values, shape ``(N, n)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([c.evaluate(pts) for c in self.components], axis=-1)

    def __str__(self):
        return "(" + ", ".join(str(c) for c in self.components) + ")"

    @classmethod
    def parse(cls, spec, n: int | None = None) -> "VectorField":
        """Parse ``"(c1, ..., cn)"`` or a sequence of component strings."""
        if isinstance(spec, str):
            s = spec.strip()
            if not (s.startswith("(") and s.endswith(")")):
                raise ParseError("a field is written as '(c1, ..., cn)', got %r" % spec)
            comps = _split_top_level(s[1:-1])
        else:
            comps = [str(c) for c in spec]
        if n is None:
            n = len(comps)
        if len(comps) != n:
            raise ParseError("field %r has %d components, expected %d" % (spec, len(comps), n))
        return cls(tuple(CoefficientExpr.parse(c, n) for c in comps))


def parse_fields(specs: Sequence) -> list[VectorField]:
    fields = [VectorField.parse(s) for s in specs]
    if len({f.dim for f in fields}) > 1:
        raise ParseError("fields have different dimensions")
    return fields


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """[X, Y]_j = sum_k (a_k d_k b_j - b_k d_k a_j)."""
    if X.dim != Y.dim:
        raise ValueError("dimension mismatch: %d vs %d" % (X.dim, Y.dim))
    return VectorField(tuple(X(b) - Y(a) for a, b in zip(X.components, Y.components)))


# named systems used by tests, configs and docs

def euclidean_fields(n: int) -> list[VectorField]:
    return [
        VectorField(tuple(CoefficientExpr.constant(n, 1.0 if i == j else 0.0) for j in range(n)))
        for i in range(n)
    ]


def grushin_fields() -> list[VectorField]:
    return [VectorField.parse("(1, 0)"), VectorField.parse("(0, x1)")]


def exponential_fields() -> list[VectorField]:
    """(e^{x2} d1, e^{2 x2} d1, x1 d2) on the plane."""
    return [
        VectorField.parse("(exp(x2), 0)"),
        VectorField.parse("(exp(2*x2), 0)"),
        VectorField.parse("(0, x1)"),
    ]


@dataclass
class BracketFlag:
    """``layers[j-1]`` lists every bracket of length <= j with its word.

    Words are right-normed: ``(i1, i2, ..., ij)`` is
    ``[X_i1, [X_i2, [..., X_ij]]]`` (0-based indices).  Identically zero
    brackets are dropped; nothing else is pruned.
    """

    layers: list = field(default_factory=list)

    @property
    def max_len(self):
        return len(self.layers)

    def fields_upto(self, j):
        return [v for _, v in self.layers[j - 1]]


def bracket_flag(fields: Sequence[VectorField], max_len: int) -> BracketFlag:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    dims = {f.dim for f in fields}
    if len(dims) != 1:
        raise ValueError("fields must share one dimension")
    base = [((i,), f) for i, f in enumerate(fields)]
    layers = [list(base)]
    newest = [(w, f) for w, f in base if not f.is_zero()]
    layers[0] = newest if newest else []
    for _ in range(1, max_len):
        fresh = []
        for i, X in enumerate(fields):
            for w, Y in newest:
                b = lie_bracket(X, Y)
                if not b.is_zero():
                    fresh.append(((i,) + w, b))
        layers.append(layers[-1] + fresh)
        newest = fresh
    return BracketFlag(layers)


def _numerical_rank(mats: np.ndarray, rank_tol: float) -> np.ndarray:
    """Rank of each matrix in a stack ``(N, r, n)``."""
    if mats.shape[1] == 0:
        return np.zeros(mats.shape[0], dtype=int)
    s = np.linalg.svd(mats, compute_uv=False)
    smax = s[:, :1]
    keep = (s > rank_tol * smax) & (smax > 0)
    return keep.sum(axis=1)


def _flag_table(flag: BracketFlag, points: np.ndarray, rank_tol: float) -> np.ndarray:
    """``nu_j(x)`` for every point (rows) and every length j (columns)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros((pts.shape[0], flag.max_len), dtype=int)
    last = flag.layers[-1]
    vals = (
        np.stack([f.evaluate(pts) for _, f in last], axis=1)
        if last
        else np.zeros((pts.shape[0], 0, pts.shape[1]))
    )
    if not np.all(np.isfinite(vals)):
        raise DomainError("field coefficients overflow at some sample point")
    for j in range(flag.max_len):
        out[:, j] = _numerical_rank(vals[:, : len(flag.layers[j])], rank_tol)
    return out


def flag_dimensions(fields, x, max_len: int, rank_tol: float = DEFAULT_RANK_TOL) -> list[int]:
    """[nu_1(x), ..., nu_maxLen(x)]: ranks of the bracket spans at ``x``."""
    flag = bracket_flag(fields, max_len)
    return [int(v) for v in _flag_table(flag, np.asarray(x, float)[None, :], rank_tol)[0]]


def hormander_index(fields, sample_points, max_len_cap: int = 6,
                    rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """Smallest bracket length spanning the tangent space at every sample."""
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if pts.size == 0:
        raise ValueError("empty sample set")
    n = fields[0].dim
    table = _flag_table(bracket_flag(fields, max_len_cap), pts, rank_tol)
    full = table == n
    for j in range(max_len_cap):
        if full[:, j].all():
            return j + 1
    bad = pts[np.argmin(full[:, -1])]
    raise HormanderError(
        "Hormander condition not verified at point %s within cap %d" % (bad.tolist(), max_len_cap),
        point=bad,
    )


def _dimension_from_flag(nus) -> int:
    prev, total = 0, 0
    for j, v in enumerate(nus, start=1):
        total += j * (v - prev)
        prev = v
    return int(total)


def pointwise_dimension(fields, x, Q: int, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """nu(x) = sum_j j (nu_j(x) - nu_{j-1}(x)), j = 1..Q."""
    return _dimension_from_flag(flag_dimensions(fields, x, Q, rank_tol))


@dataclass
class MetivierReport:
    Q: int
    points: np.ndarray
    nu: np.ndarray
    flags: np.ndarray
    nu_tilde: int
    metivier_condition_holds: bool
    witness_points: dict
    certification: str = "lower bound certified at samples"

    def nu_of_x(self, x) -> int:
        x = np.asarray(x, float)
        hit = np.flatnonzero(np.all(np.isclose(self.points, x, rtol=0, atol=0), axis=1))
        if hit.size == 0:
            raise KeyError("point was not sampled")
        return int(self.nu[hit[0]])

    @property
    def n(self):
        return self.points.shape[1]

    def bounds_hold(self) -> bool:
        n = self.n
        ok = bool(np.all((self.nu >= n) & (self.nu <= self.nu_tilde)))
        if self.Q > 1:
            ok = ok and (n + self.Q - 1 <= self.nu_tilde < n * self.Q)
        return ok

    def to_dict(self, max_witnesses: int = 8) -> dict:
        values, counts = np.unique(self.nu, return_counts=True)
        return {
            "Q": int(self.Q),
            "nu_tilde": int(self.nu_tilde),
            "n": int(self.n),
            "metivier_condition_holds": bool(self.metivier_condition_holds),
            "certification": self.certification,
            "sample_count": int(len(self.nu)),
            "nu_histogram": {str(int(v)): int(c) for v, c in zip(values, counts)},
            "bounds_hold": self.bounds_hold(),
            "witness_points": {
                k: [[float(c) for c in p] for p in v[:max_witnesses]]
                for k, v in self.witness_points.items()
            },
        }


def generalized_metivier_index(fields, domain_sampler, extra_points=(),
                               rank_tol: float = DEFAULT_RANK_TOL,
                               max_len_cap: int = 6) -> MetivierReport:
    """Max of nu(x) over sampled points of the closed domain.

    ``domain_sampler`` is an array of points or a zero-argument callable
    returning one.  ``extra_points`` is where callers put suspected
    degeneracy loci; a maximum over samples is only a lower bound for the
    true index, which the report says.
    """
    pts = domain_sampler() if callable(domain_sampler) else domain_sampler
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    extra = np.asarray(extra_points, dtype=float)
    if extra.size:
        pts = np.vstack([pts, np.atleast_2d(extra)])
    if pts.size == 0:
        raise ValueError("no sample points")
    Q = hormander_index(fields, pts, max_len_cap, rank_tol)
    flags = _flag_table(bracket_flag(fields, Q), pts, rank_tol)
    weights = np.arange(1, Q + 1)
    inc = np.diff(np.concatenate([np.zeros((len(pts), 1), int), flags], axis=1), axis=1)
    nu = inc @ weights
    nu_tilde = int(nu.max())
    uniq, inverse, counts = np.unique(flags, axis=0, return_inverse=True, return_counts=True)
    inverse = np.asarray(inverse).reshape(-1)
    generic = np.argmax(counts)
    witnesses = {
        "max_nu": pts[nu == nu_tilde],
        "flag_jump": pts[inverse != generic],
    }
    return MetivierReport(
        Q=Q,
        points=pts,
        nu=nu,
        flags=flags,
        nu_tilde=nu_tilde,
        metivier_condition_holds=bool(len(uniq) == 1),
        witness_points=witnesses,
    )


def critical_exponent(nu_tilde: float) -> float:
    """Critical Sobolev exponent 2 nu / (nu - 2)."""
    if nu_tilde <= 2:
        raise DomainError("critical exponent needs nu_tilde > 2, got %r" % (nu_tilde,))
    return 2 * nu_tilde / (nu_tilde - 2)
