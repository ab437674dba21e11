"""Finite-difference discretisation of the sum-of-squares operator.

Unknowns live on grid nodes strictly inside the box where the mask holds; all
other nodes carry the zero Dirichlet extension.  Each field ``X_i`` becomes a
rectangular difference matrix ``B_i`` and the operator is assembled as
``A = sum_i B_i^T W B_i`` with the midpoint weight ``W = h_1 ... h_n``, so
``u^T A u`` is exactly the discrete ``int |Xu|^2``.  Eigenproblems are posed
as ``A v = lam W v``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from .errors import GridError
from .field_algebra import VectorField


def mask_from_expression(expr: str | None, n: int) -> Callable | None:
    """Vectorised predicate from text such as ``"x1**2 + x2**2 < 1"``."""
    if expr is None or str(expr).strip() in ("", "True", "true", "box"):
        return None
    import sympy

    xs = sympy.symbols(" ".join("x%d" % (j + 1) for j in range(n)), real=True, seq=True)
    local = {str(x): x for x in xs}
    try:
        parsed = sympy.sympify(str(expr).replace("^", "**"), locals=local)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise GridError("cannot parse mask %r: %s" % (expr, exc)) from exc
    extra = parsed.free_symbols - set(xs)
    if extra:
        raise GridError("mask %r uses unknown symbols %s" % (expr, sorted(map(str, extra))))
    fn = sympy.lambdify(xs, parsed, modules="numpy")

    def predicate(points):
        pts = np.atleast_2d(points)
        out = fn(*[pts[:, j] for j in range(n)])
        return np.broadcast_to(np.asarray(out, dtype=bool), (pts.shape[0],)).copy()

    predicate.expression = str(expr)
    return predicate


def sample_expression(expr, points) -> np.ndarray:
    """Evaluate a numeric expression in ``x1..xn`` at ``points``; booleans become 0/1."""
    pts = np.atleast_2d(np.asarray(points, float))
    n = pts.shape[1]
    if isinstance(expr, (int, float)):
        return np.full(len(pts), float(expr))
    import sympy

    xs = sympy.symbols(" ".join("x%d" % (j + 1) for j in range(n)), real=True, seq=True)
    local = {str(x): x for x in xs}
    try:
        parsed = sympy.sympify(str(expr).replace("^", "**"), locals=local)
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise GridError("cannot parse expression %r: %s" % (expr, exc)) from exc
    extra = parsed.free_symbols - set(xs)
    if extra:
        raise GridError("expression %r uses unknown symbols %s" % (expr, sorted(map(str, extra))))
    fn = sympy.lambdify(xs, parsed, modules="numpy")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.asarray(fn(*[pts[:, j] for j in range(n)]), dtype=float)
    out = np.broadcast_to(out, (len(pts),)).copy()
    if not np.all(np.isfinite(out)):
        raise GridError("expression %r is not finite on the grid" % (expr,))
    return out


@dataclass(frozen=True)
class GridSpec:
    """Uniform node grid on a box, ``resolution[j]`` intervals along axis j."""

    box: tuple
    resolution: tuple
    mask: Callable | None = field(default=None, compare=False)
    mask_expr: str | None = None

    def __post_init__(self):
        box = tuple((float(a), float(b)) for a, b in self.box)
        res = tuple(int(r) for r in self.resolution)
        if len(res) == 1 and len(box) > 1:
            res = res * len(box)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "resolution", res)
        if len(box) != len(res):
            raise GridError("box and resolution disagree on dimension")
        if any(b <= a for a, b in box):
            raise GridError("empty box side")
        if any(r < 3 for r in res):
            raise GridError("resolution must be >= 3 per axis")
        if self.mask is None and self.mask_expr is not None:
            object.__setattr__(self, "mask", mask_from_expression(self.mask_expr, len(box)))
        if not self.interior.any():
            raise GridError("the mask selects no interior node")
        labels, count = ndimage.label(self.interior)
        if count != 1:
            raise GridError("masked interior is not connected (%d components)" % count)

    @property
    def dim(self):
        return len(self.box)

    @property
    def h(self) -> np.ndarray:
        return np.array([(b - a) / r for (a, b), r in zip(self.box, self.resolution)])

    @property
    def weight(self) -> float:
        return float(np.prod(self.h))

    @property
    def node_shape(self):
        return tuple(r + 1 for r in self.resolution)

    def axes(self):
        return [a + h * np.arange(r + 1) for (a, _), h, r in zip(self.box, self.h, self.resolution)]

    def node_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def interior(self) -> np.ndarray:
        inside = np.zeros(self.node_shape, dtype=bool)
        inner = tuple(slice(1, r) for r in self.resolution)
        inside[inner] = True
        if self.mask is not None:
            keep = np.asarray(self.mask(self.node_points()), dtype=bool).reshape(self.node_shape)
            inside &= keep
        return inside

    @cached_property
    def index(self) -> np.ndarray:
        """Unknown number of every node, -1 outside."""
        idx = np.full(self.node_shape, -1, dtype=np.int64)
        idx[self.interior] = np.arange(int(self.interior.sum()))
        return idx

    @property
    def size(self) -> int:
        return int(self.interior.sum())

    @property
    def points(self) -> np.ndarray:
        """Coordinates of the unknowns, shape ``(size, n)``."""
        return self.node_points()[self.interior.ravel()]

    def to_full(self, u) -> np.ndarray:
        """Scatter an unknown vector onto the full node array (zeros elsewhere)."""
        out = np.zeros(self.node_shape)
        out[self.interior] = np.asarray(u, float)
        return out

    def from_full(self, arr) -> np.ndarray:
        arr = np.asarray(arr, float)
        if arr.shape != self.node_shape:
            raise GridError("array shape %s does not match grid %s" % (arr.shape, self.node_shape))
        return arr[self.interior]

    def restrict(self, mask: Callable, mask_expr=None) -> "GridSpec":
        """Same box and resolution with an additional predicate."""
        prev = self.mask

        def both(points):
            keep = np.asarray(mask(points), bool)
            return keep if prev is None else keep & np.asarray(prev(points), bool)

        return GridSpec(self.box, self.resolution, both, mask_expr)

    def describe(self) -> dict:
        return {
            "box": [list(b) for b in self.box],
            "resolution": list(self.resolution),
            "mask": self.mask_expr,
            "unknowns": self.size,
        }


@dataclass
class DiscreteFieldOp:
    """``B`` maps unknowns to samples of ``X u`` at ``row_points``."""

    B: sp.csr_matrix
    row_points: np.ndarray
    weight: float
    scheme: str

    def apply(self, u) -> np.ndarray:
        return self.B @ np.asarray(u, float)


@dataclass
class DiscreteOperator:
    """Sparse symmetric ``A`` with mass ``weight * I`` on ``grid``."""

    A: sp.csr_matrix
    weight: float
    grid: GridSpec
    field_ops: list = field(default_factory=list)
    laplacian: bool = True
    potential: np.ndarray | None = None

    @property
    def size(self):
        return self.A.shape[0]

    def quadratic_form(self, u) -> float:
        u = np.asarray(u, float)
        return float(u @ (self.A @ u))

    def field_energy(self, u) -> float:
        """sum_i ||B_i u||_W^2, the same number computed field by field."""
        u = np.asarray(u, float)
        return float(sum(self.weight * np.sum(op.apply(u) ** 2) for op in self.field_ops))

    def scaled(self) -> sp.csr_matrix:
        """``A / W``: the standard-form matrix with the same spectrum."""
        return (self.A / self.weight).tocsr()

    def rayleigh(self, u) -> float:
        u = np.asarray(u, float)
        return self.quadratic_form(u) / (self.weight * float(u @ u))


def _forward_rows(field: VectorField, grid: GridSpec):
    n = grid.dim
    h = grid.h
    shape = tuple(r for r in grid.resolution)  # lower corners 0..N-1
    corners = np.stack(
        [c.ravel() for c in np.meshgrid(*[np.arange(r) for r in shape], indexing="ij")], axis=-1
    )
    base = np.array([a for a, _ in grid.box]) + corners * h
    idx = grid.index
    rows, cols, vals = [], [], []
    row_ids = np.arange(len(corners))
    for j in range(n):
        comp = field.components[j]
        if comp.is_zero():
            continue
        mid = base.copy()
        mid[:, j] += 0.5 * h[j]
        a = comp.evaluate(mid) / h[j]
        up = corners.copy()
        up[:, j] += 1
        i_lo = idx[tuple(corners.T)]
        i_hi = idx[tuple(up.T)]
        for ids, sign in ((i_hi, 1.0), (i_lo, -1.0)):
            ok = (ids >= 0) & (a != 0)
            rows.append(row_ids[ok])
            cols.append(ids[ok])
            vals.append(sign * a[ok])
    return corners, base, rows, cols, vals


def _centered_rows(field: VectorField, grid: GridSpec):
    n = grid.dim
    h = grid.h
    nodes = np.argwhere(grid.interior)
    base = np.array([a for a, _ in grid.box]) + nodes * h
    idx = grid.index
    rows, cols, vals = [], [], []
    row_ids = np.arange(len(nodes))
    for j in range(n):
        comp = field.components[j]
        if comp.is_zero():
            continue
        a = comp.evaluate(base) / (2 * h[j])
        for step, sign in ((1, 1.0), (-1, -1.0)):
            nb = nodes.copy()
            nb[:, j] += step
            ids = idx[tuple(nb.T)]
            ok = (ids >= 0) & (a != 0)
            rows.append(row_ids[ok])
            cols.append(ids[ok])
            vals.append(sign * a[ok])
    return nodes, base, rows, cols, vals


def discretize_field(field: VectorField, grid: GridSpec, scheme: str = "forward") -> DiscreteFieldOp:
    """Difference matrix for one field.

    ``forward``: row per lower-corner node ``x``; the ``d_j`` part is the
    forward difference along axis j with ``a_j`` taken at the edge midpoint.
    ``centered``: row per unknown, central differences, ``a_j`` at the node.
    """
    if field.dim != grid.dim:
        raise GridError("field dimension %d does not match grid dimension %d" % (field.dim, grid.dim))
    if grid.size == 0:
        raise GridError("empty interior")
    if scheme == "forward":
        keys, base, rows, cols, vals = _forward_rows(field, grid)
    elif scheme == "centered":
        keys, base, rows, cols, vals = _centered_rows(field, grid)
    else:
        raise ValueError("unknown scheme %r" % scheme)
    if rows:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    B = sp.csr_matrix((v, (r, c)), shape=(len(keys), grid.size))
    B.sum_duplicates()
    return DiscreteFieldOp(B=B, row_points=base, weight=grid.weight, scheme=scheme)


def assemble_laplacian(fields: Sequence[VectorField], grid: GridSpec, scheme: str = "forward") -> DiscreteOperator:
    ops = [discretize_field(f, grid, scheme) for f in fields]
    A = sp.csr_matrix((grid.size, grid.size))
    for op in ops:
        A = A + (op.B.T @ op.B) * grid.weight
    A = ((A + A.T) * 0.5).tocsr()
    A.eliminate_zeros()
    return DiscreteOperator(A=A, weight=grid.weight, grid=grid, field_ops=ops)


def assemble_schrodinger(op: DiscreteOperator, V) -> DiscreteOperator:
    """``A + diag(V) W`` for a node-sampled potential (scalar broadcasts)."""
    V = np.broadcast_to(np.asarray(V, float), (op.size,)).copy()
    if not np.all(np.isfinite(V)):
        raise ValueError("potential has non-finite entries")
    A = (op.A + sp.diags(V * op.weight)).tocsr()
    return DiscreteOperator(
        A=A, weight=op.weight, grid=op.grid, field_ops=op.field_ops, laplacian=False, potential=V
    )


def norms(u, op: DiscreteOperator, q: float | None = None) -> dict:
    """Quadrature norms: L2, H^1_X (``HX1^2 = L2^2 + u^T A u``) and optionally L^q."""
    u = np.asarray(u, float)
    W = op.weight
    l2 = float(np.sqrt(W * np.sum(u * u)))
    out = {"L2": l2, "HX1": float(np.sqrt(l2 * l2 + op.quadratic_form(u)))}
    if q is not None:
        if q < 1:
            raise ValueError("L^q needs q >= 1")
        out["Lq"] = float((W * np.sum(np.abs(u) ** q)) ** (1.0 / q))
        out["q"] = q
    return out
