"""Lowest Dirichlet eigenpairs, Weyl-exponent fitting and negative-eigenvalue counts.

The eigensolver is a shift-invert Lanczos iteration with full
reorthogonalisation.  Long runs of eigenvalues are computed slice by slice:
each slice gets its own shift, and every accepted window is checked against
the exact eigenvalue count below its end point, obtained from the inertia of
a symmetric ``LDL^T``-type factorisation (Sylvester's law).  Missing copies of
repeated eigenvalues are picked up by restarting inside the slice from a fresh
vector orthogonal to what was already found.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .discrete_operator import DiscreteOperator, assemble_schrodinger
from .errors import ConvergenceError

log = logging.getLogger(__name__)

DENSE_CUTOFF = 2500


# ---------------------------------------------------------------------------
# inertia


def _symmetric_factor(M: sp.spmatrix, shift: float):
    S = (M - shift * sp.identity(M.shape[0], format="csc")).tocsc()
    lu = sla.splu(
        S,
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )
    return lu


def inertia_below(M: sp.spmatrix, shift: float) -> int | None:
    """Number of eigenvalues of symmetric ``M`` strictly below ``shift``.

    Reads the pivot signs of a symmetric-mode factorisation of
    ``M - shift I``.  Returns None when the factorisation is not usable as an
    ``LDL^T`` (row pivoting happened or a pivot is zero / non-finite).
    """
    try:
        lu = _symmetric_factor(M, shift)
    except RuntimeError:
        return None
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None
    d = lu.U.diagonal()
    if not np.all(np.isfinite(d)) or np.any(d == 0):
        return None
    return int(np.count_nonzero(d < 0))


def count_below(M, threshold: float) -> int:
    """Eigenvalues of symmetric ``M`` below ``threshold``; inertia first, eigensolve fallback."""
    if sp.issparse(M):
        if M.shape[0] <= DENSE_CUTOFF:
            return int(np.count_nonzero(la.eigvalsh(M.toarray()) < threshold))
        c = inertia_below(M, threshold)
        if c is not None:
            return c
        log.info("inertia breakdown at shift %g; falling back to eigensolve", threshold)
        return _count_by_eigensolve(M, threshold)
    return int(np.count_nonzero(la.eigvalsh(np.asarray(M)) < threshold))


def _count_by_eigensolve(M, threshold):
    n = M.shape[0]
    k = 16
    lower = float(gershgorin_lower(M))
    while True:
        k = min(k, n - 2)
        w = sla.eigsh(M.tocsc(), k=k, sigma=lower - 1.0, which="LM", return_eigenvectors=False)
        c = int(np.count_nonzero(w < threshold))
        if c < k or k >= n - 2:
            return c
        k *= 2


def gershgorin_lower(M) -> float:
    M = sp.csr_matrix(M)
    d = M.diagonal()
    off = np.asarray(abs(M).sum(axis=1)).ravel() - np.abs(d)
    return float(np.min(d - off))


# ---------------------------------------------------------------------------
# Lanczos


@dataclass
class _Ritz:
    values: np.ndarray
    vectors: np.ndarray  # rows


def lanczos_shift_invert(M, shift, want, rng, locked=None, tol=1e-10, max_dim=None,
                         factor=None, target=None):
    """Ritz pairs of ``(M - shift)^-1`` with full reorthogonalisation.

    Grows the Krylov space until ``want`` Ritz values nearest ``shift``
    (optionally restricted to ``target(lam) -> bool``) satisfy
    ``|beta_m s_mi| <= tol |theta_i|``.  ``locked`` rows are kept out of the
    space.  Returns converged pairs as eigenvalues of ``M``.
    """
    n = M.shape[0]
    if max_dim is None:
        max_dim = min(n - 1, max(4 * want + 40, 120))
    max_dim = min(max_dim, n - (0 if locked is None else len(locked)) - 1)
    if max_dim < 2:
        raise ConvergenceError("matrix too small for Lanczos")
    lu = factor if factor is not None else _symmetric_factor(M, shift)

    def project_out(w, basis):
        if basis is not None and len(basis):
            w -= (basis @ w) @ basis
        return w

    Q = np.empty((max_dim + 1, n))
    q = project_out(rng.standard_normal(n), locked)
    q /= np.linalg.norm(q)
    Q[0] = q
    alpha, beta = [], []
    j = 0
    check_every = max(10, want // 4)
    next_check = min(max_dim, max(want + 10, 2 * want))
    while True:
        while j < next_check:
            w = lu.solve(Q[j])
            w = project_out(w, locked)
            a = float(Q[j] @ w)
            w -= a * Q[j]
            if j > 0:
                w -= beta[-1] * Q[j - 1]
            for _ in range(2):
                w -= (Q[: j + 1] @ w) @ Q[: j + 1]
                w = project_out(w, locked)
            b = float(np.linalg.norm(w))
            alpha.append(a)
            beta.append(b)
            j += 1
            if b <= 1e-14 * max(1.0, abs(a)):
                # invariant subspace: restart direction
                w = project_out(rng.standard_normal(n), locked)
                w -= (Q[:j] @ w) @ Q[:j]
                b_new = np.linalg.norm(w)
                Q[j] = w / b_new
                beta[-1] = 0.0
            else:
                Q[j] = w / b
        theta, S = la.eigh_tridiagonal(np.array(alpha), np.array(beta[:-1]))
        res = np.abs(beta[-1] * S[-1, :])
        lam = shift + 1.0 / theta
        order = np.argsort(-np.abs(theta))
        if target is not None:
            order = np.array([i for i in order if target(lam[i])], dtype=int)
        top = order[:want]
        conv = res[top] <= tol * np.abs(theta[top])
        if len(top) >= want and conv.all():
            break
        if j >= max_dim:
            break
        next_check = min(max_dim, j + check_every)
    ok = res <= tol * np.abs(theta)
    if target is not None:
        ok &= np.array([target(v) for v in lam], dtype=bool)
    idx = np.flatnonzero(ok)
    vecs = (S[:, idx].T @ Q[:j])
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return _Ritz(values=lam[idx], vectors=vecs)


def _dense_lowest(M, k):
    w, v = la.eigh(M.toarray() if sp.issparse(M) else M, subset_by_index=[0, k - 1])
    return w, v.T


def _orthonormal_rows(V):
    q, r = np.linalg.qr(V.T)
    return q.T


def _sliced_lowest(M, k, tol, rng, slice_size=120):
    """Lowest ``k`` eigenpairs of sparse symmetric ``M`` by spectrum slicing."""
    n = M.shape[0]
    lo = gershgorin_lower(M)
    lo = lo - 1e-9 * max(1.0, abs(lo))
    shift = lo
    c_lo = 0
    vals, vecs = [], []
    stalls = 0
    while c_lo < k:
        batch = min(slice_size, k - c_lo)
        factor = _symmetric_factor(M, shift)
        got_v, got_x = np.zeros(0), np.zeros((0, n))
        locked = None
        j = 0
        for attempt in range(4):
            ritz = lanczos_shift_invert(
                M, shift, batch + 4, rng, locked=locked, tol=tol, factor=factor,
                target=lambda v, e=lo: v > e,
            )
            if len(ritz.values):
                got_v = np.concatenate([got_v, ritz.values])
                got_x = np.vstack([got_x, ritz.vectors])
                order = np.argsort(got_v)
                got_v, got_x = got_v[order], got_x[order]
            j, hi = _accept_window(M, got_v, lo, c_lo, batch)
            if j >= batch // 2:
                break
            locked = _orthonormal_rows(got_x) if len(got_x) else None
        if j == 0:
            stalls += 1
            if stalls > 3:
                raise ConvergenceError(
                    "spectrum slicing stalled at shift %g" % shift,
                    best={"eigenvalues": np.concatenate(vals) if vals else np.zeros(0)},
                )
            shift = lo + 0.5 * (shift - lo)
            continue
        stalls = 0
        sel = (got_v > lo) & (got_v < hi)
        w_sel, x_sel = _rayleigh_ritz(M, got_x[sel])
        vals.append(w_sel)
        vecs.append(x_sel)
        c_lo += j
        # next shift: a third of the way into the expected next slice
        spacing = (hi - lo) / j
        lo = hi
        shift = hi + 0.35 * spacing * min(slice_size, max(k - c_lo, 1))
        log.debug("slice accepted %d eigenvalues, total %d", j, c_lo)
    w = np.concatenate(vals)[:k]
    X = np.vstack(vecs)[:k]
    return w, X


def _rayleigh_ritz(M, X):
    """Re-orthonormalise a block (cluster copies) and diagonalise on it."""
    Qm = _orthonormal_rows(X)
    H = Qm @ (M @ Qm.T)
    w, S = la.eigh((H + H.T) * 0.5)
    return w, S.T @ Qm


def _accept_window(M, vals, lo_edge, c_lo, batch):
    """Longest prefix of ``vals`` above ``lo_edge`` confirmed complete by inertia.

    Only prefixes ending at a gap are tried (a cut inside a repeated
    eigenvalue can never match the count).  Among those, completeness is
    monotone, so bisect.  Returns ``(j, hi)`` with ``hi`` the separating point.
    """
    cand = np.sort(vals[vals > lo_edge])
    if len(cand) < 2:
        return 0, None
    gaps = np.diff(cand)
    ends = np.flatnonzero(gaps > 1e-10 * np.maximum(np.abs(cand[1:]), 1.0)) + 1
    if len(ends) == 0:
        return 0, None
    # a cluster straddling the batch end is taken whole
    ends = ends[ends <= max(batch, ends[0])]

    def cut(j):
        return cand[j - 1] + 0.5 * (cand[j] - cand[j - 1])

    def complete(j):
        return count_below(M, cut(j)) - c_lo == j

    if complete(ends[-1]):
        return int(ends[-1]), cut(ends[-1])
    lo, hi = -1, len(ends) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if complete(ends[mid]):
            lo = mid
        else:
            hi = mid
    if lo < 0:
        return 0, None
    return int(ends[lo]), cut(ends[lo])


# ---------------------------------------------------------------------------
# public API


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, W-orthonormal
    residuals: np.ndarray
    weight: float
    provenance: dict = field(default_factory=dict)

    @property
    def k(self):
        return len(self.eigenvalues)

    def to_rows(self):
        return [
            (i + 1, float(v), float(r))
            for i, (v, r) in enumerate(zip(self.eigenvalues, self.residuals))
        ]


def _standard_matrix(op):
    if isinstance(op, DiscreteOperator):
        return op.scaled(), op.weight
    return sp.csr_matrix(op), 1.0


def smallest_eigenpairs(op, k: int, tol: float = 1e-8, seed: int = 0,
                        method: str = "auto", slice_size: int = 120) -> Spectrum:
    """``k`` lowest pairs of ``A v = lam W v``.

    ``method``: ``auto`` (dense below a size cutoff, sliced Lanczos above),
    ``dense``, ``lanczos`` or ``arpack`` (scipy's shift-invert ARPACK, kept as
    an independent cross-check).
    """
    M, W = _standard_matrix(op)
    n = M.shape[0]
    if not 0 < k < n:
        raise ValueError("need 0 < k < matrix dimension (%d)" % n)
    rng = np.random.default_rng(seed)
    if method == "auto":
        method = "dense" if n <= DENSE_CUTOFF else "lanczos"
    if method == "dense":
        w, X = _dense_lowest(M, k)
    elif method == "lanczos":
        w, X = _sliced_lowest(M, k, 1e-10, rng, slice_size=slice_size)
    elif method == "arpack":
        v0 = rng.standard_normal(n)
        w, V = sla.eigsh(M.tocsc(), k=k, sigma=min(0.0, gershgorin_lower(M)) - 1e-8, which="LM", v0=v0)
        X = V.T
    else:
        raise ValueError("unknown method %r" % method)
    order = np.argsort(w)
    w, X = w[order], X[order]
    # sign convention: largest-magnitude entry positive (deterministic output)
    piv = np.argmax(np.abs(X), axis=1)
    X = X * np.sign(X[np.arange(len(X)), piv])[:, None]
    R = M @ X.T - X.T * w
    res = np.linalg.norm(R, axis=0)
    scale = np.maximum(np.abs(w), 1.0)
    if np.any(res > max(tol, 1e-12) * scale * 10):
        raise ConvergenceError(
            "eigenpairs did not meet tolerance (max relative residual %.3e)" % float(np.max(res / scale)),
            best={"eigenvalues": w, "residuals": res},
        )
    V = X.T / np.sqrt(W)
    return Spectrum(
        eigenvalues=w,
        eigenvectors=V,
        residuals=res,
        weight=W,
        provenance={"method": method, "n": int(n), "k": int(k), "seed": int(seed)},
    )


@dataclass
class WeylFit:
    a_hat: float
    b_hat: float | None
    C_hat: float
    k_min: int
    k_max: int
    r2: float
    model: str

    def to_dict(self):
        return {
            "model": self.model,
            "a_hat": self.a_hat,
            "b_hat": self.b_hat,
            "C_hat": self.C_hat,
            "window": [self.k_min, self.k_max],
            "r2": self.r2,
        }


def default_window(k_total: int, saturation: float = 0.3) -> tuple[int, int]:
    """Drop the top ``saturation`` fraction; start where ln k > 1."""
    k_min = 3
    k_max = int(np.floor(k_total * (1.0 - saturation)))
    return k_min, k_max


def weyl_fit(eigenvalues, model: str = "power-only", window=None, saturation: float = 0.3) -> WeylFit:
    """Least squares of ln lam_k on ln k (and ln ln k for ``power-log``)."""
    lam = np.asarray(getattr(eigenvalues, "eigenvalues", eigenvalues), float)
    if window is None:
        window = default_window(len(lam), saturation)
    k_min, k_max = int(window[0]), int(window[1])
    if k_min < 3:
        raise ValueError("window must start where ln k > 1 (k >= 3)")
    if k_max > len(lam):
        raise ValueError("window exceeds the computed spectrum")
    if k_max - k_min + 1 < 20:
        raise ValueError("fit window needs at least 20 eigenvalues")
    k = np.arange(k_min, k_max + 1, dtype=float)
    y = lam[k_min - 1 : k_max]
    if np.any(y <= 0):
        raise ValueError("non-positive eigenvalues inside the fit window")
    cols = [np.ones_like(k), np.log(k)]
    if model == "power-log":
        cols.append(np.log(np.log(k)))
    elif model != "power-only":
        raise ValueError("unknown model %r" % model)
    X = np.stack(cols, axis=1)
    ly = np.log(y)
    coef, _, rank, _ = np.linalg.lstsq(X, ly, rcond=None)
    if rank < X.shape[1]:
        raise ValueError("degenerate regression (rank %d)" % rank)
    resid = ly - X @ coef
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return WeylFit(
        a_hat=float(coef[1]),
        b_hat=float(coef[2]) if model == "power-log" else None,
        C_hat=float(np.exp(coef[0])),
        k_min=k_min,
        k_max=k_max,
        r2=r2,
        model=model,
    )


def verify_poincare(spectrum: Spectrum, op: DiscreteOperator | None = None,
                    tol_pos: float = 1e-12, samples: int = 10, seed: int = 0) -> tuple[bool, float]:
    """lam_1 > tol_pos, plus random Rayleigh quotients never dipping below lam_1."""
    lam1 = float(spectrum.eigenvalues[0])
    ok = lam1 > tol_pos
    if op is not None:
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            u = rng.standard_normal(op.size)
            if op.rayleigh(u) < lam1 * (1 - 1e-9) - 1e-12:
                ok = False
    return ok, lam1


def _neg_tol(M) -> float:
    return float(abs(M).sum(axis=0).max()) * np.finfo(float).eps * 100


def clr_count(op: DiscreteOperator, V, tol_neg: float | None = None) -> int:
    """Number of negative eigenvalues of ``A + diag(V) W`` (``V <= 0``)."""
    V = np.broadcast_to(np.asarray(V, float), (op.size,))
    if np.any(V > 0):
        raise ValueError("potential must be non-positive")
    S = assemble_schrodinger(op, V).scaled()
    if tol_neg is None:
        tol_neg = _neg_tol(S)
    return count_below(S, -tol_neg)


@dataclass
class ClrScaling:
    t_values: np.ndarray
    counts: np.ndarray
    slope: float
    window: tuple
    saturation_cap: int
    theoretical_cap: float | None = None

    def to_dict(self):
        return {
            "slope": self.slope,
            "window": [float(self.window[0]), float(self.window[1])],
            "saturation_cap": self.saturation_cap,
            "theoretical_cap": self.theoretical_cap,
            "t": [float(t) for t in self.t_values],
            "count": [int(c) for c in self.counts],
        }


def clr_counts(op: DiscreteOperator, V_shape, t_values) -> np.ndarray:
    return np.array([clr_count(op, float(t) * np.asarray(V_shape, float)) for t in t_values])


def clr_scaling_fit(op: DiscreteOperator, V_shape, t_values, nu_tilde=None,
                    saturation: float = 0.1, min_count: int = 4, counts=None) -> ClrScaling:
    """Log-log slope of N(t V) against t below grid saturation.

    Points with N below ``min_count`` (integer noise) or above
    ``saturation`` times the number of nodes where ``V < 0`` are excluded.
    """
    t = np.asarray(t_values, float)
    if np.any(np.diff(t) <= 0):
        raise ValueError("t values must increase")
    if counts is None:
        counts = clr_counts(op, V_shape, t)
    counts = np.asarray(counts)
    if np.count_nonzero(counts) == 0:
        raise ValueError("all counts are zero; increase t range")
    support = int(np.count_nonzero(np.asarray(V_shape) < 0))
    cap = max(int(saturation * support), 2)
    sel = (counts >= min_count) & (counts <= cap)
    if sel.sum() < 2:
        sel = (counts > 0) & (counts <= cap)
    if sel.sum() < 2:
        sel = counts > 0
    if sel.sum() < 2:
        raise ValueError("need at least two nonzero counts to fit a slope")
    slope = float(np.polyfit(np.log(t[sel]), np.log(counts[sel]), 1)[0])
    return ClrScaling(
        t_values=t,
        counts=counts,
        slope=slope,
        window=(float(t[sel][0]), float(t[sel][-1])),
        saturation_cap=cap,
        theoretical_cap=None if nu_tilde is None else nu_tilde / 2.0,
    )


def refinement_window(coarse, fine, rtol: float = 0.02, k_min: int = 20) -> tuple[int, int]:
    """Saturation-safe fit window from two resolutions of the same problem.

    ``k_max`` is the largest k such that every ``lam_j``, ``j <= k``, agrees
    between the coarse and fine spectra to relative ``rtol``; beyond it the
    coarse grid has started to saturate and the fine one soon will.
    """
    a = np.asarray(getattr(coarse, "eigenvalues", coarse), float)
    b = np.asarray(getattr(fine, "eigenvalues", fine), float)
    m = min(len(a), len(b))
    bad = np.flatnonzero(np.abs(a[:m] / b[:m] - 1.0) > rtol)
    k_max = int(bad[0]) if len(bad) else m
    if k_max - k_min + 1 < 20:
        raise ValueError("resolutions agree only up to k=%d; refine the grid" % k_max)
    return k_min, k_max
