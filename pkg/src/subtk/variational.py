"""Discrete energy functionals, the symmetry-restoring modification and critical-point searches.

Everything acts on interior node vectors ``u`` of a :class:`DiscreteOperator`
with quadrature weight ``W``: integrals are ``W * sum(...)`` and gradients are
dual vectors, ``DE(u) = A u - W f(u) - W g(u)``.

Nonlinearities are the power family ``f = B |u|^(p-2) u`` plus the
perturbation ``g = beta |u|^sigma + alpha(x)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.optimize import minimize_scalar

from .discrete_operator import DiscreteOperator
from .errors import ConvergenceError, InvariantViolation
from .spectral import count_below

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# nonlinearity


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    """``f = B |u|^(p-2) u`` and ``g = beta |u|^sigma + alpha``."""

    B: float = 1.0
    p: float = 4.0
    beta: float = 0.0
    sigma: float = 0.0
    alpha: np.ndarray | float | None = None
    R0: float = 1.0

    def __post_init__(self):
        self.validate()

    @property
    def mu(self) -> float:
        return float(self.p)

    @property
    def has_g(self) -> bool:
        return self.beta != 0 or (self.alpha is not None and np.any(np.asarray(self.alpha) != 0))

    def validate(self):
        if not self.B > 0:
            raise InvariantViolation("B must be positive", "(H.2)")
        if not self.p > 2:
            raise InvariantViolation("need p > 2 for a superlinear f", "(H.2)")
        if not (0 <= self.sigma < self.mu - 1):
            raise InvariantViolation(
                "need 0 <= sigma < mu - 1, got sigma=%r with mu=%r" % (self.sigma, self.mu), "(H.4)"
            )
        if self.beta < 0:
            raise InvariantViolation("beta must be non-negative", "(H.4)")
        if self.alpha is not None and not np.all(np.isfinite(np.asarray(self.alpha, float))):
            raise InvariantViolation("alpha must be finite at every node", "(H.4)")
        if self.R0 <= 0:
            raise InvariantViolation("R0 must be positive", "(H.3)")

    def _alpha(self, u):
        if self.alpha is None:
            return 0.0
        return np.asarray(self.alpha, float)

    def f(self, u):
        u = np.asarray(u, float)
        return self.B * np.abs(u) ** (self.p - 2) * u

    def F(self, u):
        u = np.asarray(u, float)
        return self.B * np.abs(u) ** self.p / self.p

    def df(self, u):
        u = np.asarray(u, float)
        return (self.p - 1) * self.B * np.abs(u) ** (self.p - 2)

    def g(self, u):
        u = np.asarray(u, float)
        return self.beta * np.abs(u) ** self.sigma + self._alpha(u)

    def G(self, u):
        """Primitive of ``g`` vanishing at 0: odd in ``u`` for the ``beta`` part."""
        u = np.asarray(u, float)
        s = self.sigma + 1
        return self.beta * np.sign(u) * np.abs(u) ** s / s + self._alpha(u) * u

    def dg(self, u):
        """``g'(u)``; set to 0 at ``u = 0`` where it is singular for sigma < 1."""
        u = np.asarray(u, float)
        if self.beta == 0 or self.sigma == 0:
            return np.zeros_like(u)
        out = np.zeros_like(u)
        nz = u != 0
        out[nz] = self.beta * self.sigma * np.sign(u[nz]) * np.abs(u[nz]) ** (self.sigma - 1)
        return out

    def to_dict(self) -> dict:
        a = self.alpha
        if isinstance(a, np.ndarray):
            a = "node-sampled"
        return {"B": self.B, "p": self.p, "mu": self.mu, "beta": self.beta,
                "sigma": self.sigma, "alpha": a, "R0": self.R0}


# ---------------------------------------------------------------------------
# cutoff


@dataclass(frozen=True)
class CutoffChi:
    """Smooth step: 1 on ``xi <= 1``, 0 on ``xi >= 2``.

    ``s(xi) = m(2 - xi) / (m(2 - xi) + m(xi - 1))`` with ``m(t) = exp(-c/t)``.
    The slope at the midpoint is ``-2c``; ``c = 0.6`` keeps ``|chi'| < 2`` on
    the whole transition with margin (``c = 1`` touches 2 at ``xi = 1.5``).
    """

    c: float = 0.6

    def __post_init__(self):
        bound = self.max_slope()
        if not bound < 2:
            raise ValueError("cutoff slope reaches %.4f, need < 2" % bound)

    def _log_ratio(self, xi):
        # log(m(2-xi) / m(xi-1)) on the open transition
        return -self.c / (2 - xi) + self.c / (xi - 1)

    def __call__(self, xi):
        xi = np.asarray(xi, float)
        out = np.where(xi <= 1, 1.0, 0.0)
        mid = (xi > 1) & (xi < 2)
        if np.any(mid):
            z = np.clip(self._log_ratio(xi[mid]), -700, 700)
            out = out.copy()
            out[mid] = 1.0 / (1.0 + np.exp(-z))
        return out if out.ndim else float(out)

    def derivative(self, xi):
        xi = np.asarray(xi, float)
        out = np.zeros_like(xi)
        mid = (xi > 1) & (xi < 2)
        if np.any(mid):
            x = xi[mid]
            z = np.clip(self._log_ratio(x), -700, 700)
            # s = sigmoid(z), ds/dxi = s(1-s) dz/dxi
            s = 1.0 / (1.0 + np.exp(-z))
            dz = -self.c / (2 - x) ** 2 - self.c / (x - 1) ** 2
            out[mid] = s * (1 - s) * dz
        return out if out.ndim else float(out)

    def max_slope(self, samples: int = 10_000) -> float:
        # the slope peaks at the midpoint, which the grid may miss
        xi = np.append(np.linspace(1, 2, samples + 2)[1:-1], 1.5)
        return float(np.max(np.abs(self.derivative(xi))))


# ---------------------------------------------------------------------------
# energies


def _W(op):
    return op.weight


def energy(u, spec: NonlinearitySpec, op: DiscreteOperator) -> float:
    u = np.asarray(u, float)
    W = _W(op)
    val = 0.5 * op.quadratic_form(u) - W * float(np.sum(spec.F(u)))
    if spec.has_g:
        val -= W * float(np.sum(spec.G(u)))
    return val


def gradient(u, spec: NonlinearitySpec, op: DiscreteOperator) -> np.ndarray:
    u = np.asarray(u, float)
    W = _W(op)
    r = op.A @ u - W * spec.f(u)
    if spec.has_g:
        r = r - W * spec.g(u)
    return r


def hessian(u, spec: NonlinearitySpec, op: DiscreteOperator) -> sp.csr_matrix:
    """Second variation of ``E`` (``g'`` dropped where singular)."""
    d = spec.df(u)
    if spec.has_g:
        d = d + spec.dg(u)
    return (op.A - sp.diags(_W(op) * d)).tocsr()


@dataclass
class GrowthConstants:
    gamma0: float
    a1: float
    a2: float
    a3: float
    R0: float
    A0: float | None = None
    chi: CutoffChi = field(default_factory=CutoffChi)

    def with_A0(self, A0: float) -> "GrowthConstants":
        if not A0 > 0:
            raise ValueError("A0 must be positive")
        return GrowthConstants(self.gamma0, self.a1, self.a2, self.a3, self.R0, float(A0), self.chi)

    def to_dict(self) -> dict:
        return {"gamma0": self.gamma0, "a1": self.a1, "a2": self.a2, "a3": self.a3,
                "R0": self.R0, "A0": self.A0, "chi_c": self.chi.c}


def growth_constants(spec: NonlinearitySpec, samples: int = 4001) -> GrowthConstants:
    """Constants of the growth bounds for the power family, re-verified by sampling."""
    mu = spec.mu
    R0 = spec.R0
    gamma0 = R0 ** (-mu) * min(float(spec.F(R0)), float(spec.F(-R0)))
    a1, a2, a3 = spec.B / spec.p, 0.0, 0.0
    u = np.linspace(-10 * R0, 10 * R0, samples)
    F = spec.F(u)
    scale = 1e-12 * max(1.0, float(np.max(np.abs(F))))
    if np.any(F + a2 < a1 * np.abs(u) ** mu - scale):
        raise InvariantViolation("F + a2 >= a1 |u|^mu fails on samples", "(H.3)")
    if np.any((u * spec.f(u) + a3) / mu < F + a2 - scale):
        raise InvariantViolation("(uf + a3)/mu >= F + a2 fails on samples", "(H.3)")
    if np.any(F[np.abs(u) >= R0] < gamma0 * np.abs(u[np.abs(u) >= R0]) ** mu - scale):
        raise InvariantViolation("F >= gamma0 |u|^mu fails beyond R0", "(H.3)")
    return GrowthConstants(gamma0=gamma0, a1=a1, a2=a2, a3=a3, R0=R0)


@dataclass
class ModifiedEnergy:
    E1: float
    E: float
    psi: float
    theta: float
    Qval: float
    intG: float


def _ensure_A0(consts):
    if consts.A0 is None or not consts.A0 > 0:
        raise ValueError("A0 must be set (see fit_A0)")


def modified_energy(u, spec, consts: GrowthConstants, op) -> ModifiedEnergy:
    """``E1 = 1/2 u^T A u - int F - psi(u) int G`` and its intermediates."""
    _ensure_A0(consts)
    u = np.asarray(u, float)
    W = _W(op)
    E = energy(u, spec, op)
    Qv = 2 * consts.A0 * np.sqrt(E * E + 1)
    theta = W * float(np.sum(spec.F(u) + consts.a2)) / Qv
    psi = float(consts.chi(theta))
    intG = W * float(np.sum(spec.G(u))) if spec.has_g else 0.0
    E1 = E + (1 - psi) * intG
    return ModifiedEnergy(E1=E1, E=E, psi=psi, theta=theta, Qval=Qv, intG=intG)


def modified_gradient(u, spec, consts: GrowthConstants, op):
    """``DE1 = (1+T1) A u - (1+T2) W f - (psi+T1) W g``; returns ``(vector, {T1, T2, ...})``."""
    me = modified_energy(u, spec, consts, op)
    u = np.asarray(u, float)
    W = _W(op)
    dchi = float(consts.chi.derivative(me.theta))
    A0 = consts.A0
    T1 = dchi * (2 * A0) ** 2 * me.Qval ** -2 * me.E * me.theta * me.intG
    T2 = dchi * me.intG / me.Qval + T1
    vec = (1 + T1) * (op.A @ u) - (1 + T2) * W * spec.f(u)
    if spec.has_g:
        vec = vec - (me.psi + T1) * W * spec.g(u)
    return vec, {"T1": T1, "T2": T2, "psi": me.psi, "theta": me.theta}


def symmetry_defect(u, spec, consts, op) -> float:
    """``|E1(u) - E1(-u)|``."""
    u = np.asarray(u, float)
    return abs(modified_energy(u, spec, consts, op).E1 - modified_energy(-u, spec, consts, op).E1)


def nehari_ratio(u, spec, op) -> float:
    """``int(F + a2) / sqrt(E^2 + 1)``; the smallest admissible A0 at ``u``."""
    consts = growth_constants(spec)
    E = energy(u, spec, op)
    return _W(op) * float(np.sum(spec.F(u) + consts.a2)) / np.sqrt(E * E + 1)


def fit_A0(points, spec, op, factor: float = 2.0) -> float:
    """``factor`` times the largest ratio over found critical points."""
    ratios = [nehari_ratio(u, spec, op) for u in points]
    if not ratios:
        raise ValueError("need at least one critical point to fit A0")
    return factor * max(max(ratios), 1e-300)


# ---------------------------------------------------------------------------
# searches


@dataclass
class SearchOptions:
    tol: float = 1e-8  # ||DE|| <= tol ||A u||
    max_iter: int = 2000
    descent_tol: float = 1e-6
    armijo: float = 1e-4
    newton_max: int = 60
    deflation_c: float = 1.0
    sep: float = 1e-3
    seed: int = 0


@dataclass
class CriticalPointRecord:
    u: np.ndarray
    energy: float
    modified_energy: float | None
    residual: float
    m: int | None = None
    m_star: int | None = None
    identities: dict = field(default_factory=dict)
    method: str = ""
    k: int | None = None
    radius: float | None = None
    zero_count: int | None = None
    iterations: int = 0

    def summary(self) -> dict:
        return {
            "k": self.k,
            "method": self.method,
            "energy": self.energy,
            "modified_energy": self.modified_energy,
            "residual": self.residual,
            "morse_index": self.m,
            "augmented_morse_index": self.m_star,
            "radius_rule": self.radius,
            "zero_count": self.zero_count,
            "iterations": self.iterations,
            "identities": self.identities,
            "energy_label": "upper-bound surrogate of the minimax value",
        }


def _relres(u, spec, op):
    r = gradient(u, spec, op)
    return float(np.linalg.norm(r) / max(np.linalg.norm(op.A @ u), 1e-300)), r


def _ray_max(u, spec, op):
    """``t > 0`` maximising ``E(t u)``."""
    Au = op.quadratic_form(u)
    if not spec.has_g:
        P = _W(op) * spec.B * float(np.sum(np.abs(u) ** spec.p))
        return (Au / P) ** (1.0 / (spec.p - 2))

    def phi(t):
        return -energy(t * u, spec, op)

    hi = 1.0
    for _ in range(200):
        if energy(hi * u, spec, op) < 0 and energy(2 * hi * u, spec, op) < energy(hi * u, spec, op):
            break
        hi *= 2
    res = minimize_scalar(phi, bounds=(0.0, hi), method="bounded", options={"xatol": 1e-13 * hi})
    return float(res.x)


def _a_factor(op):
    return sla.splu(op.A.tocsc())


def _newton(u, spec, op, opts, known=(), label="newton"):
    """Newton on ``DE = 0`` with optional deflation of ``known`` (and their negatives)."""
    W = _W(op)
    c = opts.deflation_c
    shifts = [np.asarray(v, float) for v in known]
    shifts = shifts + [-v for v in shifts]

    def merit(v):
        m = 1.0
        for s in shifts:
            d2 = W * float(np.sum((v - s) ** 2))
            m *= 1 + c / max(d2, 1e-300)
        return m

    def grad_log_merit(v):
        g = np.zeros_like(v)
        for s in shifts:
            diff = v - s
            d2 = W * float(np.sum(diff ** 2))
            mi = 1 + c / d2
            g += (-c * 2 * W * diff / d2 ** 2) / mi
        return g

    rel, r = _relres(u, spec, op)
    for it in range(opts.newton_max):
        if rel <= opts.tol:
            return _polish(u, rel, r, spec, op), min(rel, _relres(u, spec, op)[0]), it
        H = hessian(u, spec, op).tocsc()
        try:
            delta = sla.spsolve(H, -r)
        except RuntimeError:
            break
        if not np.all(np.isfinite(delta)):
            break
        if shifts:
            eta = float(grad_log_merit(u) @ delta)
            tau = 1.0 / (1.0 - eta) if eta < 1 - 1e-12 else 1.0
            delta = tau * delta
        cur = merit(u) * np.linalg.norm(r)
        step = 1.0
        for _ in range(30):
            v = u + step * delta
            rv, r_v = _relres(v, spec, op)
            if merit(v) * np.linalg.norm(r_v) < (1 - 1e-4 * step) * cur or rv <= opts.tol:
                break
            step *= 0.5
        u, rel, r = v, rv, r_v
    return u, rel, opts.newton_max


def _polish(u, rel, r, spec, op, steps=3):
    """Plain Newton steps past the tolerance while the residual keeps dropping."""
    for _ in range(steps):
        delta = sla.spsolve(hessian(u, spec, op).tocsc(), -r)
        v = u + delta
        rv, r_v = _relres(v, spec, op)
        if not rv < 0.5 * rel:
            break
        u, rel, r = v, rv, r_v
    return u


def mountain_pass_search(spec: NonlinearitySpec, op: DiscreteOperator, init=None,
                         opts: SearchOptions | None = None, known=()) -> CriticalPointRecord:
    """Minimax descent along rays from the origin, then Newton refinement.

    The path is the ray ``{t u : t >= 0}``; its maximiser ``w = t* u`` is
    pushed down along the ``A``-preconditioned gradient (``H^1_X`` metric)
    with an Armijo rule on ``max_t E(t u)``.  ``known`` solutions are
    deflated in the Newton stage.
    """
    opts = opts or SearchOptions()
    rng = np.random.default_rng(opts.seed)
    if init is None:
        init = np.abs(rng.standard_normal(op.size)) + 0.1
    u = np.asarray(init, float).copy()
    lu = _a_factor(op)

    def normalise(v):
        return v / np.sqrt(op.quadratic_form(v))

    u = normalise(u)
    t = _ray_max(u, spec, op)
    J = energy(t * u, spec, op)
    it = 0
    for it in range(opts.max_iter):
        w = t * u
        G = gradient(w, spec, op)
        d = lu.solve(G)
        dual = float(G @ d)
        scale = max(abs(J), 1.0)
        if np.sqrt(max(dual, 0.0)) <= opts.descent_tol * np.sqrt(op.quadratic_form(w)) or dual <= 0:
            break
        # gradient of u -> max_t E(t u) is t * DE(t u)
        alpha = 1.0 / t
        accepted = False
        for _ in range(40):
            cand = normalise(u - alpha * d)
            tc = _ray_max(cand, spec, op)
            Jc = energy(tc * cand, spec, op)
            if Jc <= J - opts.armijo * alpha * t * dual:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        if abs(J - Jc) <= 1e-15 * scale:
            u, t, J = cand, tc, Jc
            break
        u, t, J = cand, tc, Jc
    w, rel, nit = _newton(t * u, spec, op, opts, known)
    if rel > opts.tol:
        raise ConvergenceError(
            "mountain-pass search stopped at relative residual %.3e" % rel,
            best={"u": w, "residual": rel},
        )
    E = energy(w, spec, op)
    if not E > 0:
        raise ConvergenceError("search converged to a point with E <= 0", best={"u": w, "residual": rel})
    return CriticalPointRecord(
        u=w, energy=E, modified_energy=None, residual=rel, method="mountain-pass", k=1,
        iterations=it + nit,
    )


def deflated_search(spec, op, init, opts: SearchOptions | None = None, known=()) -> CriticalPointRecord:
    """Deflated Newton from ``init`` scaled onto its ray maximiser."""
    opts = opts or SearchOptions()
    u = np.asarray(init, float)
    u = _ray_max(u, spec, op) * u
    w, rel, nit = _newton(u, spec, op, opts, known)
    if rel > opts.tol:
        raise ConvergenceError("deflated Newton stopped at relative residual %.3e" % rel,
                               best={"u": w, "residual": rel})
    return CriticalPointRecord(u=w, energy=energy(w, spec, op), modified_energy=None, residual=rel,
                               method="deflated-newton", iterations=nit)


def radius_rule(lam_k: float, p: float, nu_tilde: float) -> float:
    """``lam_k^(r / (2(p-2)))`` with ``r = nu (1 - p / 2*)``; ``r = nu`` when ``nu <= 2``."""
    if nu_tilde > 2:
        r = nu_tilde * (1 - p * (nu_tilde - 2) / (2 * nu_tilde))
    else:
        r = nu_tilde
    return float(lam_k ** (r / (2 * (p - 2))))


def zero_count_1d(u, rtol: float = 1e-8) -> int:
    """Interior sign changes of a 1D node vector (tiny entries ignored)."""
    u = np.asarray(u, float)
    s = np.sign(u[np.abs(u) > rtol * np.max(np.abs(u))])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def _l2(u, op):
    return float(np.sqrt(_W(op) * np.sum(np.asarray(u) ** 2)))


def multi_solution_search(spec, op, spectrum, K: int, opts: SearchOptions | None = None,
                          nu_tilde: float | None = None):
    """Up to ``K`` distinct critical points started from the eigenvectors.

    ``k = 1`` is the mountain-pass point; for ``k >= 2`` a deflated Newton
    search starts from the ray maximiser of ``phi_k`` with every earlier
    solution (and its negative) deflated.  Returns ``(records, warnings)``;
    records are sorted by energy, then by L2 norm.
    """
    opts = opts or SearchOptions()
    if spectrum.k < K:
        raise ValueError("spectrum holds %d pairs, need %d" % (spectrum.k, K))
    if nu_tilde is None:
        nu_tilde = float(op.grid.dim)
    found: list[CriticalPointRecord] = []
    warnings = []
    for k in range(1, K + 1):
        phi = spectrum.eigenvectors[:, k - 1]
        known = [r.u for r in found]
        try:
            if k == 1:
                rec = mountain_pass_search(spec, op, init=phi, opts=opts)
            else:
                rec = deflated_search(spec, op, phi, opts, known)
        except ConvergenceError as exc:
            warnings.append("k=%d: %s" % (k, exc))
            continue
        dist = [min(_l2(rec.u - r.u, op), _l2(rec.u + r.u, op)) for r in found]
        if dist and min(dist) <= opts.sep * max(_l2(rec.u, op), 1.0):
            warnings.append("k=%d: duplicate of an earlier solution" % k)
            continue
        rec.k = k
        rec.radius = radius_rule(float(spectrum.eigenvalues[k - 1]), spec.p, nu_tilde)
        if op.grid.dim == 1:
            rec.zero_count = zero_count_1d(rec.u)
        found.append(rec)
    if len(found) < K:
        warnings.append("found %d of %d requested solutions" % (len(found), K))
    found.sort(key=lambda r: (r.energy, _l2(r.u, op)))
    for a, b in zip(found, found[1:]):
        if not b.energy > a.energy:
            warnings.append("energies not strictly increasing at k=%s" % b.k)
    return found, warnings


# ---------------------------------------------------------------------------
# diagnostics


def critical_point_identities(u, spec, consts: GrowthConstants, op) -> dict:
    """Algebraic identity and growth-ratio diagnostics at ``u``.

    ``gap = |E(u) - int(u f/2 - F) - int(g u/2 - G)|``, which equals
    ``|<DE(u), u>| / 2`` for every ``u`` and vanishes at critical points.
    """
    u = np.asarray(u, float)
    W = _W(op)
    E = energy(u, spec, op)
    r = gradient(u, spec, op)
    rhs = W * float(np.sum(0.5 * u * spec.f(u) - spec.F(u)))
    if spec.has_g:
        rhs += W * float(np.sum(0.5 * spec.g(u) * u - spec.G(u)))
    gap = abs(E - rhs)
    ratio = W * float(np.sum(spec.F(u) + consts.a2)) / np.sqrt(E * E + 1)
    out = {
        "identity_gap": gap,
        "half_pairing": 0.5 * abs(float(r @ u)),
        "residual_norm": float(np.linalg.norm(r)),
        "growth_ratio": ratio,
        "A0_min": ratio,
    }
    if consts.A0 is not None:
        me = modified_energy(u, spec, consts, op)
        out.update({"theta": me.theta, "psi": me.psi, "E1": me.E1, "E1_equals_E": me.E1 == me.E})
    return out


def hessian_Ip(u, spec: NonlinearitySpec, op: DiscreteOperator) -> DiscreteOperator:
    """``A - (p-1) B diag(|u|^(p-2)) W`` as an operator with the same mass."""
    V = -spec.df(u)
    A = (op.A + sp.diags(V * op.weight)).tocsr()
    A = ((A + A.T) * 0.5).tocsr()
    return DiscreteOperator(A=A, weight=op.weight, grid=op.grid, field_ops=op.field_ops,
                            laplacian=False, potential=V)


def morse_indices(hess, tol: float | None = None) -> dict:
    """``m = #{eig < -tol}``, ``m* = #{eig <= tol}`` of the standard-form Hessian."""
    M = hess.scaled() if isinstance(hess, DiscreteOperator) else sp.csr_matrix(hess)
    if tol is None:
        tol = 1e-9 * float(abs(M).sum(axis=0).max())
    m = count_below(M, -tol)
    m_star = count_below(M, np.nextafter(tol, np.inf))
    return {"m": int(m), "m_star": int(m_star), "tol": float(tol)}


def annotate(record: CriticalPointRecord, spec, consts, op) -> CriticalPointRecord:
    """Fill Morse indices, identity diagnostics and ``E1`` on a record."""
    if not spec.has_g:
        mi = morse_indices(hessian_Ip(record.u, spec, op))
    else:
        H = hessian(record.u, spec, op)
        mi = morse_indices(H / op.weight)
    record.m, record.m_star = mi["m"], mi["m_star"]
    record.identities = critical_point_identities(record.u, spec, consts, op)
    if consts.A0 is not None:
        record.modified_energy = modified_energy(record.u, spec, consts, op).E1
    return record
