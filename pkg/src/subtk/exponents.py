"""Admissible-exponent arithmetic for the two multiplicity conditions.

Every formula is plain arithmetic on its inputs, so passing
:class:`fractions.Fraction` values gives exact rational endpoints (that is how
the regression goldens are checked) while floats give the usual double path.

Notation: ``nu`` is the generalized Metivier index, ``theta`` the effective
Weyl dimension of the eigenvalue lower bound ``lambda_k >= C k^(2/theta)
(ln k)^(-kappa)``, ``mu`` the Ambrosetti-Rabinowitz exponent and ``sigma`` the
growth of the perturbation.  ``c = mu - sigma - 1`` appears everywhere.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .errors import DomainError, InvariantViolation


@dataclass(frozen=True)
class ProblemParams:
    p: float
    mu: float
    sigma: float = 0.0
    nu_tilde: float = 3.0
    theta_exp: float | None = None
    beta: float = 0.0
    kappa: float = 0.0
    n: int = 2
    d: int = 0
    R0: float = 1.0

    def __post_init__(self):
        if self.theta_exp is None:
            object.__setattr__(self, "theta_exp", self.nu_tilde)
        self.validate()

    def validate(self):
        if not self.mu > 2:
            raise InvariantViolation("mu must exceed 2 (got %r)" % (self.mu,), "(H.3)")
        if self.R0 <= 0:
            raise InvariantViolation("R0 must be positive", "(H.3)")
        if not (0 <= self.sigma < self.mu - 1):
            raise InvariantViolation(
                "need 0 <= sigma < mu - 1, got sigma=%r, mu=%r" % (self.sigma, self.mu), "(H.4)"
            )
        if self.beta < 0 or self.kappa < 0:
            raise InvariantViolation("beta and kappa must be non-negative", "(H.4)")
        if self.nu_tilde < 3:
            raise InvariantViolation("nu_tilde must be >= 3 (got %r)" % (self.nu_tilde,), "(H.2)")
        crit = 2 * self.nu_tilde / (self.nu_tilde - 2)
        if not (2 < self.p < crit):
            raise InvariantViolation(
                "need 2 < p < %s, got p=%r" % (crit, self.p), "(H.2)"
            )
        if not (self.n <= self.theta_exp <= self.nu_tilde):
            raise InvariantViolation(
                "need n <= theta <= nu_tilde, got theta=%r" % (self.theta_exp,), "(L)"
            )
        if not (0 <= self.d <= max(self.n - 1, 0)):
            raise InvariantViolation("need 0 <= d <= n - 1", "(L)")

    def replace(self, **kw) -> "ProblemParams":
        return dataclasses.replace(self, **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemParams":
        known = {f.name for f in dataclasses.fields(cls)}
        aliases = {"theta": "theta_exp", "nu": "nu_tilde"}
        kw = {}
        for k, v in data.items():
            k = aliases.get(k, k)
            if k in known:
                kw[k] = v
        return cls(**kw)

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items()}


def _gap(prm: ProblemParams):
    c = prm.mu - prm.sigma - 1
    if c <= 0:
        raise InvariantViolation("mu - sigma - 1 must be positive", "(H.4)")
    return c


def condition_A1(prm: ProblemParams) -> bool:
    """2p / (theta (p-2)) - nu/theta > mu / (mu - sigma - 1)."""
    c = _gap(prm)
    lhs = 2 * prm.p / (prm.theta_exp * (prm.p - 2)) - prm.nu_tilde / prm.theta_exp
    return lhs > prm.mu / c


def condition_A2(prm: ProblemParams) -> bool:
    """2p / (nu (p-2)) > mu / (mu - sigma - 1)."""
    c = _gap(prm)
    return 2 * prm.p / (prm.nu_tilde * (prm.p - 2)) > prm.mu / c


def sup_p_A1(prm: ProblemParams):
    """Upper end of the p-range allowed by the eigenvalue-bound condition."""
    c = _gap(prm)
    num = prm.theta_exp * prm.mu + (prm.nu_tilde + 2) * c
    den = prm.theta_exp * prm.mu + (prm.nu_tilde - 2) * c
    return num / den + 1


def sup_p_A2(prm: ProblemParams):
    """Upper end of the p-range allowed by the Morse-index condition."""
    c = _gap(prm)
    num = prm.mu * prm.nu_tilde + 2 * c
    den = prm.mu * prm.nu_tilde - 2 * c
    if den == 0:
        raise DomainError("degenerate denominator mu*nu - 2(mu - sigma - 1) = 0")
    return num / den + 1


def _two_s_over_s_minus_2(s):
    return 2 * s / (s - 2)


def sup_p_A1_via_dimension(prm: ProblemParams):
    """Same endpoint written as 2s/(s-2), s = nu + theta mu / (mu - sigma - 1)."""
    return _two_s_over_s_minus_2(prm.nu_tilde + prm.theta_exp * prm.mu / _gap(prm))


def sup_p_A2_via_dimension(prm: ProblemParams):
    """Same endpoint written as 2t/(t-2), t = nu mu / (mu - sigma - 1)."""
    return _two_s_over_s_minus_2(prm.nu_tilde * prm.mu / _gap(prm))


def range_gap(prm: ProblemParams):
    """sup_p_A1 - sup_p_A2 via the closed-form factorisation.

    4c((sigma+1) nu - theta mu) / ((theta mu + (nu-2) c)(mu nu - 2c)).
    """
    c = _gap(prm)
    d1 = prm.theta_exp * prm.mu + (prm.nu_tilde - 2) * c
    d2 = prm.mu * prm.nu_tilde - 2 * c
    if d1 == 0 or d2 == 0:
        raise DomainError(
            "degenerate denominator in range gap: (%r, %r) for %r" % (d1, d2, prm)
        )
    return 4 * c * ((prm.sigma + 1) * prm.nu_tilde - prm.theta_exp * prm.mu) / (d1 * d2)


def bahri_berestycki_endpoint(n):
    """(5n - 2 + sqrt(9n^2 - 4n + 4)) / (4(n - 1))."""
    if n < 2:
        raise DomainError("need n >= 2")
    return (5 * n - 2 + math.sqrt(9 * n * n - 4 * n + 4)) / (4 * (n - 1))


def rabinowitz_endpoint(n, mu):
    """(mu n + (mu-1)(n+2)) / (mu n + (mu-1)(n-2)) + 1."""
    return (mu * n + (mu - 1) * (n + 2)) / (mu * n + (mu - 1) * (n - 2)) + 1


def bahri_lions_endpoint(n):
    """(2n - 2) / (n - 2)."""
    if n <= 2:
        raise DomainError("the Morse-index range needs n >= 3, got n=%r" % (n,))
    return (2 * n - 2) / (n - 2)


def classical_ranges(n: int, mu: float) -> dict:
    if n < 3:
        raise DomainError("classical ranges need n >= 3, got n=%r" % (n,))
    if mu <= 2:
        raise DomainError("need mu > 2")
    return {
        "bahri_berestycki": bahri_berestycki_endpoint(n),
        "rabinowitz": rabinowitz_endpoint(n, mu),
        "bahri_lions": bahri_lions_endpoint(n),
    }


def bisect_root(fn, lo, hi, tol=1e-14, max_iter=200):
    """Root of ``fn`` on a sign-changing bracket; plain bisection."""
    flo, fhi = fn(lo), fn(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise DomainError("no root bracketed in [%r, %r]" % (lo, hi))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0 or hi - lo < tol * max(1.0, abs(mid)):
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def rabinowitz_fixed_point(n: int) -> float:
    """p with p = rabinowitz_endpoint(n, mu=p), found by bisection."""
    if n < 3:
        raise DomainError("need n >= 3")
    hi = 2 * n / (n - 2)
    return bisect_root(lambda p: rabinowitz_endpoint(n, p) - p, 2.0 + 1e-12, hi - 1e-12)


def bisect_threshold(predicate, lo, hi, tol=1e-14, max_iter=200):
    """Boundary between ``predicate`` true (near ``lo``) and false (near ``hi``)."""
    if not predicate(lo):
        raise DomainError("predicate false at the lower end")
    if predicate(hi):
        return hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo < tol * max(1.0, abs(mid)):
            break
        if predicate(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def exponent_report(prm: ProblemParams) -> dict:
    """Everything the ``exponents`` subcommand prints."""
    from .field_algebra import critical_exponent

    s1, s2 = sup_p_A1(prm), sup_p_A2(prm)
    gap = range_gap(prm)
    report = {
        "params": prm.to_dict(),
        "A1": bool(condition_A1(prm)),
        "A2": bool(condition_A2(prm)),
        "sup_p_A1": float(s1),
        "sup_p_A2": float(s2),
        "range_gap": float(gap),
        "wider_range": "A1" if gap > 0 else ("A2" if gap < 0 else "equal"),
        "critical_exponent": float(critical_exponent(prm.nu_tilde)),
    }
    if prm.n >= 3:
        report["classical_ranges"] = classical_ranges(prm.n, prm.mu)
    else:
        report["classical_ranges"] = None
    return report
