"""Convexity certificates via sum-of-squares identities.

A set {x : g_j(x) >= 0} is convex exactly when every g_j stays nonnegative at
midpoints of member pairs. This module compiles that midpoint condition into
Gram-matrix feasibility SDPs along three routes:

* the quadratic-module identity
  g_j((x+y)/2) + eps = sigma_0 + sum_k sigma_k * g_k(x) + psi_k * g_k(y)
  with all multipliers sums of squares (sufficient; eps = 0 proves convexity);
* the preordering identity
  sigma_j * g_j((x+y)/2) = g_j((x+y)/2)^(2p) + h_j
  with sigma_j, h_j in the preordering of the doubled constraint list
  (any valid instance proves convexity; kept to small m because the number of
  SOS weights grows as 2^(2m+1));
* the boundedness identity M - |x|^2 = sigma_0 + sum_k sigma_k * g_k, whose
  existence makes the quadratic module archimedean and eps-certificates
  complete for compact convex sets.

Every certificate is verified independently of the solver by re-expanding the
Gram matrices symbolically and measuring the coefficientwise residual of the
claimed identity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from . import sdp
from .moments import MonomialBasis, monomial_basis
from .polynomials import (
    Exponents,
    Polynomial,
    VariableSpace,
    coeff_linf_distance,
    lift,
    midpoint_substitute,
)
from .problemio import ProblemSpec

DEFAULT_RESIDUAL_TOL = 1e-6
DEFAULT_GRAM_EIG_TOL = 1e-8
STENGLE_M_MAX = 3


@dataclass
class SosTerm:
    """One recovered SOS multiplier: weight * (basis^T Gram basis)."""

    label: str
    weight: Polynomial
    basis: tuple[Exponents, ...]
    gram: np.ndarray

    def sos_polynomial(self, space: VariableSpace) -> Polynomial:
        terms: dict[Exponents, float] = {}
        for a, ea in enumerate(self.basis):
            for b, eb in enumerate(self.basis):
                key = tuple(p + q for p, q in zip(ea, eb))
                terms[key] = terms.get(key, 0.0) + float(self.gram[a, b])
        return Polynomial(space, terms)

    def contribution(self, space: VariableSpace) -> Polynomial:
        return self.weight * self.sos_polynomial(space)

    def min_gram_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.gram + self.gram.T))[0])

    def to_payload(self) -> dict:
        return {
            "label": self.label,
            "weight": self.weight.to_string(),
            "basis": [list(e) for e in self.basis],
            "gram": self.gram.tolist(),
        }


@dataclass
class _TermSpec:
    label: str
    weight: Polynomial
    basis_degree: int


@dataclass
class SosProgram:
    """Target = sum_i weight_i * (unknown SOS of degree <= 2*basis_degree_i),
    matched coefficientwise over all monomials of degree <= match_degree."""

    space: VariableSpace
    target: Polynomial
    term_specs: list[_TermSpec]
    match_degree: int
    bases: list[MonomialBasis] = field(init=False)

    def __post_init__(self) -> None:
        self.bases = [monomial_basis(self.space, t.basis_degree) for t in self.term_specs]

    def to_sdp(self) -> sdp.SdpProblem:
        dims = [len(b) for b in self.bases]
        accum: dict[Exponents, dict[int, np.ndarray]] = {}
        for blk, (spec, basis) in enumerate(zip(self.term_specs, self.bases)):
            size = len(basis)
            for p in range(size):
                ep = basis[p]
                for q in range(size):
                    eq = basis[q]
                    for etheta, ctheta in spec.weight.terms.items():
                        gamma = tuple(a + b + c for a, b, c in zip(ep, eq, etheta))
                        mats = accum.setdefault(gamma, {})
                        mat = mats.get(blk)
                        if mat is None:
                            mat = np.zeros((size, size))
                            mats[blk] = mat
                        mat[p, q] += ctheta
        # every reachable product monomial must be matched, or the identity
        # would be silently under-constrained
        overflow = [g for g in accum if sum(g) > self.match_degree]
        assert not overflow, f"support beyond match degree: {overflow[:3]}"
        assert self.target.degree <= self.match_degree
        equalities = []
        for gamma in monomial_basis(self.space, self.match_degree):
            mats = accum.get(gamma, {})
            rhs = self.target.terms.get(gamma, 0.0)
            equalities.append((mats, rhs))
        return sdp.SdpProblem(block_dims=dims, objective={}, equalities=equalities)

    def recover(self, x_blocks: list[np.ndarray]) -> list[SosTerm]:
        terms = []
        for spec, basis, gram in zip(self.term_specs, self.bases, x_blocks):
            terms.append(
                SosTerm(
                    label=spec.label,
                    weight=spec.weight,
                    basis=tuple(basis.elements),
                    gram=0.5 * (gram + gram.T),
                )
            )
        return terms

    def reconstruct(self, terms: list[SosTerm]) -> Polynomial:
        total = Polynomial.zero(self.space)
        for term in terms:
            total = total + term.contribution(self.space)
        return total

    def residual(self, terms: list[SosTerm]) -> float:
        return coeff_linf_distance(self.target, self.reconstruct(terms))


@dataclass
class QuadraticModuleCertificate:
    j: int  # 1-based constraint index
    d: int
    epsilon: float
    terms: list[SosTerm]
    residual: float
    min_gram_eigenvalue: float
    solver_diagnostics: dict = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "kind": "quadratic-module",
            "constraint": self.j,
            "degree": self.d,
            "epsilon": self.epsilon,
            "residual": self.residual,
            "min_gram_eigenvalue": self.min_gram_eigenvalue,
            "solver": self.solver_diagnostics,
            "terms": [t.to_payload() for t in self.terms],
        }


@dataclass
class PreorderingCertificate:
    j: int
    d: int
    p: int
    sigma_terms: list[SosTerm]
    h_terms: list[SosTerm]
    residual: float
    min_gram_eigenvalue: float
    solver_diagnostics: dict = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "kind": "preordering",
            "constraint": self.j,
            "degree": self.d,
            "power": self.p,
            "residual": self.residual,
            "min_gram_eigenvalue": self.min_gram_eigenvalue,
            "solver": self.solver_diagnostics,
            "sigma_terms": [t.to_payload() for t in self.sigma_terms],
            "h_terms": [t.to_payload() for t in self.h_terms],
        }


@dataclass
class ArchimedeanCertificate:
    bound: float
    d: int
    terms: list[SosTerm]
    residual: float
    min_gram_eigenvalue: float
    solver_diagnostics: dict = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "kind": "archimedean",
            "bound": self.bound,
            "degree": self.d,
            "residual": self.residual,
            "min_gram_eigenvalue": self.min_gram_eigenvalue,
            "solver": self.solver_diagnostics,
            "terms": [t.to_payload() for t in self.terms],
        }


@dataclass
class CertificationFailure:
    reason: str  # "no certificate at this degree" | "inconclusive"
    solver_status: str
    detail: str = ""
    solver_diagnostics: dict = field(default_factory=dict)


def _solution_diagnostics(solution: sdp.SdpSolution) -> dict:
    return {
        "status": solution.status,
        "iterations": solution.iterations,
        "primal_residual": solution.primal_residual,
        "dual_residual": solution.dual_residual,
        "relative_gap": solution.relative_gap,
    }


@dataclass
class CertificateCheck:
    """Solver-independent recheck of a certificate's defining identity."""

    residual: float
    min_gram_eigenvalue: float
    gram_eigenvalues: dict[str, float]
    residual_tol: float
    eig_tol: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.residual_tol and self.min_gram_eigenvalue >= -self.eig_tol

    def to_payload(self) -> dict:
        return {
            "residual": self.residual,
            "min_gram_eigenvalue": self.min_gram_eigenvalue,
            "passed": self.passed,
        }


def _constraint_index(spec: ProblemSpec, j: int) -> int:
    if not 1 <= j <= spec.m:
        raise ValueError(f"constraint index {j} out of range 1..{spec.m}")
    return j - 1


def _multiplier_degree(d: int, g: Polynomial) -> int:
    # Keeps every product sigma_k * g_k inside total degree 2d.
    return max(0, d - ceil(g.degree / 2))


def _qmodule_program(spec: ProblemSpec, j: int, d: int, epsilon: float) -> SosProgram:
    idx = _constraint_index(spec, j)
    gj = spec.constraints[idx]
    if d < ceil(gj.degree / 2):
        raise ValueError(
            f"degree bound d={d} cannot represent the midpoint image of g_{j} (degree {gj.degree})"
        )
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    lifted = spec.space.lift()
    target = midpoint_substitute(gj) + epsilon
    specs = [_TermSpec("sigma_0", Polynomial.constant(lifted, 1.0), d)]
    for k, g in enumerate(spec.constraints, start=1):
        specs.append(_TermSpec(f"sigma_{k}", lift(g, "x"), _multiplier_degree(d, g)))
    for k, g in enumerate(spec.constraints, start=1):
        specs.append(_TermSpec(f"psi_{k}", lift(g, "y"), _multiplier_degree(d, g)))
    return SosProgram(space=lifted, target=target, term_specs=specs, match_degree=2 * d)


def build_qmodule_sdp(spec: ProblemSpec, j: int, d: int, epsilon: float = 0.0) -> sdp.SdpProblem:
    """Gram-matrix feasibility SDP for the quadratic-module midpoint identity."""
    return _qmodule_program(spec, j, d, epsilon).to_sdp()


def certify_sufficient(
    spec: ProblemSpec,
    j: int,
    d: int,
    epsilon: float = 0.0,
    solver_tol: float = sdp.DEFAULT_TOL,
    max_iter: int = sdp.DEFAULT_MAX_ITER,
) -> QuadraticModuleCertificate | CertificationFailure:
    """Attempt a quadratic-module certificate for constraint j at degree bound d."""
    program = _qmodule_program(spec, j, d, epsilon)
    solution = sdp.feasibility(program.to_sdp(), tol=solver_tol, max_iter=max_iter)
    if solution.status != "optimal":
        reason = "no certificate at this degree" if solution.status == "infeasible" else "inconclusive"
        return CertificationFailure(
            reason=reason,
            solver_status=solution.status,
            solver_diagnostics=_solution_diagnostics(solution),
        )
    terms = program.recover(solution.X)
    return QuadraticModuleCertificate(
        j=j,
        d=d,
        epsilon=epsilon,
        terms=terms,
        residual=program.residual(terms),
        min_gram_eigenvalue=min(t.min_gram_eigenvalue() for t in terms),
        solver_diagnostics=_solution_diagnostics(solution),
    )


def _stengle_program(spec: ProblemSpec, j: int, d: int, p: int) -> SosProgram:
    idx = _constraint_index(spec, j)
    gj = spec.constraints[idx]
    if p < 1:
        raise ValueError("power p must be a positive integer")
    if d < ceil(gj.degree / 2):
        raise ValueError(f"degree bound d={d} is too small for g_{j}")
    lifted = spec.space.lift()
    gmid = midpoint_substitute(gj)
    ghat = [lift(g, "x") for g in spec.constraints] + [lift(g, "y") for g in spec.constraints]
    target = gmid ** (2 * p)
    specs: list[_TermSpec] = []
    subsets = []
    for size in range(len(ghat) + 1):
        subsets.extend(itertools.combinations(range(len(ghat)), size))
    for subset in subsets:
        product = Polynomial.constant(lifted, 1.0)
        for ell in subset:
            product = product * ghat[ell]
        slack = 2 * d - product.degree
        if slack < 0:
            continue
        tag = "{" + ",".join(str(ell + 1) for ell in subset) + "}"
        specs.append(_TermSpec(f"sigma_J{tag}", product * gmid, slack // 2))
        specs.append(_TermSpec(f"h_J{tag}", -1.0 * product, slack // 2))
    match_degree = max(2 * d + gj.degree, 2 * p * gj.degree)
    return SosProgram(space=lifted, target=target, term_specs=specs, match_degree=match_degree)


def certify_stengle(
    spec: ProblemSpec,
    j: int,
    d: int,
    p: int = 1,
    m_max: int = STENGLE_M_MAX,
    solver_tol: float = sdp.DEFAULT_TOL,
    max_iter: int = sdp.DEFAULT_MAX_ITER,
) -> PreorderingCertificate | CertificationFailure:
    """Attempt a preordering certificate for constraint j.

    Refused for m > m_max: the doubled constraint list makes the preordering
    carry 2^(2m+1) SOS weights, which is out of desk-scale reach; use
    certify_sufficient instead for larger m.
    """
    if spec.m > m_max:
        raise ValueError(
            f"preordering certification refused for m={spec.m} > {m_max}: "
            f"it would require 2^{2 * spec.m + 1} SOS blocks; use certify_sufficient instead"
        )
    program = _stengle_program(spec, j, d, p)
    solution = sdp.feasibility(program.to_sdp(), tol=solver_tol, max_iter=max_iter)
    if solution.status != "optimal":
        reason = "no certificate at this degree" if solution.status == "infeasible" else "inconclusive"
        return CertificationFailure(
            reason=reason,
            solver_status=solution.status,
            solver_diagnostics=_solution_diagnostics(solution),
        )
    terms = program.recover(solution.X)
    sigma_terms = [t for t in terms if t.label.startswith("sigma_J")]
    h_terms = [t for t in terms if t.label.startswith("h_J")]
    return PreorderingCertificate(
        j=j,
        d=d,
        p=p,
        sigma_terms=sigma_terms,
        h_terms=h_terms,
        residual=program.residual(terms),
        min_gram_eigenvalue=min(t.min_gram_eigenvalue() for t in terms),
        solver_diagnostics=_solution_diagnostics(solution),
    )


def _archimedean_program(spec: ProblemSpec, bound: float, d: int) -> SosProgram:
    if bound <= 0:
        raise ValueError("bound M must be positive")
    if d < 1:
        raise ValueError("degree bound d must be at least 1")
    space = spec.space
    norm_sq = Polynomial.zero(space)
    for i in range(space.n):
        xi = Polynomial.variable(space, i)
        norm_sq = norm_sq + xi * xi
    target = Polynomial.constant(space, bound) - norm_sq
    specs = [_TermSpec("sigma_0", Polynomial.constant(space, 1.0), d)]
    for k, g in enumerate(spec.constraints, start=1):
        specs.append(_TermSpec(f"sigma_{k}", g, _multiplier_degree(d, g)))
    return SosProgram(space=space, target=target, term_specs=specs, match_degree=2 * d)


def archimedean_check(
    spec: ProblemSpec,
    bound: float,
    d: int,
    solver_tol: float = sdp.DEFAULT_TOL,
    max_iter: int = sdp.DEFAULT_MAX_ITER,
) -> ArchimedeanCertificate | CertificationFailure:
    """Try to express M - |x|^2 inside the quadratic module of the constraints.

    Success shows the module is archimedean (the set is compact), in which
    case eps-relaxed certification is complete for convex inputs.
    """
    program = _archimedean_program(spec, bound, d)
    solution = sdp.feasibility(program.to_sdp(), tol=solver_tol, max_iter=max_iter)
    if solution.status != "optimal":
        reason = "no certificate at this degree" if solution.status == "infeasible" else "inconclusive"
        return CertificationFailure(
            reason=reason,
            solver_status=solution.status,
            solver_diagnostics=_solution_diagnostics(solution),
        )
    terms = program.recover(solution.X)
    return ArchimedeanCertificate(
        bound=bound,
        d=d,
        terms=terms,
        residual=program.residual(terms),
        min_gram_eigenvalue=min(t.min_gram_eigenvalue() for t in terms),
        solver_diagnostics=_solution_diagnostics(solution),
    )


def _identity_sides(
    cert: QuadraticModuleCertificate | PreorderingCertificate | ArchimedeanCertificate,
    spec: ProblemSpec,
) -> tuple[Polynomial, Polynomial, VariableSpace]:
    """Left and right side of the certified identity, rebuilt from scratch."""
    if isinstance(cert, QuadraticModuleCertificate):
        space = spec.space.lift()
        left = midpoint_substitute(spec.constraints[_constraint_index(spec, cert.j)]) + cert.epsilon
        right = Polynomial.zero(space)
        for term in cert.terms:
            right = right + term.contribution(space)
        return left, right, space
    if isinstance(cert, PreorderingCertificate):
        space = spec.space.lift()
        gmid = midpoint_substitute(spec.constraints[_constraint_index(spec, cert.j)])
        # sigma-side weights already carry the factor gmid, so the sum below
        # is sigma_j * gmid directly; h-side weights carry a minus sign.
        sigma_times_gmid = Polynomial.zero(space)
        for term in cert.sigma_terms:
            sigma_times_gmid = sigma_times_gmid + term.contribution(space)
        h = Polynomial.zero(space)
        for term in cert.h_terms:
            h = h - term.contribution(space)
        left = sigma_times_gmid
        right = gmid ** (2 * cert.p) + h
        return left, right, space
    if isinstance(cert, ArchimedeanCertificate):
        space = spec.space
        norm_sq = Polynomial.zero(space)
        for i in range(space.n):
            xi = Polynomial.variable(space, i)
            norm_sq = norm_sq + xi * xi
        left = Polynomial.constant(space, cert.bound) - norm_sq
        right = Polynomial.zero(space)
        for term in cert.terms:
            right = right + term.contribution(space)
        return left, right, space
    raise TypeError(f"unsupported certificate type {type(cert).__name__}")


def verify_certificate(
    cert: QuadraticModuleCertificate | PreorderingCertificate | ArchimedeanCertificate,
    spec: ProblemSpec,
    residual_tol: float = DEFAULT_RESIDUAL_TOL,
    eig_tol: float = DEFAULT_GRAM_EIG_TOL,
) -> CertificateCheck:
    """Recheck a certificate using polynomial arithmetic only (no solver).

    Re-expands every Gram matrix into its SOS polynomial, reassembles the
    certified identity, and reports the coefficientwise residual together with
    the minimum Gram eigenvalues. These two facts alone imply the midpoint
    inequality the certificate claims, so a passing check is a standalone
    proof up to the stated tolerances. Reports, never raises, on bad data.
    """
    try:
        left, right, _space = _identity_sides(cert, spec)
        residual = coeff_linf_distance(left, right)
    except Exception:
        residual = float("inf")
    eigs: dict[str, float] = {}
    terms = (
        cert.terms
        if not isinstance(cert, PreorderingCertificate)
        else cert.sigma_terms + cert.h_terms
    )
    min_eig = 0.0
    for term in terms:
        try:
            val = term.min_gram_eigenvalue()
            norm = float(np.linalg.norm(term.gram, 2)) if term.gram.size else 0.0
        except Exception:
            val, norm = float("-inf"), 1.0
        eigs[term.label] = val
        # scale-relative floor: eigenvalues are compared against eig_tol * max(1, |G|)
        scaled = val / max(1.0, norm)
        min_eig = min(min_eig, scaled)
    return CertificateCheck(
        residual=residual,
        min_gram_eigenvalue=min_eig,
        gram_eigenvalues=eigs,
        residual_tol=residual_tol,
        eig_tol=eig_tol,
    )
