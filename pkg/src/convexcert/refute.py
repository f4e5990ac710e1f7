"""Non-convexity refutation via moment relaxations and atom extraction.

For each constraint g_j the relaxation minimizes the linear image of
g_j((x+y)/2) over truncated moment sequences z of probability measures on the
doubled set: the moment matrix and one localizing matrix per doubled
constraint must be PSD and z_0 = 1. The optimal value rho is a lower bound on
the true minimum of g_j at midpoints of member pairs and climbs toward it as
the order s grows.

If rho < 0 and the moment matrix satisfies the flat-extension rank condition
rank M_s(z) = rank M_{s-v}(z) =: t, then z is the moment sequence of a
t-atomic measure supported on the doubled set; its atoms split into pairs
(x_i, y_i) of members whose midpoint violates g_j, which refutes convexity
outright. Extraction follows the standard multiplication-operator procedure:
factor the moment matrix, column-echelon a rank factor to pick a monomial
basis, form the shift operators, and read atom coordinates off a random
combination's Schur form. Witness validation re-evaluates every polynomial
inequality directly, so an accepted witness stands on its own without
trusting the solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil

import numpy as np
from scipy.linalg import schur

from . import sdp
from .moments import MomentSequence, monomial_basis, moment_matrix
from .polynomials import Exponents, Polynomial, lift, midpoint_substitute
from .problemio import ProblemSpec

RANK_SINGULAR_THRESHOLD = 1e-6
RANK_GAP_RATIO = 1e2
DEFAULT_FEASIBILITY_TOL = 1e-6
DEFAULT_RELAXATION_SOLVER_TOL = 1e-8
RELAXATION_TOL_CEILING = 1e-7
EXTRACTION_MAX_ATTEMPTS = 5


class ExtractionError(RuntimeError):
    """Atom extraction failed after the configured number of retries."""


def doubled_constraints(spec: ProblemSpec) -> list[Polynomial]:
    """The 2m defining polynomials of the doubled set: g_k(x) then g_k(y)."""
    return [lift(g, "x") for g in spec.constraints] + [lift(g, "y") for g in spec.constraints]


def relaxation_orders(spec: ProblemSpec) -> tuple[list[int], int]:
    """Per-constraint localizing orders v_k = ceil(deg/2) and v = max_k v_k."""
    v_ks = [ceil(g.degree / 2) for g in doubled_constraints(spec)]
    return v_ks, max(v_ks)


@dataclass
class RelaxationResult:
    j: int
    s: int
    v: int
    status: str  # optimal | inconclusive-unbounded | infeasible | stalled
    rho: float | None
    z: MomentSequence | None
    singular_values_s: np.ndarray | None
    singular_values_sv: np.ndarray | None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class FlatnessResult:
    flat: bool
    t: int
    ambiguous: bool
    rank_s: int
    rank_sv: int

    def to_payload(self) -> dict:
        return {
            "flat": self.flat,
            "rank": self.t,
            "ambiguous": self.ambiguous,
            "rank_order_s": self.rank_s,
            "rank_order_s_minus_v": self.rank_sv,
        }


@dataclass
class WitnessAtom:
    x: tuple[float, ...]
    y: tuple[float, ...]
    weight: float
    midpoint: tuple[float, ...]
    violation: float  # g_j at the midpoint
    feasibility_margin: float  # min over k and both components of g_k

    def to_payload(self) -> dict:
        return {
            "x": list(self.x),
            "y": list(self.y),
            "weight": self.weight,
            "midpoint": list(self.midpoint),
            "violation": self.violation,
            "feasibility_margin": self.feasibility_margin,
        }


@dataclass
class NonconvexityWitness:
    """Member pairs of the set whose midpoints violate constraint j.

    Every atom component satisfies all defining inequalities within the
    feasibility tolerance and every midpoint violates g_j by at least the
    strict tolerance, both checked by direct evaluation.
    """

    j: int
    atoms: list[WitnessAtom]
    tol_feas: float
    tol_strict: float

    def to_payload(self) -> dict:
        return {
            "kind": "midpoint-violation",
            "constraint": self.j,
            "tol_feas": self.tol_feas,
            "tol_strict": self.tol_strict,
            "atoms": [a.to_payload() for a in self.atoms],
        }


# -- relaxation construction ---------------------------------------------------


def _sym_selector(dim: int, p: int, q: int) -> np.ndarray:
    """Matrix A with <A, X> = X[p, q] for symmetric X."""
    out = np.zeros((dim, dim))
    if p == q:
        out[p, p] = 1.0
    else:
        out[p, q] = 0.5
        out[q, p] = 0.5
    return out


@dataclass
class _MomentProgram:
    spec: ProblemSpec
    j: int
    s: int
    v: int
    v_ks: list[int]
    slots: dict[Exponents, tuple[int, int]]
    problem: sdp.SdpProblem

    def moments_from_solution(self, solution: sdp.SdpSolution) -> MomentSequence:
        lifted = self.spec.space.lift()
        block0 = solution.X[0]
        entries = {gamma: float(block0[pq]) for gamma, pq in self.slots.items()}
        return MomentSequence(lifted, self.s, entries)


def _moment_program(spec: ProblemSpec, j: int, s: int) -> _MomentProgram:
    if not 1 <= j <= spec.m:
        raise ValueError(f"constraint index {j} out of range 1..{spec.m}")
    ghat = doubled_constraints(spec)
    v_ks, v = relaxation_orders(spec)
    if s < v:
        raise ValueError(f"relaxation order s={s} below minimum v={v}")
    lifted = spec.space.lift()
    mbasis = monomial_basis(lifted, s)
    dim0 = len(mbasis)

    slots: dict[Exponents, tuple[int, int]] = {}
    for p in range(dim0):
        ep = mbasis[p]
        for q in range(p, dim0):
            gamma = tuple(a + b for a, b in zip(ep, mbasis[q]))
            slots.setdefault(gamma, (p, q))

    def moment_selector(gamma: Exponents) -> np.ndarray:
        p, q = slots[gamma]
        return _sym_selector(dim0, p, q)

    block_dims = [dim0]
    equalities: list[tuple[dict[int, np.ndarray], float]] = []

    zero_gamma = (0,) * lifted.arity
    equalities.append(({0: moment_selector(zero_gamma)}, 1.0))

    for p in range(dim0):
        ep = mbasis[p]
        for q in range(p, dim0):
            gamma = tuple(a + b for a, b in zip(ep, mbasis[q]))
            if slots[gamma] != (p, q):
                link = _sym_selector(dim0, p, q) - moment_selector(gamma)
                equalities.append(({0: link}, 0.0))

    for k, (theta, v_k) in enumerate(zip(ghat, v_ks)):
        lbasis = monomial_basis(lifted, s - v_k)
        dim_loc = len(lbasis)
        block_dims.append(dim_loc)
        for p in range(dim_loc):
            ep = lbasis[p]
            for q in range(p, dim_loc):
                eq = lbasis[q]
                link0 = np.zeros((dim0, dim0))
                for etheta, ctheta in theta.terms.items():
                    gamma = tuple(a + b + c for a, b, c in zip(ep, eq, etheta))
                    link0 -= ctheta * moment_selector(gamma)
                mats = {0: link0, k + 1: _sym_selector(dim_loc, p, q)}
                equalities.append((mats, 0.0))

    objective_poly = midpoint_substitute(spec.constraints[j - 1])
    cost = np.zeros((dim0, dim0))
    for gamma, coeff in objective_poly.terms.items():
        cost += coeff * moment_selector(gamma)
    problem = sdp.SdpProblem(block_dims=block_dims, objective={0: cost}, equalities=equalities)
    return _MomentProgram(spec=spec, j=j, s=s, v=v, v_ks=v_ks, slots=slots, problem=problem)


def build_moment_sdp(spec: ProblemSpec, j: int, s: int) -> sdp.SdpProblem:
    """Moment relaxation of order s for constraint j, in block-SDP form."""
    return _moment_program(spec, j, s).problem


def solve_relaxation(
    spec: ProblemSpec,
    j: int,
    s: int,
    solver_tol: float = DEFAULT_RELAXATION_SOLVER_TOL,
    max_iter: int = sdp.DEFAULT_MAX_ITER,
) -> RelaxationResult:
    """Solve the order-s relaxation; rho is a lower bound on the midpoint minimum.

    A stall at the requested tolerance retries once per decade up to
    RELAXATION_TOL_CEILING before giving up; moment accuracy at 1e-7 is still
    far inside the witness-validation tolerance downstream.
    """
    program = _moment_program(spec, j, s)
    tol = solver_tol
    while True:
        solution = sdp.solve(program.problem, tol=tol, max_iter=max_iter)
        if solution.status != "stalled" or tol >= RELAXATION_TOL_CEILING:
            break
        tol = min(tol * 10.0, RELAXATION_TOL_CEILING)
    diagnostics = {
        "solver_status": solution.status,
        "solver_tol": tol,
        "iterations": solution.iterations,
        "primal_residual": solution.primal_residual,
        "dual_residual": solution.dual_residual,
        "relative_gap": solution.relative_gap,
    }
    if solution.status == "unbounded":
        return RelaxationResult(
            j=j, s=s, v=program.v, status="inconclusive-unbounded",
            rho=None, z=None, singular_values_s=None, singular_values_sv=None,
            diagnostics=diagnostics,
        )
    if solution.status != "optimal":
        return RelaxationResult(
            j=j, s=s, v=program.v, status=solution.status,
            rho=None, z=None, singular_values_s=None, singular_values_sv=None,
            diagnostics=diagnostics,
        )
    z = program.moments_from_solution(solution)
    m_s = moment_matrix(z, s)
    m_sv = moment_matrix(z, s - program.v)
    return RelaxationResult(
        j=j,
        s=s,
        v=program.v,
        status="optimal",
        rho=float(solution.objective_value),
        z=z,
        singular_values_s=np.linalg.svd(m_s, compute_uv=False),
        singular_values_sv=np.linalg.svd(m_sv, compute_uv=False),
        diagnostics=diagnostics,
    )


# -- flatness and extraction ------------------------------------------------------


def _numerical_rank(singular_values: np.ndarray) -> tuple[int, bool]:
    """Rank by threshold plus a ratio-gap confidence test; (rank, ambiguous)."""
    sv = np.asarray(singular_values, dtype=float)
    if sv.size == 0:
        return 0, False
    cutoff = RANK_SINGULAR_THRESHOLD * max(1.0, float(sv[0]))
    rank = int(np.sum(sv >= cutoff))
    if rank == sv.size or rank == 0:
        return rank, False
    ratio = sv[rank - 1] / max(sv[rank], 1e-300)
    return rank, bool(ratio < RANK_GAP_RATIO)


def rank_flatness_check(result: RelaxationResult, spec: ProblemSpec) -> FlatnessResult:
    """Flat-extension test: equal numerical ranks at orders s and s - v.

    A confident rank needs both the singular-value threshold and a clear
    ratio gap; otherwise the result is marked ambiguous and extraction is
    skipped by callers, since a soft rank decision produces garbage atoms.
    """
    if result.z is None:
        raise ValueError("relaxation result carries no moment sequence")
    _v_ks, v = relaxation_orders(spec)
    sv_s = result.singular_values_s
    sv_sv = result.singular_values_sv
    if sv_s is None or sv_sv is None:
        m_s = moment_matrix(result.z, result.s)
        m_sv = moment_matrix(result.z, result.s - v)
        sv_s = np.linalg.svd(m_s, compute_uv=False)
        sv_sv = np.linalg.svd(m_sv, compute_uv=False)
    rank_s, amb_s = _numerical_rank(sv_s)
    rank_sv, amb_sv = _numerical_rank(sv_sv)
    ambiguous = amb_s or amb_sv
    flat = (not ambiguous) and rank_s == rank_sv
    return FlatnessResult(flat=flat, t=rank_s if flat else 0, ambiguous=ambiguous,
                          rank_s=rank_s, rank_sv=rank_sv)


def extract_atoms(
    result: RelaxationResult,
    t: int,
    seed: int = 0,
    tol: float = 1e-6,
    max_attempts: int = EXTRACTION_MAX_ATTEMPTS,
) -> list[tuple[np.ndarray, float]]:
    """Recover the t atoms and weights of a flat moment sequence.

    Procedure: truncated eigendecomposition of the moment matrix gives a rank
    factor; column echelon reduction picks t pivot monomials (lowest degree
    first, so every variable shift stays inside the basis); the shift of each
    pivot monomial by each variable yields t x t multiplication operators; the
    Schur form of a random convex combination simultaneously triangularizes
    them and each atom's coordinates appear as conjugated diagonal values.
    Weights come from a least-squares moment match against z.

    Retries with a fresh random combination when the Schur form shows complex
    blocks or the moment match fails; raises ExtractionError after
    max_attempts.
    """
    if result.z is None:
        raise ValueError("relaxation result carries no moment sequence")
    if t < 1:
        raise ValueError("need at least one atom")
    z = result.z
    space = z.space
    arity = space.arity
    mbasis = monomial_basis(space, result.s)
    m_s = moment_matrix(z, result.s)
    eigvals, eigvecs = np.linalg.eigh(m_s)
    top = np.argsort(eigvals)[-t:]
    lam = np.maximum(eigvals[top], 0.0)
    factor = eigvecs[:, top] * np.sqrt(lam)  # (N, t), M ~= factor factor^T

    # Column-echelon over rows in graded order: pivots end up at the lowest
    # degree monomials, so shifted pivots stay inside the order-s basis.
    reduced = factor.T.copy()  # (t, N)
    pivot_cols: list[int] = []
    row = 0
    col_scale = max(1.0, float(np.max(np.abs(reduced))))
    for col in range(reduced.shape[1]):
        if row == t:
            break
        pivot_row = row + int(np.argmax(np.abs(reduced[row:, col])))
        if abs(reduced[pivot_row, col]) < 1e-9 * col_scale:
            continue
        reduced[[row, pivot_row]] = reduced[[pivot_row, row]]
        reduced[row] = reduced[row] / reduced[row, col]
        for other in range(t):
            if other != row:
                reduced[other] -= reduced[other, col] * reduced[row]
        pivot_cols.append(col)
        row += 1
    if row < t:
        raise ExtractionError("extraction-failed: rank factor echelon collapsed")

    # reduced[:, pivot_cols] = identity; column c expresses monomial c in the
    # pivot monomial basis on the support of the measure.
    shift_ops = []
    for var in range(arity):
        op = np.empty((t, t))
        for i, col in enumerate(pivot_cols):
            exps = list(mbasis[col])
            exps[var] += 1
            shifted = tuple(exps)
            if not mbasis.contains(shifted):
                raise ExtractionError(
                    "extraction-failed: pivot monomial shift leaves the basis"
                )
            op[i, :] = reduced[:, mbasis.index(shifted)]
        shift_ops.append(op)

    full_basis = monomial_basis(space, 2 * result.s)
    z_vec = np.array([z.value(e) for e in full_basis])
    rng = np.random.default_rng(seed)
    last_error = "no attempts made"
    for _attempt in range(max_attempts):
        coeffs = rng.random(arity)
        coeffs /= coeffs.sum()
        combined = sum(c * op for c, op in zip(coeffs, shift_ops))
        tmat, qmat = schur(combined, output="real")
        subdiag = np.abs(np.diag(tmat, -1)) if t > 1 else np.array([])
        if subdiag.size and np.max(subdiag) > 1e-7 * max(1.0, np.max(np.abs(tmat))):
            last_error = "complex eigenvalue block in Schur form"
            continue
        points = np.empty((t, arity))
        for i in range(t):
            qi = qmat[:, i]
            for var in range(arity):
                points[i, var] = qi @ shift_ops[var] @ qi
        vander = np.empty((len(full_basis), t))
        for r, exps in enumerate(full_basis):
            vander[r] = np.prod(points ** np.asarray(exps, dtype=float), axis=1)
        weights, *_ = np.linalg.lstsq(vander, z_vec, rcond=None)
        reproduction = float(np.max(np.abs(vander @ weights - z_vec)))
        scale = tol * max(1.0, float(np.max(np.abs(z_vec))))
        if reproduction > scale:
            last_error = f"moment match residual {reproduction:.3e} above {scale:.3e}"
            continue
        if np.any(weights <= 0):
            last_error = "nonpositive weight in moment match"
            continue
        return [(points[i].copy(), float(weights[i])) for i in range(t)]
    raise ExtractionError(f"extraction-failed: {last_error}")


def validate_witness(
    atoms: list[tuple[np.ndarray, float]],
    spec: ProblemSpec,
    j: int,
    tol_feas: float = DEFAULT_FEASIBILITY_TOL,
) -> NonconvexityWitness | None:
    """Re-evaluate candidate atoms; keep only sound ones.

    Each atom splits into (x, y); it survives when every g_k is >= -tol_feas
    at both components and g_j at the midpoint is <= -10*tol_feas. Surviving
    weights are renormalized to sum to one. Returns None when nothing
    survives. Uses polynomial evaluation only, so an accepted witness is a
    standalone disproof of convexity at the stated tolerances.
    """
    if not atoms:
        raise ValueError("no atoms supplied")
    if not 1 <= j <= spec.m:
        raise ValueError(f"constraint index {j} out of range 1..{spec.m}")
    tol_strict = 10.0 * tol_feas
    n = spec.n
    gj = spec.constraints[j - 1]
    survivors: list[WitnessAtom] = []
    for point, weight in atoms:
        coords = np.asarray(point, dtype=float)
        if coords.shape != (2 * n,):
            raise ValueError(f"atom has shape {coords.shape}, expected ({2 * n},)")
        x_part = coords[:n]
        y_part = coords[n:]
        margin = min(
            min(g.evaluate(x_part) for g in spec.constraints),
            min(g.evaluate(y_part) for g in spec.constraints),
        )
        midpoint = 0.5 * (x_part + y_part)
        violation = gj.evaluate(midpoint)
        if margin < -tol_feas or violation > -tol_strict:
            continue
        survivors.append(
            WitnessAtom(
                x=tuple(float(v) for v in x_part),
                y=tuple(float(v) for v in y_part),
                weight=float(weight),
                midpoint=tuple(float(v) for v in midpoint),
                violation=float(violation),
                feasibility_margin=float(margin),
            )
        )
    if not survivors:
        return None
    total = sum(a.weight for a in survivors)
    for atom in survivors:
        atom.weight = atom.weight / total
    return NonconvexityWitness(j=j, atoms=survivors, tol_feas=tol_feas, tol_strict=tol_strict)
