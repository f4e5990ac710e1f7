"""Convexity certificates and non-convexity witnesses for basic closed
semi-algebraic sets {x : g_1(x) >= 0, ..., g_m(x) >= 0}.

The public surface mirrors the pipeline: polynomial primitives, problem
parsing, moment machinery, an embedded SDP solver, sum-of-squares
certification, and moment-relaxation refutation with atom extraction.
"""

from .certify import (
    ArchimedeanCertificate,
    CertificateCheck,
    CertificationFailure,
    PreorderingCertificate,
    QuadraticModuleCertificate,
    archimedean_check,
    build_qmodule_sdp,
    certify_stengle,
    certify_sufficient,
    verify_certificate,
)
from .cli import RunConfig, run_analyze, run_certify, run_refute
from .moments import (
    MomentSequence,
    MonomialBasis,
    localizing_matrix,
    moment_matrix,
    monomial_basis,
    riesz_apply,
)
from .polynomials import (
    Polynomial,
    VariableSpace,
    coeff_linf_distance,
    lift,
    midpoint_substitute,
)
from .problemio import (
    ParseError,
    ProblemSpec,
    Report,
    make_report,
    parse_polynomial,
    parse_problem,
    parse_report,
    serialize_report,
    validate_report_payload,
)
from .refute import (
    ExtractionError,
    FlatnessResult,
    NonconvexityWitness,
    RelaxationResult,
    build_moment_sdp,
    extract_atoms,
    rank_flatness_check,
    relaxation_orders,
    solve_relaxation,
    validate_witness,
)
from .sdp import SdpProblem, SdpSolution, dump_sdp, feasibility, solve

__version__ = "0.1.0"

__all__ = [
    "ArchimedeanCertificate",
    "CertificateCheck",
    "CertificationFailure",
    "ExtractionError",
    "FlatnessResult",
    "MomentSequence",
    "MonomialBasis",
    "NonconvexityWitness",
    "ParseError",
    "Polynomial",
    "PreorderingCertificate",
    "ProblemSpec",
    "QuadraticModuleCertificate",
    "RelaxationResult",
    "Report",
    "RunConfig",
    "SdpProblem",
    "SdpSolution",
    "VariableSpace",
    "archimedean_check",
    "build_moment_sdp",
    "build_qmodule_sdp",
    "certify_stengle",
    "certify_sufficient",
    "coeff_linf_distance",
    "dump_sdp",
    "extract_atoms",
    "feasibility",
    "lift",
    "localizing_matrix",
    "make_report",
    "midpoint_substitute",
    "moment_matrix",
    "monomial_basis",
    "parse_polynomial",
    "parse_problem",
    "parse_report",
    "rank_flatness_check",
    "relaxation_orders",
    "riesz_apply",
    "run_analyze",
    "run_certify",
    "run_refute",
    "serialize_report",
    "solve",
    "solve_relaxation",
    "validate_report_payload",
    "validate_witness",
    "verify_certificate",
    "__version__",
]
