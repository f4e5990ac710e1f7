"""Dense primal-dual interior-point solver for small block-diagonal SDPs.

Standard form: minimize sum_b <C_b, X_b> subject to sum_b <A_ib, X_b> = b_i
and every block X_b positive semidefinite. The solver runs a homogeneous
self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector step, solving the reduced Newton system through a dense
Schur complement (Cholesky with a diagonal perturbation fallback). This gives
clean status semantics: optimal, infeasible (Farkas certificate attached),
unbounded (improving ray attached), or stalled.

Rank-deficient equality systems are pre-processed by pivoted-QR row
elimination; dropped rows are checked for consistency so that linearly
contradictory inputs are reported as infeasible without touching the cone.

Pure feasibility problems are solved through :func:`feasibility`, which swaps
in a small trace objective to bound the feasible region; the interior-point
iterates then converge to the analytic center of the optimal face, which is
the maximal-rank solution downstream rank tests rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, qr, solve_triangular, svd

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200
FEASIBILITY_REGULARIZATION = 1e-6
ROW_ELIMINATION_THRESHOLD = 1e-10
_SYMMETRY_TOL = 1e-9
_STEP_SHRINK = 0.99


@dataclass
class SdpProblem:
    """Block-diagonal SDP data in primal standard form.

    block_dims: side length of each PSD block.
    objective: per-block symmetric cost matrices, keyed by block index;
        missing blocks contribute zero cost.
    equalities: list of (mats, rhs) pairs where mats maps block index to a
        symmetric coefficient matrix, meaning sum_b <mats[b], X_b> = rhs.
    """

    block_dims: Sequence[int]
    objective: dict[int, np.ndarray]
    equalities: list[tuple[dict[int, np.ndarray], float]]

    def validate(self) -> None:
        if len(self.block_dims) == 0:
            raise ValueError("at least one PSD block is required")
        for k in self.block_dims:
            if int(k) < 1:
                raise ValueError(f"block dimension must be positive, got {k}")
        for label, mats in [("objective", self.objective)] + [
            (f"equality {i}", eq[0]) for i, eq in enumerate(self.equalities)
        ]:
            for b, mat in mats.items():
                if not 0 <= b < len(self.block_dims):
                    raise ValueError(f"{label}: block index {b} out of range")
                k = self.block_dims[b]
                arr = np.asarray(mat, dtype=float)
                if arr.shape != (k, k):
                    raise ValueError(f"{label}: block {b} matrix has shape {arr.shape}, expected {(k, k)}")
                if arr.size and np.max(np.abs(arr - arr.T)) > _SYMMETRY_TOL * (1.0 + np.max(np.abs(arr))):
                    raise ValueError(f"{label}: block {b} matrix is not symmetric")


@dataclass
class SdpSolution:
    status: str  # optimal | infeasible | unbounded | stalled
    X: list[np.ndarray]
    S: list[np.ndarray]
    y: np.ndarray
    objective_value: float
    primal_residual: float
    dual_residual: float
    relative_gap: float
    iterations: int
    tau: float
    kappa: float
    certificate: dict | None = None
    diagnostics: dict = field(default_factory=dict)


# -- svec / smat machinery ----------------------------------------------------

_SVEC_META: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _svec_meta(k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    meta = _SVEC_META.get(k)
    if meta is None:
        rows, cols = np.triu_indices(k)
        scale = np.where(rows == cols, 1.0, math.sqrt(2.0))
        meta = (rows, cols, scale)
        _SVEC_META[k] = meta
    return meta


def _svec(mat: np.ndarray) -> np.ndarray:
    k = mat.shape[0]
    rows, cols, scale = _svec_meta(k)
    return mat[rows, cols] * scale


def _smat(vec: np.ndarray, k: int) -> np.ndarray:
    rows, cols, scale = _svec_meta(k)
    out = np.zeros((k, k))
    vals = vec / scale
    out[rows, cols] = vals
    out[cols, rows] = vals
    return out


class _Layout:
    """Offsets of each block inside the stacked svec vector."""

    def __init__(self, dims: Sequence[int]):
        self.dims = [int(k) for k in dims]
        self.sizes = [k * (k + 1) // 2 for k in self.dims]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)
        self.total = int(self.offsets[-1])

    def stack(self, blocks: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate([_svec(m) for m in blocks])

    def unstack(self, vec: np.ndarray) -> list[np.ndarray]:
        return [
            _smat(vec[self.offsets[i] : self.offsets[i + 1]], k)
            for i, k in enumerate(self.dims)
        ]


def _stack_problem(problem: SdpProblem, layout: _Layout) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = len(problem.equalities)
    a = np.zeros((p, layout.total))
    b = np.zeros(p)
    for i, (mats, rhs) in enumerate(problem.equalities):
        b[i] = rhs
        for blk, mat in mats.items():
            off = layout.offsets[blk]
            a[i, off : off + layout.sizes[blk]] = _svec(np.asarray(mat, dtype=float))
    c = np.zeros(layout.total)
    for blk, mat in problem.objective.items():
        off = layout.offsets[blk]
        c[off : off + layout.sizes[blk]] = _svec(np.asarray(mat, dtype=float))
    return a, b, c


def _independent_rows(a: np.ndarray, b: np.ndarray) -> tuple[list[int], list[int], bool]:
    """Pick a maximal independent row subset; flag inconsistent dependent rows."""
    p = a.shape[0]
    if p == 0:
        return [], [], False
    norms = np.linalg.norm(a, axis=1)
    _, r, piv = qr(a.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r)) if r.size else np.array([])
    kept: list[int] = []
    for k in range(min(len(diag), p)):
        row = piv[k]
        if diag[k] > ROW_ELIMINATION_THRESHOLD * max(norms[row], 1e-300):
            kept.append(int(row))
        else:
            break
    kept_set = set(kept)
    dropped = [i for i in range(p) if i not in kept_set]
    inconsistent = False
    if dropped:
        scale = 1.0 + float(np.max(np.abs(b))) if b.size else 1.0
        if kept:
            coeffs, *_ = np.linalg.lstsq(a[kept].T, a[dropped].T, rcond=None)
            predicted = coeffs.T @ b[kept]
        else:
            predicted = np.zeros(len(dropped))
        if np.max(np.abs(b[dropped] - predicted)) > 1e-8 * scale:
            inconsistent = True
    return sorted(kept), dropped, inconsistent


# -- interior-point core -------------------------------------------------------


class _NumericalFailure(Exception):
    pass


def _chol_lower(mat: np.ndarray) -> np.ndarray:
    jitter = 0.0
    scale = max(float(np.trace(mat)) / mat.shape[0], 1e-300)
    for _ in range(8):
        try:
            return np.linalg.cholesky(mat + jitter * np.eye(mat.shape[0]))
        except np.linalg.LinAlgError:
            jitter = max(jitter * 100.0, 1e-14 * scale)
    raise _NumericalFailure("Cholesky failed despite diagonal perturbation")


def _max_step_block(chol_lower: np.ndarray, direction: np.ndarray) -> float:
    k = solve_triangular(chol_lower, direction, lower=True)
    k = solve_triangular(chol_lower, k.T, lower=True)
    k = 0.5 * (k + k.T)
    lam_min = float(np.linalg.eigvalsh(k)[0])
    if lam_min >= -1e-14:
        return np.inf
    return 1.0 / (-lam_min)


def _max_step_scalar(value: float, direction: float) -> float:
    if direction >= 0:
        return np.inf
    return value / (-direction)


def solve(
    problem: SdpProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SdpSolution:
    """Solve the SDP to the requested tolerance.

    On status "optimal" the returned X, y, S satisfy primal residual, dual
    residual, and relative duality gap all <= tol. On "infeasible" or
    "unbounded" the certificate field carries the Farkas witness or the
    improving ray.
    """
    if not 0.0 < tol <= 1e-2:
        raise ValueError(f"tol must lie in (0, 1e-2], got {tol}")
    problem.validate()
    layout = _Layout(problem.block_dims)
    a_full, b_full, c = _stack_problem(problem, layout)
    kept, dropped, inconsistent = _independent_rows(a_full, b_full)
    diagnostics: dict = {"dropped_rows": dropped, "n_equalities": len(b_full)}
    if inconsistent:
        dims = layout.dims
        return SdpSolution(
            status="infeasible",
            X=[np.zeros((k, k)) for k in dims],
            S=[np.zeros((k, k)) for k in dims],
            y=np.zeros(len(b_full)),
            objective_value=float("nan"),
            primal_residual=float("inf"),
            dual_residual=float("inf"),
            relative_gap=float("inf"),
            iterations=0,
            tau=0.0,
            kappa=1.0,
            certificate={"type": "linear-inconsistency", "rows": dropped},
            diagnostics=diagnostics,
        )
    a = a_full[kept]
    b = b_full[kept]
    # Row normalization: conditions the Schur complement without moving X;
    # dual multipliers are unscaled before they are returned.
    row_scale = np.maximum(np.linalg.norm(a, axis=1), 1e-300) if a.shape[0] else np.zeros(0)
    if a.shape[0]:
        a = a / row_scale[:, None]
        b = b / row_scale
    p = a.shape[0]
    dims = layout.dims
    nu = sum(dims)
    norm_b = 1.0 + float(np.linalg.norm(b))
    norm_c = 1.0 + float(np.linalg.norm(c))
    cert_tol = max(10.0 * tol, 1e-10)

    xb = [np.eye(k) for k in dims]
    sb = [np.eye(k) for k in dims]
    y = np.zeros(p)
    tau = 1.0
    kappa = 1.0
    x = layout.stack(xb)
    s = layout.stack(sb)
    mu0 = (x @ s + tau * kappa) / (nu + 1)

    c_blocks = layout.unstack(c)

    def _expand_y(yv: np.ndarray) -> np.ndarray:
        full = np.zeros(len(b_full))
        if p:
            full[kept] = yv / row_scale
        return full

    def _solution(
        state: tuple[list[np.ndarray], list[np.ndarray], np.ndarray, float, float],
        status: str,
        iterations: int,
        certificate: dict | None = None,
    ) -> SdpSolution:
        sxb, ssb, sy, stau, skappa = state
        if stau > 1e-300:
            xs = [m / stau for m in sxb]
            ss = [m / stau for m in ssb]
            ys = sy / stau
        else:
            xs, ss, ys = sxb, ssb, sy
        obj = float(c @ layout.stack(xs))
        pres = float(np.linalg.norm(a @ layout.stack(xs) - b)) / norm_b
        dres = float(np.linalg.norm(a.T @ ys + layout.stack(ss) - c)) / norm_c
        dobj = float(b @ ys)
        gap = abs(obj - dobj) / (1.0 + abs(obj) + abs(dobj))
        return SdpSolution(
            status=status,
            X=[0.5 * (m + m.T) for m in xs],
            S=[0.5 * (m + m.T) for m in ss],
            y=_expand_y(ys),
            objective_value=obj,
            primal_residual=pres,
            dual_residual=dres,
            relative_gap=gap,
            iterations=iterations,
            tau=stau,
            kappa=skappa,
            certificate=certificate,
            diagnostics=diagnostics,
        )

    def _snapshot() -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray, float, float]:
        return ([m.copy() for m in xb], [m.copy() for m in sb], y.copy(), tau, kappa)

    best_state = _snapshot()
    best_score = np.inf

    def _finish(status: str, iterations: int) -> SdpSolution:
        # Fall back to the best measured iterate; report optimal when it
        # already meets the requested tolerance despite the breakdown.
        final = "optimal" if best_score <= tol else status
        return _solution(best_state, final, iterations)

    slow_steps = 0
    iteration = 0
    try:
        for iteration in range(1, max_iter + 1):
            rp = a @ x - b * tau
            rd = a.T @ y + s - c * tau
            rg = b @ y - c @ x - kappa
            mu = (x @ s + tau * kappa) / (nu + 1)

            err_p = float(np.linalg.norm(a @ x / tau - b)) / norm_b
            err_d = float(np.linalg.norm(a.T @ y / tau + s / tau - c)) / norm_c
            pobj = float(c @ x / tau)
            dobj = float(b @ y / tau)
            gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
            score = max(err_p, err_d, gap)
            if score < best_score:
                best_score = score
                best_state = _snapshot()
            if err_p <= tol and err_d <= tol and gap <= tol:
                return _solution(_snapshot(), "optimal", iteration - 1)

            by = float(b @ y)
            cx = float(c @ x)
            if kappa > tau and by > 0.0:
                res_inf = float(np.linalg.norm(a.T @ y + s)) / by
                if res_inf <= cert_tol * norm_c:
                    cert = {
                        "type": "primal-infeasibility",
                        "y": _expand_y(y / by),
                        "S": [m / by for m in sb],
                        "residual": res_inf,
                    }
                    return _solution(_snapshot(), "infeasible", iteration - 1, cert)
            if kappa > tau and cx < 0.0:
                res_unb = float(np.linalg.norm(a @ x)) / (-cx)
                if res_unb <= cert_tol * norm_b:
                    cert = {
                        "type": "unboundedness-ray",
                        "X": [m / (-cx) for m in xb],
                        "residual": res_unb,
                    }
                    return _solution(_snapshot(), "unbounded", iteration - 1, cert)

            if mu < 1e-18 * max(1.0, mu0):
                return _finish("stalled", iteration - 1)

            # Nesterov-Todd scaling per block: G^{-1} X G^{-T} = G^T S G = diag(d).
            gs: list[np.ndarray] = []
            ginvs: list[np.ndarray] = []
            dvals: list[np.ndarray] = []
            lxs: list[np.ndarray] = []
            lss: list[np.ndarray] = []
            for i, k in enumerate(dims):
                lx = _chol_lower(xb[i])
                ls = _chol_lower(sb[i])
                _, sig, vt = svd(ls.T @ lx)
                sig = np.maximum(sig, 1e-150)
                sqrt_sig = np.sqrt(sig)
                g = (lx @ vt.T) / sqrt_sig
                linv = solve_triangular(lx, np.eye(k), lower=True)
                ginv = (vt * sqrt_sig[:, None]) @ linv
                gs.append(g)
                ginvs.append(ginv)
                dvals.append(sig)
                lxs.append(lx)
                lss.append(ls)

            # Scaled constraint rows and Schur complement.
            util_parts = []
            ctil_parts = []
            rd_blocks = layout.unstack(rd)
            rdtil_parts = []
            for i, k in enumerate(dims):
                off, size = layout.offsets[i], layout.sizes[i]
                rows, cols, scale = _svec_meta(k)
                sub = a[:, off : off + size]
                if p:
                    amats = np.zeros((p, k, k))
                    vals = sub / scale
                    amats[:, rows, cols] = vals
                    amats[:, cols, rows] = vals
                    tg = amats @ gs[i]
                    gtg = np.matmul(gs[i].T, tg)
                    gtg = 0.5 * (gtg + np.transpose(gtg, (0, 2, 1)))
                    util_parts.append(gtg[:, rows, cols] * scale)
                else:
                    util_parts.append(np.zeros((0, size)))
                ctil = gs[i].T @ c_blocks[i] @ gs[i]
                ctil_parts.append(_svec(0.5 * (ctil + ctil.T)))
                rdt = gs[i].T @ rd_blocks[i] @ gs[i]
                rdtil_parts.append(_svec(0.5 * (rdt + rdt.T)))
            util = np.hstack(util_parts) if util_parts else np.zeros((p, 0))
            ctil_vec = np.concatenate(ctil_parts)
            rdtil_vec = np.concatenate(rdtil_parts)

            if p:
                m_schur = util @ util.T
                jitter = 0.0
                m_scale = max(float(np.trace(m_schur)) / p, 1e-300)
                cho = None
                for _ in range(8):
                    try:
                        cho = cho_factor(m_schur + jitter * np.eye(p), lower=True)
                        break
                    except np.linalg.LinAlgError:
                        jitter = max(jitter * 100.0, 1e-14 * m_scale)
                if cho is None:
                    raise _NumericalFailure("Schur complement factorization failed")

                def schur_solve(rhs: np.ndarray) -> np.ndarray:
                    z = cho_solve(cho, rhs)
                    # one refinement step recovers digits lost to conditioning
                    z = z + cho_solve(cho, rhs - m_schur @ z)
                    return z

                v_wc = util @ ctil_vec
                z2 = schur_solve(v_wc + b)
            else:
                v_wc = np.zeros(0)
                z2 = np.zeros(0)

                def schur_solve(rhs: np.ndarray) -> np.ndarray:
                    return np.zeros(0)

            ctil_sq = float(ctil_vec @ ctil_vec)

            def newton(rc_blocks: list[np.ndarray], rc_tk: float):
                svec_rc = layout.stack(rc_blocks)
                r1 = -rp - a @ svec_rc - util @ rdtil_vec
                r2 = float(-rg + c @ svec_rc + ctil_vec @ rdtil_vec + rc_tk / tau)
                z1 = schur_solve(r1) if p else np.zeros(0)
                denom = float((b - v_wc) @ z2) + ctil_sq + kappa / tau
                dtau = (r2 - float((b - v_wc) @ z1)) / denom
                dy = z1 + z2 * dtau
                ds = -rd - a.T @ dy + c * dtau
                ds_blocks = layout.unstack(ds)
                dx_blocks = []
                for i in range(len(dims)):
                    wdw = gs[i] @ (gs[i].T @ ds_blocks[i] @ gs[i]) @ gs[i].T
                    dxm = rc_blocks[i] - wdw
                    dx_blocks.append(0.5 * (dxm + dxm.T))
                dkappa = (rc_tk - kappa * dtau) / tau
                return dx_blocks, dy, ds_blocks, dtau, dkappa

            def max_step(dx_blocks, ds_blocks, dtau, dkappa) -> float:
                step = np.inf
                for i in range(len(dims)):
                    step = min(step, _max_step_block(lxs[i], dx_blocks[i]))
                    step = min(step, _max_step_block(lss[i], ds_blocks[i]))
                step = min(step, _max_step_scalar(tau, dtau))
                step = min(step, _max_step_scalar(kappa, dkappa))
                return step

            # Predictor (affine direction).
            rc_aff = [-xb[i] for i in range(len(dims))]
            dxa, dya, dsa, dta, dka = newton(rc_aff, -tau * kappa)
            alpha_aff = min(1.0, max_step(dxa, dsa, dta, dka))
            x_aff = x + alpha_aff * layout.stack(dxa)
            s_aff = s + alpha_aff * layout.stack(dsa)
            mu_aff = (
                x_aff @ s_aff + (tau + alpha_aff * dta) * (kappa + alpha_aff * dka)
            ) / (nu + 1)
            sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3))

            # Corrector with Mehrotra second-order term in the scaled space.
            rc_blocks = []
            for i, k in enumerate(dims):
                dxhat = ginvs[i] @ dxa[i] @ ginvs[i].T
                dshat = gs[i].T @ dsa[i] @ gs[i]
                second = 0.5 * (dxhat @ dshat + dshat @ dxhat)
                rm = sigma * mu * np.eye(k) - np.diag(dvals[i] ** 2) - second
                denom = dvals[i][:, None] + dvals[i][None, :]
                e = 2.0 * rm / denom
                rc = gs[i] @ e @ gs[i].T
                rc_blocks.append(0.5 * (rc + rc.T))
            rc_tk = sigma * mu - tau * kappa - dta * dka
            dx_blocks, dy, ds_blocks, dtau, dkappa = newton(rc_blocks, rc_tk)
            alpha = min(1.0, _STEP_SHRINK * max_step(dx_blocks, ds_blocks, dtau, dkappa))
            if alpha < 1e-7:
                slow_steps += 1
                if slow_steps >= 3:
                    return _finish("stalled", iteration)
            else:
                slow_steps = 0

            for i in range(len(dims)):
                xb[i] = 0.5 * ((xb[i] + alpha * dx_blocks[i]) + (xb[i] + alpha * dx_blocks[i]).T)
                sb[i] = 0.5 * ((sb[i] + alpha * ds_blocks[i]) + (sb[i] + alpha * ds_blocks[i]).T)
            y = y + alpha * dy
            tau = float(tau + alpha * dtau)
            kappa = float(kappa + alpha * dkappa)
            x = layout.stack(xb)
            s = layout.stack(sb)
    except _NumericalFailure as exc:
        diagnostics["failure"] = str(exc)
        return _finish("stalled", iteration)

    return _finish("stalled", max_iter)


def feasibility(
    problem: SdpProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    regularization: float = FEASIBILITY_REGULARIZATION,
) -> SdpSolution:
    """Solve a pure feasibility problem (zero objective).

    A small trace objective bounds the otherwise conic solution set, so the
    iterates converge to the analytic center of the optimal face. The reported
    objective value is the regularized trace, not a problem quantity.
    """
    for blk, mat in problem.objective.items():
        if np.any(np.abs(np.asarray(mat)) > 0):
            raise ValueError("feasibility expects a zero objective")
    regularized = SdpProblem(
        block_dims=problem.block_dims,
        objective={i: regularization * np.eye(k) for i, k in enumerate(problem.block_dims)},
        equalities=problem.equalities,
    )
    return solve(regularized, tol=tol, max_iter=max_iter)


def dump_sdp(problem: SdpProblem, stream: IO[str]) -> None:
    """Write the instance in the sparse text format documented in docs/formats.md.

    One line per upper-triangular nonzero: objective entries as
    ``c <block> <row> <col> <value>`` and equality entries as
    ``a <index> <block> <row> <col> <value>``; indices are zero-based.
    """
    stream.write("sdp 1\n")
    stream.write("blocks " + " ".join(str(int(k)) for k in problem.block_dims) + "\n")
    stream.write(f"nconstraints {len(problem.equalities)}\n")
    for blk in sorted(problem.objective):
        mat = np.asarray(problem.objective[blk])
        for r in range(mat.shape[0]):
            for cidx in range(r, mat.shape[1]):
                if mat[r, cidx] != 0.0:
                    stream.write(f"c {blk} {r} {cidx} {float(mat[r, cidx])!r}\n")
    for i, (mats, rhs) in enumerate(problem.equalities):
        if rhs != 0.0:
            stream.write(f"b {i} {float(rhs)!r}\n")
        for blk in sorted(mats):
            mat = np.asarray(mats[blk])
            for r in range(mat.shape[0]):
                for cidx in range(r, mat.shape[1]):
                    if mat[r, cidx] != 0.0:
                        stream.write(f"a {i} {blk} {r} {cidx} {float(mat[r, cidx])!r}\n")
