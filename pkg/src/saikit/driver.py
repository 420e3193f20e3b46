"""End-to-end solve of A x = b through the regular/irregular splitting.

Pipeline: optional zero-free-diagonal row permutation, split into
A_tilde + U V^T, one sparse approximate inverse M of A_tilde, s + 1
right-preconditioned BiCGStab solves with per-system tolerances that
budget the overall relative residual, and recovery of x through the
low-rank update formula. The report always carries the relative residual
recomputed against the original A and b, never the solver's own estimate.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .krylov import SolveOutcome, bicgstab
from .psai import PsaiConfig, psai
from .spai import SpaiConfig, spai
from .sparse_core import CscMatrix, matvec, permute_rows, zero_free_diagonal_permutation
from .splitting import split


class SingularUpdateError(ValueError):
    """The s-by-s update system I + V^T (A_tilde^{-1} U) is singular."""


class AssemblyError(ValueError):
    """The s-by-s system I + V^T W_hat is numerically singular."""

    def __init__(self, msg: str, cond: float):
        super().__init__(msg)
        self.cond = cond


@dataclass
class DriverConfig:
    epsilon: float = 1e-8
    c_policy: str = "fixed"        # "fixed" uses c_fixed; "posthoc" re-tightens
    c_fixed: float = 1.0
    method: str = "psai"           # "spai" | "psai"
    max_iter: int = 500
    preprocess: str = "auto"       # "auto" | "always" | "never"
    factor: float = 10.0
    strategy: str = "nearest"
    p_kept: int | None = None
    spai: SpaiConfig = field(default_factory=SpaiConfig)
    psai: PsaiConfig = field(default_factory=PsaiConfig)
    threads: int = 1
    posthoc_rounds: int = 8

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.c_policy not in ("fixed", "posthoc"):
            raise ValueError("c_policy must be 'fixed' or 'posthoc'")
        if self.method not in ("spai", "psai"):
            raise ValueError("method must be 'spai' or 'psai'")
        if self.preprocess not in ("auto", "always", "never"):
            raise ValueError("preprocess must be 'auto', 'always' or 'never'")
        if self.c_fixed <= 0.0:
            raise ValueError("c_fixed must be positive")


@dataclass
class SolveReport:
    x_hat: np.ndarray
    rr: float
    a: float
    iter_y: int
    iter_w: list[int]
    max_iter_used: int
    preconditioner_stats: dict
    small_system_condition: float
    converged: bool
    flag_y: str
    flags_w: list[str]
    resid_y: float
    resid_w: list[float]
    s: int
    method: str
    posthoc_c: float | None = None

    def to_dict(self, include_solution: bool = True) -> dict:
        out = {
            "schema_version": 1,
            "rr": self.rr,
            "a": self.a,
            "iter_y": self.iter_y,
            "iter_w": list(self.iter_w),
            "max_iter_used": self.max_iter_used,
            "preconditioner_stats": self.preconditioner_stats,
            "small_system_condition": self.small_system_condition,
            "converged": self.converged,
            "flag_y": self.flag_y,
            "flags_w": list(self.flags_w),
            "resid_y": self.resid_y,
            "resid_w": list(self.resid_w),
            "s": self.s,
            "method": self.method,
            "posthoc_c": self.posthoc_c,
        }
        if include_solution:
            out["x_hat"] = [float(v) for v in self.x_hat]
        return out


def _checked_small_solve(c_mat: np.ndarray, rhs: np.ndarray,
                         error: str) -> tuple[np.ndarray, float]:
    """LU solve of the small update system with a pivot-based singularity check."""
    cond = float(np.linalg.cond(c_mat)) if c_mat.size else 1.0
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # the pivot check below reports it
            lu, piv = lu_factor(c_mat)
    except ValueError as exc:
        raise AssemblyError(f"{error}: {exc}", cond) from exc
    pivots = np.abs(np.diag(lu))
    scale = pivots.max() if pivots.size else 0.0
    if scale == 0.0 or pivots.min() <= 1e-14 * scale:
        if error.startswith("singular update"):
            raise SingularUpdateError(error)
        raise AssemblyError(error, cond)
    return lu_solve((lu, piv), rhs), cond


def smw_inverse_apply(a_tilde_solve: Callable[[np.ndarray], np.ndarray],
                      u: CscMatrix | np.ndarray,
                      irregular_cols,
                      b: np.ndarray) -> np.ndarray:
    """x = A^{-1} b through exact solves with the sparsified matrix.

    ``a_tilde_solve`` must apply A_tilde^{-1}. Used as the ground-truth
    recovery path; raises :class:`SingularUpdateError` when the update
    system is singular, which happens exactly when A itself is singular
    given a nonsingular A_tilde.
    """
    b = np.asarray(b, dtype=np.float64)
    irregular_cols = np.asarray(irregular_cols, dtype=np.int64)
    s = len(irregular_cols)
    y = a_tilde_solve(b)
    if s == 0:
        return y
    u_dense = u.to_dense() if isinstance(u, CscMatrix) else np.asarray(u, dtype=np.float64)
    w = np.column_stack([a_tilde_solve(u_dense[:, j]) for j in range(s)])
    c_mat = np.eye(s) + w[irregular_cols, :]
    z, _ = _checked_small_solve(c_mat, y[irregular_cols],
                                "singular update system I + V^T A_tilde^{-1} U")
    return y - w @ z


def assemble_solution(y_hat: np.ndarray, w_hat: np.ndarray,
                      irregular_cols) -> tuple[np.ndarray, float]:
    """x_hat = y_hat - W_hat (I + V^T W_hat)^{-1} (V^T y_hat).

    V^T picks the irregular-column rows, so no general product is formed.
    Returns the assembled solution and the condition estimate of the small
    system.
    """
    y_hat = np.asarray(y_hat, dtype=np.float64)
    irregular_cols = np.asarray(irregular_cols, dtype=np.int64)
    s = len(irregular_cols)
    if s == 0:
        return y_hat.copy(), 1.0
    w_hat = np.asarray(w_hat, dtype=np.float64)
    c_mat = np.eye(s) + w_hat[irregular_cols, :]
    z, cond = _checked_small_solve(c_mat, y_hat[irregular_cols],
                                   "assembly system I + V^T W_hat is singular")
    return y_hat - w_hat @ z, cond


def subsystem_tolerances(epsilon: float, s: int, c: float, norm_b: float,
                         norm_u: np.ndarray | list[float],
                         ) -> tuple[float, np.ndarray]:
    """Relative tolerances budgeting the assembled residual below epsilon.

    The main system gets epsilon / 2; each correction system j gets
    epsilon * ||b|| / (2 sqrt(s) c ||u_j||). With s == 0 the correction
    budget is empty.
    """
    if norm_b <= 0.0:
        raise ValueError("norm_b must be positive")
    if c <= 0.0:
        raise ValueError("c must be positive")
    if s < 0:
        raise ValueError("s must be non-negative")
    tol_y = epsilon / 2.0
    if s == 0:
        return tol_y, np.empty(0)
    norm_u = np.asarray(norm_u, dtype=np.float64)
    if norm_u.shape != (s,) or np.any(norm_u <= 0.0):
        raise ValueError("norm_u must hold s positive norms")
    tol_w = epsilon * norm_b / (2.0 * np.sqrt(s) * c * norm_u)
    return tol_y, tol_w


def _build_preconditioner(a: CscMatrix, cfg: DriverConfig) -> tuple[CscMatrix, dict]:
    t0 = time.perf_counter()
    if cfg.method == "spai":
        m, rep = spai(a, cfg.spai, threads=cfg.threads)
        quality = {"n_c": rep.n_c, "max_candidates": rep.max_candidates}
    else:
        m, rep = psai(a, cfg.psai, threads=cfg.threads)
        quality = {"l_m": rep.l_m, "n_failed": len(rep.errors)}
    guard_hits = sum(1 for _, msg in rep.errors if "WorkspaceGuardError" in msg)
    setup = time.perf_counter() - t0
    denom = max(a.nnz, 1)
    stats = {"nnz_m": m.nnz, "spar": m.nnz / denom, "t_setup": setup,
             "guard_hits": guard_hits}
    stats.update(quality)
    return m, stats


def _solve_systems(a: CscMatrix, m: CscMatrix, rhs_list: list[np.ndarray],
                   tols: list[float], max_iter: int, threads: int,
                   x0_list: list[np.ndarray | None] | None = None,
                   ) -> list[SolveOutcome]:
    apply_op = lambda v: matvec(a, v)
    apply_m = lambda v: matvec(m, v)
    x0_list = x0_list or [None] * len(rhs_list)

    def one(i: int) -> SolveOutcome:
        return bicgstab(apply_op, rhs_list[i], x0_list[i], apply_precond=apply_m,
                        tol=tols[i], max_iter=max_iter)

    if threads > 1 and len(rhs_list) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(len(rhs_list))))
    return [one(i) for i in range(len(rhs_list))]


def _apply_preprocess(a: CscMatrix, b: np.ndarray,
                      mode: str) -> tuple[CscMatrix, np.ndarray]:
    if mode == "never":
        return a, b
    perm = zero_free_diagonal_permutation(a)
    if np.array_equal(perm, np.arange(a.n_rows)):
        return a, b
    return permute_rows(a, perm), b[perm]


def _finish_report(a0: CscMatrix, b0: np.ndarray, x_hat: np.ndarray,
                   cfg: DriverConfig, outcome_y: SolveOutcome,
                   outcomes_w: list[SolveOutcome], stats: dict, cond: float,
                   s: int, posthoc_c: float | None) -> SolveReport:
    norm_b = float(np.linalg.norm(b0))
    rr = float(np.linalg.norm(b0 - matvec(a0, x_hat))) / norm_b
    iters = [outcome_y.iterations] + [o.iterations for o in outcomes_w]
    all_converged = (outcome_y.flag == "converged"
                     and all(o.flag == "converged" for o in outcomes_w))
    return SolveReport(x_hat=x_hat, rr=rr, a=rr / cfg.epsilon,
                       iter_y=outcome_y.iterations,
                       iter_w=[o.iterations for o in outcomes_w],
                       max_iter_used=max(iters),
                       preconditioner_stats=stats,
                       small_system_condition=cond,
                       converged=all_converged,
                       flag_y=outcome_y.flag,
                       flags_w=[o.flag for o in outcomes_w],
                       resid_y=outcome_y.rel_residual,
                       resid_w=[o.rel_residual for o in outcomes_w],
                       s=s, method=cfg.method, posthoc_c=posthoc_c)


def _zero_rhs_report(n: int, cfg: DriverConfig, s: int = 0) -> SolveReport:
    return SolveReport(x_hat=np.zeros(n), rr=0.0, a=0.0, iter_y=0, iter_w=[],
                       max_iter_used=0,
                       preconditioner_stats={"nnz_m": 0, "spar": 0.0, "t_setup": 0.0},
                       small_system_condition=1.0, converged=True,
                       flag_y="converged", flags_w=[], resid_y=0.0, resid_w=[],
                       s=s, method=cfg.method)


def solve_standard(a: CscMatrix, b: np.ndarray,
                   cfg: DriverConfig | None = None) -> SolveReport:
    """Precondition A directly and run a single solve at tolerance epsilon."""
    cfg = cfg or DriverConfig()
    b = np.asarray(b, dtype=np.float64)
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side must be finite")
    if np.linalg.norm(b) == 0.0:
        return _zero_rhs_report(a.n_cols, cfg)
    a_w, b_w = _apply_preprocess(a, b, cfg.preprocess)
    return _standard_on(a, b, a_w, b_w, cfg)


def _standard_on(a0: CscMatrix, b0: np.ndarray, a_w: CscMatrix, b_w: np.ndarray,
                 cfg: DriverConfig) -> SolveReport:
    m, stats = _build_preconditioner(a_w, cfg)
    outcome = _solve_systems(a_w, m, [b_w], [cfg.epsilon], cfg.max_iter,
                             cfg.threads)[0]
    return _finish_report(a0, b0, outcome.x, cfg, outcome, [], stats, 1.0, 0, None)


def solve_irregular(a: CscMatrix, b: np.ndarray,
                    cfg: DriverConfig | None = None) -> SolveReport:
    """Split, precondition the sparsified matrix once, solve s + 1 systems.

    With no irregular columns the pipeline degenerates to the standard
    single solve at tolerance epsilon. Non-convergence of a subsystem is
    reported, never raised; the solution is still assembled and the true
    relative residual recorded.
    """
    cfg = cfg or DriverConfig()
    if a.n_rows != a.n_cols:
        raise ValueError("square matrix required")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (a.n_rows,):
        raise ValueError("right-hand side length mismatch")
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side must be finite")
    if np.linalg.norm(b) == 0.0:
        return _zero_rhs_report(a.n_cols, cfg)

    a_w, b_w = _apply_preprocess(a, b, cfg.preprocess)
    sys = split(a_w, factor=cfg.factor, strategy=cfg.strategy, p_kept=cfg.p_kept)
    if sys.s == 0:
        return _standard_on(a, b, a_w, b_w, cfg)

    m, stats = _build_preconditioner(sys.a_tilde, cfg)

    s = sys.s
    norm_b = float(np.linalg.norm(b_w))
    u_cols = [sys.u.col(i) for i in range(s)]
    u_dense = [np.zeros(a.n_rows) for _ in range(s)]
    for i, (rows, vals) in enumerate(u_cols):
        u_dense[i][rows] = vals
    norm_u = np.array([float(np.linalg.norm(col)) for col in u_dense])

    c_now = cfg.c_fixed if cfg.c_policy == "fixed" else 1.0
    tol_y, tol_w = subsystem_tolerances(cfg.epsilon, s, c_now, norm_b, norm_u)
    outcomes = _solve_systems(sys.a_tilde, m, [b_w] + u_dense,
                              [tol_y] + list(tol_w), cfg.max_iter, cfg.threads)
    outcome_y, outcomes_w = outcomes[0], outcomes[1:]
    posthoc_c = None

    if cfg.c_policy == "posthoc":
        for _ in range(cfg.posthoc_rounds):
            w_hat = np.column_stack([o.x for o in outcomes_w])
            c_mat = np.eye(s) + w_hat[sys.irregular_cols, :]
            try:
                z = np.linalg.solve(c_mat, outcome_y.x[sys.irregular_cols])
            except np.linalg.LinAlgError:
                break
            posthoc_c = float(np.linalg.norm(z))
            c_eff = max(posthoc_c, np.finfo(float).tiny)
            _, tol_w_exact = subsystem_tolerances(cfg.epsilon, s, c_eff,
                                                  norm_b, norm_u)
            stale = [j for j, o in enumerate(outcomes_w)
                     if o.rel_residual >= tol_w_exact[j]]
            if outcome_y.rel_residual >= tol_y:
                stale_y = True
            else:
                stale_y = False
            if not stale and not stale_y:
                break
            redo_rhs, redo_tol, redo_x0, redo_idx = [], [], [], []
            if stale_y:
                redo_rhs.append(b_w)
                redo_tol.append(tol_y * 0.5)
                redo_x0.append(outcome_y.x)
                redo_idx.append(-1)
            for j in stale:
                redo_rhs.append(u_dense[j])
                redo_tol.append(tol_w_exact[j] * 0.5)
                redo_x0.append(outcomes_w[j].x)
                redo_idx.append(j)
            redone = _solve_systems(sys.a_tilde, m, redo_rhs, redo_tol,
                                    cfg.max_iter, cfg.threads, x0_list=redo_x0)
            progressed = False
            for idx, out in zip(redo_idx, redone):
                if idx == -1:
                    if out.rel_residual < outcome_y.rel_residual:
                        outcome_y = out
                        progressed = True
                else:
                    if out.rel_residual < outcomes_w[idx].rel_residual:
                        outcomes_w[idx] = out
                        progressed = True
            if not progressed:
                break

    w_hat = np.column_stack([o.x for o in outcomes_w])
    x_hat, cond = assemble_solution(outcome_y.x, w_hat, sys.irregular_cols)
    return _finish_report(a, b, x_hat, cfg, outcome_y, outcomes_w, stats,
                          cond, s, posthoc_c)
