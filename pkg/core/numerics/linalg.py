"""
Dense linear-algebra kernels: spectra, Lyapunov and Riccati equations,
least squares.
"""

from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as sla
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from core.constants import (
    CARE_ACCEPT_RTOL,
    CARE_MAX_ITER,
    CARE_SHIFT_MARGIN,
    CARE_STALL_STEPS,
    CARE_TOL,
    LYAPUNOV_RTOL,
    PBH_RTOL,
)
from core.exceptions import CareError, EigenSolverError, LyapunovError, RankDeficiencyError
from core.logging_config import get_logger
from core.models.numerics import CareProblem

logger = get_logger("Linalg")


def eigenvalues(M: np.ndarray) -> np.ndarray:
    """
    Spectrum of a square matrix, sorted by decreasing real part.

    The matrix is split into the strongly connected components of its sparsity
    graph; in that order it is block triangular, so the spectrum is the union of
    the diagonal-block spectra. Structural zero eigenvalues come out exactly.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise EigenSolverError(f"matrix must be square, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise EigenSolverError("matrix has non-finite entries")

    n_blocks, labels = connected_components(csr_matrix(M != 0), directed=True, connection="strong")
    spectrum = []
    for k in range(n_blocks):
        members = np.flatnonzero(labels == k)
        block = M[np.ix_(members, members)]
        if block.shape == (1, 1):
            spectrum.append(block[0].astype(complex))
            continue
        try:
            spectrum.append(sla.eigvals(block, check_finite=False))
        except sla.LinAlgError as e:
            raise EigenSolverError(f"eigenvalue iteration did not converge on a {len(members)}-block: {e}") from e
    values = np.concatenate(spectrum) if spectrum else np.zeros(0, dtype=complex)
    order = np.lexsort((-values.imag, -values.real))
    return values[order]


def max_real(M: np.ndarray) -> float:
    return float(np.max(eigenvalues(M).real))


def is_hurwitz(M: np.ndarray) -> bool:
    return max_real(M) < 0.0


def solve_lyapunov(A: np.ndarray, Q: np.ndarray, check_hurwitz: bool = True) -> np.ndarray:
    """
    P with A'P + PA + Q = 0.

    Args:
        A: Hurwitz matrix.
        Q: Symmetric right-hand side.
        check_hurwitz: Skip the spectrum test when the caller already knows A is stable.

    Returns:
        Symmetric P.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Q = 0.5 * (Q + Q.T)
    if check_hurwitz:
        worst = max_real(A)
        if worst >= 0.0:
            raise LyapunovError(f"A is not Hurwitz (max Re = {worst:.3e})")

    try:
        P = sla.solve_continuous_lyapunov(A.T, -Q)
    except (sla.LinAlgError, ValueError) as e:
        raise LyapunovError(f"Lyapunov solve failed: {e}") from e
    P = 0.5 * (P + P.T)

    residual = np.linalg.norm(A.T @ P + P @ A + Q, "fro")
    q_norm = np.linalg.norm(Q, "fro")
    if residual > LYAPUNOV_RTOL * q_norm:
        scale = 2.0 * np.linalg.norm(A, "fro") * np.linalg.norm(P, "fro") + q_norm
        if not np.isfinite(residual) or residual > 1e-6 * scale:
            raise LyapunovError(f"ill-conditioned Lyapunov equation, residual {residual:.3e}")
        logger.debug(f"Lyapunov residual {residual:.3e} above {LYAPUNOV_RTOL:g}*|Q| (scaled {residual / scale:.2e})")
    return P


def care_residual(problem: CareProblem, P: np.ndarray) -> Tuple[float, float]:
    """
    Frobenius residual of the Riccati equation, absolute and relative to the size
    of its terms.
    """
    A, B, Q, R = problem.A, problem.B, problem.Q, problem.R
    PB = P @ B
    gain_term = PB @ np.linalg.solve(R, PB.T)
    res = A.T @ P + P @ A - gain_term + Q
    absolute = float(np.linalg.norm(res, "fro"))
    scale = 2.0 * np.linalg.norm(A.T @ P, "fro") + np.linalg.norm(gain_term, "fro") + np.linalg.norm(Q, "fro")
    return absolute, absolute / max(scale, np.finfo(float).tiny)


def _gain(problem: CareProblem, P: np.ndarray) -> np.ndarray:
    return sla.solve(problem.R, problem.B.T @ P, assume_a="pos")


def _stabilizes(problem: CareProblem, K: Optional[np.ndarray]) -> bool:
    if K is None or not np.all(np.isfinite(K)):
        return False
    closed = problem.A - problem.B @ K
    return bool(np.all(np.isfinite(closed))) and max_real(closed) < 0.0


def unstabilizable_modes(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """
    Eigenvalues of A with Re >= 0 that fail the PBH test rank [A - lambda*I, B] = n.
    An empty result means (A, B) is stabilizable.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = A.shape[0]
    scale = max(1.0, float(np.linalg.norm(np.hstack([A, B]), 2)))
    modes = []
    for lam in eigenvalues(A):
        if lam.real < 0.0:
            continue
        # n x (n+k) pencil: n singular values, the last one is the smallest
        smallest = sla.svdvals(np.hstack([A - lam * np.eye(n), B]))[-1]
        if smallest <= PBH_RTOL * scale:
            modes.append(lam)
    return np.asarray(modes, dtype=complex)


def _bass_gain(problem: CareProblem) -> Optional[np.ndarray]:
    """
    Stabilizing gain K = R^-1 B' X^-1 from (A + beta*I)X + X(A + beta*I)' = 2 B R^-1 B',
    with beta large enough that -(A + beta*I) is Hurwitz. Needs (A, B) controllable
    for X to be positive definite; returns None when it is not.
    """
    A, B, R = problem.A, problem.B, problem.R
    n = A.shape[0]
    spectrum = eigenvalues(A)
    beta = (1.0 + CARE_SHIFT_MARGIN) * float(np.max(np.abs(spectrum.real))) + CARE_SHIFT_MARGIN
    G = B @ sla.solve(R, B.T, assume_a="pos")
    try:
        X = sla.solve_continuous_lyapunov(A + beta * np.eye(n), 2.0 * G)
        X = 0.5 * (X + X.T)
        K = sla.solve(R, sla.solve(X, B, assume_a="pos").T, assume_a="pos")
    except (sla.LinAlgError, ValueError) as e:
        logger.debug(f"Bass gain unavailable: {e}")
        return None
    if not _stabilizes(problem, K):
        logger.debug(f"Bass gain with beta={beta:.3e} does not stabilize A")
        return None
    return K


def _newton_kleinman(problem: CareProblem, K: np.ndarray, history: List[float]) -> Tuple[Optional[np.ndarray], float]:
    """
    Newton-Kleinman steps from a stabilizing gain. Stops on the relative Riccati
    residual, on a stall at the rounding floor, or on a failed Lyapunov solve,
    and returns the iterate with the smallest residual.
    """
    best_P, best = None, np.inf
    stalled = 0
    for it in range(CARE_MAX_ITER):
        A_k = problem.A - problem.B @ K
        try:
            P = solve_lyapunov(A_k, problem.Q + K.T @ problem.R @ K, check_hurwitz=False)
        except LyapunovError as e:
            logger.debug(f"Newton step {it} stopped: {e}")
            break
        if not np.all(np.isfinite(P)):
            logger.debug(f"Newton step {it} produced non-finite entries")
            break
        _, relative = care_residual(problem, P)
        history.append(relative)
        logger.debug(f"Newton iteration {it}: relative residual {relative:.3e}")
        stalled = stalled + 1 if relative > 0.5 * best else 0
        if relative < best:
            best_P, best = P, relative
        if relative <= CARE_TOL:
            break
        if stalled >= CARE_STALL_STEPS:
            logger.debug(f"Newton iteration stalled at relative residual {best:.3e}")
            break
        K = _gain(problem, P)
    return best_P, best


def _schur_solution(problem: CareProblem) -> Optional[np.ndarray]:
    try:
        P = sla.solve_continuous_are(problem.A, problem.B, problem.Q, problem.R, balanced=True)
    except (sla.LinAlgError, ValueError) as e:
        logger.debug(f"Schur solve failed: {e}")
        return None
    if not np.all(np.isfinite(P)):
        return None
    return 0.5 * (P + P.T)


def solve_care(problem: CareProblem, initial_gain: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Stabilizing solution of A'P + PA - P B R^-1 B' P + Q = 0.

    Newton-Kleinman runs first, from initial_gain, from K = 0 when A is Hurwitz,
    or from the Bass gain otherwise. If it does not reach CARE_ACCEPT_RTOL the
    balanced Schur solver takes over and its result is refined by Newton steps.
    The answer is the stabilizing candidate with the smallest relative residual.

    Raises:
        CareError: no candidate is stabilizing and accurate; the message names the
            offending mode when (A, B) fails the PBH test.
    """
    A = problem.A
    n = A.shape[0]
    history: List[float] = []
    candidates: List[Tuple[str, np.ndarray, float]] = []

    if initial_gain is not None:
        K = np.atleast_2d(np.asarray(initial_gain, dtype=float))
    elif max_real(A) < 0.0:
        K = np.zeros((problem.B.shape[1], n))
    else:
        K = _bass_gain(problem)

    if _stabilizes(problem, K):
        P, relative = _newton_kleinman(problem, K, history)
        if P is not None:
            candidates.append(("newton", P, relative))
    else:
        logger.debug("no stabilizing initial gain for Newton")

    if not candidates or min(c[2] for c in candidates) > CARE_ACCEPT_RTOL:
        P = _schur_solution(problem)
        if P is not None:
            candidates.append(("schur", P, care_residual(problem, P)[1]))
            K = _gain(problem, P)
            if _stabilizes(problem, K):
                P, relative = _newton_kleinman(problem, K, history)
                if P is not None:
                    candidates.append(("schur+newton", P, relative))

    for method, P, relative in sorted(candidates, key=lambda c: c[2]):
        if relative > CARE_ACCEPT_RTOL:
            break
        K = _gain(problem, P)
        if not _stabilizes(problem, K):
            continue
        closed = max_real(A - problem.B @ K)
        absolute, _ = care_residual(problem, P)
        logger.info(
            f"CARE solved ({method}): n={n}, residual {absolute:.3e} (relative {relative:.3e}), "
            f"closed-loop max Re {closed:.3e}"
        )
        return P

    modes = unstabilizable_modes(A, problem.B)
    if modes.size:
        raise CareError(f"(A, B) is not stabilizable: mode {modes[0]:.3e} fails the PBH test", residuals=history)
    best = min((c[2] for c in candidates), default=float("nan"))
    raise CareError(
        f"no stabilizing Riccati solution within relative residual {CARE_ACCEPT_RTOL:g} (best {best:.3e})",
        residuals=history,
    )


def least_squares(
    M: np.ndarray,
    b: np.ndarray,
    ridge: float = 0.0,
    allow_rank_deficient: bool = False,
) -> np.ndarray:
    """
    argmin |Mx - b|^2 + ridge*|x|^2.

    With ridge = 0 and full column rank this is the pseudo-inverse solution.
    allow_rank_deficient returns the minimum-norm solution instead of raising,
    which is what underdetermined systems need.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    b = np.asarray(b, dtype=float)
    rows, cols = M.shape
    if ridge < 0:
        raise ValueError(f"ridge must be non-negative, got {ridge}")
    if ridge > 0:
        M = np.vstack([M, np.sqrt(ridge) * np.eye(cols)])
        b = np.concatenate([b, np.zeros((cols,) + b.shape[1:])])

    x, _, rank, _ = sla.lstsq(M, b, lapack_driver="gelsd")
    if rank < cols and not allow_rank_deficient:
        raise RankDeficiencyError(f"matrix has rank {rank} < {cols} columns", rank=int(rank), columns=cols)
    return x
