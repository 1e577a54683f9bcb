"""
Matrix-free conjugate gradient for the pressure and viscous systems.

No preconditioner. Vectors may have any shape (they are DG blocks); inner
products flatten them in C order, so the summation order is fixed and runs
are reproducible.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import SolverError

logger = logging.getLogger(__name__)

Operator = Callable[[np.ndarray], np.ndarray]

DEFAULT_PRESSURE_TOL = 1e-10
DEFAULT_VISCOUS_TOL = 1e-12
REORTH_EVERY = 50
DIVERGENCE_FACTOR = 1e6


@dataclass
class CgReport:
    """Bookkeeping of one CG solve."""

    iterations: int
    residual: float
    converged: bool
    breakdown: bool = False
    wall_time: float = 0.0

    def summary(self) -> str:
        state = "converged" if self.converged else ("breakdown" if self.breakdown else "not converged")
        return f"{state} in {self.iterations} iterations (relative residual {self.residual:.3e}, {self.wall_time:.3f}s)"


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a.ravel(), b.ravel()))


def _remove_mean(x: np.ndarray) -> np.ndarray:
    return x - x.mean()


def kernel_projector(kernel: Optional[np.ndarray], constants: bool) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    """
    Orthogonal projector onto the complement of a known kernel.

    ``kernel`` holds orthonormal basis vectors as rows (flattened in C order).
    Without one, ``constants=True`` falls back to removing the mean.
    """
    if kernel is not None and len(kernel):
        basis = np.asarray(kernel, dtype=float)

        def project(x: np.ndarray) -> np.ndarray:
            flat = x.ravel()
            return (flat - basis.T @ (basis @ flat)).reshape(x.shape)

        return project
    if constants:
        return _remove_mean
    return None


def cg_solve(
    apply_a: Operator,
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    tol: float = DEFAULT_PRESSURE_TOL,
    max_iter: int = 1000,
    nullspace: bool = False,
    reorth_every: int = REORTH_EVERY,
    callback: Optional[Callable[[int, np.ndarray, float], None]] = None,
    kernel: Optional[np.ndarray] = None,
    atol: float = 0.0,
    divergence_factor: float = DIVERGENCE_FACTOR,
) -> Tuple[np.ndarray, CgReport]:
    """
    Solve A x = b for symmetric positive (semi-)definite A given as a function.

    Args:
        apply_a: x -> A x
        b: right-hand side
        x0: initial guess (warm start), zeros if omitted
        tol: relative residual target ||b - A x|| / ||b||
        max_iter: iteration limit
        nullspace: A annihilates constants; b and the iterate are kept orthogonal to them
        reorth_every: how often the iterate is re-projected when a kernel is removed
        callback: called as ``callback(iteration, x, relative_residual)`` after each update
        kernel: orthonormal rows spanning the kernel of A; replaces the constant mode of ``nullspace``
        atol: absolute residual floor, so a right-hand side at roundoff level needs no iterations
        divergence_factor: stop once the residual exceeds this multiple of the best one seen

    Returns:
        (x, report). Hitting ``max_iter`` or diverging is reported, not raised;
        after divergence the best iterate is returned.

    Raises:
        SolverError: on breakdown (p^T A p <= 0 with a non-zero residual)
    """
    start = time.perf_counter()
    project = kernel_projector(kernel, nullspace)
    b = np.asarray(b, dtype=float)
    if project is not None:
        b = project(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float, copy=True)
    if x.shape != b.shape:
        raise ValueError(f"Initial guess shape {x.shape} does not match right-hand side {b.shape}")
    if project is not None:
        x = project(x)

    b_norm = np.sqrt(_dot(b, b))
    if b_norm == 0.0 or b_norm <= atol:
        report = CgReport(iterations=0, residual=0.0, converged=True, wall_time=time.perf_counter() - start)
        return np.zeros_like(b), report
    target = max(tol * b_norm, atol)

    r = b - apply_a(x)
    if project is not None:
        r = project(r)
    p = r.copy()
    rr = _dot(r, r)
    r_norm = np.sqrt(rr)
    best_norm, best_x = r_norm, x.copy()
    iteration = 0
    diverged = False

    while r_norm > target and iteration < max_iter:
        ap = apply_a(p)
        pap = _dot(p, ap)
        if pap <= 0.0:
            report = CgReport(iteration, float(r_norm / b_norm), False, True, time.perf_counter() - start)
            raise SolverError(f"CG breakdown at iteration {iteration}: p^T A p = {pap:.3e}", report)
        alpha = rr / pap
        x += alpha * p
        r -= alpha * ap
        iteration += 1
        if project is not None and iteration % reorth_every == 0:
            x = project(x)
            r = project(b - apply_a(x))
        rr_new = _dot(r, r)
        r_norm = np.sqrt(rr_new)
        if callback is not None:
            callback(iteration, x, float(r_norm / b_norm))
        if r_norm < best_norm:
            best_norm, best_x = r_norm, x.copy()
        elif r_norm > divergence_factor * best_norm:
            diverged = True
            break
        p = r + (rr_new / rr) * p
        rr = rr_new

    if diverged:
        x, r_norm = best_x, best_norm
    if project is not None:
        x = project(x)
    report = CgReport(
        iterations=iteration,
        residual=float(r_norm / b_norm),
        converged=bool(r_norm <= target),
        wall_time=time.perf_counter() - start,
    )
    if diverged:
        logger.warning("CG diverged after %d iterations, keeping the best iterate: %s", iteration, report.summary())
    elif not report.converged:
        logger.warning("CG stopped at max_iter=%d: %s", max_iter, report.summary())
    else:
        logger.debug("CG %s", report.summary())
    return x, report


def require_converged(report: CgReport, what: str, accept_unconverged: bool = False) -> None:
    """Raise SolverError unless the solve converged or the caller accepts partial results."""
    if report.converged or accept_unconverged:
        return
    raise SolverError(f"{what} solve did not converge: {report.summary()}", report)
