import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from errors import NonFinite
from systems.event_system import EventSystem, SimEvent

logger = logging.getLogger(__name__)

BREAKDOWN_TOL = 1e-14


@dataclass
class StepReport:
    dim_used: int
    error_estimate: float
    happy_breakdown: bool


class ArnoldiWorkspace:
    """Krylov basis and Hessenberg storage, reused across steps of one thread"""

    def __init__(self, m_max: int = 15, tol: float = 1e-10):
        if m_max < 1:
            raise ValueError("m_max must be at least 1")
        self.m_max = m_max
        self.tol = tol
        self.basis: Optional[np.ndarray] = None
        self.hessenberg = np.zeros((m_max + 1, m_max), dtype=complex)

    def reset(self, n: int) -> None:
        if self.basis is None or self.basis.shape[1] != n:
            self.basis = np.zeros((self.m_max + 1, n), dtype=complex)
        else:
            self.basis[:] = 0.0
        self.hessenberg[:] = 0.0


def exp_hessenberg(h: np.ndarray, dt: complex, method: str = "pade") -> np.ndarray:
    """First column of exp(-i*h*dt)."""
    m = h.shape[0]
    e1 = np.zeros(m, dtype=complex)
    e1[0] = 1.0
    if m == 1:
        return np.exp(-1j * dt * h[0, 0]) * e1
    if method == "pade":
        result = expm(-1j * dt * h)[:, 0]
        if np.all(np.isfinite(result)):
            return result
        logger.debug("Pade exponential not finite, falling back to eigendecomposition")
    elif method != "eig":
        raise ValueError(f"Unknown method '{method}'")
    eigvals, eigvecs = np.linalg.eig(h)
    coeffs = np.linalg.solve(eigvecs, e1)
    return eigvecs @ (np.exp(-1j * dt * eigvals) * coeffs)


def arnoldi_exp(
    apply_a: Callable[[np.ndarray], np.ndarray],
    v: np.ndarray,
    dt: complex,
    m_max: int = 15,
    tol: float = 1e-10,
    workspace: Optional[ArnoldiWorkspace] = None,
):
    """Approximate exp(-i*A*dt) v in a Krylov subspace grown from v.

    Imaginary-time steps pass dt = -1j*tau. The error estimate after m vectors
    is |beta * dt * h[m, m-1] * [exp(-i*H_m*dt)]_{m-1,0}|, an absolute
    per-step bound. Returns (v_next, StepReport).
    """
    v = np.asarray(v, dtype=complex)
    beta = float(np.linalg.norm(v))
    if beta == 0.0:
        return np.zeros_like(v), StepReport(dim_used=0, error_estimate=0.0, happy_breakdown=True)

    ws = workspace if workspace is not None and workspace.m_max >= m_max else ArnoldiWorkspace(m_max, tol)
    ws.reset(v.size)
    basis, hess = ws.basis, ws.hessenberg
    basis[0] = v / beta

    error = np.inf
    breakdown = False
    coeffs = np.ones(1, dtype=complex)
    m = 0
    for j in range(m_max):
        w = np.asarray(apply_a(basis[j]), dtype=complex)
        if not np.all(np.isfinite(w)):
            raise NonFinite(f"Krylov matvec produced non-finite values at dimension {j + 1}")

        # Modified Gram-Schmidt, two sweeps
        for _ in range(2):
            for i in range(j + 1):
                overlap = np.vdot(basis[i], w)
                hess[i, j] += overlap
                w = w - overlap * basis[i]

        m = j + 1
        sub = float(np.linalg.norm(w))
        hess[j + 1, j] = sub
        coeffs = exp_hessenberg(hess[:m, :m], dt)
        if sub < BREAKDOWN_TOL:
            breakdown = True
            error = 0.0
            break
        error = abs(beta * dt * sub * coeffs[m - 1])
        basis[j + 1] = w / sub
        if error < tol:
            break

    if not breakdown and error >= tol:
        logger.warning(
            "Krylov subspace exhausted at m=%d with error estimate %.3e (tol %.1e)",
            m,
            error,
            tol,
        )

    v_next = beta * (coeffs @ basis[:m])
    report = StepReport(dim_used=m, error_estimate=float(error), happy_breakdown=breakdown)
    EventSystem().emit(SimEvent.KRYLOV_STEP, report=report)
    return v_next, report
