"""Semidefinite representation of the root fidelity.

``F(rho, sigma) >= t`` holds iff some ``K`` satisfies
``[[rho, K], [K^dagger, sigma]] >= 0`` and ``Re tr K >= t``.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from .expr import AffineExpr, Problem, SdpSolution, bmat


def fidelity_constraint_block(problem: Problem, rho_bar, rho_ref, threshold: float) -> AffineExpr:
    """Add the fidelity fragment for ``F(rho_bar, rho_ref) >= threshold`` to ``problem``.

    Parameters
    ----------
    problem : Problem
    rho_bar : AffineExpr or array_like
        Candidate operator; may be a variable expression or a constant.
    rho_ref : array_like or DensityOperator
        Fixed reference operator.
    threshold : float
        Must lie in ``[0, 1]``.

    Returns
    -------
    AffineExpr
        The auxiliary matrix variable ``K``.
    """
    if not 0 <= threshold <= 1:
        raise DomainError(f"threshold must lie in [0, 1], got {threshold}")
    ref = np.asarray(getattr(rho_ref, "matrix", rho_ref), dtype=complex)
    rho_bar = AffineExpr.wrap(getattr(rho_bar, "matrix", rho_bar))
    n = ref.shape[0]
    if rho_bar.shape != (n, n):
        raise DomainError("candidate and reference must have the same shape")
    k = problem.complex_matrix(n, n)
    problem.add_psd(bmat([[rho_bar, k], [k.H, ref]]))
    problem.add_nonneg(k.trace().real - threshold)
    return k


def _support(m: np.ndarray, cutoff: float):
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    keep = w > cutoff * max(1.0, float(np.max(np.abs(w))))
    return w[keep], v[:, keep]


def fidelity_sdp(rho, sigma, tol: float = 1e-9, cutoff: float = 1e-12) -> tuple[float, SdpSolution]:
    """Root fidelity as ``max Re tr K`` over the fidelity block.

    The block is restricted to the supports of both operators so the SDP
    has a strictly feasible point.
    """
    a = np.asarray(getattr(rho, "matrix", rho), dtype=complex)
    b = np.asarray(getattr(sigma, "matrix", sigma), dtype=complex)
    la, va = _support(a, cutoff)
    lb, vb = _support(b, cutoff)
    if la.size == 0 or lb.size == 0:
        return 0.0, None
    p = Problem()
    k = p.complex_matrix(la.size, lb.size)
    p.add_psd(bmat([[np.diag(la), k], [k.H, np.diag(lb)]]))
    # tr(Va K Vb^dagger) = tr(K Vb^dagger Va)
    p.maximize((k @ (vb.conj().T @ va)).trace())
    sol = p.solve(tol=tol)
    return sol.primal_value, sol
