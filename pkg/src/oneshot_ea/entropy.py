"""Entropic quantities in bits: von Neumann, mutual information, D_max and the
conditional min-/max-entropies with and without smoothing.

Smoothed entropies range over the ball of subnormalized states
``{rho_bar : F(rho_bar, rho)^2 >= 1 - eps^2}``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
import numpy as np

from . import mathcore as mc
from .errors import DomainError
from .mathcore import SystemLayout
from .sdp import Problem, bmat, kron
from .sdp.fidelity import fidelity_constraint_block
from .states import DensityOperator, as_density, purify

log = logging.getLogger(__name__)

TOL_UNSMOOTHED = 1e-8
TOL_SMOOTHED = 1e-7
SMOOTH_FLOOR = 1e-6
SUPPORT_CUTOFF = 1e-13
DUALITY_AGREEMENT = 1e-6


@dataclass
class EntropyResult:
    """Entropy value in bits with provenance.

    ``certificate`` holds ``(primal, dual, gap)`` of the underlying SDP, or
    ``None`` for closed forms.  ``validity`` is ``"ok"``,
    ``"smoothing_out_of_range"`` or ``"solver_failure"``.
    """

    value: float
    smoothing_eps: float = 0.0
    method: str = "closed_form"
    certificate: tuple | None = None
    validity: str = "ok"
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.validity == "ok"

    def to_json(self) -> dict:
        out = {
            "value": self.value,
            "smoothing_eps": self.smoothing_eps,
            "method": self.method,
            "validity": self.validity,
        }
        if self.certificate is not None:
            out["certificate"] = {
                "primal": self.certificate[0],
                "dual": self.certificate[1],
                "gap": self.certificate[2],
            }
        for key, val in self.details.items():
            if isinstance(val, (int, float, str, bool)) or val is None:
                out[key] = val
        return out


# --------------------------------------------------------------------------
# splits


def parse_split(split) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Accept ``"A;B"``, ``"A1,A2;B"``, ``"A;"`` or a pair of label sequences."""
    if isinstance(split, str):
        if split.count(";") != 1:
            raise DomainError(f"split {split!r} must contain exactly one ';'")
        left, right = split.split(";")
        a = tuple(s.strip() for s in left.split(",") if s.strip())
        b = tuple(s.strip() for s in right.split(",") if s.strip())
    else:
        a, b = split
        a = (a,) if isinstance(a, str) else tuple(a)
        b = (b,) if isinstance(b, str) else tuple(b)
    if not a:
        raise DomainError("the conditioned system A needs at least one label")
    if set(a) & set(b):
        raise DomainError(f"split sides overlap: {a} and {b}")
    return a, b


def _bipartite(rho, split) -> tuple[np.ndarray, int, int]:
    """Matrix of ``rho_AB`` with the A factors first, plus ``(d_A, d_B)``."""
    rho = as_density(rho)
    a, b = parse_split(split)
    for lab in a + b:
        rho.layout.index(lab)
    red = rho.reduce(list(a) + list(b))
    da = red.layout.dims_of(a)
    return red.matrix, da, red.dim // da


def _spectral_support(m: np.ndarray, cutoff: float = SUPPORT_CUTOFF):
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    scale = max(float(np.max(np.abs(w))), 1e-300) if w.size else 1.0
    keep = w > cutoff * scale
    return w[keep], v[:, keep]


# --------------------------------------------------------------------------
# closed forms


def _entropy_of_spectrum(w: np.ndarray) -> float:
    w = w[w > 0]
    return float(-np.sum(w * np.log2(w))) + 0.0


def von_neumann(rho) -> float:
    """``-tr rho log2 rho`` with ``0 log 0 = 0``."""
    rho = as_density(rho)
    return _entropy_of_spectrum(rho.eigenvalues())


def conditional_entropy(rho, split) -> float:
    """``H(A|B) = H(AB) - H(B)``."""
    m, da, db = _bipartite(rho, split)
    full = _entropy_of_spectrum(np.clip(np.linalg.eigvalsh(m), 0, None))
    mb = mc.partial_trace(m, SystemLayout((("A", da), ("B", db))), ["B"])
    return full - _entropy_of_spectrum(np.clip(np.linalg.eigvalsh(mb), 0, None))


def mutual_information(rho, split) -> float:
    """``I(A:B) = H(A) + H(B) - H(AB)``."""
    m, da, db = _bipartite(rho, split)
    lay = SystemLayout((("A", da), ("B", db)))
    ha = von_neumann(DensityOperator(mc.partial_trace(m, lay, ["A"])))
    hb = von_neumann(DensityOperator(mc.partial_trace(m, lay, ["B"])))
    hab = _entropy_of_spectrum(np.clip(np.linalg.eigvalsh(m), 0, None))
    return ha + hb - hab


def binary_entropy(x: float) -> float:
    if not 0 <= x <= 1:
        raise DomainError(f"binary entropy needs x in [0, 1], got {x}")
    if x in (0, 1):
        return 0.0
    return float(-x * math.log2(x) - (1 - x) * math.log2(1 - x))


def _sqrt_spectrum_sum(w: np.ndarray) -> float:
    # round-off eigenvalues of order 1e-17 would add ~1e-9 after the square root
    w = np.clip(w, 0, None)
    w = np.where(w > 1e-14 * max(float(w.max(initial=0.0)), 1e-300), w, 0.0)
    return float(np.sum(np.sqrt(w)))


def h_max_uncond(rho) -> float:
    """``2 log2 tr sqrt(rho)``."""
    rho = as_density(rho)
    return 2 * mc.log2(_sqrt_spectrum_sum(rho.eigenvalues()))


def h_min_uncond(rho) -> float:
    """``-log2 lambda_max(rho)``."""
    rho = as_density(rho)
    return -mc.log2(float(np.max(rho.eigenvalues())))


# --------------------------------------------------------------------------
# D_max


def d_max(rho, sigma, sdp_check: bool = True, tol: float = TOL_UNSMOOTHED) -> EntropyResult:
    """Max-relative entropy ``log2 min{lambda : rho <= lambda sigma}``.

    A support violation yields ``value = inf`` and
    ``validity = "support_violation"``.
    """
    r = as_density(rho).matrix
    s = np.asarray(getattr(sigma, "matrix", sigma), dtype=complex)
    if r.shape != s.shape:
        raise DomainError("rho and sigma must have the same shape")
    w, v = _spectral_support(s, 1e-12)
    proj_out = np.eye(s.shape[0]) - v @ v.conj().T
    leak = np.linalg.norm(proj_out @ r @ proj_out)
    if leak > 1e-10 * max(1.0, np.linalg.norm(r)):
        return EntropyResult(math.inf, method="closed_form", validity="support_violation")
    inv_sqrt = v / np.sqrt(w)
    mid = inv_sqrt.conj().T @ r @ inv_sqrt
    lam = float(np.max(np.linalg.eigvalsh((mid + mid.conj().T) / 2)))
    value = mc.log2(max(lam, 0.0))
    details = {"lambda": lam}
    cert = None
    if sdp_check and lam > 0:
        p = Problem()
        t = p.scalar()
        # restricted to the support of sigma
        p.add_psd(kron(np.diag(w), t) - v.conj().T @ r @ v)
        p.minimize(t)
        sol = p.solve(tol=tol)
        cert = (sol.primal_value, sol.dual_value, sol.gap)
        details["sdp_lambda"] = sol.primal_value
        if abs(sol.primal_value - lam) > 1e-7 * max(1.0, lam):
            log.warning("D_max closed form %.12g and SDP %.12g disagree", lam, sol.primal_value)
    return EntropyResult(value, method="closed_form", certificate=cert, details=details)


# --------------------------------------------------------------------------
# unsmoothed conditional entropies


def _certificate(sol):
    return (sol.primal_value, sol.dual_value, sol.gap)


def h_min_cond(rho, split, tol: float = TOL_UNSMOOTHED) -> EntropyResult:
    """``-log2 min{tr X_B : I_A (x) X_B >= rho_AB}``.

    Subnormalized inputs are allowed.  A trivial B side is evaluated in
    closed form.
    """
    m, da, db = _bipartite(rho, split)
    if db == 1:
        lam = float(np.max(np.linalg.eigvalsh(m)))
        return EntropyResult(-mc.log2(lam), method="closed_form")
    p = Problem()
    sigma = p.hermitian(db)
    p.add_psd(kron(np.eye(da), sigma) - m)
    p.minimize(sigma.trace())
    sol = p.solve(tol=tol)
    return EntropyResult(
        -mc.log2(sol.primal_value) if sol.primal_value > 0 else math.inf,
        method="sdp_primal_dual",
        certificate=_certificate(sol),
        validity="ok" if sol.ok else "solver_failure",
        details={"status": sol.status, "iterations": sol.iterations},
    )


def _h_max_fidelity_path(m: np.ndarray, da: int, db: int, tol: float):
    """``max_sigma 2 log2 F(rho_AB, I_A (x) sigma_B)`` by one SDP."""
    lam, vecs = _spectral_support(m)
    r = lam.size
    n = da * db
    p = Problem()
    sigma = p.hermitian(db)
    k = p.complex_matrix(r, n)
    p.add_psd(bmat([[np.eye(r), k], [k.H, kron(np.eye(da), sigma)]]))
    p.add_nonneg(1 - sigma.trace())
    # Re tr(V Lambda^{1/2} K) = Re tr(K V Lambda^{1/2})
    p.maximize((k @ (vecs * np.sqrt(lam))).trace())
    sol = p.solve(tol=tol)
    return sol


def h_max_cond(rho, split, tol: float = TOL_UNSMOOTHED, cross_check: bool = True) -> EntropyResult:
    """Unsmoothed conditional max-entropy, by a fidelity SDP and by duality.

    The fidelity route maximizes ``F(rho_AB, I_A (x) sigma_B)``; the duality
    route returns ``-H_min(A|C)`` on the spectral purification.  With
    ``cross_check`` both are computed and must agree within 1e-6.
    """
    rho = as_density(rho)
    m, da, db = _bipartite(rho, split)
    if db == 1:
        return EntropyResult(2 * mc.log2(_sqrt_spectrum_sum(np.linalg.eigvalsh(m))),
                             method="closed_form")
    sol = _h_max_fidelity_path(m, da, db, tol)
    fid_value = 2 * mc.log2(sol.primal_value) if sol.primal_value > 0 else -math.inf
    details = {"fidelity_path": fid_value, "status": sol.status}
    validity = "ok" if sol.ok else "solver_failure"
    if cross_check:
        dual = -_h_min_of_purification(m, da, db, 0.0, tol).value
        details["duality_path"] = dual
        diff = abs(dual - fid_value)
        details["path_difference"] = diff
        if diff > DUALITY_AGREEMENT:
            log.warning("H_max paths disagree by %.3e", diff)
            validity = "solver_failure"
    return EntropyResult(fid_value, method="sdp_primal_dual", certificate=_certificate(sol),
                         validity=validity, details=details)


# --------------------------------------------------------------------------
# smoothing


def _check_eps(eps: float) -> bool:
    return isinstance(eps, (int, float)) and math.isfinite(eps) and 0 <= eps < 1


def _h_min_smooth_reduced(m: np.ndarray, da: int, db: int, eps: float, tol: float):
    """Smoothed min-entropy SDP with the candidate written as ``K K^dagger``.

    Writing ``rho = V Lambda V^dagger`` on its support, every candidate in the
    ball that matters is ``rho_bar = K K^dagger`` for an ``n x r`` matrix ``K``
    with ``Re tr(K Lambda^{1/2} V^dagger) >= sqrt(1 - eps^2)`` and
    ``||K||_F^2 <= 1``.  ``rho_bar <= I (x) sigma`` becomes a Schur complement.
    """
    lam, vecs = _spectral_support(m)
    r = lam.size
    n = da * db
    p = Problem()
    sigma = p.hermitian(db)
    k = p.complex_matrix(n, r)
    z = p.hermitian(r)
    p.add_psd(bmat([[kron(np.eye(da), sigma), k], [k.H, np.eye(r)]]))
    p.add_psd(bmat([[z, k.H], [k, np.eye(n)]]))
    p.add_nonneg(1 - z.trace())
    overlap = (k @ (np.sqrt(lam)[:, None] * vecs.conj().T)).trace()
    p.add_nonneg(overlap - math.sqrt(1 - eps * eps))
    p.minimize(sigma.trace())
    sol = p.solve(tol=tol)
    kv = sol.value(k)
    return sol, kv @ kv.conj().T


def _h_min_smooth_direct(m: np.ndarray, da: int, db: int, eps: float, tol: float):
    """Literal formulation with an explicit candidate variable and fidelity block."""
    n = da * db
    p = Problem()
    sigma = p.hermitian(db)
    rho_bar = p.hermitian(n)
    p.add_psd(rho_bar)
    p.add_psd(kron(np.eye(da), sigma) - rho_bar)
    p.add_nonneg(1 - rho_bar.trace())
    fidelity_constraint_block(p, rho_bar, m, math.sqrt(1 - eps * eps))
    p.minimize(sigma.trace())
    sol = p.solve(tol=tol)
    return sol, sol.value(rho_bar)


def _smooth_result(sol, eps, candidate, formulation) -> EntropyResult:
    value = -mc.log2(sol.primal_value) if sol.primal_value > 0 else math.inf
    return EntropyResult(
        value,
        smoothing_eps=eps,
        method="sdp_primal_dual",
        certificate=_certificate(sol),
        validity="ok" if sol.ok else "solver_failure",
        details={
            "status": sol.status,
            "iterations": sol.iterations,
            "formulation": formulation,
            "candidate_trace": float(np.real(np.trace(candidate))),
            "candidate": candidate,
        },
    )


def h_min_smooth(rho, split, eps: float, tol: float = TOL_SMOOTHED,
                 formulation: str = "reduced") -> EntropyResult:
    """Smoothed conditional min-entropy ``max over the eps-ball of H_min(A|B)``.

    ``eps = 0`` is the unsmoothed value.  For ``0 < eps < SMOOTH_FLOOR`` the
    unsmoothed value is returned as well (flagged in ``details``); it is a
    valid lower bound and differs from the smoothed one by far less than the
    solver tolerance.  ``formulation="direct"`` solves the literal program
    with an explicit candidate variable (small dimensions only).
    """
    if not _check_eps(eps):
        return EntropyResult(math.nan, smoothing_eps=eps, method="sdp_primal_dual",
                             validity="smoothing_out_of_range")
    rho = as_density(rho)
    if not rho.is_normalized:
        raise DomainError("the smoothing center must be a normalized state")
    m, da, db = _bipartite(rho, split)
    if eps < SMOOTH_FLOOR:
        res = _h_min_unsmoothed_matrix(m, da, db)
        res.smoothing_eps = eps
        res.details["below_smoothing_floor"] = eps > 0
        return res
    if formulation == "reduced":
        sol, cand = _h_min_smooth_reduced(m, da, db, eps, tol)
    elif formulation == "direct":
        sol, cand = _h_min_smooth_direct(m, da, db, eps, tol)
    else:
        raise DomainError(f"unknown formulation {formulation!r}")
    return _smooth_result(sol, eps, cand, formulation)


def _h_min_unsmoothed_matrix(m: np.ndarray, da: int, db: int, tol: float = TOL_UNSMOOTHED):
    lay = SystemLayout((("A", da), ("B", db)))
    return h_min_cond(DensityOperator(m, lay), (("A",), ("B",)), tol)


def _h_min_of_purification(m: np.ndarray, da: int, db: int, eps: float, tol: float):
    """``H_min^eps(A|C)`` where ``C`` purifies the bipartite operator ``m``."""
    lay = SystemLayout((("A", da), ("B", db)))
    psi = purify(DensityOperator(m, lay), ref_label="C")
    rho_ac = psi.marginal(["A", "C"])
    if eps == 0:
        return h_min_cond(rho_ac, (("A",), ("C",)), tol)
    return h_min_smooth(rho_ac, (("A",), ("C",)), eps, tol)


def h_max_smooth(rho, split, eps: float, tol: float = TOL_SMOOTHED) -> EntropyResult:
    """Smoothed conditional max-entropy via ``-H_min^eps(A|C)`` on a purification."""
    if not _check_eps(eps):
        return EntropyResult(math.nan, smoothing_eps=eps, method="duality",
                             validity="smoothing_out_of_range")
    rho = as_density(rho)
    if not rho.is_normalized:
        raise DomainError("the smoothing center must be a normalized state")
    m, da, db = _bipartite(rho, split)
    inner = _h_min_of_purification(m, da, db, eps,
                                   TOL_UNSMOOTHED if eps == 0 else tol)
    details = dict(inner.details)
    details.pop("candidate", None)
    return EntropyResult(-inner.value, smoothing_eps=eps, method="duality",
                         certificate=inner.certificate, validity=inner.validity,
                         details=details)
