"""Density operators, pure states and distance measures between them."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import mathcore as mc
from .errors import DomainError, LayoutError
from .mathcore import SystemLayout

log = logging.getLogger(__name__)

STATE_TOL = 1e-10
BALL_SLACK = 1e-9


def _default_layout(dim: int, label: str = "A") -> SystemLayout:
    return SystemLayout(((label, dim),))


def _as_layout(layout, dim: int) -> SystemLayout:
    if layout is None:
        return _default_layout(dim)
    if isinstance(layout, SystemLayout):
        return layout
    if isinstance(layout, dict):
        return SystemLayout(tuple(layout.items()))
    return SystemLayout(tuple(layout))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """A (sub)normalized PSD operator on a labeled tensor-product space.

    Construction validates Hermiticity, positivity and ``tr <= 1``; the
    matrix is symmetrized and stored read-only.
    """

    matrix: np.ndarray
    layout: SystemLayout

    def __init__(self, matrix, layout=None):
        m = mc.hermitian_part(matrix, STATE_TOL)
        layout = _as_layout(layout, m.shape[0])
        if m.shape != (layout.total, layout.total):
            raise LayoutError(f"matrix shape {m.shape} does not match layout {layout.factors}")
        mc.check_dim(layout.total, "state")
        w = np.linalg.eigvalsh(m)
        if w.size and w[0] < -STATE_TOL:
            raise DomainError(f"density operator has negative eigenvalue {w[0]:.3e}")
        tr = float(np.real(np.trace(m)))
        if tr > 1 + STATE_TOL:
            raise DomainError(f"trace {tr:.12g} exceeds 1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "layout", layout)

    @property
    def dim(self) -> int:
        return self.layout.total

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    @property
    def normalization(self) -> str:
        return "normalized" if abs(self.trace - 1) <= STATE_TOL else "subnormalized"

    @property
    def is_normalized(self) -> bool:
        return self.normalization == "normalized"

    def eigenvalues(self) -> np.ndarray:
        return np.clip(np.linalg.eigvalsh(self.matrix), 0.0, None)

    def rank(self, tol: float = 1e-12) -> int:
        return int(np.sum(self.eigenvalues() > tol))

    def marginal(self, labels: Iterable[str]) -> "DensityOperator":
        labels = list(labels)
        m = mc.partial_trace(self.matrix, self.layout, labels)
        return DensityOperator(m, self.layout.keep(labels))

    def permute(self, order: Sequence[str]) -> "DensityOperator":
        m = mc.permute_systems(self.matrix, self.layout, order)
        return DensityOperator(m, self.layout.select(order))

    def reduce(self, labels: Sequence[str]) -> "DensityOperator":
        """Marginal on ``labels`` with factors in the given order."""
        return self.marginal(labels).permute(list(labels))

    def relabel(self, mapping: dict) -> "DensityOperator":
        return DensityOperator(self.matrix, self.layout.relabel(mapping))

    def tensor(self, other: "DensityOperator") -> "DensityOperator":
        return DensityOperator(mc.tensor(self.matrix, other.matrix), self.layout + other.layout)

    def scaled(self, c: float) -> "DensityOperator":
        return DensityOperator(c * self.matrix, self.layout)

    def to_json(self) -> dict:
        return {"layout": self.layout.to_json(), "matrix": mc.matrix_to_json(self.matrix)}

    @classmethod
    def from_json(cls, data: dict) -> "DensityOperator":
        if set(data) != {"layout", "matrix"}:
            raise DomainError("density JSON needs exactly the keys layout, matrix")
        return cls(mc.matrix_from_json(data["matrix"]), SystemLayout.from_json(data["layout"]))


@dataclass(frozen=True, eq=False)
class PureState:
    """A unit vector on a labeled tensor-product space."""

    amplitudes: np.ndarray
    layout: SystemLayout

    def __init__(self, amplitudes, layout=None):
        v = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise DomainError("amplitudes contain non-finite values")
        layout = _as_layout(layout, v.size)
        if v.size != layout.total:
            raise LayoutError(f"vector length {v.size} does not match layout {layout.factors}")
        norm = np.linalg.norm(v)
        if abs(norm - 1) > 1e-12:
            raise DomainError(f"pure state has norm {norm:.15g}, expected 1")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "amplitudes", v)
        object.__setattr__(self, "layout", layout)

    @classmethod
    def normalized(cls, amplitudes, layout=None) -> "PureState":
        v = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(v / np.linalg.norm(v), layout)

    def to_density(self) -> DensityOperator:
        v = self.amplitudes
        return DensityOperator(np.outer(v, v.conj()), self.layout)

    def marginal(self, labels: Iterable[str]) -> DensityOperator:
        """Reduced state, computed without forming the full projector."""
        labels = list(labels)
        lay = self.layout
        keep = [lab for lab in lay.labels if lab in set(labels)]
        for lab in labels:
            lay.index(lab)
        rest = [lab for lab in lay.labels if lab not in set(labels)]
        v = mc.permute_vector(self.amplitudes, lay, keep + rest)
        mat = v.reshape(lay.dims_of(keep), lay.dims_of(rest))
        return DensityOperator(mat @ mat.conj().T, lay.select(keep))

    def permute(self, order: Sequence[str]) -> "PureState":
        return PureState(mc.permute_vector(self.amplitudes, self.layout, order),
                         self.layout.select(order))

    def relabel(self, mapping: dict) -> "PureState":
        return PureState(self.amplitudes, self.layout.relabel(mapping))

    def tensor(self, other: "PureState") -> "PureState":
        return PureState(np.kron(self.amplitudes, other.amplitudes), self.layout + other.layout)

    def to_json(self) -> dict:
        return {
            "layout": self.layout.to_json(),
            "vector": [[float(z.real), float(z.imag)] for z in self.amplitudes],
        }

    @classmethod
    def from_json(cls, data: dict) -> "PureState":
        if set(data) != {"layout", "vector"}:
            raise DomainError("pure-state JSON needs exactly the keys layout, vector")
        vec = np.array([complex(float(a), float(b)) for a, b in data["vector"]])
        if not np.all(np.isfinite(vec)):
            raise DomainError("state vector contains non-finite values")
        return cls(vec, SystemLayout.from_json(data["layout"]))


def as_density(state) -> DensityOperator:
    if isinstance(state, DensityOperator):
        return state
    if isinstance(state, PureState):
        return state.to_density()
    return DensityOperator(state)


def state_from_json(data: dict):
    """Dispatch on the presence of ``matrix`` or ``vector``."""
    if "vector" in data:
        return PureState.from_json(data)
    if "matrix" in data:
        return DensityOperator.from_json(data)
    raise DomainError("state JSON needs a 'matrix' or a 'vector' entry")


def _same_space(rho: DensityOperator, sigma: DensityOperator) -> None:
    if rho.layout.dims != sigma.layout.dims:
        raise DomainError(
            f"layout mismatch: {rho.layout.factors} vs {sigma.layout.factors}"
        )


def _fidelity_matrices(a: np.ndarray, b: np.ndarray) -> float:
    sa = mc.psd_sqrt(a)
    sb = mc.psd_sqrt(b)
    via_norm = mc.trace_norm(sa @ sb)
    inner = sa @ b @ sa
    inner = (inner + inner.conj().T) / 2
    w = np.linalg.eigvalsh(inner)
    # eigenvalue round-off of order 1e-16 would contribute 1e-8 after the square root
    w = np.where(w > 1e-14 * max(float(w.max(initial=0.0)), 1e-300), w, 0.0)
    via_sqrt = float(np.sum(np.sqrt(w)))
    if abs(via_norm - via_sqrt) > 1e-8:
        log.warning("fidelity formulas disagree: %.3e vs %.3e", via_norm, via_sqrt)
    return via_norm


def fidelity(rho, sigma) -> float:
    """Root fidelity ``||sqrt(rho) sqrt(sigma)||_1``, clipped to ``[0, 1]``.

    Subnormalized operators go through the same formula, without the extra
    ``sqrt((1 - tr rho)(1 - tr sigma))`` term of the generalized fidelity.
    """
    rho, sigma = as_density(rho), as_density(sigma)
    _same_space(rho, sigma)
    return float(min(1.0, max(0.0, _fidelity_matrices(rho.matrix, sigma.matrix))))


def generalized_fidelity(rho, sigma) -> float:
    rho, sigma = as_density(rho), as_density(sigma)
    _same_space(rho, sigma)
    base = _fidelity_matrices(rho.matrix, sigma.matrix)
    extra = math.sqrt(max(0.0, (1 - rho.trace) * (1 - sigma.trace)))
    return float(min(1.0, max(0.0, base + extra)))


def trace_distance(rho, sigma) -> float:
    """``||rho - sigma||_1`` (no factor 1/2)."""
    rho, sigma = as_density(rho), as_density(sigma)
    _same_space(rho, sigma)
    return mc.hermitian_trace_norm(rho.matrix - sigma.matrix)


def purified_distance_C(rho, sigma) -> float:
    f = fidelity(rho, sigma)
    return math.sqrt(max(0.0, 1 - f * f))


def in_eps_ball(candidate, center, eps: float, generalized: bool = False) -> bool:
    """Membership ``F^2(candidate, center) >= 1 - eps^2`` up to ``BALL_SLACK``."""
    if not 0 <= eps < 1:
        raise DomainError(f"eps must lie in [0, 1), got {eps}")
    center = as_density(center)
    if not center.is_normalized:
        raise DomainError("ball center must be normalized")
    f = generalized_fidelity(candidate, center) if generalized else fidelity(candidate, center)
    return f * f >= 1 - eps * eps - BALL_SLACK


def purify(rho, ref_label: str = "R", cutoff: float = 1e-13) -> PureState:
    """Spectral purification ``sum_i sqrt(l_i) |e_i>|i>_ref`` on ``layout + ref``.

    The reference dimension equals the rank of ``rho``.
    """
    rho = as_density(rho)
    if not rho.is_normalized:
        raise DomainError("purify expects a normalized state")
    if ref_label in rho.layout:
        raise LayoutError(f"reference label {ref_label!r} already used")
    dec = mc.eig_hermitian(rho.matrix)
    w, v = dec.eigenvalues[::-1], dec.eigenvectors[:, ::-1]
    keep = w > cutoff
    w, v = w[keep], v[:, keep]
    w = w / w.sum()
    psi = (v * np.sqrt(w)).reshape(-1)
    layout = rho.layout + SystemLayout(((ref_label, int(keep.sum())),))
    return PureState.normalized(psi, layout)


def max_entangled(d: int, labels: tuple[str, str] = ("A", "B")) -> PureState:
    """``(1/sqrt d) sum_i |i>|i>``."""
    if d < 1:
        raise DomainError("d must be at least 1")
    v = np.eye(d, dtype=complex).reshape(-1) / math.sqrt(d)
    return PureState(v, SystemLayout(((labels[0], d), (labels[1], d))))


def maximally_mixed(d: int, label: str = "A") -> DensityOperator:
    return DensityOperator(np.eye(d) / d, _default_layout(d, label))


def basis_state(d: int, i: int, label: str = "A") -> DensityOperator:
    m = np.zeros((d, d), dtype=complex)
    m[i, i] = 1
    return DensityOperator(m, _default_layout(d, label))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def haar_vector(dim: int, seed) -> np.ndarray:
    rng = _rng(seed)
    z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return z / np.linalg.norm(z)


def haar_random_pure(layout, seed) -> PureState:
    layout = _as_layout(layout, 0) if not isinstance(layout, int) else _default_layout(layout)
    return PureState(haar_vector(layout.total, seed), layout)


def random_density(layout, seed, rank: int | None = None) -> DensityOperator:
    """Partial trace of a Haar pure state on ``layout`` doubled (or ``rank`` ancilla)."""
    layout = _as_layout(layout, 0) if not isinstance(layout, int) else _default_layout(layout)
    d = layout.total
    k = d if rank is None else rank
    g = haar_vector(d * k, seed).reshape(d, k)
    m = g @ g.conj().T
    return DensityOperator(m / np.real(np.trace(m)), layout)


def haar_unitary(dim: int, seed) -> np.ndarray:
    """Haar unitary by QR of a complex Ginibre matrix with phase fix."""
    rng = _rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph
