"""Dense complex linear algebra on labeled tensor-product spaces.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  Tensor factors
follow one ordering convention everywhere: the leftmost label of a
:class:`SystemLayout` is the most significant index, exactly as produced by
``numpy.kron``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, LayoutError, SizeError

DEFAULT_MAX_DIM = 4096
CLIP_TOL = 1e-10
HERMITIAN_TOL = 1e-10


def max_dim() -> int:
    """Global cap on matrix dimensions; ``ONESHOT_MAX_DIM`` overrides it."""
    raw = os.environ.get("ONESHOT_MAX_DIM")
    if raw is None:
        return DEFAULT_MAX_DIM
    try:
        value = int(raw)
    except ValueError as exc:
        raise DomainError(f"ONESHOT_MAX_DIM must be an integer, got {raw!r}") from exc
    if value < 1:
        raise DomainError("ONESHOT_MAX_DIM must be positive")
    return value


def check_dim(dim: int, what: str = "matrix") -> None:
    cap = max_dim()
    if dim > cap:
        raise SizeError(f"{what} dimension {dim} exceeds the cap {cap}")


@dataclass(frozen=True)
class SystemLayout:
    """Ordered tensor factors ``((label, dim), ...)``."""

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(lab), int(d)) for lab, d in self.factors)
        labels = [lab for lab, _ in factors]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate labels in layout: {labels}")
        for lab, d in factors:
            if d < 1:
                raise LayoutError(f"factor {lab!r} has non-positive dimension {d}")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def of(cls, *pairs, **named) -> "SystemLayout":
        """``SystemLayout.of(("A", 2), ("B", 3))`` or ``SystemLayout.of(A=2, B=3)``."""
        return cls(tuple(pairs) + tuple(named.items()))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def total(self) -> int:
        return math.prod(self.dims)

    def __len__(self):
        return len(self.factors)

    def __contains__(self, label):
        return label in self.labels

    def dim(self, label: str) -> int:
        return self.dims[self.index(label)]

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown label {label!r}; layout has {self.labels}") from None

    def dims_of(self, labels: Iterable[str]) -> int:
        return math.prod(self.dim(lab) for lab in labels)

    def select(self, labels: Iterable[str]) -> "SystemLayout":
        """Sub-layout in the order given by ``labels``."""
        return SystemLayout(tuple((lab, self.dim(lab)) for lab in labels))

    def keep(self, labels: Iterable[str]) -> "SystemLayout":
        """Sub-layout restricted to ``labels`` but in this layout's order."""
        wanted = set(labels)
        for lab in wanted:
            self.index(lab)
        return SystemLayout(tuple(f for f in self.factors if f[0] in wanted))

    def __add__(self, other: "SystemLayout") -> "SystemLayout":
        return SystemLayout(self.factors + other.factors)

    def relabel(self, mapping: dict) -> "SystemLayout":
        return SystemLayout(tuple((mapping.get(lab, lab), d) for lab, d in self.factors))

    def to_json(self) -> list:
        return [{"label": lab, "dim": d} for lab, d in self.factors]

    @classmethod
    def from_json(cls, data: Sequence[dict]) -> "SystemLayout":
        if not isinstance(data, list):
            raise LayoutError("layout must be a list of {label, dim} objects")
        pairs = []
        for item in data:
            if set(item) != {"label", "dim"}:
                raise LayoutError(f"layout entries need exactly 'label' and 'dim': {item}")
            pairs.append((item["label"], item["dim"]))
        return cls(tuple(pairs))


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise DomainError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    return a


def dagger(m: np.ndarray) -> np.ndarray:
    return np.asarray(m).conj().T


def tensor(a, b, *more) -> np.ndarray:
    """Kronecker product, leftmost factor most significant."""
    out = np.kron(as_matrix(a), as_matrix(b))
    check_dim(max(out.shape), "tensor product")
    for c in more:
        out = np.kron(out, as_matrix(c))
        check_dim(max(out.shape), "tensor product")
    return out


def _check_square(m: np.ndarray, layout: SystemLayout) -> None:
    if m.shape != (layout.total, layout.total):
        raise LayoutError(
            f"matrix of shape {m.shape} does not match layout {layout.factors} "
            f"(total dimension {layout.total})"
        )


def partial_trace(m, layout: SystemLayout, keep: Iterable[str]) -> np.ndarray:
    """Trace out every factor not in ``keep``.

    Kept factors stay in the order they have in ``layout`` (use
    :func:`permute_systems` afterwards for a different order).
    """
    m = as_matrix(m)
    _check_square(m, layout)
    keep = set(keep)
    for lab in keep:
        layout.index(lab)
    dims = layout.dims
    k = len(dims)
    kept = [i for i, lab in enumerate(layout.labels) if lab in keep]
    traced = [i for i in range(k) if i not in kept]
    if not traced:
        return m.copy()
    t = m.reshape(dims + dims)
    perm = kept + traced + [i + k for i in kept] + [i + k for i in traced]
    dk = math.prod(dims[i] for i in kept)
    dt = math.prod(dims[i] for i in traced)
    t = t.transpose(perm).reshape(dk, dt, dk, dt)
    return np.einsum("itjt->ij", t)


def permute_systems(m, layout: SystemLayout, order: Sequence[str]) -> np.ndarray:
    """Reorder tensor factors of a square operator to ``order``."""
    m = as_matrix(m)
    _check_square(m, layout)
    if sorted(order) != sorted(layout.labels):
        raise LayoutError(f"order {list(order)} is not a permutation of {layout.labels}")
    dims = layout.dims
    k = len(dims)
    idx = [layout.index(lab) for lab in order]
    t = m.reshape(dims + dims).transpose(idx + [i + k for i in idx])
    n = layout.total
    return t.reshape(n, n)


def permute_vector(v, layout: SystemLayout, order: Sequence[str]) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    if v.size != layout.total:
        raise LayoutError(f"vector of length {v.size} does not match layout total {layout.total}")
    if sorted(order) != sorted(layout.labels):
        raise LayoutError(f"order {list(order)} is not a permutation of {layout.labels}")
    idx = [layout.index(lab) for lab in order]
    return v.reshape(layout.dims).transpose(idx).reshape(-1)


def hermitian_part(h, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Return ``(h + h†)/2`` after checking the anti-Hermitian part is small."""
    h = as_matrix(h)
    if h.shape[0] != h.shape[1]:
        raise DomainError(f"expected a square matrix, got {h.shape}")
    norm = np.linalg.norm(h)
    if np.linalg.norm(h - h.conj().T) > tol * max(norm, 1.0):
        raise DomainError("matrix is not Hermitian within tolerance")
    return (h + h.conj().T) / 2


def eig_hermitian(h) -> EigenDecomposition:
    """Ascending eigenvalues and unitary eigenvectors of a Hermitian matrix."""
    hs = hermitian_part(h)
    w, v = np.linalg.eigh(hs)
    return EigenDecomposition(w, v)


def psd_sqrt(p, clip: float = CLIP_TOL) -> np.ndarray:
    """Principal square root of a PSD matrix.

    Eigenvalues in ``[-clip, 0)`` are treated as zero, anything more negative
    raises :class:`DomainError`.
    """
    dec = eig_hermitian(p)
    w = dec.eigenvalues
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    if w.size and w[0] < -clip * scale:
        raise DomainError(f"matrix has negative eigenvalue {w[0]:.3e}")
    w = np.sqrt(np.clip(w, 0.0, None))
    v = dec.eigenvectors
    return (v * w) @ v.conj().T


def psd_power(p, power: float, cutoff: float = 1e-12) -> np.ndarray:
    """``p**power`` on the support of ``p`` (pseudo-inverse style for power < 0)."""
    dec = eig_hermitian(p)
    w = dec.eigenvalues
    v = dec.eigenvectors
    keep = w > cutoff
    out = np.zeros_like(w)
    out[keep] = w[keep] ** power
    return (v * out) @ v.conj().T


def trace_norm(m) -> float:
    """Sum of singular values."""
    m = as_matrix(m)
    if m.size == 0:
        return 0.0
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def hermitian_trace_norm(h) -> float:
    """Trace norm of a Hermitian matrix via ``sum |eigenvalue|``."""
    return float(np.sum(np.abs(eig_hermitian(h).eigenvalues)))


def matrix_to_json(m) -> dict:
    m = as_matrix(m)
    rows, cols = m.shape
    flat = m.reshape(-1)
    return {
        "rows": rows,
        "cols": cols,
        "entries": [[float(z.real), float(z.imag)] for z in flat],
    }


def matrix_from_json(data: dict) -> np.ndarray:
    if not isinstance(data, dict) or set(data) != {"rows", "cols", "entries"}:
        raise DomainError("matrix JSON needs exactly the keys rows, cols, entries")
    rows, cols, entries = data["rows"], data["cols"], data["entries"]
    if not (isinstance(rows, int) and isinstance(cols, int)) or rows < 1 or cols < 1:
        raise DomainError("rows and cols must be positive integers")
    if len(entries) != rows * cols:
        raise DomainError(f"expected {rows * cols} entries, got {len(entries)}")
    try:
        arr = np.array([complex(float(re), float(im)) for re, im in entries])
    except (TypeError, ValueError) as exc:
        raise DomainError("entries must be [re, im] pairs of numbers") from exc
    if not np.all(np.isfinite(arr)):
        raise DomainError("matrix JSON contains non-finite values")
    return arr.reshape(rows, cols)


def log2(x: float) -> float:
    if x == 0:
        return -math.inf
    return math.log2(x)
