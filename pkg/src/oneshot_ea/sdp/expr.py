"""Affine matrix expressions in real decision variables, and a problem builder.

An :class:`AffineExpr` of shape ``(r, c)`` is ``const + mat(lin @ y)`` where
``y`` is the problem's real variable vector and ``mat`` undoes row-major
vectorization.  Complex Hermitian variables are parametrized by ``n^2``
reals, so Hermiticity never has to be imposed as a constraint.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..errors import DomainError, SolverError
from .solver import Block, SolverResult, solve_standard


def _pad(lin: sp.csr_matrix, nv: int) -> sp.csr_matrix:
    if lin.shape[1] == nv:
        return lin
    return sp.csr_matrix((lin.data, lin.indices, lin.indptr), shape=(lin.shape[0], nv))


def _placement(src_shape, dst_shape, offset) -> sp.csr_matrix:
    """Sparse 0/1 matrix moving a row-major block into a larger matrix."""
    r, c = src_shape
    rt, ct = dst_shape
    p, q = np.divmod(np.arange(r * c), c)
    rows = (offset[0] + p) * ct + offset[1] + q
    return sp.csr_matrix((np.ones(r * c), (rows, np.arange(r * c))), shape=(rt * ct, r * c))


class AffineExpr:
    """``const + mat(lin @ y)`` with ``const`` complex ``(r, c)`` and ``lin`` sparse."""

    __array_priority__ = 100

    def __init__(self, const, lin=None, nv: int = 0):
        const = np.asarray(const, dtype=complex)
        if const.ndim == 0:
            const = const.reshape(1, 1)
        if const.ndim != 2:
            raise DomainError("affine expressions are two-dimensional")
        self.const = const
        if lin is None:
            lin = sp.csr_matrix((const.size, nv), dtype=complex)
        self.lin = sp.csr_matrix(lin, dtype=complex)
        if self.lin.shape[0] != const.size:
            raise DomainError("linear part does not match the constant's size")

    @property
    def shape(self):
        return self.const.shape

    @property
    def nv(self) -> int:
        return self.lin.shape[1]

    @staticmethod
    def wrap(x, shape=None) -> "AffineExpr":
        if isinstance(x, AffineExpr):
            return x
        if isinstance(x, numbers.Number) and shape is not None:
            return AffineExpr(np.full(shape, x, dtype=complex))
        return AffineExpr(np.asarray(x, dtype=complex))

    def _binary(self, other, sign):
        other = AffineExpr.wrap(other, self.shape)
        if other.shape != self.shape:
            raise DomainError(f"shape mismatch {self.shape} vs {other.shape}")
        nv = max(self.nv, other.nv)
        return AffineExpr(self.const + sign * other.const,
                          _pad(self.lin, nv) + sign * _pad(other.lin, nv))

    def __add__(self, other):
        return self._binary(other, 1)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, -1)

    def __rsub__(self, other):
        return (-self)._binary(other, 1)

    def __neg__(self):
        return AffineExpr(-self.const, -self.lin)

    def __mul__(self, k):
        if not isinstance(k, numbers.Number):
            raise DomainError("only scalar multiplication is supported; use @ for products")
        return AffineExpr(k * self.const, k * self.lin)

    __rmul__ = __mul__

    def __matmul__(self, right):
        right = np.asarray(right, dtype=complex)
        r, c = self.shape
        if right.shape[0] != c:
            raise DomainError("inner dimensions do not match")
        op = sp.kron(sp.identity(r, format="csr"), sp.csr_matrix(right.T), format="csr")
        return AffineExpr(self.const @ right, op @ self.lin)

    def __rmatmul__(self, left):
        left = np.asarray(left, dtype=complex)
        r, c = self.shape
        if left.shape[1] != r:
            raise DomainError("inner dimensions do not match")
        op = sp.kron(sp.csr_matrix(left), sp.identity(c, format="csr"), format="csr")
        return AffineExpr(left @ self.const, op @ self.lin)

    @property
    def H(self) -> "AffineExpr":
        r, c = self.shape
        # row k of the result is entry (i, j) of the transpose, i.e. X[j, i]
        src = np.arange(r * c).reshape(r, c).T.reshape(-1)
        return AffineExpr(self.const.conj().T, self.lin[src].conj())

    @property
    def real(self) -> "AffineExpr":
        return AffineExpr(self.const.real, self.lin.real)

    @property
    def imag(self) -> "AffineExpr":
        return AffineExpr(self.const.imag, self.lin.imag)

    def trace(self) -> "AffineExpr":
        r, c = self.shape
        if r != c:
            raise DomainError("trace of a non-square expression")
        rows = np.arange(r) * (r + 1)
        sel = sp.csr_matrix((np.ones(r), (np.zeros(r, dtype=int), rows)), shape=(1, r * r))
        return AffineExpr(np.trace(self.const), sel @ self.lin)

    def value(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.const + (_pad(self.lin, y.size) @ y).reshape(self.shape)

    def scalar_value(self, y) -> float:
        return float(np.real(self.value(y)[0, 0]))


def kron(a, b) -> AffineExpr:
    """Kronecker product where exactly one side may be an expression."""
    if isinstance(a, AffineExpr) and isinstance(b, AffineExpr):
        raise DomainError("kron of two expressions is not affine")
    if not isinstance(a, AffineExpr) and not isinstance(b, AffineExpr):
        return AffineExpr(np.kron(a, b))
    if isinstance(b, AffineExpr):
        m = np.asarray(a, dtype=complex)
        x = b
        am, bm = m.shape
        r, c = x.shape
        ii, jj = np.nonzero(m)
        p, q = np.divmod(np.arange(r * c), c)
        rows = ((ii[:, None] * r + p[None, :]) * (bm * c) + jj[:, None] * c + q[None, :]).ravel()
        cols = np.tile(np.arange(r * c), ii.size)
        vals = np.repeat(m[ii, jj], r * c)
        sel = sp.csr_matrix((vals, (rows, cols)), shape=(am * r * bm * c, r * c))
        return AffineExpr(np.kron(m, x.const), sel @ x.lin)
    m = np.asarray(b, dtype=complex)
    x = a
    am, bm = m.shape
    r, c = x.shape
    ii, jj = np.nonzero(m)
    p, q = np.divmod(np.arange(r * c), c)
    rows = ((p[None, :] * am + ii[:, None]) * (c * bm) + q[None, :] * bm + jj[:, None]).ravel()
    cols = np.tile(np.arange(r * c), ii.size)
    vals = np.repeat(m[ii, jj], r * c)
    sel = sp.csr_matrix((vals, (rows, cols)), shape=(r * am * c * bm, r * c))
    return AffineExpr(np.kron(x.const, m), sel @ x.lin)


def trace(x) -> AffineExpr:
    return AffineExpr.wrap(x).trace()


def bmat(rows) -> AffineExpr:
    """Block matrix from a nested list of expressions, arrays or ``None`` (zeros)."""
    heights = [None] * len(rows)
    widths = [None] * len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != len(widths):
            raise DomainError("ragged block rows")
        for j, item in enumerate(row):
            if item is None:
                continue
            shape = item.shape if isinstance(item, AffineExpr) else np.asarray(item).shape
            if heights[i] not in (None, shape[0]) or widths[j] not in (None, shape[1]):
                raise DomainError("inconsistent block shapes")
            heights[i], widths[j] = shape[0], shape[1]
    if None in heights or None in widths:
        raise DomainError("every block row and column needs at least one sized entry")
    total = (sum(heights), sum(widths))
    nv = max((item.nv for row in rows for item in row if isinstance(item, AffineExpr)), default=0)
    const = np.zeros(total, dtype=complex)
    lin = sp.csr_matrix((total[0] * total[1], nv), dtype=complex)
    r0 = 0
    for i, row in enumerate(rows):
        c0 = 0
        for j, item in enumerate(row):
            if item is not None:
                e = AffineExpr.wrap(item)
                const[r0:r0 + heights[i], c0:c0 + widths[j]] = e.const
                if e.lin.nnz:
                    lin = lin + _placement(e.shape, total, (r0, c0)) @ _pad(e.lin, nv)
            c0 += widths[j]
        r0 += heights[i]
    return AffineExpr(const, lin)


def _embedding_maps(n: int):
    """Sparse maps with ``vec([[Re, -Im], [Im, Re]]) = E_re vec(Re) + E_im vec(Im)``."""
    p, q = np.divmod(np.arange(n * n), n)
    big = 2 * n
    src = np.arange(n * n)
    rows_re = np.concatenate([p * big + q, (p + n) * big + q + n])
    e_re = sp.csr_matrix((np.ones(2 * n * n), (rows_re, np.tile(src, 2))), shape=(big * big, n * n))
    rows_im = np.concatenate([p * big + q + n, (p + n) * big + q])
    vals_im = np.concatenate([-np.ones(n * n), np.ones(n * n)])
    e_im = sp.csr_matrix((vals_im, (rows_im, np.tile(src, 2))), shape=(big * big, n * n))
    return e_re, e_im


@dataclass
class SdpSolution:
    """Result of :meth:`Problem.solve`.

    ``primal_value`` is the objective at the returned variables and
    ``dual_value`` the bound certified by the dual iterate; for a
    minimization ``dual_value <= primal_value`` up to solver tolerance.
    ``gap`` is ``|primal - dual| / max(1, |primal|, |dual|)``, the quantity
    the stopping rule compares against ``tol``.
    """

    status: str
    primal_value: float
    dual_value: float
    gap: float
    y: np.ndarray
    blocks: list
    slacks: list
    iterations: int
    pinf: float
    dinf: float
    message: str = ""
    sense: str = "min"
    history: list = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def value(self, expr: AffineExpr) -> np.ndarray:
        return expr.value(self.y)

    def raise_for_status(self) -> "SdpSolution":
        if not self.ok:
            raise SolverError(f"SDP status {self.status}: {self.message}", self)
        return self


class Problem:
    """Builder for ``min/max  Re f(y)`` subject to affine PSD, sign and equality constraints."""

    def __init__(self):
        self.nv = 0
        self._psd: list[AffineExpr] = []
        self._nonneg: list[AffineExpr] = []
        self._eq: list[AffineExpr] = []
        self._objective: AffineExpr | None = None
        self._sense = "min"

    # variables -------------------------------------------------------------
    def _new(self, k: int) -> np.ndarray:
        idx = np.arange(self.nv, self.nv + k)
        self.nv += k
        return idx

    def hermitian(self, n: int) -> AffineExpr:
        """Fresh ``n x n`` Hermitian matrix variable (``n^2`` reals)."""
        iu, ju = np.triu_indices(n, 1)
        d = self._new(n)
        re = self._new(iu.size)
        im = self._new(iu.size)
        rows = np.concatenate([np.arange(n) * (n + 1), iu * n + ju, ju * n + iu, iu * n + ju, ju * n + iu])
        cols = np.concatenate([d, re, re, im, im])
        vals = np.concatenate([np.ones(n), np.ones(2 * iu.size),
                               1j * np.ones(iu.size), -1j * np.ones(iu.size)])
        lin = sp.csr_matrix((vals, (rows, cols)), shape=(n * n, self.nv))
        return AffineExpr(np.zeros((n, n)), lin)

    def symmetric(self, n: int) -> AffineExpr:
        """Fresh real symmetric ``n x n`` variable."""
        iu, ju = np.triu_indices(n)
        v = self._new(iu.size)
        rows = np.concatenate([iu * n + ju, (ju * n + iu)[iu != ju]])
        cols = np.concatenate([v, v[iu != ju]])
        lin = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n * n, self.nv))
        return AffineExpr(np.zeros((n, n)), lin)

    def complex_matrix(self, r: int, c: int) -> AffineExpr:
        re = self._new(r * c)
        im = self._new(r * c)
        rows = np.concatenate([np.arange(r * c)] * 2)
        vals = np.concatenate([np.ones(r * c), 1j * np.ones(r * c)])
        lin = sp.csr_matrix((vals, (rows, np.concatenate([re, im]))), shape=(r * c, self.nv))
        return AffineExpr(np.zeros((r, c)), lin)

    def real_matrix(self, r: int, c: int) -> AffineExpr:
        v = self._new(r * c)
        lin = sp.csr_matrix((np.ones(r * c), (np.arange(r * c), v)), shape=(r * c, self.nv))
        return AffineExpr(np.zeros((r, c)), lin)

    def scalar(self) -> AffineExpr:
        return self.real_matrix(1, 1)

    # constraints -----------------------------------------------------------
    def add_psd(self, expr: AffineExpr) -> None:
        """Constrain a (Hermitian) square expression to be positive semidefinite."""
        expr = AffineExpr.wrap(expr)
        if expr.shape[0] != expr.shape[1]:
            raise DomainError("PSD constraint needs a square expression")
        self._psd.append(expr)

    def add_nonneg(self, expr: AffineExpr) -> None:
        """Entrywise ``Re expr >= 0``."""
        self._nonneg.append(AffineExpr.wrap(expr).real)

    def add_eq(self, expr: AffineExpr, rhs=0) -> None:
        """``expr == rhs`` (real and imaginary parts)."""
        self._eq.append(AffineExpr.wrap(expr) - rhs)

    def minimize(self, expr) -> None:
        self._objective, self._sense = AffineExpr.wrap(expr).real, "min"

    def maximize(self, expr) -> None:
        self._objective, self._sense = AffineExpr.wrap(expr).real, "max"

    # compilation -----------------------------------------------------------
    def _equalities(self):
        nv = self.nv
        if not self._eq:
            return np.zeros(nv), sp.identity(nv, format="csr"), None
        rows, rhs = [], []
        for e in self._eq:
            lin = _pad(e.lin, nv)
            for part_lin, part_c in ((lin.real, e.const.real), (lin.imag, e.const.imag)):
                keep = np.abs(part_lin).sum(axis=1).A.ravel() > 0
                if np.any(np.abs(part_c.reshape(-1)[~keep]) > 1e-12):
                    return None, None, "constant equality violated"
                rows.append(part_lin[keep])
                rhs.append(-part_c.reshape(-1)[keep])
        a = sp.vstack(rows).toarray()
        b = np.concatenate(rhs)
        y0 = np.linalg.lstsq(a, b, rcond=None)[0]
        if np.linalg.norm(a @ y0 - b) > 1e-9 * (1 + np.linalg.norm(b)):
            return None, None, "inconsistent equality constraints"
        null = sla.null_space(a, rcond=1e-12)
        return y0, sp.csr_matrix(null), None

    def _blocks(self, y0, basis):
        blocks = []
        nv = self.nv
        for e in self._psd:
            e = (e + e.H) * 0.5
            n = e.shape[0]
            lin = _pad(e.lin, nv)
            lin_re, lin_im = lin.real.tocsr(), lin.imag.tocsr()
            lin_im.eliminate_zeros()
            if lin_im.nnz == 0 and np.allclose(e.const.imag, 0, atol=0):
                f0, f = e.const.real, lin_re
                size = n
            else:
                e_re, e_im = _embedding_maps(n)
                f0 = np.block([[e.const.real, -e.const.imag], [e.const.imag, e.const.real]])
                f = (e_re @ lin_re + e_im @ lin_im).tocsr()
                size = 2 * n
            c = f0 + (f @ y0).reshape(size, size)
            blocks.append(Block("s", size, c, -(f @ basis)))
        for e in self._nonneg:
            lin = _pad(e.lin, nv).real.tocsr()
            c = e.const.real.reshape(-1) + lin @ y0
            blocks.append(Block("l", c.size, c, -(lin @ basis)))
        return blocks

    def solve(self, tol: float = 1e-8, max_iter: int = 200, debug_path=None) -> SdpSolution:
        if self._objective is None:
            raise DomainError("no objective set")
        if self._objective.shape != (1, 1):
            raise DomainError("objective must be a scalar expression")
        y0, basis, err = self._equalities()
        if err is not None:
            return SdpSolution("infeasible", np.nan, np.nan, np.nan, np.zeros(self.nv), [], [],
                               0, np.inf, np.inf, err, self._sense)
        obj = self._objective
        cvec = _pad(obj.lin, self.nv).real.toarray().ravel()
        c0 = float(obj.const.real[0, 0]) + float(cvec @ y0)
        cz = basis.T @ cvec
        b = -cz if self._sense == "min" else cz
        blocks = self._blocks(y0, basis)
        if not blocks:
            raise DomainError("problem has no cone constraints")
        res: SolverResult = solve_standard(blocks, b, tol, max_iter, debug_path)
        y = y0 + basis @ res.y
        if self._sense == "min":
            primal, dual = -res.dobj + c0, -res.pobj + c0
        else:
            primal, dual = res.dobj + c0, res.pobj + c0
        return SdpSolution(
            status=res.status,
            primal_value=float(primal),
            dual_value=float(dual),
            gap=float(abs(primal - dual) / max(1.0, abs(primal), abs(dual))),
            y=y,
            blocks=res.x,
            slacks=res.z,
            iterations=res.iterations,
            pinf=res.pinf,
            dinf=res.dinf,
            message=res.message,
            sense=self._sense,
            history=res.history,
        )
