"""Primal-dual interior-point method for block-diagonal real SDPs.

The problem pair is

    (P)  min <C, X>   s.t.  A(X) = b,  X >= 0
    (D)  max b^T y    s.t.  Z = C - A^*(y) >= 0

where ``X`` is block diagonal with real symmetric blocks (``'s'``) and
nonnegative orthant blocks (``'l'``).  Search directions use
Nesterov-Todd scaling with a Mehrotra predictor-corrector; the Schur
complement is factored by dense Cholesky.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

log = logging.getLogger(__name__)

STATUSES = ("optimal", "infeasible", "unbounded", "max_iter", "numerical_failure")
RAY_THRESHOLD = 1e6


@dataclass
class Block:
    """One cone block.

    For ``kind='s'`` the block is ``n x n`` symmetric, ``c`` is a dense
    ``(n, n)`` array and ``a`` has shape ``(n*n, m)`` with row index
    ``p*n + q``; it must be symmetric in ``(p, q)``.  For ``kind='l'``,
    ``c`` has shape ``(n,)`` and ``a`` has shape ``(n, m)``.
    """

    kind: str
    n: int
    c: np.ndarray
    a: sp.csr_matrix

    def __post_init__(self):
        if self.kind not in ("s", "l"):
            raise ValueError(f"unknown block kind {self.kind!r}")
        rows = self.n * self.n if self.kind == "s" else self.n
        self.a = sp.csr_matrix(self.a)
        if self.a.shape[0] != rows:
            raise ValueError(f"block coefficient matrix has {self.a.shape[0]} rows, expected {rows}")
        if self.kind == "s":
            self.c = np.asarray(self.c, dtype=float).reshape(self.n, self.n)
            self.c = (self.c + self.c.T) / 2
        else:
            self.c = np.asarray(self.c, dtype=float).reshape(self.n)


@dataclass
class SolverResult:
    status: str
    x: list
    y: np.ndarray
    z: list
    pobj: float
    dobj: float
    iterations: int
    pinf: float
    dinf: float
    relgap: float
    message: str = ""
    history: list = field(default_factory=list)


class _SBlockOps:
    """Cached index data for fast Schur complement assembly of one ``'s'`` block."""

    def __init__(self, blk: Block, chunk: int = 256):
        n = blk.n
        a = blk.a.tocoo()
        p, q = np.divmod(a.row, n)
        upper = p <= q
        keys = p[upper] * n + q[upper]
        used = np.unique(keys)
        self.p = used // n
        self.q = used % n
        self.c = np.where(self.p == self.q, 1.0, 2.0)
        pos = np.searchsorted(used, keys)
        self.abar = sp.csr_matrix(
            (a.data[upper], (pos, a.col[upper])), shape=(used.size, blk.a.shape[1])
        )
        self.abar_t = self.abar.T.tocsr()
        self.chunk = chunk

    def schur(self, w: np.ndarray) -> np.ndarray:
        p, q, c = self.p, self.q, self.c
        s = p.size
        m = self.abar.shape[1]
        out = np.zeros((m, m))
        wp, wq = w[p], w[q]
        for start in range(0, s, self.chunk):
            sl = slice(start, min(s, start + self.chunk))
            wpp = wp[sl][:, p]
            wqq = wq[sl][:, q]
            wpq = wp[sl][:, q]
            wqp = wq[sl][:, p]
            t = (wpp * wqq + wpq * wqp) * (0.5 * c[sl, None] * c[None, :])
            # rows sl of T times abar, then contract with abar rows sl
            ta = (self.abar_t @ t.T).T
            out += self.abar_t[:, sl] @ ta
        return out


def _sym(a):
    return (a + a.T) / 2


def _max_step(l_fac: np.ndarray, d: np.ndarray) -> float:
    """Largest ``alpha`` with ``L L^T + alpha d >= 0`` (``inf`` if unbounded)."""
    t = sla.solve_triangular(l_fac, d, lower=True)
    t = sla.solve_triangular(l_fac, t.T, lower=True)
    lam = np.linalg.eigvalsh(_sym(t))[0]
    return math.inf if lam >= 0 else -1.0 / lam


def _max_step_lp(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return math.inf
    return float(np.min(-x[neg] / dx[neg]))


class InteriorPointSolver:
    """Single-use solver instance.

    Parameters
    ----------
    blocks : list of Block
    b : array_like, shape (m,)
    tol : float
        Target for relative gap and both scaled residuals.
    max_iter : int
    """

    def __init__(self, blocks, b, tol: float = 1e-8, max_iter: int = 200, debug_path=None):
        self.blocks = list(blocks)
        self.b = np.asarray(b, dtype=float).reshape(-1)
        self.m = self.b.size
        for blk in self.blocks:
            if blk.a.shape[1] != self.m:
                raise ValueError("every block needs one coefficient column per dual variable")
        self.tol = tol
        self.max_iter = max_iter
        self.debug_path = debug_path
        self._ops = [(_SBlockOps(b_) if b_.kind == "s" else None) for b_ in self.blocks]
        self._at = [blk.a.T.tocsr() for blk in self.blocks]

    # linear maps -----------------------------------------------------------
    def a_op(self, xs) -> np.ndarray:
        out = np.zeros(self.m)
        for at, x in zip(self._at, xs):
            out += at @ x.reshape(-1)
        return out

    def a_adj(self, y) -> list:
        out = []
        for blk in self.blocks:
            v = blk.a @ y
            out.append(_sym(v.reshape(blk.n, blk.n)) if blk.kind == "s" else v)
        return out

    @staticmethod
    def _inner(xs, zs) -> float:
        return float(sum(np.vdot(x, z).real for x, z in zip(xs, zs)))

    # initial point ---------------------------------------------------------
    def _initial_point(self):
        xs, zs = [], []
        acol = [np.zeros(self.m) for _ in self.blocks]
        for j, blk in enumerate(self.blocks):
            acol[j] = np.sqrt(np.asarray(blk.a.multiply(blk.a).sum(axis=0)).ravel())
        for j, blk in enumerate(self.blocks):
            n = blk.n
            normc = np.linalg.norm(blk.c)
            ratio = np.max((1 + np.abs(self.b)) / (1 + acol[j])) if self.m else 1.0
            xi = max(10.0, math.sqrt(n), n * ratio)
            eta = max(10.0, math.sqrt(n), normc, float(np.max(acol[j])) if self.m else 0.0)
            if blk.kind == "s":
                xs.append(xi * np.eye(n))
                zs.append(eta * np.eye(n))
            else:
                xs.append(np.full(n, xi))
                zs.append(np.full(n, eta))
        return xs, np.zeros(self.m), zs

    # main loop -------------------------------------------------------------
    def solve(self) -> SolverResult:
        xs, y, zs = self._initial_point()
        nu = sum(blk.n for blk in self.blocks)
        normb = np.linalg.norm(self.b)
        normc = math.sqrt(sum(np.linalg.norm(blk.c) ** 2 for blk in self.blocks))
        history = []
        best = None
        stall = 0
        status, message = "max_iter", "iteration limit reached"
        it = 0
        for it in range(self.max_iter + 1):
            rp = self.b - self.a_op(xs)
            aty = self.a_adj(y)
            rd = [blk.c - z - ay for blk, z, ay in zip(self.blocks, zs, aty)]
            pobj = self._inner([blk.c for blk in self.blocks], xs)
            dobj = float(self.b @ y)
            mu = self._inner(xs, zs) / nu
            pinf = np.linalg.norm(rp) / (1 + normb)
            dinf = math.sqrt(sum(np.linalg.norm(r) ** 2 for r in rd)) / (1 + normc)
            relgap = abs(pobj - dobj) / max(1.0, abs(pobj), abs(dobj))
            history.append({"iter": it, "pobj": pobj, "dobj": dobj, "pinf": pinf,
                            "dinf": dinf, "relgap": relgap, "mu": mu})
            if not all(np.isfinite(v) for v in (pobj, dobj, pinf, dinf, mu)):
                status, message = "numerical_failure", "non-finite iterate"
                break
            merit = max(pinf, dinf, relgap)
            if best is None or merit < best[0]:
                best = (merit, [x.copy() for x in xs], y.copy(), [z.copy() for z in zs])
            if pinf <= self.tol and dinf <= self.tol and relgap <= self.tol:
                status, message = "optimal", "converged"
                break
            # infeasibility certificates
            cx = -pobj
            ax = np.linalg.norm(self.a_op(xs))
            if cx > 0 and ax * RAY_THRESHOLD <= cx and dinf > self.tol:
                status, message = "infeasible", "primal improving ray (dual problem infeasible)"
                break
            if dobj > 0:
                ray = math.sqrt(sum(np.linalg.norm(a + z) ** 2 for a, z in zip(aty, zs)))
                if ray * RAY_THRESHOLD <= dobj and pinf > self.tol:
                    status, message = "unbounded", "dual improving ray (primal problem infeasible)"
                    break
            if it == self.max_iter:
                break
            try:
                step = self._step(xs, y, zs, rp, rd, mu, nu)
            except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
                status, message = "numerical_failure", f"linear algebra failure: {exc}"
                break
            xs, y, zs, ap, ad = step
            if max(ap, ad) < 1e-9:
                stall += 1
                if stall >= 3:
                    status, message = "numerical_failure", "step length collapsed"
                    break
            else:
                stall = 0
        if status != "optimal" and best is not None and status in ("max_iter", "numerical_failure"):
            _, xs, y, zs = best
            rp = self.b - self.a_op(xs)
            aty = self.a_adj(y)
            rd = [blk.c - z - ay for blk, z, ay in zip(self.blocks, zs, aty)]
            pobj = self._inner([blk.c for blk in self.blocks], xs)
            dobj = float(self.b @ y)
            pinf = np.linalg.norm(rp) / (1 + normb)
            dinf = math.sqrt(sum(np.linalg.norm(r) ** 2 for r in rd)) / (1 + normc)
            relgap = abs(pobj - dobj) / max(1.0, abs(pobj), abs(dobj))
        result = SolverResult(status, xs, y, zs, pobj, dobj, it, pinf, dinf, relgap,
                              message, history)
        if self.debug_path:
            self.dump(self.debug_path, result)
        log.debug("sdp %s after %d iterations: p=%.10g d=%.10g", status, it, pobj, dobj)
        return result

    def _scaling(self, xs, zs):
        scal = []
        for blk, x, z in zip(self.blocks, xs, zs):
            if blk.kind == "s":
                lx = np.linalg.cholesky(_sym(x))
                lz = np.linalg.cholesky(_sym(z))
                u, d, vt = np.linalg.svd(lz.T @ lx)
                g = lx @ vt.T / np.sqrt(d)
                w = g @ g.T
                scal.append({"lx": lx, "lz": lz, "g": g, "ginv": np.linalg.inv(g), "d": d, "w": _sym(w)})
            else:
                scal.append({"w": x / z, "d": np.sqrt(x * z)})
        return scal

    def _schur(self, scal) -> np.ndarray:
        mat = np.zeros((self.m, self.m))
        for blk, ops, sc, at in zip(self.blocks, self._ops, scal, self._at):
            if blk.kind == "s":
                mat += ops.schur(sc["w"])
            else:
                mat += (at.multiply(sc["w"][None, :]) @ blk.a).toarray()
        return _sym(mat)

    def _factor(self, mat):
        scale = max(1.0, float(np.max(np.abs(np.diag(mat))))) if self.m else 1.0
        for shift in (0.0, 1e-14, 1e-12, 1e-10):
            try:
                return ("chol", sla.cho_factor(mat + shift * scale * np.eye(self.m)))
            except np.linalg.LinAlgError:
                continue
        return ("lstsq", mat)

    def _solve_schur(self, fac, rhs):
        kind, data = fac
        if kind == "chol":
            return sla.cho_solve(data, rhs)
        return np.linalg.lstsq(data, rhs, rcond=None)[0]

    def _direction(self, fac, scal, rp, rd, rhs_c):
        """Solve for ``(dx, dy, dz)`` given per-block complementarity data ``rhs_c``."""
        rcs = []
        for blk, sc, rc in zip(self.blocks, scal, rhs_c):
            if blk.kind == "s":
                d = sc["d"]
                s = rc / (d[:, None] + d[None, :])
                rcs.append(sc["g"] @ s @ sc["g"].T)
            else:
                rcs.append(rc)
        tmp = []
        for blk, sc, rc, r in zip(self.blocks, scal, rcs, rd):
            if blk.kind == "s":
                tmp.append(rc - sc["w"] @ r @ sc["w"])
            else:
                tmp.append(rc - sc["w"] * r)
        rhs = rp - self.a_op(tmp)
        dy = self._solve_schur(fac, rhs)
        aty = self.a_adj(dy)
        dzs, dxs = [], []
        for blk, sc, rc, r, ay in zip(self.blocks, scal, rcs, rd, aty):
            dz = r - ay
            if blk.kind == "s":
                dz = _sym(dz)
                dx = _sym(rc - sc["w"] @ dz @ sc["w"])
            else:
                dx = rc - sc["w"] * dz
            dzs.append(dz)
            dxs.append(dx)
        return dxs, dy, dzs

    def _step_lengths(self, xs, zs, dxs, dzs, scal):
        ap = ad = math.inf
        for blk, x, z, dx, dz, sc in zip(self.blocks, xs, zs, dxs, dzs, scal):
            if blk.kind == "s":
                ap = min(ap, _max_step(sc["lx"], dx))
                ad = min(ad, _max_step(sc["lz"], dz))
            else:
                ap = min(ap, _max_step_lp(x, dx))
                ad = min(ad, _max_step_lp(z, dz))
        return ap, ad

    def _step(self, xs, y, zs, rp, rd, mu, nu):
        scal = self._scaling(xs, zs)
        fac = self._factor(self._schur(scal))
        # predictor
        rhs_aff = []
        for blk, sc, x, z in zip(self.blocks, scal, xs, zs):
            if blk.kind == "s":
                rhs_aff.append(-2 * np.diag(sc["d"] ** 2))
            else:
                rhs_aff.append(-x)
        dxa, dya, dza = self._direction(fac, scal, rp, rd, rhs_aff)
        apa, ada = self._step_lengths(xs, zs, dxa, dza, scal)
        apa, ada = min(1.0, apa), min(1.0, ada)
        mu_aff = self._inner([x + apa * dx for x, dx in zip(xs, dxa)],
                             [z + ada * dz for z, dz in zip(zs, dza)]) / nu
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
        # corrector
        rhs_c = []
        for blk, sc, x, z, dx, dz in zip(self.blocks, scal, xs, zs, dxa, dza):
            if blk.kind == "s":
                g, gi = sc["g"], sc["ginv"]
                dxt = gi @ dx @ gi.T
                dzt = g.T @ dz @ g
                corr = dxt @ dzt
                rhs_c.append(2 * sigma * mu * np.eye(blk.n) - 2 * np.diag(sc["d"] ** 2)
                             - (corr + corr.T))
            else:
                rhs_c.append((sigma * mu - dx * dz) / z - x)
        dxs, dy, dzs = self._direction(fac, scal, rp, rd, rhs_c)
        ap, ad = self._step_lengths(xs, zs, dxs, dzs, scal)
        gamma = 0.9 + 0.09 * min(apa, ada)
        ap = min(1.0, gamma * ap)
        ad = min(1.0, gamma * ad)
        xs = [x + ap * dx for x, dx in zip(xs, dxs)]
        zs = [z + ad * dz for z, dz in zip(zs, dzs)]
        y = y + ad * dy
        return xs, y, zs, ap, ad

    # debug dump ------------------------------------------------------------
    def dump(self, path, result: SolverResult | None = None) -> None:
        """Write the problem data (and optionally the result) as JSON."""
        def sparse_json(a):
            a = sp.coo_matrix(a)
            return {"shape": list(a.shape), "row": a.row.tolist(), "col": a.col.tolist(),
                    "data": a.data.tolist()}
        doc = {
            "format": "oneshot-ea-sdp/1",
            "form": "min <C,X> s.t. A(X)=b, X psd; max b'y s.t. C - A*(y) psd",
            "b": self.b.tolist(),
            "blocks": [{"kind": blk.kind, "n": blk.n, "c": np.asarray(blk.c).tolist(),
                        "a": sparse_json(blk.a)} for blk in self.blocks],
        }
        if result is not None:
            doc["result"] = {"status": result.status, "pobj": result.pobj, "dobj": result.dobj,
                             "iterations": result.iterations, "y": result.y.tolist()}
        with open(path, "w") as fh:
            json.dump(doc, fh)


def solve_standard(blocks, b, tol: float = 1e-8, max_iter: int = 200, debug_path=None) -> SolverResult:
    return InteriorPointSolver(blocks, b, tol, max_iter, debug_path).solve()
