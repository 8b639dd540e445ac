"""Quantum channels as Kraus families, their dilations and fidelity measures."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from . import mathcore as mc
from .errors import DomainError, LayoutError, SizeError
from .mathcore import SystemLayout
from .states import DensityOperator, PureState, as_density, haar_unitary, purify

TP_TOL = 1e-9
CHANNEL_KINDS = ("identity", "depolarizing", "dephasing", "amplitude_damping", "erasure")


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """CPTP map ``rho -> sum_k K_k rho K_k^dagger``.

    Attributes
    ----------
    kraus_ops : tuple of ndarray
        Each of shape ``(dim_out, dim_in)``.
    in_label, out_label : str
        Labels used when the channel acts on a single system.
    name : str
        Free-form tag used in JSON output.
    """

    kraus_ops: tuple
    in_label: str = "A'"
    out_label: str = "B"
    name: str = "custom"

    def __post_init__(self):
        ops = [mc.as_matrix(k) for k in self.kraus_ops]
        if not ops:
            raise DomainError("a channel needs at least one Kraus operator")
        shape = ops[0].shape
        if any(k.shape != shape for k in ops):
            raise DomainError("Kraus operators must share one shape")
        gram = sum(k.conj().T @ k for k in ops)
        err = np.linalg.norm(gram - np.eye(shape[1]))
        if err > TP_TOL:
            raise DomainError(f"Kraus family is not trace preserving (error {err:.2e})")
        for k in ops:
            k.setflags(write=False)
        object.__setattr__(self, "kraus_ops", tuple(ops))

    @property
    def dim_in(self) -> int:
        return self.kraus_ops[0].shape[1]

    @property
    def dim_out(self) -> int:
        return self.kraus_ops[0].shape[0]

    @property
    def num_kraus(self) -> int:
        return len(self.kraus_ops)

    def stacked(self) -> np.ndarray:
        """Kraus operators as an array of shape ``(k, dim_out, dim_in)``."""
        return np.stack(self.kraus_ops)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "dim_in": self.dim_in,
            "dim_out": self.dim_out,
            "kraus": [mc.matrix_to_json(k) for k in self.kraus_ops],
        }


@dataclass(frozen=True, eq=False)
class StinespringIsometry:
    """Isometry ``U: in -> out (x) env`` with the output factor most significant."""

    isometry: np.ndarray
    dim_out: int
    dim_env: int
    out_label: str = "B"
    env_label: str = "E"

    def __post_init__(self):
        u = mc.as_matrix(self.isometry)
        if u.shape[0] != self.dim_out * self.dim_env:
            raise DomainError("isometry rows must equal dim_out * dim_env")
        err = np.linalg.norm(u.conj().T @ u - np.eye(u.shape[1]))
        if err > TP_TOL:
            raise DomainError(f"matrix is not an isometry (error {err:.2e})")
        u.setflags(write=False)
        object.__setattr__(self, "isometry", u)

    @property
    def dim_in(self) -> int:
        return self.isometry.shape[1]

    @property
    def out_layout(self) -> SystemLayout:
        return SystemLayout(((self.out_label, self.dim_out), (self.env_label, self.dim_env)))


def apply(ch: KrausChannel, rho) -> DensityOperator:
    """Apply ``ch`` to a state on its whole input space."""
    rho = as_density(rho)
    if rho.dim != ch.dim_in:
        raise LayoutError(f"state dimension {rho.dim} does not match channel input {ch.dim_in}")
    k = ch.stacked()
    out = np.einsum("kij,jl,kml->im", k, rho.matrix, k.conj())
    return DensityOperator(out, SystemLayout(((ch.out_label, ch.dim_out),)))


def _apply_ops_on(ops: np.ndarray, m: np.ndarray, layout: SystemLayout, label: str):
    """Apply Kraus operators ``ops`` (k, dout, din) to factor ``label`` of ``m``."""
    idx = layout.index(label)
    dims = list(layout.dims)
    din = dims[idx]
    if ops.shape[2] != din:
        raise LayoutError(f"factor {label!r} has dim {din}, channel expects {ops.shape[2]}")
    dout = ops.shape[1]
    pre = math.prod(dims[:idx])
    post = math.prod(dims[idx + 1:])
    t = m.reshape(pre, din, post, pre, din, post)
    t = np.einsum("kab,ibjlcm,kdc->iajldm", ops, t, ops.conj(), optimize=True)
    n = pre * dout * post
    return t.reshape(n, n)


def apply_to(ch: KrausChannel, rho, label: str, new_label: str | None = None) -> DensityOperator:
    """Apply ``ch`` to factor ``label`` of a multipartite state; other factors untouched."""
    rho = as_density(rho)
    out = _apply_ops_on(ch.stacked(), rho.matrix, rho.layout, label)
    new_label = ch.out_label if new_label is None else new_label
    factors = [
        (new_label, ch.dim_out) if lab == label else (lab, d) for lab, d in rho.layout.factors
    ]
    mc.check_dim(out.shape[0], "channel output")
    return DensityOperator(out, SystemLayout(tuple(factors)))


def stinespring(ch: KrausChannel, env_label: str = "E") -> StinespringIsometry:
    """Dilation with ``U[b * k + j, a] = K_j[b, a]``; environment dim is the Kraus count."""
    k = ch.stacked()
    u = np.transpose(k, (1, 0, 2)).reshape(ch.dim_out * ch.num_kraus, ch.dim_in)
    return StinespringIsometry(u, ch.dim_out, ch.num_kraus, ch.out_label, env_label)


def apply_isometry(v: np.ndarray, psi: PureState, label: str, new_layout: SystemLayout) -> PureState:
    """Apply a matrix acting on factor ``label`` of ``psi``; the factor is replaced by ``new_layout``."""
    lay = psi.layout
    idx = lay.index(label)
    dims = list(lay.dims)
    pre, post = math.prod(dims[:idx]), math.prod(dims[idx + 1:])
    t = psi.amplitudes.reshape(pre, dims[idx], post)
    out = np.einsum("ab,ibj->iaj", v, t).reshape(-1)
    factors = list(lay.factors[:idx]) + list(new_layout.factors) + list(lay.factors[idx + 1:])
    return PureState.normalized(out, SystemLayout(tuple(factors)))


def complementary(ch: KrausChannel, env_label: str = "E") -> KrausChannel:
    """Channel to the environment of :func:`stinespring`."""
    k = ch.stacked()
    ops = [k[:, b, :] for b in range(ch.dim_out)]
    return KrausChannel(tuple(ops), ch.in_label, env_label, name=f"complementary({ch.name})")


def compose_kraus(*channels: KrausChannel) -> KrausChannel:
    """Tensor product ``ch_1 (x) ch_2 (x) ...`` of channels."""
    ops = []
    for combo in itertools.product(*[c.kraus_ops for c in channels]):
        ops.append(reduce(np.kron, combo))
    first = channels[0]
    return KrausChannel(tuple(ops), first.in_label, first.out_label,
                        name="(x)".join(c.name for c in channels))


def tensor_power(ch: KrausChannel, n: int) -> KrausChannel:
    if n < 1:
        raise DomainError("n must be a positive integer")
    if n == 1:
        return ch
    size = (ch.dim_in * ch.dim_out) ** n
    if size > mc.max_dim():
        raise SizeError(f"(dim_in*dim_out)^n = {size} exceeds the cap {mc.max_dim()}")
    out = compose_kraus(*([ch] * n))
    return KrausChannel(out.kraus_ops, ch.in_label, ch.out_label, name=f"{ch.name}^{n}")


def _weyl(d: int, a: int, b: int) -> np.ndarray:
    x = np.roll(np.eye(d), 1, axis=0)
    z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return np.linalg.matrix_power(x, a) @ np.linalg.matrix_power(z, b)


def _check_prob(p: float, what: str) -> float:
    p = float(p)
    if not 0 <= p <= 1:
        raise DomainError(f"{what} must lie in [0, 1], got {p}")
    return p


def identity_channel(d: int) -> KrausChannel:
    return KrausChannel((np.eye(d),), name=f"identity{d}")


def depolarizing(d: int, p: float) -> KrausChannel:
    """``rho -> (1-p) rho + p I/d`` written with the ``d^2`` Weyl operators."""
    p = _check_prob(p, "p")
    ops = []
    for a in range(d):
        for b in range(d):
            w = (1 - p + p / d**2) if (a, b) == (0, 0) else p / d**2
            if w > 0:
                ops.append(math.sqrt(w) * _weyl(d, a, b))
    return KrausChannel(tuple(ops), name=f"depolarizing{d}({p:g})")


def dephasing(d: int, p: float) -> KrausChannel:
    """``rho -> (1-p) rho + p diag(rho)`` via the powers of the clock matrix."""
    p = _check_prob(p, "p")
    ops = []
    for b in range(d):
        w = (1 - p + p / d) if b == 0 else p / d
        if w > 0:
            ops.append(math.sqrt(w) * _weyl(d, 0, b))
    return KrausChannel(tuple(ops), name=f"dephasing{d}({p:g})")


def amplitude_damping(gamma: float, d: int = 2) -> KrausChannel:
    gamma = _check_prob(gamma, "gamma")
    if d != 2:
        raise DomainError("amplitude damping is defined for qubits only")
    k0 = np.array([[1, 0], [0, math.sqrt(1 - gamma)]])
    k1 = np.array([[0, math.sqrt(gamma)], [0, 0]])
    ops = (k0, k1) if gamma > 0 else (k0,)
    return KrausChannel(ops, name=f"amplitude_damping({gamma:g})")


def erasure(d: int, q: float) -> KrausChannel:
    """Output space ``d + 1``; the last basis vector is the erasure flag."""
    q = _check_prob(q, "q")
    ops = []
    if q < 1:
        keep = np.zeros((d + 1, d))
        keep[:d, :d] = np.eye(d) * math.sqrt(1 - q)
        ops.append(keep)
    if q > 0:
        for i in range(d):
            e = np.zeros((d + 1, d))
            e[d, i] = math.sqrt(q)
            ops.append(e)
    return KrausChannel(tuple(ops), name=f"erasure{d}({q:g})")


def unitary_channel(u: np.ndarray, name: str = "unitary") -> KrausChannel:
    return KrausChannel((mc.as_matrix(u),), name=name)


def make_channel(kind: str, dim: int, param: float = 0.0) -> KrausChannel:
    if dim < 1:
        raise DomainError("dim must be positive")
    if kind == "identity":
        return identity_channel(dim)
    if kind == "depolarizing":
        return depolarizing(dim, param)
    if kind == "dephasing":
        return dephasing(dim, param)
    if kind == "amplitude_damping":
        return amplitude_damping(param, dim)
    if kind == "erasure":
        return erasure(dim, param)
    raise DomainError(f"unknown channel kind {kind!r}; expected one of {CHANNEL_KINDS}")


def random_channel(dim_in: int, dim_out: int, num_kraus: int, seed) -> KrausChannel:
    """Kraus operators cut from the first ``dim_in`` columns of a Haar unitary."""
    n = dim_out * num_kraus
    if n < dim_in:
        raise DomainError("dim_out * num_kraus must be at least dim_in")
    v = haar_unitary(n, seed)[:, :dim_in]
    ops = v.reshape(dim_out, num_kraus, dim_in).transpose(1, 0, 2)
    return KrausChannel(tuple(ops), name="random")


def channel_from_json(data: dict) -> KrausChannel:
    if not isinstance(data, dict):
        raise DomainError("channel JSON must be an object")
    if "kind" in data:
        if set(data) - {"kind", "dim", "param"}:
            raise DomainError(f"unexpected keys in channel shorthand: {sorted(data)}")
        return make_channel(data["kind"], int(data.get("dim", 2)), float(data.get("param", 0.0)))
    if set(data) != {"name", "dim_in", "dim_out", "kraus"}:
        raise DomainError("channel JSON needs name, dim_in, dim_out, kraus")
    ops = tuple(mc.matrix_from_json(k) for k in data["kraus"])
    ch = KrausChannel(ops, name=str(data["name"]))
    if (ch.dim_in, ch.dim_out) != (data["dim_in"], data["dim_out"]):
        raise DomainError("Kraus shapes disagree with dim_in/dim_out")
    return ch


def entanglement_fidelity(rho, ch: KrausChannel) -> float:
    """``<Psi| (id (x) ch)(Psi) |Psi>`` on the spectral purification of ``rho``."""
    rho = as_density(rho)
    if ch.dim_in != ch.dim_out or rho.dim != ch.dim_in:
        raise LayoutError("entanglement fidelity needs a channel from the state's space to itself")
    psi = purify(DensityOperator(rho.matrix, SystemLayout((("Q", rho.dim),))), "R")
    r = psi.layout.dim("R")
    # psi = sum_ij c_ij |i>_Q |j>_R;  <psi|(K (x) I)|psi> = tr(C^dag K C)
    c = psi.amplitudes.reshape(rho.dim, r)
    total = 0.0
    for k in ch.kraus_ops:
        total += abs(np.trace(c.conj().T @ k @ c)) ** 2
    return float(total)


def entanglement_fidelity_kraus(rho, ch: KrausChannel) -> float:
    """``sum_k |tr(rho K_k)|^2``, the closed form used as a cross-check."""
    rho = as_density(rho)
    return float(sum(abs(np.trace(rho.matrix @ k)) ** 2 for k in ch.kraus_ops))


def _haar_batch(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _pure_fidelities(ch: KrausChannel, phis: np.ndarray) -> np.ndarray:
    # <phi|N(phi)|phi> = sum_k |<phi|K_k|phi>|^2
    kp = np.einsum("kij,nj->kni", ch.stacked(), phis)
    amps = np.einsum("ni,kni->kn", phis.conj(), kp)
    return np.sum(np.abs(amps) ** 2, axis=0)


def average_fidelity_mc(ch: KrausChannel, samples: int = 10_000, seed=0,
                        batch: int = 4096) -> tuple[float, float]:
    """Haar Monte-Carlo estimate of the average fidelity and its standard error."""
    if samples < 100:
        raise DomainError("samples must be at least 100")
    if ch.dim_in != ch.dim_out:
        raise LayoutError("average fidelity needs dim_in == dim_out")
    rng = np.random.default_rng(seed)
    vals = []
    left = samples
    while left > 0:
        m = min(batch, left)
        vals.append(_pure_fidelities(ch, _haar_batch(ch.dim_in, m, rng)))
        left -= m
    f = np.concatenate(vals)
    return float(f.mean()), float(f.std(ddof=1) / math.sqrt(samples))


def min_fidelity_est(ch: KrausChannel, restarts: int = 64, seed=0, maxiter: int = 500) -> float:
    """Upper estimate of the minimum fidelity by Nelder-Mead over pure inputs."""
    d = ch.dim_in
    if ch.dim_out != d:
        raise LayoutError("minimum fidelity needs dim_in == dim_out")
    if d > 16:
        raise SizeError("min_fidelity_est supports dimension at most 16")
    rng = np.random.default_rng(seed)

    def f(x):
        v = x[:d] + 1j * x[d:]
        nrm = np.linalg.norm(v)
        if nrm < 1e-12:
            return 1.0
        return float(_pure_fidelities(ch, (v / nrm)[None, :])[0])

    best = 1.0
    for _ in range(restarts):
        x0 = rng.standard_normal(2 * d)
        res = minimize(f, x0, method="Nelder-Mead",
                       options={"maxiter": maxiter, "xatol": 1e-10, "fatol": 1e-12})
        best = min(best, float(res.fun), f(x0))
    return best

