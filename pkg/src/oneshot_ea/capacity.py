"""One-shot entanglement-assisted capacity bounds and their asymptotic limits.

All bounds are evaluated on the pure state ``psi_ABE`` obtained by sending
half of a purification of the channel input through a Stinespring dilation.
Additive ``log eps`` terms dominate at small dimensions, so negative lower
bounds and out-of-range smoothing parameters are reported with explicit
statuses instead of being clamped.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from . import entropy as en
from .channels import KrausChannel, apply, apply_isometry, complementary, stinespring
from .errors import DomainError, SizeError
from .mathcore import SystemLayout
from .states import DensityOperator, PureState, as_density, purify

log = logging.getLogger(__name__)

RELATIONS = ("thm1", "thm3", "father")
MAX_TREND_DIM = 64


# --------------------------------------------------------------------------
# channel output state


@dataclass(frozen=True)
class ChannelOutputState:
    """``psi_ABE`` for a given channel input, with the input kept alongside."""

    psi_ABE: PureState
    input: DensityOperator

    def marginal(self, labels) -> DensityOperator:
        return self.psi_ABE.marginal(labels)


def channel_output_state(ch: KrausChannel, input_state) -> ChannelOutputState:
    """Purify the input on ``A`` (spectral, dim = rank) and dilate ``A' -> B E``."""
    rho = as_density(input_state)
    if rho.dim != ch.dim_in:
        raise DomainError(f"input dimension {rho.dim} does not match channel input {ch.dim_in}")
    if not rho.is_normalized:
        raise DomainError("channel input must be normalized")
    rho = DensityOperator(rho.matrix, SystemLayout((("A'", rho.dim),)))
    phi = purify(rho, ref_label="A")
    u = stinespring(ch, env_label="E")
    psi = apply_isometry(u.isometry, phi, "A'", SystemLayout((("B", u.dim_out), ("E", u.dim_env))))
    return ChannelOutputState(psi.permute(["A", "B", "E"]), rho)


# --------------------------------------------------------------------------
# epsilon bookkeeping


def kappa(eps: float) -> float:
    """``2 sqrt(2 sqrt(4 eps))``."""
    return 2 * math.sqrt(2 * math.sqrt(4 * eps))


def kappa_prime(eps: float, compat: bool = False) -> float:
    """``2 sqrt(8 sqrt(eps))``; ``compat=True`` gives ``kappa(2 eps) = 2 sqrt(2 sqrt(8 eps))``."""
    if compat:
        return 2 * math.sqrt(2 * math.sqrt(8 * eps))
    return 2 * math.sqrt(8 * math.sqrt(eps))


def _invert(target: float) -> tuple[float, float]:
    """Solve ``sqrt(2x + x^2) = target`` for ``x >= 0``; return ``(x, x^2/27)``."""
    t2 = target * target
    x = t2 / (1 + math.sqrt(1 + t2))  # = -1 + sqrt(1 + t^2) without cancellation
    return x, x * x / 27


def solve_eps_relations(eps: float, which: str = "thm1", kappa_compat: bool = False) -> dict:
    """Inner smoothing parameter for a target error ``eps``.

    ``which`` selects the relation:

    - ``"thm1"``: ``eps = 2 sqrt(2 sqrt(27 e') + 27 e')``
    - ``"father"``: ``eps = sqrt(2 sqrt(27 e') + 27 e')``
    - ``"thm3"``: ``eps^2 = sqrt(2 sqrt(27 e'') + 27 e'')``

    The returned dict also carries ``kappa`` and ``kappa_prime`` and the
    forward residual of the solved relation.
    """
    if not 0 < eps < 1:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    if which == "thm1":
        target = eps / 2
    elif which == "father":
        target = eps
    elif which == "thm3":
        target = eps * eps
    else:
        raise DomainError(f"unknown relation {which!r}; expected one of {RELATIONS}")
    x, inner = _invert(target)
    forward = math.sqrt(2 * math.sqrt(27 * inner) + 27 * inner)
    out = {
        "relation": which,
        "eps": eps,
        "target": target,
        "x": x,
        "kappa": kappa(eps),
        "kappa_prime": kappa_prime(eps, kappa_compat),
        "forward_residual": abs(forward - target) / target,
    }
    out["eps_dprime" if which == "thm3" else "eps_prime"] = inner
    return out


# --------------------------------------------------------------------------
# entropic building blocks


def _h_min_a(out: ChannelOutputState, eps: float) -> en.EntropyResult:
    return en.h_min_smooth(out.marginal(["A"]), (("A",), ()), eps)


def _h_max_a_given_b(out: ChannelOutputState, eps: float) -> en.EntropyResult:
    return en.h_max_smooth(out.marginal(["A", "B"]), (("A",), ("B",)), eps)


def _require(res: en.EntropyResult, what: str) -> float:
    if res.validity == "solver_failure":
        log.warning("%s: solver did not certify optimality", what)
    return res.value


def father_resources(ch: KrausChannel, input_state, eps: float) -> tuple[float, float]:
    """``(q, e)``: qubits transmitted and ebits consumed by the one-shot father protocol."""
    rel = solve_eps_relations(eps, "father")
    ep = rel["eps_prime"]
    out = channel_output_state(ch, input_state)
    hmin = _require(_h_min_a(out, ep), "H_min(A)")
    hmax = _require(_h_max_a_given_b(out, ep), "H_max(A|B)")
    q = 0.5 * (hmin - hmax) + 2 * math.log2(ep) - 1
    e = 0.5 * (hmin + hmax)
    return q, e


# --------------------------------------------------------------------------
# input optimization


def _params_to_state(theta: np.ndarray, d: int) -> DensityOperator:
    """Lower-triangular ``T`` (real diagonal) from ``d^2`` reals; ``rho = T T^dag / tr``."""
    t = np.zeros((d, d), dtype=complex)
    t[np.diag_indices(d)] = theta[:d]
    il = np.tril_indices(d, -1)
    k = il[0].size
    t[il] = theta[d:d + k] + 1j * theta[d + k:d + 2 * k]
    m = t @ t.conj().T
    tr = np.real(np.trace(m))
    if tr < 1e-300:
        m, tr = np.eye(d), d
    return DensityOperator(m / tr, SystemLayout((("A'", d),)))


@dataclass
class OptimizationResult:
    state: DensityOperator
    value: float
    evaluations: int
    restarts: int


def optimize_input(ch: KrausChannel, objective: Callable[[DensityOperator], float],
                   budget: int = 2000, seed=0, restarts: int = 16) -> OptimizationResult:
    """Maximize ``objective`` over channel inputs by restarted Nelder-Mead.

    The first evaluated input is the maximally mixed state; the best value is
    only replaced on strict improvement.  Half the budget is shared by the
    maximally mixed start and ``restarts`` random starts; the rest polishes
    the best point.  The result is a certified lower bound on the maximum.
    """
    d = ch.dim_in
    rng = np.random.default_rng(seed)
    best = {"value": -math.inf, "theta": None}
    count = [0]

    def f(theta):
        if count[0] >= budget:
            return -best["value"]
        count[0] += 1
        val = float(objective(_params_to_state(theta, d)))
        if val > best["value"]:
            best["value"], best["theta"] = val, np.array(theta, dtype=float)
        return -val

    start = np.concatenate([np.ones(d), np.zeros(d * d - d)])
    f(start)
    starts = [start] + [rng.standard_normal(d * d) for _ in range(restarts)]
    per_run = max(1, (budget // 2) // len(starts))
    for x0 in starts:
        if count[0] >= budget:
            break
        minimize(f, x0, method="Nelder-Mead",
                 options={"maxfev": per_run, "xatol": 1e-9, "fatol": 1e-12})
    while count[0] < budget:
        used = count[0]
        minimize(f, best["theta"], method="Nelder-Mead",
                 options={"maxfev": budget - count[0], "xatol": 1e-10, "fatol": 1e-13})
        if count[0] == used:
            break
        if count[0] - used < 5:
            break
    return OptimizationResult(_params_to_state(best["theta"], d), best["value"], count[0], restarts)


# --------------------------------------------------------------------------
# bound reports


@dataclass
class BoundReport:
    """Lower and upper one-shot capacity bounds with every intermediate quantity."""

    mode: str
    eps: float
    lower: float
    upper: float
    derived_params: dict
    smoothing_used: dict
    validity: dict
    optimizer_input: DensityOperator | None = None
    input_search: str = "fixed"
    components: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "mode": self.mode,
            "eps": self.eps,
            "lower": self.lower,
            "upper": self.upper,
            "validity": dict(self.validity),
            "derived_params": dict(self.derived_params),
            "smoothing_used": dict(self.smoothing_used),
            "input_search": self.input_search,
            "components": dict(self.components),
        }
        if self.optimizer_input is not None:
            out["optimizer_input"] = self.optimizer_input.to_json()
        return out


def _lower_validity(value: float) -> str:
    return "ok" if value >= 0 else "vacuous_negative"


def _search(ch, objective, input_search, input_state, budget, seed):
    """Evaluate ``objective`` per the input policy; return ``(value, state)``."""
    if input_search == "fixed":
        if input_state is None:
            raise DomainError("input_search='fixed' needs an input state")
        st = DensityOperator(as_density(input_state).matrix, SystemLayout((("A'", ch.dim_in),)))
        return objective(st), st
    if input_search == "maximally_mixed":
        st = DensityOperator(np.eye(ch.dim_in) / ch.dim_in, SystemLayout((("A'", ch.dim_in),)))
        return objective(st), st
    if input_search == "optimize":
        res = optimize_input(ch, objective, budget, seed)
        return res.value, res.state
    raise DomainError(f"unknown input_search {input_search!r}")


def _core(ch, st, eps_a, eps_ab, components, tag):
    out = channel_output_state(ch, st)
    hmin = _require(_h_min_a(out, eps_a), "H_min(A)")
    hmax = _require(_h_max_a_given_b(out, eps_ab), "H_max(A|B)")
    components[f"{tag}_h_min_A"] = hmin
    components[f"{tag}_h_max_A_given_B"] = hmax
    return hmin - hmax


def eaq_bounds(ch: KrausChannel, eps: float, input_search: str = "maximally_mixed",
               input_state=None, budget: int = 200, seed=0) -> BoundReport:
    """One-shot entanglement-assisted entanglement transmission bounds (qubits)."""
    rel = solve_eps_relations(eps, "thm1")
    ep = rel["eps_prime"]
    k = rel["kappa"]
    s_upper = 2 * eps + 2 * math.sqrt(k)
    components: dict = {}

    def lower_obj(st):
        return 0.5 * _core(ch, st, ep, ep, {}, "lower")

    low_core, low_state = _search(ch, lower_obj, input_search, input_state, budget, seed)
    _core(ch, low_state, ep, ep, components, "lower")
    lower = low_core + 2 * math.log2(ep)
    validity = {"lower": _lower_validity(lower)}
    if s_upper >= 1:
        upper = math.inf
        validity["upper"] = "smoothing_out_of_range"
    else:
        def upper_obj(st):
            return 0.5 * _core(ch, st, eps, s_upper, {}, "upper")

        up_core, up_state = _search(ch, upper_obj, input_search, input_state, budget, seed)
        _core(ch, up_state, eps, s_upper, components, "upper")
        upper = up_core + math.log2(math.sqrt(2) / eps)
        validity["upper"] = "ok"
    return BoundReport(
        mode="eaq",
        eps=eps,
        lower=lower,
        upper=upper,
        derived_params={"eps_prime": ep, "kappa": k, "kappa_prime": rel["kappa_prime"]},
        smoothing_used={"lower_h_min_A": ep, "lower_h_max_A_given_B": ep,
                        "upper_h_min_A": eps, "upper_h_max_A_given_B": s_upper},
        validity=validity,
        optimizer_input=low_state,
        input_search=input_search,
        components=components,
    )


def eac_bounds(ch: KrausChannel, eps: float, input_search: str = "maximally_mixed",
               input_state=None, budget: int = 200, seed=0,
               kappa_compat: bool = False) -> BoundReport:
    """One-shot entanglement-assisted classical capacity bounds (bits).

    The lower bound is computed as twice the father-protocol qubit rate at
    error ``eps^2``, which is the same expression term by term.
    """
    rel = solve_eps_relations(eps, "thm3", kappa_compat)
    edp = rel["eps_dprime"]
    kp = rel["kappa_prime"]
    s_upper = 8 * eps + 2 * math.sqrt(kp)
    components: dict = {}

    def lower_obj(st):
        return 2 * father_resources(ch, st, eps * eps)[0]

    lower, low_state = _search(ch, lower_obj, input_search, input_state, budget, seed)
    _core(ch, low_state, edp, edp, components, "lower")
    validity = {"lower": _lower_validity(lower)}
    if s_upper >= 1 or 4 * eps >= 1:
        upper = math.inf
        validity["upper"] = "smoothing_out_of_range"
    else:
        def upper_obj(st):
            return _core(ch, st, 4 * eps, s_upper, {}, "upper")

        up_core, up_state = _search(ch, upper_obj, input_search, input_state, budget, seed)
        _core(ch, up_state, 4 * eps, s_upper, components, "upper")
        upper = up_core + math.log2(1 / (2 * math.sqrt(2) * eps))
        validity["upper"] = "ok"
    derived = {"eps_dprime": edp, "kappa": rel["kappa"], "kappa_prime": kp,
               "kappa_prime_compat": kappa_compat, "delta": upper}
    return BoundReport(
        mode="eac",
        eps=eps,
        lower=lower,
        upper=upper,
        derived_params=derived,
        smoothing_used={"lower_h_min_A": edp, "lower_h_max_A_given_B": edp,
                        "upper_h_min_A": 4 * eps, "upper_h_max_A_given_B": s_upper},
        validity=validity,
        optimizer_input=low_state,
        input_search=input_search,
        components=components,
    )


# --------------------------------------------------------------------------
# asymptotic quantities


def output_mutual_information(ch: KrausChannel, input_state) -> float:
    """``I(A:B)_psi = H(A) + H(B) - H(E)`` for the purified input."""
    rho = as_density(input_state)
    rho = DensityOperator(rho.matrix, SystemLayout((("A'", ch.dim_in),)))
    return (en.von_neumann(rho) + en.von_neumann(apply(ch, rho))
            - en.von_neumann(apply(complementary(ch), rho)))


def asymptotic_capacity(ch: KrausChannel, input_search: str = "optimize", budget: int = 1500,
                        seed=0, input_state=None):
    """``(C_ea, Q_ea, argmax_input)`` with ``C_ea = max I(A:B)`` and ``Q_ea = C_ea / 2``."""
    if ch.dim_in > 8:
        raise SizeError("asymptotic_capacity supports input dimension at most 8")
    c, st = _search(ch, lambda s: output_mutual_information(ch, s), input_search, input_state,
                    budget, seed)
    return c, c / 2, st


def _tensor_pure(psi: PureState, n: int) -> tuple[PureState, list, list]:
    cur = psi.relabel({"A": "A1", "B": "B1", "E": "E1"})
    for k in range(2, n + 1):
        cur = cur.tensor(psi.relabel({"A": f"A{k}", "B": f"B{k}", "E": f"E{k}"}))
    a = [f"A{k}" for k in range(1, n + 1)]
    b = [f"B{k}" for k in range(1, n + 1)]
    return cur, a, b


def n_copy_trend(ch: KrausChannel, input_state, eps: float, n_max: int = 3,
                 bounds: bool = True) -> list[dict]:
    """Per-use smoothed core ``[H_min^eps(A^n) - H_max^eps(A^n|B^n)] / n`` on product inputs.

    Each row also carries the per-use one-shot classical bounds for ``n``
    uses (with the product input held fixed) and the single-letter mutual
    information target.
    """
    out = channel_output_state(ch, input_state)
    mi = output_mutual_information(ch, input_state)
    psi = out.psi_ABE
    da, db = psi.layout.dim("A"), psi.layout.dim("B")
    if (da * db) ** n_max > MAX_TREND_DIM:
        raise SizeError(f"n_max={n_max} needs a {(da * db) ** n_max}-dimensional A^nB^n state; "
                        f"the cap is {MAX_TREND_DIM}")
    rows = []
    for n in range(1, n_max + 1):
        big, a, b = _tensor_pure(psi, n)
        rho_a = big.marginal(a)
        rho_ab = big.marginal(a + b)
        hmin = en.h_min_smooth(rho_a, (a, ()), eps).value
        hmax = en.h_max_smooth(rho_ab, (a, b), eps).value
        row = {"n": n, "core_per_use": (hmin - hmax) / n, "mutual_information": mi,
               "h_min_A": hmin, "h_max_A_given_B": hmax}
        if bounds and 0 < eps < 1:
            rel = solve_eps_relations(eps, "thm3")
            edp, kp = rel["eps_dprime"], rel["kappa_prime"]
            lo_min = en.h_min_smooth(rho_a, (a, ()), edp).value
            lo_max = en.h_max_smooth(rho_ab, (a, b), edp).value
            row["lower_per_use"] = (lo_min - lo_max + 4 * math.log2(edp) - 2) / n
            s_up = 8 * eps + 2 * math.sqrt(kp)
            if s_up >= 1 or 4 * eps >= 1:
                row["upper_per_use"] = math.inf
            else:
                up_min = en.h_min_smooth(rho_a, (a, ()), 4 * eps).value
                up_max = en.h_max_smooth(rho_ab, (a, b), s_up).value
                row["upper_per_use"] = (up_min - up_max + math.log2(1 / (2 * math.sqrt(2) * eps))) / n
        rows.append(row)
    return rows
