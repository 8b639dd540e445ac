"""Seeded numerical checks of the smoothed-entropy inequalities used by the capacity proofs.

Each check draws a battery of random states, evaluates both sides of an
inequality (or identity) with the entropy module and records the worst
slack.  A check passes when every case holds up to ``SLACK``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import entropy as en
from .mathcore import SystemLayout, permute_systems
from .states import DensityOperator, fidelity, haar_unitary, random_density

SLACK = 1e-5


@dataclass
class LemmaCheck:
    """Outcome of one property battery; ``worst`` is the smallest ``rhs-side margin``."""

    name: str
    passed: bool
    cases: int
    worst: float
    seconds: float = 0.0
    details: list = field(default_factory=list)

    def row(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<24} {status}  cases={self.cases:<3d} worst_margin={self.worst:.6g}"


def _seeds(seed, count: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


def _finish(name, margins, start, details, tol: float = SLACK) -> LemmaCheck:
    worst = float(min(margins)) if margins else math.inf
    return LemmaCheck(name, worst >= -tol, len(margins), worst, time.perf_counter() - start, details)


def _hmin(rho, a, b, eps):
    return en.h_min_smooth(rho, (a, b), eps).value


def _hmax(rho, a, b, eps):
    return en.h_max_smooth(rho, (a, b), eps).value


# --------------------------------------------------------------------------


def isometry_invariance(seed=1, count: int = 5, eps_values=(0.0, 0.1)) -> LemmaCheck:
    """Local isometries ``A -> C`` and ``B -> D`` leave both smoothed entropies unchanged."""
    start = time.perf_counter()
    margins, details = [], []
    lay = SystemLayout.of(("A", 2), ("B", 2))
    for s in _seeds(seed, count):
        rho = random_density(lay, s)
        rng = np.random.default_rng(s)
        u = haar_unitary(3, rng)[:, :2]
        v = haar_unitary(3, rng)[:, :2]
        w = np.kron(u, v)
        omega = DensityOperator(w @ rho.matrix @ w.conj().T, SystemLayout.of(("C", 3), ("D", 3)))
        for eps in eps_values:
            d_min = abs(_hmin(rho, ["A"], ["B"], eps) - _hmin(omega, ["C"], ["D"], eps))
            d_max = abs(_hmax(rho, ["A"], ["B"], eps) - _hmax(omega, ["C"], ["D"], eps))
            margins.append(1e-6 - max(d_min, d_max))
            details.append({"seed": s, "eps": eps, "h_min_diff": d_min, "h_max_diff": d_max})
    return _finish("isometry_invariance", margins, start, details, tol=0.0)


def chain_rule(seed=1, count: int = 20, eps=0.1, eps1=0.05, eps2=0.05) -> LemmaCheck:
    """``H_min^{e+2e'+e''}(AB|C) >= H_min^{e'}(A|BC) + H_min^{e''}(B|C) - log(2/e^2)``."""
    start = time.perf_counter()
    margins, details = [], []
    lay = SystemLayout.of(("A", 2), ("B", 2), ("C", 2))
    total = eps + 2 * eps1 + eps2
    for s in _seeds(seed, count):
        rho = random_density(lay, s)
        lhs = _hmin(rho, ["A", "B"], ["C"], total)
        rhs = (_hmin(rho, ["A"], ["B", "C"], eps1) + _hmin(rho, ["B"], ["C"], eps2)
               - math.log2(2 / eps ** 2))
        margins.append(lhs - rhs)
        details.append({"seed": s, "lhs": lhs, "rhs": rhs})
    return _finish("chain_rule", margins, start, details)


def _near_product(sigma: DensityOperator, varrho: DensityOperator, eps: float, s: int):
    """Mix ``sigma (x) varrho`` with a random state until it sits inside the eps-ball."""
    prod = np.kron(sigma.matrix, varrho.matrix)
    lay = SystemLayout.of(("A", sigma.dim), ("B", varrho.dim))
    noise = random_density(lay, s + 1).matrix
    center = DensityOperator(prod, lay)
    t = 0.5
    while True:
        rho = DensityOperator((1 - t) * prod + t * noise, lay)
        if fidelity(rho, center) ** 2 >= 1 - (0.9 * eps) ** 2:
            return rho, t
        t /= 2


def product_ball(seed=1, count: int = 10, eps=0.1, delta=0.05) -> LemmaCheck:
    """``H_min^{delta+eps}(A|B)_rho >= H_min^delta(A)_sigma`` for ``rho`` eps-close to ``sigma (x) varrho``."""
    start = time.perf_counter()
    margins, details = [], []
    for s in _seeds(seed, count):
        sigma = random_density(SystemLayout.of(("A", 2)), s)
        varrho = random_density(SystemLayout.of(("B", 2)), s + 7)
        rho, t = _near_product(sigma, varrho, eps, s)
        lhs = _hmin(rho, ["A"], ["B"], delta + eps)
        rhs = _hmin(sigma, ["A"], [], delta)
        margins.append(lhs - rhs)
        details.append({"seed": s, "mix": t, "lhs": lhs, "rhs": rhs})
    return _finish("product_ball", margins, start, details)


def conditioning_reduces(seed=1, count: int = 20, eps=0.1) -> LemmaCheck:
    """Dropping ``C`` from the conditioning can only increase ``H_min^eps`` and ``H_max^eps``."""
    start = time.perf_counter()
    margins, details = [], []
    lay = SystemLayout.of(("A", 2), ("B", 2), ("C", 2))
    for s in _seeds(seed, count):
        rho = random_density(lay, s)
        m_min = _hmin(rho, ["A"], ["B"], eps) - _hmin(rho, ["A"], ["B", "C"], eps)
        m_max = _hmax(rho, ["A"], ["B"], eps) - _hmax(rho, ["A"], ["B", "C"], eps)
        margins.append(min(m_min, m_max))
        details.append({"seed": s, "min_margin": m_min, "max_margin": m_max})
    return _finish("conditioning_reduces", margins, start, details)


def continuity_bound(seed=1, count: int = 20, eps=0.1) -> LemmaCheck:
    """``H_min^eps <= H + 8 eps log|A| + 2 h(2 eps)`` and ``H_max^eps >= H - (same)``."""
    start = time.perf_counter()
    margins, details = [], []
    lay = SystemLayout.of(("A", 2), ("B", 2))
    gap = 8 * eps * math.log2(2) + 2 * en.binary_entropy(2 * eps)
    for s in _seeds(seed, count):
        rho = random_density(lay, s)
        h = en.conditional_entropy(rho, (("A",), ("B",)))
        hmin = _hmin(rho, ["A"], ["B"], eps)
        hmax = _hmax(rho, ["A"], ["B"], eps)
        margins.append(min(h + gap - hmin, hmax - (h - gap)))
        details.append({"seed": s, "H": h, "h_min": hmin, "h_max": hmax})
    return _finish("continuity_bound", margins, start, details)


def superadditivity(seed=1, count: int = 10, eps=0.05) -> LemmaCheck:
    """``H_min^{2 eps}(AA'|BB')_{rho (x) rho'} >= H_min^eps(A|B)_rho + H_min^eps(A'|B')_rho'``."""
    start = time.perf_counter()
    margins, details = [], []
    for s in _seeds(seed, count):
        r1 = random_density(SystemLayout.of(("A", 2), ("B", 2)), s, rank=2)
        r2 = random_density(SystemLayout.of(("A2", 2), ("B2", 2)), s + 3, rank=2)
        joint = r1.tensor(r2)
        lhs = _hmin(joint, ["A", "A2"], ["B", "B2"], 2 * eps)
        rhs = _hmin(r1, ["A"], ["B"], eps) + _hmin(r2, ["A2"], ["B2"], eps)
        margins.append(lhs - rhs)
        details.append({"seed": s, "lhs": lhs, "rhs": rhs})
    return _finish("superadditivity", margins, start, details)


# --------------------------------------------------------------------------
# asymptotic equipartition trend


def aep_reference_state() -> DensityOperator:
    """``0.6 |psi><psi| + 0.4 |01><01|`` with ``psi = cos(0.3)|00> + sin(0.3)|11>``."""
    psi = np.zeros(4)
    psi[0], psi[3] = math.cos(0.3), math.sin(0.3)
    m = 0.6 * np.outer(psi, psi)
    m[1, 1] += 0.4
    return DensityOperator(m, SystemLayout.of(("A", 2), ("B", 2)))


def _tensor_copies(rho: DensityOperator, n: int):
    cur = rho.relabel({"A": "A1", "B": "B1"})
    for k in range(2, n + 1):
        cur = cur.tensor(rho.relabel({"A": f"A{k}", "B": f"B{k}"}))
    a = [f"A{k}" for k in range(1, n + 1)]
    b = [f"B{k}" for k in range(1, n + 1)]
    return cur, a, b


def aep_trend(rho: DensityOperator | None = None, eps: float = 0.1, n_max: int = 3,
              smoothing_slack: float = 1e-5) -> dict:
    """Per-copy ``H_min^eps(A^n|B^n) / n`` for ``n = 1..n_max`` with the continuity envelope.

    The envelope at ``n`` is ``H(A|B) +- (8 eps log|A| + 2 h(2 eps) / n + slack)``.
    """
    rho = aep_reference_state() if rho is None else rho
    h = en.conditional_entropy(rho, (("A",), ("B",)))
    da = rho.layout.dim("A")
    rows = []
    for n in range(1, n_max + 1):
        big, a, b = _tensor_copies(rho, n)
        big = DensityOperator(permute_systems(big.matrix, big.layout, a + b),
                              big.layout.select(a + b))
        res = en.h_min_smooth(big, (a, b), eps)
        per = res.value / n
        half = 8 * eps * math.log2(da) + 2 * en.binary_entropy(2 * eps) / n + smoothing_slack
        rows.append({"n": n, "per_copy": per, "distance": abs(per - h), "lower": h - half,
                     "upper": h + half, "inside": h - half <= per <= h + half,
                     "validity": res.validity})
    toward = rows[-1]["distance"] < rows[0]["distance"]
    return {"H": h, "eps": eps, "rows": rows, "inside": all(r["inside"] for r in rows),
            "toward": toward}


def aep_check(seed=1, eps: float = 0.1, n_max: int = 3) -> LemmaCheck:
    start = time.perf_counter()
    tr = aep_trend(eps=eps, n_max=n_max)
    margins = [min(r["per_copy"] - r["lower"], r["upper"] - r["per_copy"]) for r in tr["rows"]]
    res = _finish("aep_trend", margins, start, tr["rows"])
    res.passed = res.passed and tr["toward"]
    return res


SUITE = {
    "isometry_invariance": isometry_invariance,
    "chain_rule": chain_rule,
    "product_ball": product_ball,
    "conditioning_reduces": conditioning_reduces,
    "aep_trend": aep_check,
    "continuity_bound": continuity_bound,
    "superadditivity": superadditivity,
}


def run_suite(seed=1, names=None, quick: bool = False) -> list[LemmaCheck]:
    """Run the named checks (all by default); ``quick`` shrinks batteries and stops the AEP trend at two copies."""
    names = list(SUITE) if names is None else list(names)
    out = []
    for name in names:
        fn = SUITE[name]
        if quick:
            if name == "aep_trend":
                out.append(fn(seed, n_max=2))
            else:
                out.append(fn(seed, count=3))
        else:
            out.append(fn(seed))
    return out
