import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from oneshot_ea import sdp
from oneshot_ea.errors import DomainError, SolverError
from oneshot_ea.sdp import Block, Problem, bmat, fidelity_constraint_block, fidelity_sdp, kron
from oneshot_ea.states import fidelity, random_density


def min_trace_dominating(h, tol=1e-9):
    """``min tr X`` subject to ``X >= H`` and ``X >= 0``."""
    n = h.shape[0]
    p = Problem()
    x = p.hermitian(n)
    p.add_psd(x - h)
    p.add_psd(x)
    p.minimize(x.trace())
    return p.solve(tol=tol), x


def max_eigenvalue(h, tol=1e-9):
    """``min t`` subject to ``t I >= H``."""
    n = h.shape[0]
    p = Problem()
    t = p.scalar()
    p.add_psd(kron(t, np.eye(n)) - h)
    p.minimize(t)
    return p.solve(tol=tol)


def random_hermitian(n, rng):
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (g + g.conj().T) / 2


class TestSpecExamples:
    def test_dominate_psd(self):
        sol, x = min_trace_dominating(np.diag([0.7, 0.3]))
        assert sol.status == "optimal"
        assert_allclose(sol.primal_value, 1.0, atol=1e-7)
        assert_allclose(sol.value(x), np.diag([0.7, 0.3]), atol=1e-6)

    def test_positive_part(self):
        v = np.linalg.qr(np.array([[1.0, 2.0], [0.5, -1.0]]))[0]
        h = v @ np.diag([-1.0, 2.0]) @ v.T
        sol, x = min_trace_dominating(h)
        assert_allclose(sol.primal_value, 2.0, atol=1e-7)
        assert_allclose(sol.value(x), v @ np.diag([0.0, 2.0]) @ v.T, atol=1e-5)

    def test_positive_part_brute_force(self):
        # X = V diag(x) V^dagger with x >= max(lambda, 0); the grid minimum sits at the positive part
        v = np.linalg.qr(np.array([[1.0, 2.0], [0.5, -1.0]]))[0]
        h = v @ np.diag([-1.0, 2.0]) @ v.T
        grid = np.linspace(0, 3, 61)
        best = min(a + b for a in grid for b in grid if a >= 0 and b >= 2 - 1e-12)
        assert_allclose(min_trace_dominating(h)[0].primal_value, best, atol=1e-7)

    def test_hmin_mes(self):
        phi = np.zeros(4)
        phi[[0, 3]] = 1 / np.sqrt(2)
        p = Problem()
        s = p.hermitian(2)
        p.add_psd(kron(np.eye(2), s) - np.outer(phi, phi))
        p.minimize(s.trace())
        sol = p.solve()
        assert_allclose(sol.primal_value, 2.0, atol=1e-7)
        assert_allclose(sol.value(s), np.eye(2), atol=1e-5)

    def test_hmin_mes_grid_oracle(self):
        # the smallest trace over real diagonal sigma with I (x) sigma >= Phi is also 2
        phi = np.zeros(4)
        phi[[0, 3]] = 1 / np.sqrt(2)
        proj = np.outer(phi, phi)
        best = np.inf
        for a in np.linspace(0, 2, 41):
            for b in np.linspace(0, 2, 41):
                if np.linalg.eigvalsh(np.kron(np.eye(2), np.diag([a, b])) - proj).min() >= -1e-12:
                    best = min(best, a + b)
        assert_allclose(best, 2.0)


class TestRegressionSuite:
    """Twenty problems with closed-form optima."""

    @pytest.mark.parametrize("seed", range(7))
    def test_max_eigenvalue(self, seed):
        rng = np.random.default_rng(seed)
        h = random_hermitian(2 + seed % 4, rng)
        sol = max_eigenvalue(h)
        assert sol.status == "optimal"
        assert_allclose(sol.primal_value, np.linalg.eigvalsh(h).max(), atol=1e-7)

    @pytest.mark.parametrize("seed", range(7))
    def test_trace_domination(self, seed):
        rng = np.random.default_rng(100 + seed)
        h = random_hermitian(2 + seed % 3, rng)
        w = np.linalg.eigvalsh(h)
        sol, _ = min_trace_dominating(h)
        assert_allclose(sol.primal_value, np.clip(w, 0, None).sum(), atol=1e-7)

    @pytest.mark.parametrize("seed", range(6))
    def test_fidelity(self, seed):
        d = 2 + seed % 3
        r, s = random_density(d, seed), random_density(d, seed + 77)
        val, sol = fidelity_sdp(r, s)
        assert sol.status == "optimal"
        assert_allclose(val, fidelity(r, s), atol=1e-7)


class TestFidelitySdp:
    def test_fifty_pairs(self):
        for i in range(50):
            d = 2 + i % 3
            r = random_density(d, 500 + i, rank=1 + i % d)
            s = random_density(d, 900 + i)
            val, _ = fidelity_sdp(r, s)
            assert abs(val - fidelity(r, s)) <= 1e-7

    def test_orthogonal_support_shortcut(self):
        val, sol = fidelity_sdp(np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))
        assert val == 0.0
        assert sol.status == "optimal"


class TestFidelityBlock:
    def test_threshold_zero_feasible(self):
        p = Problem()
        x = p.hermitian(2)
        p.add_psd(x)
        p.add_eq(x.trace(), 1)
        fidelity_constraint_block(p, x, np.diag([1.0, 0.0]), 0.0)
        p.minimize(x.trace())
        assert p.solve().status == "optimal"

    def test_equal_states_threshold_one(self):
        rho = random_density(2, 3).matrix
        p = Problem()
        k = fidelity_constraint_block(p, rho, rho, 1.0)
        p.minimize(k.trace().real)
        sol = p.solve()
        assert sol.status == "optimal"
        assert_allclose(sol.primal_value, 1.0, atol=1e-6)

    def test_orthogonal_infeasible(self):
        p = Problem()
        k = fidelity_constraint_block(p, np.diag([0.0, 1.0]), np.diag([1.0, 0.0]), 0.1)
        p.minimize(k.trace().real)
        sol = p.solve()
        assert sol.status == "infeasible"
        with pytest.raises(SolverError):
            sol.raise_for_status()

    def test_threshold_range(self):
        with pytest.raises(DomainError):
            fidelity_constraint_block(Problem(), np.eye(2) / 2, np.eye(2) / 2, 1.5)

    def test_block_matches_fidelity(self):
        # max Re tr K over the block equals F for fixed operands
        r, s = random_density(3, 1).matrix, random_density(3, 2).matrix
        p = Problem()
        k = fidelity_constraint_block(p, r, s, 0.0)
        p.maximize(k.trace().real)
        sol = p.solve()
        assert_allclose(sol.primal_value, fidelity(r, s), atol=1e-6)


class TestSolverBehaviour:
    def test_weak_duality(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            sol, _ = min_trace_dominating(random_hermitian(3, rng))
            assert sol.primal_value >= sol.dual_value - 1e-12 - 1e-9 * abs(sol.primal_value)

    def test_gap_and_residuals_on_optimal(self):
        sol, _ = min_trace_dominating(np.diag([0.5, -0.2, 0.1]), tol=1e-8)
        assert sol.ok
        assert sol.gap <= 1e-8
        assert sol.pinf <= 1e-8 and sol.dinf <= 1e-8

    def test_deterministic(self):
        h = random_hermitian(3, np.random.default_rng(9))
        a, _ = min_trace_dominating(h)
        b, _ = min_trace_dominating(h)
        assert a.primal_value == b.primal_value
        assert np.array_equal(a.y, b.y)

    def test_max_iter(self):
        h = random_hermitian(3, np.random.default_rng(1))
        n = h.shape[0]
        p = Problem()
        x = p.hermitian(n)
        p.add_psd(x - h)
        p.add_psd(x)
        p.minimize(x.trace())
        sol = p.solve(max_iter=2)
        assert sol.status == "max_iter"

    def test_unbounded(self):
        p = Problem()
        t = p.scalar()
        p.add_psd(kron(t, np.eye(2)))
        p.maximize(t)
        assert p.solve().status == "unbounded"

    def test_inconsistent_equalities(self):
        p = Problem()
        t = p.scalar()
        p.add_psd(kron(t, np.eye(1)))
        p.add_eq(t, 1)
        p.add_eq(t, 2)
        p.minimize(t)
        assert p.solve().status == "infeasible"

    def test_no_objective(self):
        p = Problem()
        p.add_psd(p.hermitian(2))
        with pytest.raises(DomainError):
            p.solve()

    def test_statuses(self):
        assert set(sdp.STATUSES) >= {"optimal", "infeasible", "max_iter", "numerical_failure"}

    def test_block_validation(self):
        with pytest.raises(ValueError):
            Block("q", 2, np.zeros(2), np.zeros((2, 1)))
        with pytest.raises(ValueError):
            Block("s", 2, np.zeros((2, 2)), np.zeros((3, 1)))


class TestDebugDump:
    def test_dump_round_trip(self, tmp_path):
        # min x s.t. [[x, 1], [1, x]] >= 0 in standard dual form: max -x
        path = tmp_path / "p.json"
        a = np.array([[1.0], [0.0], [0.0], [1.0]])
        blk = Block("s", 2, np.array([[0.0, -1.0], [-1.0, 0.0]]), -a)
        res = sdp.solve_standard([blk], np.array([-1.0]), debug_path=str(path))
        doc = json.loads(path.read_text())
        assert doc["format"] == "oneshot-ea-sdp/1"
        assert doc["result"]["status"] == res.status == "optimal"
        assert_allclose(res.y, [1.0], atol=1e-7)


cvxpy = pytest.importorskip("cvxpy")


@pytest.mark.filterwarnings("ignore:Solution may be inaccurate")
class TestCvxpyOracle:
    """Independent cross-check against an external conic solver."""

    @pytest.mark.parametrize("seed", range(5))
    def test_conditional_hmin_sdp(self, seed):
        rho = random_density(4, seed).matrix
        p = Problem()
        s = p.hermitian(2)
        p.add_psd(kron(np.eye(2), s) - rho)
        p.minimize(s.trace())
        ours = p.solve().primal_value

        sv = cvxpy.Variable((2, 2), hermitian=True)
        prob = cvxpy.Problem(cvxpy.Minimize(cvxpy.real(cvxpy.trace(sv))),
                             [cvxpy.kron(np.eye(2), sv) - rho >> 0])
        prob.solve(solver="CLARABEL")
        assert_allclose(ours, prob.value, rtol=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_fidelity_block(self, seed):
        r, s = random_density(3, seed).matrix, random_density(3, seed + 40).matrix
        k = cvxpy.Variable((3, 3), complex=True)
        prob = cvxpy.Problem(cvxpy.Maximize(cvxpy.real(cvxpy.trace(k))),
                             [cvxpy.bmat([[r, k], [k.H, s]]) >> 0])
        prob.solve(solver="CLARABEL")
        val, _ = fidelity_sdp(r, s)
        assert_allclose(val, prob.value, atol=1e-6)

    def test_bmat_expression(self):
        p = Problem()
        x = p.hermitian(2)
        p.add_psd(bmat([[x, np.eye(2)], [np.eye(2), x]]))
        p.minimize(x.trace())
        assert_allclose(p.solve().primal_value, 2.0, atol=1e-7)
