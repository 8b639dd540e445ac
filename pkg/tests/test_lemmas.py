import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from oneshot_ea import entropy as en
from oneshot_ea import lemmas as L


@pytest.fixture(scope="module")
def results():
    return L.run_suite(seed=1, quick=True)


@pytest.fixture(scope="module")
def trend():
    return L.aep_trend(n_max=3)


class TestLemmaCheck:
    def test_row_format(self):
        r = L.LemmaCheck("chain_rule", True, 20, 0.5)
        assert r.row().split() == ["chain_rule", "PASS", "cases=20", "worst_margin=0.5"]
        assert "FAIL" in L.LemmaCheck("x", False, 1, -1.0).row()

    def test_empty_margins(self):
        r = L._finish("empty", [], 0.0, [])
        assert r.passed and r.worst == math.inf


class TestQuickSuite:
    def test_all_pass(self, results):
        assert [r.name for r in results] == list(L.SUITE)
        for r in results:
            assert r.passed, r.row()

    def test_worst_margin_slack(self, results):
        assert all(r.worst >= -L.SLACK for r in results)

    def test_deterministic(self, results):
        again = L.run_suite(seed=1, names=["chain_rule", "continuity_bound"], quick=True)
        by_name = {r.name: r for r in results}
        for r in again:
            assert r.worst == by_name[r.name].worst

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            L.run_suite(names=["no_such_check"])


class TestIndividualChecks:
    def test_isometry_invariance_tight(self):
        # an identity, so the margin sits near zero rather than well inside
        r = L.isometry_invariance(seed=2, count=2)
        assert r.passed
        assert abs(r.worst) <= 1e-5

    @pytest.mark.parametrize("fn", [L.chain_rule, L.product_ball, L.conditioning_reduces,
                                    L.continuity_bound, L.superadditivity])
    def test_other_seed(self, fn):
        r = fn(seed=7, count=2)
        assert r.passed, r.row()
        assert r.cases >= 2


class TestAep:
    def test_reference_state(self):
        rho = L.aep_reference_state()
        assert rho.is_normalized
        assert rho.layout.labels == ("A", "B")

    def test_conditional_entropy(self, trend):
        # independent: spectra of rho_AB and rho_B from the explicit matrix
        c, s = math.cos(0.3), math.sin(0.3)
        m = 0.6 * np.outer([c, 0, 0, s], [c, 0, 0, s]) + np.diag([0, 0.4, 0, 0])
        rho_b = m.reshape(2, 2, 2, 2).trace(axis1=0, axis2=2)

        def vn(x):
            w = np.linalg.eigvalsh(x)
            w = w[w > 1e-15]
            return float(-(w * np.log2(w)).sum())

        assert_allclose(trend["H"], vn(m) - vn(rho_b), atol=1e-12)
        assert_allclose(trend["H"], -0.022501704459, atol=1e-9)

    def test_inside_envelope(self, trend):
        assert trend["inside"]
        for r in trend["rows"]:
            assert r["lower"] <= r["per_copy"] <= r["upper"]

    def test_moves_toward_entropy(self, trend):
        assert trend["toward"]
        d = [r["distance"] for r in trend["rows"]]
        assert d[-1] < d[0]

    def test_frozen_per_copy(self, trend):
        got = [r["per_copy"] for r in trend["rows"]]
        assert_allclose(got, [-0.000107336, -0.008517857, -0.012793979], atol=2e-6)

    def test_envelope_width(self, trend):
        h2 = en.binary_entropy(0.2)
        for r in trend["rows"]:
            half = 0.8 + 2 * h2 / r["n"] + 1e-5
            assert_allclose(r["upper"] - r["lower"], 2 * half, rtol=1e-12)
