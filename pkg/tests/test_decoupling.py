import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from oneshot_ea import channels as C
from oneshot_ea import decoupling as D
from oneshot_ea.errors import DomainError, SizeError
from oneshot_ea.mathcore import SystemLayout
from oneshot_ea.states import DensityOperator, PureState, fidelity, max_entangled, maximally_mixed

PAULIS = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]


def depolarized_env_error():
    """Trace-norm distance for the fully depolarizing qubit, built from Paulis directly."""
    phi = np.array([1, 0, 0, 1]) / math.sqrt(2)
    psi = np.zeros((2, 4, 2), complex)  # B, E, R
    for i, s in enumerate(PAULIS):
        psi[:, i, :] = (np.kron(s / 2, np.eye(2)) @ phi).reshape(2, 2)
    rho_er = np.einsum("bir,bjs->irjs", psi, psi.conj()).reshape(8, 8)
    return np.abs(np.linalg.eigvalsh(rho_er - np.eye(8) / 8)).sum()


class TestDeltaBounds:
    def test_worked_example(self):
        d1, _ = D.delta_bounds(1.0, 3.0, 0.0, 0.0, 0.001)
        assert_allclose(d1, 1.524)

    def test_zero_exponent(self):
        eps = 0.01
        d1, d2 = D.delta_bounds(2.0, 2.0, 1.0, -1.0, eps)
        assert_allclose([d1, d2], [3 + 24 * eps] * 2)

    def test_infinite_gap(self):
        assert D.delta_bounds(-math.inf, 0.0, math.inf, 0.0, 0.0) == (0.0, 0.0)

    def test_floor(self):
        for eps in (0.0, 0.01, 0.3):
            d1, d2 = D.delta_bounds(-40, 40, 40, 40, eps)
            assert d1 >= 24 * eps and d2 >= 24 * eps

    def test_domain(self):
        with pytest.raises(DomainError):
            D.delta_bounds(0, 0, 0, 0, -0.1)
        with pytest.raises(DomainError):
            D.delta_bounds(math.nan, 0, 0, 0, 0.1)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10),
           st.floats(1e-6, 0.5))
    def test_gates_imply_27_eps(self, hmax_t, hmin_a, hmin_ae, hmin_tr, eps):
        g1, g2 = D.gate_conditions(hmax_t, hmin_a, hmin_ae, hmin_tr, eps)
        d1, d2 = D.delta_bounds(hmax_t, hmin_a, hmin_ae, hmin_tr, eps)
        if g1:
            assert d1 <= 27 * eps * (1 + 1e-12)
        if g2:
            assert d2 <= 27 * eps * (1 + 1e-12)


class TestEncoder:
    def test_isometry(self):
        for seed in range(100):
            v = D.sample_encoder(2 + seed % 3, 5, seed)
            assert_allclose(v.conj().T @ v, np.eye(v.shape[1]), atol=1e-10)

    def test_square_is_unitary(self):
        u = D.sample_encoder(4, 4, 3)
        assert_allclose(u @ u.conj().T, np.eye(4), atol=1e-10)

    def test_reproducible(self):
        assert np.array_equal(D.sample_encoder(2, 4, 17), D.sample_encoder(2, 4, 17))
        assert not np.array_equal(D.sample_encoder(2, 4, 17), D.sample_encoder(2, 4, 18))

    def test_dimension_order(self):
        with pytest.raises(DomainError):
            D.sample_encoder(4, 2, 0)


class TestDecouplingError:
    def test_identity_is_decoupled(self):
        ch = C.identity_channel(2)
        for seed in range(10):
            assert D.decoupling_error(ch, D.sample_encoder(2, 2, seed), maximally_mixed(2), a0=2) <= 1e-12

    def test_fully_depolarizing(self):
        # the environment holds the full purification, so the error is independent of V
        expect = depolarized_env_error()
        assert_allclose(expect, 1.5)
        ch = C.depolarizing(2, 1.0)
        for seed in range(10):
            err = D.decoupling_error(ch, D.sample_encoder(2, 2, seed), maximally_mixed(2), a0=2)
            assert_allclose(err, expect, atol=1e-12)

    def test_dephasing_range(self):
        ch = C.tensor_power(C.dephasing(2, 0.5), 2)
        for seed in range(10):
            err = D.decoupling_error(ch, D.sample_encoder(4, 4, seed), maximally_mixed(4), a0=2)
            assert 0 < err <= 2

    def test_dim_mismatch(self):
        with pytest.raises(DomainError):
            D.decoupling_error(C.identity_channel(2), D.sample_encoder(2, 3, 0), maximally_mixed(2))
        with pytest.raises(DomainError):
            D.decoupling_error(C.identity_channel(4), D.sample_encoder(3, 4, 0), maximally_mixed(4), a0=2)

    def test_monotone_in_a1(self):
        # larger |A1| mixes more of the input, so the mean error over 10 encoders drops
        for cs in range(3):
            ch = C.random_channel(4, 4, 3, cs)
            means, ses = [], []
            for a1 in (1, 2, 4):
                errs = [D.decoupling_error(ch, D.sample_encoder(a1, 4, s), maximally_mixed(4), a0=1)
                        for s in range(10)]
                means.append(np.mean(errs))
                ses.append(np.std(errs, ddof=1) / math.sqrt(10))
            for i in range(2):
                assert means[i + 1] <= means[i] + 3 * math.hypot(ses[i], ses[i + 1])


class TestDecoder:
    def test_already_decoupled(self):
        # global state equals the target up to relabelling, so the decoder is the identity
        psi = max_entangled(2, ("R", "B"))
        target = max_entangled(2, ("R", "Bh"))
        dec = D.build_decoder(psi, target, ["B"], ["Bh"])
        out = D.decode_marginal(psi, dec, ["B"], target, ["R", "Bh"])
        assert_allclose(fidelity(out, target.to_density()), 1, atol=1e-12)
        assert_allclose(dec.f_opt, 1, atol=1e-12)

    def test_uhlmann_optimum(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            x = rng.standard_normal(8) + 1j * rng.standard_normal(8)
            y = rng.standard_normal(8) + 1j * rng.standard_normal(8)
            g = PureState.normalized(x, SystemLayout.of(("R", 2), ("B", 4)))
            t = PureState.normalized(y, SystemLayout.of(("R", 2), ("Bh", 4)))
            dec = D.build_decoder(g, t, ["B"], ["Bh"])
            assert_allclose(dec.f_opt, fidelity(g.marginal(["R"]), t.marginal(["R"])), atol=1e-10)
            out = D.decode_marginal(g, dec, ["B"], t, ["R", "Bh"])
            assert fidelity(out, t.to_density()) >= dec.f_opt - 1e-6

    def test_decoder_is_channel(self):
        rng = np.random.default_rng(2)
        g = PureState.normalized(rng.standard_normal(8) + 0j, SystemLayout.of(("R", 2), ("B", 4)))
        t = PureState.normalized(rng.standard_normal(4) + 0j, SystemLayout.of(("R", 2), ("Bh", 2)))
        dec = D.build_decoder(g, t, ["B"], ["Bh"])
        tp = sum(k.conj().T @ k for k in dec.kraus)
        assert_allclose(tp, np.eye(4), atol=1e-12)

    def test_reference_mismatch(self):
        g = max_entangled(2, ("R", "B"))
        t = max_entangled(3, ("R", "Bh"))
        with pytest.raises(DomainError):
            D.build_decoder(g, t, ["B"], ["Bh"])

    def test_degenerate_svd_deterministic(self):
        g = PureState(np.kron([1, 0], [1, 0, 0, 0]).astype(complex), SystemLayout.of(("R", 2), ("B", 4)))
        t = PureState(np.kron([1, 0], [0, 1]).astype(complex), SystemLayout.of(("R", 2), ("Bh", 2)))
        a = D.build_decoder(g, t, ["B"], ["Bh"])
        b = D.build_decoder(g, t, ["B"], ["Bh"])
        for ka, kb in zip(a.kraus, b.kraus):
            assert np.array_equal(ka, kb)

    def test_identity_father_protocol(self):
        trials, _ = D.run_experiment(C.identity_channel(2), maximally_mixed(2), 0.1, trials=5,
                                     seed=1, a0=2, a1=1)
        for t in trials:
            assert t.entanglement_fidelity >= 1 - 1e-9


class TestRates:
    def test_identity_bell(self):
        log_a0, log_a1 = D.achievable_rates(C.identity_channel(2), maximally_mixed(2), 0.1)
        assert_allclose(log_a0, -5.629356627, atol=1e-6)
        assert_allclose(log_a1, 0.0, atol=1e-6)

    @pytest.mark.parametrize("ch", [C.depolarizing(2, 0.3), C.amplitude_damping(0.4)],
                             ids=["depolarizing", "amplitude_damping"])
    def test_sum_and_difference(self, ch):
        from oneshot_ea import entropy as en
        from oneshot_ea.capacity import channel_output_state

        eps = 0.1
        log_a0, log_a1 = D.achievable_rates(ch, maximally_mixed(2), eps)
        out = channel_output_state(ch, maximally_mixed(2))
        hmin = en.h_min_smooth(out.marginal(["A"]), (("A",), ()), eps).value
        hmax = en.h_max_smooth(out.marginal(["A", "B"]), (("A",), ("B",)), eps).value
        assert_allclose(log_a0 + log_a1, hmin + 2 * math.log2(eps), atol=1e-12)
        assert_allclose(log_a1 - log_a0, hmax - 2 * math.log2(eps), atol=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            D.achievable_rates(C.identity_channel(2), maximally_mixed(2), 1.0)


class TestExperiment:
    def test_identity_all_zero(self):
        trials, summary = D.run_experiment(C.identity_channel(2), maximally_mixed(2), 0.1,
                                           trials=100, seed=3, a0=2, a1=1)
        assert all(t.decoupling_error <= 1e-9 for t in trials)
        assert summary["min_within_bound"]

    @pytest.mark.parametrize("ch", [C.dephasing(2, 0.5), C.amplitude_damping(0.3)],
                             ids=["dephasing", "amplitude_damping"])
    def test_bound_and_decoder(self, ch):
        big = C.tensor_power(ch, 2)
        trials, summary = D.run_experiment(big, maximally_mixed(4), 0.05, trials=20, seed=5)
        assert summary["min_error"] <= summary["bound"] + 1e-9
        for t in trials:
            assert t.decoupling_error >= 0
            assert t.bound == summary["bound"]
            assert t.output_distance <= 2 * math.sqrt(t.decoupling_error) + 1e-6
            if t.decoupling_error <= t.bound:
                assert t.output_distance <= 2 * math.sqrt(t.bound) + 1e-6
        assert_allclose(summary["bound"], 2 * math.sqrt(summary["delta1"]) + summary["delta2"])

    def test_csv_deterministic(self):
        ch = C.tensor_power(C.dephasing(2, 0.5), 2)
        a = D.trials_to_csv(D.run_experiment(ch, maximally_mixed(4), 0.05, trials=8, seed=11)[0])
        b = D.trials_to_csv(D.run_experiment(ch, maximally_mixed(4), 0.05, trials=8, seed=11)[0])
        assert a == b
        assert a.splitlines()[0] == "trial,error,bound,decoder_fidelity"
        assert len(a.splitlines()) == 9

    def test_jobs_match_serial(self):
        ch = C.tensor_power(C.dephasing(2, 0.5), 2)
        a = D.run_experiment(ch, maximally_mixed(4), 0.05, trials=6, seed=2)[0]
        b = D.run_experiment(ch, maximally_mixed(4), 0.05, trials=6, seed=2, jobs=3)[0]
        assert D.trials_to_csv(a) == D.trials_to_csv(b)

    def test_too_small_input(self):
        with pytest.raises(DomainError):
            D.run_experiment(C.dephasing(2, 0.5), maximally_mixed(2), 0.05, trials=2)

    def test_size_cap(self):
        ch = C.tensor_power(C.dephasing(3, 0.5), 2)
        with pytest.raises(SizeError):
            D.run_experiment(ch, DensityOperator(np.eye(9) / 9), 0.05, trials=2)
