from fractions import Fraction

import numpy as np
import pytest

from hetbia.analysis import (
    det_d_profile,
    dof,
    femto_rate,
    macro_rate,
    optimize_c,
)
from hetbia.beamforming import default_slot_plan, switch_pattern
from hetbia.network import NetworkConfig, complex_gaussian, substream
from hetbia.receiver import femto_effective_channel


def profile_closed_form(c, K, N):
    """Independent derivation of min_k |det D_k(c)| for the default plan:
    |w2.v| = sqrt(1-c^2) and |w1.v| = c*sqrt(1-c^2)/sqrt(1+(K-2)c^2)."""
    c = np.asarray(c, dtype=float)
    return c * (1 - c**2) ** (N / 2) / np.sqrt(1 + (K - 2) * c**2)


class TestDof:
    def test_three_user_example(self):
        rep = dof(NetworkConfig(K=3, N=2))
        assert rep.total_bia == Fraction(9, 2)
        assert rep.total_tdma == 4
        assert rep.gain == Fraction(1, 2)
        assert rep.macro_bia == Fraction(3, 2)
        assert rep.femto_bia_total == 3

    def test_two_user_gain(self):
        assert dof(NetworkConfig(K=2, N=2)).gain == Fraction(1, 3)

    @pytest.mark.parametrize("K", range(2, 8))
    @pytest.mark.parametrize("N", range(2, 5))
    def test_gain_closed_form(self, K, N):
        # exact rational identity, no tolerance
        assert dof(NetworkConfig(K=K, N=N)).gain == Fraction(K - 1, K + 1)

    @pytest.mark.parametrize("K,N", [(2, 2), (3, 2), (5, 3)])
    def test_message_counting(self, K, N):
        cfg = NetworkConfig(K=K, N=N)
        rep = dof(cfg)
        assert rep.macro_bia == Fraction(K * N, cfg.T)
        assert rep.femto_bia_total == K * Fraction(cfg.M, cfg.T)


class TestDetDProfile:
    def test_closed_form_three_users(self):
        cfg = NetworkConfig(K=3, N=2)
        plan = default_slot_plan(3)
        for c in np.linspace(0.05, 0.95, 19):
            got = det_d_profile(cfg, plan, 1, c)
            expected = c * (1 - c * c) / np.sqrt(1 + c * c)
            assert got == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("K,N", [(2, 2), (3, 3), (4, 2), (5, 3)])
    def test_closed_form_general(self, K, N):
        cfg = NetworkConfig(K=K, N=N)
        plan = default_slot_plan(K)
        for c in (0.2, 0.5, 0.8):
            got = det_d_profile(cfg, plan, 1, c)
            assert got == pytest.approx(profile_closed_form(c, K, N), abs=1e-12)

    def test_reference_value(self):
        cfg = NetworkConfig(K=3, N=2)
        plan = default_slot_plan(3)
        assert det_d_profile(cfg, plan, 1, 0.5299) == pytest.approx(0.3368, abs=1e-4)

    def test_boundary_degeneracy(self):
        cfg = NetworkConfig(K=3, N=2)
        plan = default_slot_plan(3)
        assert det_d_profile(cfg, plan, 1, 1e-9) < 1e-8
        assert det_d_profile(cfg, plan, 1, 1 - 1e-9) < 1e-8

    def test_symmetric_across_users(self):
        for K, N in [(2, 2), (3, 2), (5, 3)]:
            cfg = NetworkConfig(K=K, N=N)
            plan = default_slot_plan(K)
            vals = [det_d_profile(cfg, plan, k, 0.37) for k in range(1, K + 1)]
            assert np.ptp(vals) < 1e-12


class TestOptimizeC:
    def test_three_user_reference(self):
        cfg = NetworkConfig(K=3, N=2)
        c_star = optimize_c(cfg, default_slot_plan(3), tol=1e-6)
        assert c_star == pytest.approx(0.5299, abs=1e-3)

    def test_against_brute_force_grid(self):
        # independent oracle: 1e6-point grid on the closed form
        grid = np.linspace(1e-6, 1 - 1e-6, 1_000_001)
        oracle = grid[np.argmax(profile_closed_form(grid, 3, 2))]
        cfg = NetworkConfig(K=3, N=2)
        c_star = optimize_c(cfg, default_slot_plan(3), tol=1e-7)
        assert abs(c_star - oracle) < 1e-5

    @pytest.mark.parametrize("K,N", [(2, 2), (4, 3)])
    def test_grid_oracle_other_sizes(self, K, N):
        cfg = NetworkConfig(K=K, N=N)
        plan = default_slot_plan(K)
        # the closed form is validated against det_d_profile above, so the
        # dense grid on it is a legitimate independent argmax oracle
        grid = np.linspace(1e-6, 1 - 1e-6, 1_000_001)
        oracle = grid[np.argmax(profile_closed_form(grid, K, N))]
        assert abs(optimize_c(cfg, plan, tol=1e-6) - oracle) < 1e-4

    def test_amplitudes_do_not_move_argmax(self):
        # objective is invariant to positive rescaling; a and b do not enter
        plan = default_slot_plan(3)
        base = optimize_c(NetworkConfig(K=3, N=2, a=1.0, b=1.0), plan)
        scaled = optimize_c(NetworkConfig(K=3, N=2, a=50.0, b=9.0), plan)
        assert base == pytest.approx(scaled, abs=1e-9)


class TestRates:
    def test_macro_rate_vanishes_at_high_noise(self):
        cfg = NetworkConfig(K=3, N=2, noise_var=1e12)
        est = macro_rate(cfg, default_slot_plan(3), 1, trials=500, seed=1)
        assert 0 <= est.mean < 1e-6

    def test_femto_rate_vanishes_at_high_noise(self):
        cfg = NetworkConfig(K=3, N=2, noise_var=1e12)
        est = femto_rate(cfg, 1, trials=500, seed=1)
        assert 0 <= est.mean < 1e-6

    def test_optimal_c_beats_off_values(self):
        plan = default_slot_plan(3)
        rates = {
            c: macro_rate(
                NetworkConfig(K=3, N=2, c=c, noise_var=0.1), plan, 1,
                trials=2000, seed=5,
            ).mean
            for c in (0.2, 0.5299, 0.9)
        }
        assert rates[0.5299] >= rates[0.2]
        assert rates[0.5299] >= rates[0.9]

    def test_rate_increases_with_amplitude(self):
        plan = default_slot_plan(3)
        low = macro_rate(NetworkConfig(K=3, N=2, a=3.0), plan, 1, 1500, seed=9)
        high = macro_rate(NetworkConfig(K=3, N=2, a=6.0), plan, 1, 1500, seed=9)
        assert high.mean > low.mean

    def test_rate_monotone_in_noise(self):
        plan = default_slot_plan(3)
        means = [
            macro_rate(NetworkConfig(K=3, N=2, noise_var=nv), plan, 1, 1500, seed=4).mean
            for nv in (0.5, 1.0, 2.0, 4.0)
        ]
        assert all(a > b for a, b in zip(means, means[1:]))
        fem = [
            femto_rate(NetworkConfig(K=3, N=2, noise_var=nv), 1, 1500, seed=4).mean
            for nv in (0.5, 1.0, 2.0, 4.0)
        ]
        assert all(a > b for a, b in zip(fem, fem[1:]))

    def test_macro_exceeds_femto_at_defaults(self):
        plan = default_slot_plan(3)
        for nv in (2.0, 5.0, 10.0):
            cfg = NetworkConfig(K=3, N=2, noise_var=nv)
            mr = macro_rate(cfg, plan, 1, trials=3000, seed=11)
            fr = femto_rate(cfg, 1, trials=3000, seed=11)
            assert mr.mean > fr.mean

    def test_gram_form_matches_full_form(self):
        # push-through identity: det(I_M + r H^H H) == det(I_MrT + r H H^H)
        cfg = NetworkConfig(K=4, N=3)
        plan = default_slot_plan(4)
        pat = switch_pattern(cfg, plan, 1)
        rng = substream(21, 0)
        for _ in range(20):
            h_f = complex_gaussian(rng, (cfg.Mr, cfg.N))
            from hetbia.network import ChannelSet

            ch = ChannelSet(
                macro=complex_gaussian(rng, (cfg.K, cfg.N, cfg.N)),
                cross=complex_gaussian(rng, (cfg.K, cfg.N, cfg.N)),
                femto=np.broadcast_to(h_f, (cfg.K, cfg.Mr, cfg.N)).copy(),
            )
            H = femto_effective_channel(cfg, ch, pat, 1).H_normalized
            r = 0.7
            gram = np.linalg.det(np.eye(cfg.M) + r * H.conj().T @ H).real
            full = np.linalg.det(np.eye(cfg.Mr * cfg.T) + r * H @ H.conj().T).real
            assert gram == pytest.approx(full, rel=1e-10)

    def test_estimates_deterministic_and_worker_independent(self):
        cfg = NetworkConfig(K=3, N=2)
        plan = default_slot_plan(3)
        a = macro_rate(cfg, plan, 1, trials=5000, seed=2, workers=1)
        b = macro_rate(cfg, plan, 1, trials=5000, seed=2, workers=4)
        assert a == b

    def test_std_err_definition(self):
        cfg = NetworkConfig(K=3, N=2)
        est = femto_rate(cfg, 1, trials=4000, seed=3)
        assert est.trials == 4000
        assert est.std_err > 0
        assert est.mean >= 0
        # single trial: sample std is zero by definition
        single = femto_rate(cfg, 1, trials=1, seed=3)
        assert single.std_err == 0.0

    def test_std_err_shrinks_with_trials(self):
        cfg = NetworkConfig(K=3, N=2)
        small = femto_rate(cfg, 1, trials=500, seed=6)
        large = femto_rate(cfg, 1, trials=8000, seed=6)
        assert large.std_err < small.std_err
