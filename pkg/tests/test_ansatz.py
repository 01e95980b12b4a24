import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dqc.ansatz import AlternatingBlocks, HardwareEfficient, ParamRotation, apply_ansatz, build_ansatz, init_theta
from dqc.errors import ConfigurationError
from dqc.observables import TotalZ, build_cost
from dqc.statevector import CNOT, StateVector, apply_cnot, expectation, new_zero_state


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    return StateVector(a / np.linalg.norm(a), n)


class TestHardwareEfficient:
    @pytest.mark.parametrize("n, d, count", [(6, 5, 90), (6, 24, 432), (2, 1, 6), (3, 0, 0)])
    def test_parameter_count(self, n, d, count):
        assert build_ansatz(HardwareEfficient(d), n).n_params == count

    def test_two_qubit_layer(self):
        t = build_ansatz(HardwareEfficient(1), 2)
        assert [type(op) for op in t.ops] == [ParamRotation] * 6 + [CNOT]
        assert [op.axis for op in t.rotations] == ["Z", "X", "Z"] * 2
        assert (t.ops[-1].control, t.ops[-1].target) == (0, 1)

    def test_linear_chain_without_wrap(self):
        t = build_ansatz(HardwareEfficient(2), 4)
        pairs = [(op.control, op.target) for op in t.ops if isinstance(op, CNOT)]
        assert pairs == [(0, 1), (1, 2), (2, 3)] * 2

    def test_layout_unique(self):
        t = build_ansatz(HardwareEfficient(3), 4)
        assert sorted(op.index for op in t.rotations) == list(range(t.n_params))
        assert len(set(t.layout)) == t.n_params

    def test_negative_depth(self):
        with pytest.raises(ConfigurationError):
            build_ansatz(HardwareEfficient(-1), 2)


class TestAlternatingBlocks:
    def test_block_wider_than_register(self):
        with pytest.raises(ConfigurationError):
            build_ansatz(AlternatingBlocks(5, 1, 2), 4)

    def test_shifted_layer_has_edge_blocks(self):
        # N=6, N_b=4: layer 0 blocks [0..3],[4,5]; layer 1 blocks [0,1],[2..5]
        t = build_ansatz(AlternatingBlocks(4, 1, 2), 6)
        pairs = [(op.control, op.target) for op in t.ops if isinstance(op, CNOT)]
        assert pairs == [(0, 1), (1, 2), (2, 3), (4, 5), (0, 1), (2, 3), (3, 4), (4, 5)]
        assert t.n_params == 2 * 3 * 6

    def test_every_qubit_rotated_each_layer(self):
        t = build_ansatz(AlternatingBlocks(2, 2, 3), 5)
        assert t.n_params == 3 * 2 * 3 * 5


class TestApply:
    def test_zero_angles_leave_only_cnots(self):
        t = build_ansatz(HardwareEfficient(1), 3)
        s = random_state(3, 0)
        ref = s.copy()
        for a, b in [(0, 1), (1, 2)]:
            apply_cnot(ref, a, b)
        apply_ansatz(s, t, np.zeros(t.n_params))
        np.testing.assert_allclose(s.amplitudes, ref.amplitudes, atol=1e-15)

    def test_single_qubit_flip(self):
        t = build_ansatz(HardwareEfficient(1), 1)
        s = apply_ansatz(new_zero_state(1), t, [0.0, math.pi, 0.0])
        assert expectation(s, build_cost(TotalZ(), 1)) == pytest.approx(-1.0, abs=1e-15)

    def test_length_mismatch(self):
        t = build_ansatz(HardwareEfficient(1), 2)
        with pytest.raises(ConfigurationError):
            apply_ansatz(new_zero_state(2), t, np.zeros(5))

    @given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31))
    def test_norm_preserved(self, n, d, seed):
        t = build_ansatz(HardwareEfficient(d), n)
        s = apply_ansatz(new_zero_state(n), t, init_theta(t, np.random.default_rng(seed)))
        assert abs(s.norm() - 1.0) < 1e-10

    @given(st.integers(0, 2**31), st.data())
    def test_two_pi_periodic_expectation(self, seed, data):
        t = build_ansatz(HardwareEfficient(2), 3)
        theta = init_theta(t, np.random.default_rng(seed))
        k = data.draw(st.integers(0, t.n_params - 1))
        shifted = theta.copy()
        shifted[k] += 2 * math.pi
        obs = build_cost(TotalZ(), 3)
        a = expectation(apply_ansatz(new_zero_state(3), t, theta), obs)
        b = expectation(apply_ansatz(new_zero_state(3), t, shifted), obs)
        assert a == pytest.approx(b, abs=1e-12)


class TestInit:
    def test_range_and_seed(self):
        t = build_ansatz(HardwareEfficient(5), 6)
        a = init_theta(t, np.random.default_rng(7))
        b = init_theta(t, np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)
        assert a.min() >= 0.0 and a.max() < 2 * math.pi
