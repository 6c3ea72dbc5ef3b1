import numpy as np
import pytest

import swarmcl as sc
from swarmcl.perception import LocalObservation
from swarmcl.policy import (
    PolicyDescriptor,
    PolicyError,
    init_params,
    policy_forward,
    unpack_params,
)

U_MAX = 1.0


def random_obs(rng, m):
    ids = np.arange(m)
    rel = rng.normal(size=(m, 4))
    rel[0] = 0.0  # self entry
    return LocalObservation(robot=0, neighbor_ids=ids, rel=rel)


@pytest.fixture
def desc():
    return sc.make_descriptor(goal_conditioned=False)


class TestInit:
    def test_deterministic_in_seed(self, desc):
        assert np.array_equal(init_params(desc, 5), init_params(desc, 5))
        assert not np.array_equal(init_params(desc, 5), init_params(desc, 6))

    def test_biases_zero(self, desc):
        enc, attn, dec = unpack_params(desc, init_params(desc, 0))
        for _, b in enc + dec:
            assert np.all(b == 0)

    def test_parameter_count_matches_independent_arithmetic(self, desc):
        # [DERIVED] counted by hand from the descriptor:
        # enc 4->16 and 16->16 (weights+biases), attention vector 16,
        # dec 16->16 and 16->2 (weights+biases)
        expected = (4 * 16 + 16) + (16 * 16 + 16) + 16 + (16 * 16 + 16) + (16 * 2 + 2)
        assert desc.param_count == expected
        assert init_params(desc, 0).size == expected

    def test_goal_conditioned_count(self):
        d = sc.make_descriptor(goal_conditioned=True)
        expected = (4 * 16 + 16) + (16 * 16 + 16) + 16 + (20 * 16 + 16) + (16 * 2 + 2)
        assert d.param_count == expected

    def test_zero_dimension_layer_rejected(self):
        with pytest.raises(PolicyError):
            PolicyDescriptor(embed=16, enc_sizes=(4, 0, 16), dec_sizes=(16, 16, 2))

    def test_weights_within_xavier_bound(self, desc):
        enc, attn, dec = unpack_params(desc, init_params(desc, 1))
        for W, _ in enc + dec:
            bound = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
            assert np.max(np.abs(W)) <= bound


class TestForward:
    def test_permutation_invariance(self, desc):
        rng = np.random.default_rng(0)
        theta = init_params(desc, 0)
        for _ in range(200):
            m = rng.integers(2, 7)
            obs = random_obs(rng, m)
            u = policy_forward(theta, desc, obs, U_MAX)
            perm = rng.permutation(m)
            shuffled = LocalObservation(0, obs.neighbor_ids[perm], obs.rel[perm])
            u2 = policy_forward(theta, desc, shuffled, U_MAX)
            assert np.max(np.abs(u - u2)) < 1e-12

    def test_zero_parameters_give_zero_output(self, desc):
        rng = np.random.default_rng(1)
        theta = np.zeros(desc.param_count)
        for _ in range(50):
            u = policy_forward(theta, desc, random_obs(rng, 4), U_MAX)
            assert np.array_equal(u, np.zeros(2))

    def test_output_bounded_by_u_max(self, desc):
        rng = np.random.default_rng(2)
        for trial in range(100):
            theta = rng.normal(size=desc.param_count) * 5
            u = policy_forward(theta, desc, random_obs(rng, 3), U_MAX)
            assert np.max(np.abs(u)) <= U_MAX

    def test_gradient_matches_finite_differences(self, desc):
        # [DERIVED] central-difference oracle on a scalar of the output
        rng = np.random.default_rng(3)
        theta = init_params(desc, 3)
        obs = random_obs(rng, 3)
        w = np.array([0.7, -1.3])

        def value(th):
            return float(policy_forward(th, desc, obs, U_MAX) @ w)

        from swarmcl import autodiff as ad
        from swarmcl.rollout import BatchedPolicy

        tape = ad.Tape()
        t = tape.leaf(theta)
        policy = BatchedPolicy(t, desc, tape=tape)
        n = 3
        rel = np.zeros((n * n, 4))
        rel[:n] = obs.rel
        mask = np.zeros((n, n))
        mask[0, :] = 1.0
        u = policy.forward(ad.constant(rel), mask, U_MAX)
        root = ad.sum_(ad.mul(ad.slice_(u, (0, slice(None))), ad.constant(w)))
        g = ad.backward(tape, root)[t.nid]

        h = 1e-5
        idx = rng.choice(theta.size, 80, replace=False)
        for i in idx:
            tp, tm = theta.copy(), theta.copy()
            tp[i] += h
            tm[i] -= h
            fd = (value(tp) - value(tm)) / (2 * h)
            rel_err = abs(fd - g[i]) / max(abs(fd), abs(g[i]), 1e-8)
            assert rel_err < 1e-5

    def test_batched_forward_matches_reference(self, desc):
        from swarmcl.rollout import rollout

        rng = np.random.default_rng(4)
        theta = init_params(desc, 9)
        world = sc.make_world("navigation", 0)
        x0 = rng.normal(size=(1, 4, 4)) * 0.4
        res = rollout(theta, desc, x0, 1, world)
        u_batch = (res.states[0, 1, :, 2:4] - x0[0, :, 2:4]) / world.dt
        A = sc.compute_adjacency(x0[0], world)
        for i in range(4):
            obs = sc.estimate_observation(x0[0], i, A, 0.0)
            u_ref = policy_forward(theta, desc, obs, world.u_max)
            assert np.max(np.abs(u_batch[i] - u_ref)) < 1e-12

    def test_goal_conditioned_needs_goal(self):
        d = sc.make_descriptor(goal_conditioned=True)
        theta = init_params(d, 0)
        obs = random_obs(np.random.default_rng(0), 2)
        with pytest.raises(PolicyError):
            policy_forward(theta, d, obs, U_MAX)

    def test_wrong_parameter_length_rejected(self, desc):
        with pytest.raises(PolicyError):
            policy_forward(np.zeros(3), desc,
                           random_obs(np.random.default_rng(0), 2), U_MAX)
