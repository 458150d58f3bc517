# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

import json

import numpy as np
import pytest

from avgopt import (
    DeliveryGridSpec,
    InvalidMdpError,
    TabularMdp,
    TrapChainSpec,
    build_delivery_grid,
    build_trap_chain,
    discounted_values,
    env_step,
    mdp_from_json,
    mdp_to_json,
)
from avgopt._exact import committed_policy, flat_gain
from avgopt._markov import recurrent_classes, stationary
from avgopt._mdp import (
    B_CYCLE,
    BLUE,
    CREDITED,
    DIVIDER,
    EMPTY,
    FROM_P1,
    FROM_P2,
    R_CYCLE,
    RED,
    S0,
)


N, E, S, W = range(4)


class TestTabularMdp:
    def test_arrays_are_frozen(self):
        """
        Transition and reward arrays can't be mutated after construction.
        """
        mdp = TabularMdp(np.ones((1, 1, 1)), np.zeros((1, 1)))

        with pytest.raises(ValueError):
            mdp.transition[0, 0, 0] = 0.5
        with pytest.raises(ValueError):
            mdp.reward[0, 0] = 1.0

    @pytest.mark.parametrize(
        ("P", "r"),
        [
            (np.full((2, 1, 2), 0.6), np.zeros((2, 1))),
            (np.array([[[1.5, -0.5]], [[0.5, 0.5]]]), np.zeros((2, 1))),
            (np.full((2, 1, 2), 0.5), np.array([[np.inf], [0.0]])),
            (np.full((2, 1, 2), 0.5), np.zeros((1, 2))),
            (np.full((2, 1, 3), 1 / 3), np.zeros((2, 1))),
            (np.zeros((0, 1, 0)), np.zeros((0, 1))),
        ],
    )
    def test_invalid(self, P, r):
        """
        Rows that don't sum to 1, negative probabilities, non-finite rewards
        and mismatched shapes are rejected.
        """
        with pytest.raises(InvalidMdpError):
            TabularMdp(P, r)

    def test_labels_and_start_validated(self):
        """
        Labels must match the states and start must be a valid state.
        """
        P, r = np.full((2, 1, 2), 0.5), np.zeros((2, 1))

        with pytest.raises(InvalidMdpError):
            TabularMdp(P, r, labels=("a",))
        with pytest.raises(InvalidMdpError):
            TabularMdp(P, r, start=2)

        assert "b" == TabularMdp(P, r, labels=("a", "b")).label(1)
        assert "1" == TabularMdp(P, r).label(1)

    def test_json_round_trip(self, rng, make_mdp):
        """
        MDPs survive a trip through JSON text unchanged.
        """
        mdp = make_mdp(rng, 4, 3)

        doc = json.loads(json.dumps(mdp_to_json(mdp)))
        back = mdp_from_json(json.dumps(doc))

        assert np.array_equal(mdp.transition, back.transition)
        assert np.array_equal(mdp.reward, back.reward)
        assert back.cycle_mask is None

    def test_json_keeps_cycles_and_labels(self):
        """
        Cycle masks, labels, and the start state are part of the document.
        """
        mdp = build_delivery_grid(small_grid())

        back = mdp_from_json(mdp_to_json(mdp))

        assert np.array_equal(mdp.cycle_mask, back.cycle_mask)
        assert mdp.labels == back.labels
        assert mdp.start == back.start

    @pytest.mark.parametrize(
        "doc",
        [
            "{}",
            '{"n_states": 2, "n_actions": 1, "transitions": [[1, 0]], "rewards": [[0], [0]]}',
            '{"n_states": "x"}',
        ],
    )
    def test_json_malformed(self, doc):
        """
        Malformed documents raise InvalidMdpError.
        """
        with pytest.raises(InvalidMdpError):
            mdp_from_json(doc)


class TestEnvStep:
    def test_deterministic(self, rng):
        """
        A deterministic row always yields its successor.
        """
        P = np.zeros((3, 1, 3))
        P[0, 0, 2] = P[1, 0, 0] = P[2, 0, 1] = 1.0
        mdp = TabularMdp(P, np.arange(3.0).reshape(3, 1))

        steps = {env_step(mdp, 0, 0, rng) for _ in range(100)}

        assert 1 == len(steps)
        (tr,) = steps
        assert (0, 0, 0.0, 2, False) == (
            tr.state,
            tr.action,
            tr.reward,
            tr.next_state,
            tr.cycle_completed,
        )

    def test_uniform_row_frequency(self, rng):
        """
        A uniform row over two successors hits each half of the time, within
        3 binomial sigma.
        """
        mdp = TabularMdp(np.full((2, 1, 2), 0.5), np.zeros((2, 1)))
        n = 100_000

        hits = sum(env_step(mdp, 0, 0, rng).next_state for _ in range(n))

        assert abs(hits / n - 0.5) < 3 * np.sqrt(0.25 / n)

    @pytest.mark.parametrize(("s", "a"), [(-1, 0), (9, 0), (0, 2), (0, -1)])
    def test_invalid_ids(self, rng, s, a):
        """
        Out-of-range states and actions are rejected.
        """
        with pytest.raises(InvalidMdpError):
            env_step(build_trap_chain(), s, a, rng)


class TestTrapChain:
    def test_structure(self, rng):
        """
        Nine states; red and blue at S0 enter their cycles, which close onto
        themselves.
        """
        mdp = build_trap_chain()

        assert (9, 2) == (mdp.n_states, mdp.n_actions)
        assert R_CYCLE[0] == env_step(mdp, S0, RED, rng).next_state
        assert B_CYCLE[0] == env_step(mdp, S0, BLUE, rng).next_state
        assert R_CYCLE[0] == env_step(mdp, R_CYCLE[-1], RED, rng).next_state
        assert B_CYCLE[0] == env_step(mdp, B_CYCLE[-1], BLUE, rng).next_state
        assert "S11" == mdp.label(R_CYCLE[0])

    def test_two_closed_cycles(self):
        """
        S0 is transient and each cycle is a recurrent class.
        """
        classes = recurrent_classes(build_trap_chain().transition.mean(axis=1))

        assert [list(R_CYCLE), list(B_CYCLE)] == sorted(
            c.tolist() for c in classes
        )

    @pytest.mark.parametrize("gamma", TrapChainSpec().discount_probe_set)
    def test_closed_forms(self, gamma):
        """
        Discounted evaluation reproduces both closed forms to 1e-10.
        """
        mdp = build_trap_chain()

        v_red = discounted_values(mdp, committed_policy(mdp, RED), gamma)
        v_blue = discounted_values(mdp, committed_policy(mdp, BLUE), gamma)

        assert v_red[R_CYCLE[0]] == pytest.approx(
            gamma * (2 - gamma) / (1 - gamma**4), abs=1e-10
        )
        assert v_blue[B_CYCLE[0]] == pytest.approx(
            1 / (1 - gamma**4), abs=1e-10
        )
        assert v_red[R_CYCLE[0]] < v_blue[B_CYCLE[0]]

    def test_half(self):
        """
        At γ = 0.5 the values are 0.8 and 16/15.
        """
        mdp = build_trap_chain()

        v_red = discounted_values(mdp, committed_policy(mdp, RED), 0.5)
        v_blue = discounted_values(mdp, committed_policy(mdp, BLUE), 0.5)

        assert 0.8 == pytest.approx(v_red[R_CYCLE[0]], abs=1e-12)
        assert 1.0666667 == pytest.approx(v_blue[B_CYCLE[0]], abs=1e-7)

    def test_spec_validation(self):
        """
        Probe discounts must lie in (0, 1) and both cycles need 4 rewards.
        """
        with pytest.raises(InvalidMdpError):
            TrapChainSpec(discount_probe_set=(0.5, 1.0))
        with pytest.raises(InvalidMdpError):
            TrapChainSpec(r_edge_rewards=(0.0, 2.0, -1.0))


def small_grid():
    return DeliveryGridSpec(
        width=5,
        height=5,
        pickup_p1=(0, 4),
        pickup_p2=(4, 4),
        dropoff=(2, 0),
        trap_junction=(0, 2),
        alt_junction=(4, 2),
        walls=frozenset(),
    )


class TestDeliveryGrid:
    def test_default_size(self):
        """
        The default grid is 10x10 with four carry flags and four moves.
        """
        mdp = build_delivery_grid()

        assert (400, 4) == (mdp.n_states, mdp.n_actions)
        assert DeliveryGridSpec().state((4, 0), EMPTY) == mdp.start

    def test_drop_off_p2(self, rng):
        """
        Entering the drop-off carrying from P2 pays 100, empties the hands and
        completes a cycle.
        """
        spec = DeliveryGridSpec()
        mdp = build_delivery_grid(spec)

        tr = env_step(mdp, spec.state((5, 0), FROM_P2), W, rng)

        assert 100.0 == tr.reward
        assert tr.cycle_completed
        assert spec.state((4, 0), EMPTY) == tr.next_state

    def test_drop_off_p1(self, rng):
        """
        Parcels from P1 pay 50.
        """
        spec = DeliveryGridSpec()
        mdp = build_delivery_grid(spec)

        tr = env_step(mdp, spec.state((3, 0), FROM_P1), E, rng)

        assert 50.0 == tr.reward
        assert tr.cycle_completed

    def test_junctions(self, rng):
        """
        Junctions pay once per trip: empty hands collect, credited ones don't.
        """
        spec = DeliveryGridSpec()
        mdp = build_delivery_grid(spec)

        trap = env_step(mdp, spec.state((3, 3), EMPTY), N, rng)
        alt = env_step(mdp, spec.state((6, 3), EMPTY), N, rng)
        again = env_step(mdp, spec.state((3, 3), CREDITED), N, rng)

        assert 20.0 == trap.reward
        assert spec.state((3, 4), CREDITED) == trap.next_state
        assert 10.0 == alt.reward
        assert 0.0 == again.reward
        assert not trap.cycle_completed

    def test_plain_move_and_bump(self, rng):
        """
        Plain moves pay nothing; walking into the border stays put.
        """
        spec = DeliveryGridSpec()
        mdp = build_delivery_grid(spec)
        corner = spec.state((0, 0), EMPTY)

        move = env_step(mdp, spec.state((5, 5), EMPTY), E, rng)
        bump = env_step(mdp, corner, W, rng)

        assert 0.0 == move.reward
        assert spec.state((6, 5), EMPTY) == move.next_state
        assert corner == bump.next_state

    def test_walls_block(self, rng):
        """
        Walls can't be entered.
        """
        spec = DeliveryGridSpec(walls=frozenset({(5, 6)}))
        mdp = build_delivery_grid(spec)
        s = spec.state((5, 5), EMPTY)

        assert s == env_step(mdp, s, N, rng).next_state

    def test_pickup_sets_flag(self, rng):
        """
        Entering a pickup with empty hands picks up a parcel.
        """
        spec = DeliveryGridSpec()
        mdp = build_delivery_grid(spec)

        tr = env_step(mdp, spec.state((8, 7), CREDITED), N, rng)

        assert spec.state((8, 8), FROM_P2) == tr.next_state

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"pickup_p1": (8, 8)},
            {"dropoff": (10, 0)},
            {"walls": frozenset({(4, 0)})},
            {"width": 0},
            {"parcel_reward_p2": float("nan")},
        ],
    )
    def test_invalid_spec(self, kwargs):
        """
        Overlapping, out-of-bounds or walled special cells are rejected.
        """
        with pytest.raises(InvalidMdpError):
            DeliveryGridSpec(**kwargs)

    def test_disconnected_grid_rejected(self):
        """
        Walls that cut the grid apart make it multichain and are rejected.
        """
        walls = frozenset((x, 2) for x in range(5))

        with pytest.raises(InvalidMdpError, match="unichain"):
            build_delivery_grid(
                DeliveryGridSpec(
                    width=5,
                    height=5,
                    walls=walls,
                    pickup_p1=(0, 4),
                    pickup_p2=(4, 4),
                    dropoff=(2, 0),
                    trap_junction=(0, 3),
                    alt_junction=(4, 3),
                )
            )

    def test_uniform_policy_unichain(self):
        """
        Under the uniform policy the compiled grid has a unique stationary
        distribution with residual < 1e-10.
        """
        mdp = build_delivery_grid(small_grid())
        P = mdp.transition.mean(axis=1)

        d = stationary(P, tol=1e-10)

        assert 1 == len(recurrent_classes(P))
        assert np.max(np.abs(d @ P - d)) < 1e-10

    def test_rows_stochastic(self):
        """
        Every compiled row sums to 1.
        """
        mdp = build_delivery_grid()

        assert np.max(np.abs(mdp.transition.sum(axis=2) - 1)) < 1e-12

    def test_divider_separates_routes(self, rng):
        """
        The default divider blocks the way north from the drop-off; the halves
        only meet along the bottom row.
        """
        spec = DeliveryGridSpec()
        mdp = build_delivery_grid(spec)
        home = spec.state((4, 0), EMPTY)

        assert DIVIDER == spec.walls
        assert home == env_step(mdp, home, N, rng).next_state
        assert (
            spec.state((3, 5), EMPTY)
            == env_step(mdp, spec.state((3, 5), EMPTY), E, rng).next_state
        )


def greedy_policy(mdp, gamma):
    """
    Deterministic discount-optimal policy by policy iteration.
    """
    A = mdp.n_actions
    policy = np.full((mdp.n_states, A), 1.0 / A)
    v = discounted_values(mdp, policy, gamma)
    for _ in range(100):
        q = mdp.reward + gamma * mdp.transition @ v
        policy = np.eye(A)[np.argmax(q, axis=1)]
        improved = discounted_values(mdp, policy, gamma)
        if np.max(improved - v) < 1e-9:
            return policy
        v = improved

    pytest.fail("policy iteration did not settle")


def cycles(mdp, policy, steps=240):
    """
    Follow a deterministic *policy* from the start; (reward, length) of every
    completed cycle.
    """
    done = []
    s, total, length = mdp.start, 0.0, 0
    for _ in range(steps):
        a = int(np.argmax(policy[s]))
        total += mdp.reward[s, a]
        length += 1
        completed = mdp.cycle_mask[s, a]
        s = int(np.argmax(mdp.transition[s, a]))
        if completed:
            done.append((total, length))
            total, length = 0.0, 0

    return done


class TestDeliveryGridOptimum:
    def test_gain_optimal_route_is_p2(self):
        """
        Near-undiscounted control takes the P2 route through the alternative
        junction: every cycle pays 110 in 24 steps.
        """
        mdp = build_delivery_grid()

        done = cycles(mdp, greedy_policy(mdp, 0.999))

        assert len(done) >= 5
        assert {(110.0, 24)} == set(done)

    def test_gain_of_p2_route(self):
        """
        The gain of the near-undiscounted optimum is 110/24 and beats the
        P1 route's 70/22.
        """
        mdp = build_delivery_grid()

        gain = flat_gain(mdp, greedy_policy(mdp, 0.999), start=mdp.start)

        assert pytest.approx(110 / 24) == gain
        assert gain > 70 / 22

    def test_discounted_optimal_route_is_p1(self):
        """
        At γ=0.9 the trap wins: every cycle takes the P1 route through the
        trap junction and pays 70 in 22 steps.
        """
        mdp = build_delivery_grid()

        done = cycles(mdp, greedy_policy(mdp, 0.9))

        assert len(done) >= 5
        assert {(70.0, 22)} == set(done)

    def test_open_grid_mixes_routes(self):
        """
        Without the divider the trap junction can be combined with the P2
        parcel, which pays more per step than the intended P2 route.
        """
        mdp = build_delivery_grid(DeliveryGridSpec(walls=frozenset()))

        done = cycles(mdp, greedy_policy(mdp, 0.999))

        assert {120.0} == {total for total, _ in done}
