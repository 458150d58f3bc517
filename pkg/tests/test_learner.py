# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

import numpy as np
import pytest

import avgopt

from avgopt import (
    ActorParams,
    ConfigError,
    CriticState,
    FeatureMap,
    HierarchySpec,
    InvalidHierarchyError,
    LearnerConfig,
    StackPair,
    StepSchedule,
    TabularMdp,
    Transition,
    actor_step,
    build_delivery_grid,
    build_trap_chain,
    critic_step,
    log_grad,
    average_reward,
    initial_distribution,
    one_step_kernel,
    policy_prob,
    solve_values,
    stationary_distribution,
    td_error,
    train,
    update_direction,
)
from avgopt._learner import default_trace_ids


FLAT = HierarchySpec(1, (), 2)
TWO = HierarchySpec(2, (2,), 2)


def transition(s=0, a=1, r=1.0, s_next=1):
    return Transition(
        state=s, action=a, reward=r, next_state=s_next, cycle_completed=False
    )


class TestStepSchedule:
    def test_rates(self):
        """
        Rates decay polynomially from their constants.
        """
        schedule = StepSchedule()

        assert 0.01 == schedule.actor(0)
        assert 0.05 == schedule.critic(0)
        assert 0.05 == schedule.gain(0)
        assert pytest.approx(0.01 * 100**-0.9) == schedule.actor(99)
        assert schedule.actor(10**6) / schedule.critic(10**6) < (
            schedule.actor(10) / schedule.critic(10)
        )

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"actor_power": 0.6, "critic_power": 0.6},
            {"actor_power": 1.1},
            {"critic_power": 0.5},
            {"actor_rate": 0.0},
            {"gain_rate": -1.0},
            {"horizon": 0.0},
            {"horizon": float("inf")},
            {"gain_power": 0.5},
        ],
    )
    def test_invalid(self, kwargs):
        """
        Powers must satisfy 0.5 < p_b < p_a <= 1; constants and the horizon
        must be positive.
        """
        with pytest.raises(ConfigError):
            StepSchedule(**kwargs)


    def test_horizon(self):
        """
        With horizon τ, the rates at t = τ are their constants times 2^-p.
        """
        schedule = StepSchedule(horizon=1_000.0, gain_power=1.0)

        assert 0.01 == schedule.actor(0)
        assert pytest.approx(0.01 * 2**-0.9) == schedule.actor(1_000)
        assert pytest.approx(0.05 * 2**-0.6) == schedule.critic(1_000)
        assert pytest.approx(0.05 / 2) == schedule.gain(1_000)


class TestLearnerConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"mode": "discounted"},
            {"mode": "discounted", "gamma": 1.0},
            {"mode": "average-reward", "gamma": 0.9},
            {"mode": "episodic"},
            {"total_steps": -1},
            {"window": 0},
            {"bound": 0.0},
        ],
    )
    def test_invalid(self, kwargs):
        """
        Discounted mode needs γ in (0, 1), average-reward mode forbids it.
        """
        with pytest.raises(ConfigError):
            LearnerConfig(**kwargs)

    def test_discounted(self):
        """
        A discounted config keeps its γ.
        """
        assert 0.9 == LearnerConfig(mode="discounted", gamma=0.9).gamma


class TestCritic:
    def test_td_error_flat(self):
        """
        At depth 1, δ = r - Ĵ + Q̂(s') - Q̂(s).
        """
        params = ActorParams.zeros(FLAT, 2)
        critic = CriticState(params.features, [np.array([1.0, 3.0])], gain=0.5)

        delta = td_error(transition(), StackPair(0, 0), critic, params)

        assert pytest.approx(1.0 - 0.5 + 3.0 - 1.0) == delta

    def test_td_error_discounted(self):
        """
        With γ, δ = r + γ Q̂(s') - Q̂(s) and Ĵ is ignored.
        """
        params = ActorParams.zeros(FLAT, 2)
        critic = CriticState(params.features, [np.array([1.0, 3.0])], gain=7.0)

        delta = td_error(transition(), StackPair(0, 0), critic, params, 0.5)

        assert pytest.approx(1.0 + 0.5 * 3.0 - 1.0) == delta

    def test_td_error_composes_levels(self):
        """
        Û mixes the kept option value and the parent value by β = 1/2.
        """
        params = ActorParams.zeros(TWO, 2)
        q0 = np.array([0.0, 2.0])  # (s, root)
        q1 = np.array([0.0, 0.0, 4.0, 8.0])  # (s, o¹)
        critic = CriticState(params.features, [q0, q1])

        delta = td_error(transition(), StackPair(1, 1), critic, params)

        # Û = 0.5 * Q̂_1(s'=1, o¹=1) + 0.5 * Q̂_0(s'=1)
        assert pytest.approx(1.0 + 0.5 * 8.0 + 0.5 * 2.0 - 0.0) == delta

    def test_step_average_reward(self):
        """
        Every depth moves towards the target by b_t times its own error and
        Ĵ moves by η_t (r - Ĵ).
        """
        params = ActorParams.zeros(TWO, 2)
        critic = CriticState(params.features)
        schedule = StepSchedule()

        critic_step(critic, transition(r=2.0), StackPair(1, 0), params, schedule, 0)

        assert np.array_equal([0.1, 0.0], critic.weights[0])
        assert np.array_equal([0.0, 0.1, 0.0, 0.0], critic.weights[1])
        assert pytest.approx(0.1) == critic.gain

    def test_step_discounted(self):
        """
        Discounted critics leave Ĵ alone.
        """
        params = ActorParams.zeros(FLAT, 2)
        critic = CriticState(params.features)

        critic_step(
            critic, transition(), StackPair(0, 0), params, StepSchedule(), 0, 0.9
        )

        assert 0.0 == critic.gain
        assert pytest.approx(0.05) == critic.weights[0][0]

    @pytest.mark.parametrize(
        "spec",
        [FLAT, TWO, HierarchySpec(3, (2, 2), 2)],
        ids=lambda s: f"N={s.depth}",
    )
    def test_exact_critic_has_zero_mean_error(
        self, rng, make_mdp, make_params, spec
    ):
        """
        With the exact values as critic, δ averages to zero over actions and
        next states at every state and stack.
        """
        mdp = make_mdp(rng, 3, 2)
        params = make_params(rng, spec, 3)
        values, _ = solve_values(mdp, params)
        critic = CriticState(
            params.features,
            [q.ravel() for q in values.q_omega],
            values.gain,
        )
        N = spec.depth

        for s in range(3):
            for m in range(spec.n_stacks):
                pi = policy_prob(params, N, s, spec.prefix_tuple(N - 1, m))
                mean = sum(
                    pi[a]
                    * mdp.transition[s, a, t]
                    * td_error(
                        transition(s, a, mdp.reward[s, a], t),
                        StackPair(m, m),
                        critic,
                        params,
                    )
                    for a in range(2)
                    for t in range(3)
                )

                assert pytest.approx(0.0, abs=1e-9) == mean

    def test_undiscounted_matches_average_reward(self, rng, make_params):
        """
        With γ = 1 and Ĵ = 0 both modes give the same δ.
        """
        params = make_params(rng, TWO, 2)
        critic = CriticState(
            params.features,
            [np.array([0.4, -1.0]), np.array([0.3, 2.0, -0.5, 1.5])],
        )
        tr = transition(r=0.7)
        stacks = StackPair(1, 0)

        assert pytest.approx(
            td_error(tr, stacks, critic, params)
        ) == td_error(tr, stacks, critic, params, 1.0)

    def test_weights_validated(self):
        """
        Weight vectors must match the feature dimensions.
        """
        fm = FeatureMap.tabular(TWO, 2)

        with pytest.raises(InvalidHierarchyError):
            CriticState(fm, [np.zeros(2)])
        with pytest.raises(InvalidHierarchyError):
            CriticState(fm, [np.zeros(2), np.zeros(3)])

    def test_table(self):
        """
        Tabular critic tables are the weights reshaped to (S, P_k).
        """
        fm = FeatureMap.tabular(TWO, 2)
        critic = CriticState(fm, [np.zeros(2), np.arange(4.0)])

        assert np.array_equal([[0.0, 1.0], [2.0, 3.0]], critic.table(1))
        assert 3.0 == critic.estimate(1, 1, 1)


class TestActor:
    def test_flat_direction_is_policy_gradient(self, rng, make_params):
        """
        At depth 1, Ψ = Q̂_U ∇ log π(a | s).
        """
        params = make_params(rng, FLAT, 2)
        critic = CriticState(params.features, [np.array([0.3, -0.2])], 0.1)
        tr = transition(r=1.5)

        direction = update_direction(params, critic, tr, StackPair(0, 0))

        assert pytest.approx(1.5 - 0.1 - 0.2) == direction.q_u
        assert np.allclose(
            direction.q_u * log_grad(params, 0, (0,), 1, 1).psi_action,
            direction.vector,
        )

    def test_baseline(self, rng, make_params):
        """
        With the baseline the action term scales by Q̂_U - Q̂_Ω(s, o); the
        other terms and the reported Q̂_U are unchanged.
        """
        params = make_params(rng, TWO, 2)
        critic = CriticState(
            params.features,
            [np.array([0.4, -1.0]), np.array([0.3, 2.0, -0.5, 1.5])],
            0.1,
        )
        tr = transition(r=1.5)
        stacks = StackPair(1, 0)
        pi2 = params.blocks["pi2"]

        plain = update_direction(params, critic, tr, stacks)
        based = update_direction(params, critic, tr, stacks, baseline=True)

        # Q̂_1(s=0, o¹=1) = 2.0
        assert plain.q_u == based.q_u
        assert np.allclose(
            (plain.q_u - 2.0) / plain.q_u * plain.vector[pi2],
            based.vector[pi2],
        )
        rest = np.ones(params.dimension, dtype=bool)
        rest[pi2] = False
        assert np.array_equal(plain.vector[rest], based.vector[rest])

    def test_termination_term(self):
        """
        The termination block moves by -Â (1 - β) at the arrival context.
        """
        params = ActorParams.zeros(TWO, 2)
        q0 = np.array([0.0, 2.0])
        q1 = np.array([0.0, 0.0, 4.0, 8.0])
        critic = CriticState(params.features, [q0, q1])

        direction = update_direction(
            params, critic, transition(), StackPair(1, 0)
        )

        beta = direction.vector[params.blocks["beta1"]]
        # Â = Q̂_1(1, o¹=1) - Q̂_0(1) = 6, β = 1/2
        assert np.allclose([0.0, 0.0, 0.0, -3.0], beta)

    def test_option_term(self):
        """
        The option block moves towards better-valued options at s', weighted
        by the termination probability.
        """
        params = ActorParams.zeros(TWO, 2)
        q0 = np.array([0.0, 2.0])
        q1 = np.array([0.0, 0.0, 4.0, 8.0])
        critic = CriticState(params.features, [q0, q1])

        direction = update_direction(
            params, critic, transition(), StackPair(1, 0)
        )

        pi1 = direction.vector[params.blocks["pi1"]].reshape(2, 2)
        # β · π (q - π·q) = 0.5 · 0.5 · (∓2)
        assert np.allclose([[0.0, 0.0], [-0.5, 0.5]], pi1)

    def test_step_projects(self):
        """
        Updates are clamped into the projection box.
        """
        params = ActorParams.zeros(FLAT, 2, bound=0.01)
        critic = CriticState(params.features)
        schedule = StepSchedule(actor_rate=1.0)

        actor_step(
            params, critic, transition(r=100.0), StackPair(0, 0), schedule, 0
        )

        assert 0.01 == params.policy[1][0, 1]
        assert -0.01 == params.policy[1][0, 0]
        assert np.all(np.abs(params.vector()) <= 0.01)


def two_state_mdp():
    P = np.zeros((2, 2, 2))
    P[:, 0, 0] = 1.0
    P[:, 1, 1] = 1.0
    return TabularMdp(P, np.array([[0.0, 1.0], [0.0, 1.0]]))


class TestTrain:
    def test_deterministic(self):
        """
        Same config and seed give a bit-identical record.
        """
        mdp = build_trap_chain()
        config = LearnerConfig(total_steps=2_000, seed=3, record_every=50)

        a = train(mdp, TWO, config)
        b = train(mdp, TWO, config)

        assert np.array_equal(a.curve, b.curve)
        assert np.array_equal(a.jhat, b.jhat)
        assert np.array_equal(a.traces, b.traces)
        assert np.array_equal(a.final_params.vector(), b.final_params.vector())

    def test_seed_matters(self):
        """
        Different seeds give different runs.
        """
        mdp = two_state_mdp()

        a = train(mdp, TWO, LearnerConfig(total_steps=500, seed=1))
        b = train(mdp, TWO, LearnerConfig(total_steps=500, seed=2))

        assert not np.array_equal(
            a.final_params.vector(), b.final_params.vector()
        )

    def test_windows(self):
        """
        Without cycles the curve has one row per window.
        """
        record = train(
            two_state_mdp(),
            TWO,
            LearnerConfig(total_steps=1_000, window=100, record_every=250),
        )

        assert not record.cyclic
        assert (10, 4) == record.curve.shape
        assert np.array_equal(np.arange(100, 1_001, 100), record.curve[:, 0])
        assert np.array_equal(np.arange(1, 11), record.curve[:, 1])
        assert np.all((record.curve[:, 2] >= 0.0) & (record.curve[:, 2] <= 1.0))
        assert np.array_equal([250, 500, 750, 1000], record.jhat[:, 0])
        assert (4, 3) == record.traces.shape

    def test_cycles(self):
        """
        On the delivery grid every row is one completed delivery.
        """
        record = train(
            build_delivery_grid(),
            HierarchySpec(2, (2,), 4),
            LearnerConfig(total_steps=20_000, seed=1),
        )

        assert record.cyclic
        assert np.array_equal(
            np.arange(1, record.curve.shape[0] + 1), record.curve[:, 1]
        )
        assert np.all(record.curve[:, 2] >= 50.0)
        assert np.all(np.diff(record.curve[:, 0]) > 0)

    def test_trace_ids(self):
        """
        Explicit ids are traced; q ids refer to critic weights.
        """
        config = LearnerConfig(
            total_steps=200,
            record_every=100,
            trace_param_ids=("q1:2", "beta1:0", "pi2:3:1"),
        )

        record = train(two_state_mdp(), TWO, config)

        assert ("q1:2", "beta1:0", "pi2:3:1") == record.trace_ids
        assert record.traces[-1, 0] == record.final_critic.weights[1][2]
        assert record.traces[-1, 1] == record.final_params.block("beta1")[0]

    @pytest.mark.parametrize(
        "pid", ["q5:0", "q1:99", "q-1:0", "q0:-1", "pi7:0:0"]
    )
    def test_unknown_trace_id(self, pid):
        """
        Unknown ids are rejected before training.
        """
        config = LearnerConfig(total_steps=10, trace_param_ids=(pid,))

        with pytest.raises(InvalidHierarchyError):
            train(two_state_mdp(), TWO, config)

    def test_default_trace_ids(self):
        """
        Defaults draw one id per family and are seed-stable.
        """
        params = ActorParams.zeros(HierarchySpec(3, (2, 2), 2), 3)

        ids = default_trace_ids(params, 4)

        assert ids == default_trace_ids(params, 4)
        assert ["q2", "pi3", "pi1"] == [i.split(":")[0] for i in ids]
        assert 2 == len(default_trace_ids(ActorParams.zeros(FLAT, 3), 0))

    def test_mismatched_mdp(self):
        """
        The hierarchy must fit the MDP's actions.
        """
        with pytest.raises(InvalidHierarchyError):
            train(build_trap_chain(), HierarchySpec(1, (), 3), LearnerConfig())

    def test_testing_caps_steps(self):
        """
        In test mode the number of steps is capped.
        """
        avgopt.set_testing(True, steps=300)

        record = train(
            two_state_mdp(), TWO, LearnerConfig(total_steps=10_000, window=100)
        )

        assert 300 == record.steps
        assert 3 == record.curve.shape[0]

    def test_reports_progress(self):
        """
        Hooks get periodic progress and exactly one finished event.
        """
        events = []
        avgopt.instrumentation.set_on_progress_hooks([events.append])

        train(
            two_state_mdp(),
            TWO,
            LearnerConfig(total_steps=1_000, progress_every=400),
            name="x",
        )

        assert [("progress", 400), ("progress", 800), ("finished", 1000)] == [
            (d.event, d.step) for d in events
        ]
        assert {"x"} == {d.name for d in events}

    def test_freeze_actor(self):
        """
        A frozen actor keeps θ at zero while the critic learns.
        """
        record = train(
            two_state_mdp(),
            TWO,
            LearnerConfig(total_steps=500, freeze_actor=True),
        )

        assert not np.any(record.final_params.vector())
        assert record.final_critic.gain > 0.0
        assert np.any(record.final_critic.weights[1])

    def test_cycle_states(self):
        """
        Every completed cycle records the state the drop-off was entered
        from; non-cyclic runs record none.
        """
        mdp = build_delivery_grid()
        record = train(
            mdp,
            HierarchySpec(1, (), 4),
            LearnerConfig(total_steps=20_000, seed=2),
        )
        windows = train(two_state_mdp(), TWO, LearnerConfig(total_steps=300))

        assert record.curve.shape[0] == record.cycle_states.shape[0]
        assert np.all(mdp.cycle_mask[record.cycle_states].any(axis=1))
        assert 0 == windows.cycle_states.size

    def test_discounted_keeps_jhat(self):
        """
        Discounted runs never move Ĵ.
        """
        record = train(
            two_state_mdp(),
            TWO,
            LearnerConfig(total_steps=500, mode="discounted", gamma=0.9),
        )

        assert np.all(0.0 == record.jhat[:, 1])


@pytest.mark.slow
class TestLearning:
    def test_finds_rewarding_action(self):
        """
        On a two-state MDP where action 1 always pays, Ĵ approaches 1.
        """
        record = train(
            two_state_mdp(),
            TWO,
            LearnerConfig(
                total_steps=50_000,
                schedule=StepSchedule(actor_rate=1.0, actor_power=0.7),
            ),
        )

        assert record.final_critic.gain > 0.8

    def test_trap_chain_gain(self):
        """
        On the trap chain Ĵ settles within 1e-2 of the exact gain 1/4.
        """
        record = train(
            build_trap_chain(), TWO, LearnerConfig(total_steps=200_000)
        )

        assert pytest.approx(0.25, abs=1e-2) == record.final_critic.gain

    def test_trap_chain_plateau(self):
        """
        Over the last tenth of a long trap-chain run neither θ nor the critic
        moves by more than 1e-2, and Ĵ matches the exact gain of the final
        policy.
        """
        mdp = build_trap_chain()
        params = ActorParams.zeros(TWO, mdp.n_states)
        theta_ids = tuple(
            params.coordinate_name(i) for i in range(params.dimension)
        )
        q_ids = tuple(
            f"q{k}:{i}" for k in range(2) for i in range(params.features.dim(k))
        )

        record = train(
            mdp,
            TWO,
            LearnerConfig(
                total_steps=500_000,
                trace_param_ids=theta_ids + q_ids,
                record_every=5_000,
                progress_every=100_000,
            ),
        )
        tail = record.traces[record.trace_steps >= 450_000]
        theta = tail[:, : len(theta_ids)]
        final = record.final_params
        exact = average_reward(mdp, final, initial_distribution(final, mdp.start))

        assert np.max(np.abs(theta - theta[0])) < 1e-2
        assert np.max(np.ptp(tail, axis=0)) < 1e-2
        assert pytest.approx(exact, abs=1e-2) == record.final_critic.gain

    def test_frozen_critic_matches_exact_values(self, rng, make_mdp):
        """
        Under a frozen uniform flat policy on a 3-state MDP, the centered
        critic matches the exact differential values within 1e-2 and Ĵ the
        gain within 1e-3 after 10⁶ steps.
        """
        mdp = make_mdp(rng, 3, 2, low=0.0, high=1.0)
        record = train(
            mdp,
            FLAT,
            LearnerConfig(
                total_steps=1_000_000,
                freeze_actor=True,
                # Ĵ is the running mean of the rewards.
                schedule=StepSchedule(
                    critic_rate=0.5,
                    critic_power=0.7,
                    actor_power=1.0,
                    gain_rate=1.0,
                    gain_power=1.0,
                ),
                record_every=100_000,
                progress_every=1_000_000,
            ),
        )
        params = record.final_params
        values, _ = solve_values(mdp, params)
        d = stationary_distribution(one_step_kernel(mdp, params)).by_stack()
        table = record.final_critic.table(0)

        centered = table - (d * table).sum()

        assert np.max(np.abs(centered - values.q_omega[0])) < 1e-2
        assert pytest.approx(values.gain, abs=1e-3) == record.final_critic.gain


def bandit():
    """
    One state, two arms; arm 1 pays 1, arm 0 nothing.
    """
    return TabularMdp(np.ones((1, 2, 1)), np.array([[0.0, 1.0]]))


# Near-constant rates for the first 10⁴ steps, then a slow decay.
BANDIT_SCHEDULE = StepSchedule(
    actor_rate=0.01, critic_rate=0.1, gain_rate=0.1, horizon=10_000.0
)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(10))
def test_bandit_prefers_better_arm(seed):
    """
    With two options over two arms, the stationary probability of the better
    arm exceeds 0.9 after 5·10⁴ steps, and the exact gain went up.
    """
    mdp = bandit()
    record = train(
        mdp,
        TWO,
        LearnerConfig(total_steps=50_000, seed=seed, schedule=BANDIT_SCHEDULE),
    )
    params = record.final_params
    d = stationary_distribution(one_step_kernel(mdp, params)).by_stack()[0]

    better = sum(
        d[m] * policy_prob(params, 2, 0, TWO.prefix_tuple(1, m))[1]
        for m in range(TWO.n_stacks)
    )

    assert better > 0.9
    assert average_reward(mdp, params) > average_reward(
        mdp, ActorParams.zeros(TWO, 1)
    )
