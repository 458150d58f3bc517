# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

"""
Online two-timescale hierarchical option-critic.

The critic (Ĵ and one linear table per prefix depth) moves on the fast
timescale, the actor on the slow one. A step is: draw the action from π^N,
step the environment, sample the arrival (terminations and re-selection
with θ_t), update the critic, then the actor with the fresh critic.
"""

from __future__ import annotations

import math

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from numpy.typing import NDArray
from scipy.special import softmax

from ._config import CONFIG
from ._errors import ConfigError, DivergenceError, InvalidHierarchyError
from ._hierarchy import (
    ActorParams,
    Context,
    FeatureMap,
    HierarchySpec,
    _categorical,
    arrival_row,
    arrive,
    policy_at,
    select_stack,
    termination_at,
)
from ._mdp import TabularMdp, Transition, env_step
from .instrumentation import ProgressDetails


Mode = Literal["average-reward", "discounted"]
MODES: tuple[Mode, ...] = ("average-reward", "discounted")

DEFAULT_GAMMA = 0.9


@dataclass(frozen=True)
class StepSchedule:
    """
    Polynomially decaying step sizes.

    ``α_t = a₀(1+t/τ)^-p_a`` for the actor, ``b_t = b₀(1+t/τ)^-p_b`` for the
    critic and ``η_t = η₀(1+t/τ)^-p_g`` for Ĵ, where τ is *horizon* and p_g
    is *gain_power*, defaulting to p_b. ``0.5 < p_b < p_a <= 1`` makes both
    sums diverge, both squared sums converge, and ``α_t / b_t → 0``.

    A large *horizon* keeps the rates near their constants for the first τ
    steps; the default of 1 decays from the start.
    """

    actor_rate: float = 0.01
    critic_rate: float = 0.05
    gain_rate: float = 0.05
    actor_power: float = 0.9
    critic_power: float = 0.6
    horizon: float = 1.0
    gain_power: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.horizon < math.inf:
            msg = f"horizon must be positive and finite, got {self.horizon}"
            raise ConfigError(msg)
        if self.gain_power is not None and not 0.5 < self.gain_power <= 1.0:
            msg = f"gain_power must lie in (0.5, 1], got {self.gain_power}"
            raise ConfigError(msg)
        if min(self.actor_rate, self.critic_rate, self.gain_rate) <= 0.0:
            msg = "step-size constants must be positive"
            raise ConfigError(msg)
        if not 0.5 < self.critic_power < self.actor_power <= 1.0:
            msg = (
                "step-size powers must satisfy 0.5 < critic_power < "
                f"actor_power <= 1, got critic_power={self.critic_power}, "
                f"actor_power={self.actor_power}"
            )
            raise ConfigError(msg)

    def actor(self, t: int) -> float:
        return self.actor_rate * (1.0 + t / self.horizon) ** -self.actor_power

    def critic(self, t: int) -> float:
        return self.critic_rate * (1.0 + t / self.horizon) ** -self.critic_power

    def gain(self, t: int) -> float:
        power = (
            self.critic_power if self.gain_power is None else self.gain_power
        )
        return self.gain_rate * (1.0 + t / self.horizon) ** -power


@dataclass(frozen=True)
class LearnerConfig:
    """
    Configuration of a single training run.

    Attributes:
        mode:
            ``average-reward`` or ``discounted``; *gamma* is required in the
            latter and forbidden in the former.

        total_steps: Number of environment steps.

        trace_param_ids:
            Parameter ids to record, like ``pi2:17:1``, ``beta1:4`` or
            ``q1:8``. Empty means one random id per family.

        record_every: Steps between recorded Ĵ values and traces.

        window: Window for average reward on MDPs without cycles.

        progress_every: Steps between progress reports to the hooks.

        baseline:
            Subtract Q̂_Ω(s, o) from Q̂_U in the action term of Ψ, turning its
            coefficient into δ_t. The expected Ψ is unchanged.

        freeze_actor:
            Only run the critic; θ stays at its initial value.
    """

    mode: Mode = "average-reward"
    gamma: float | None = None
    schedule: StepSchedule = field(default_factory=StepSchedule)
    total_steps: int = 0
    trace_param_ids: tuple[str, ...] = ()
    seed: int = 0
    bound: float = 50.0
    record_every: int = 100
    window: int = 1000
    progress_every: int = 10_000
    baseline: bool = False
    freeze_actor: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "trace_param_ids", tuple(self.trace_param_ids))
        if self.mode not in MODES:
            msg = f"mode must be one of {MODES}, got {self.mode!r}"
            raise ConfigError(msg)
        if self.mode == "discounted":
            if self.gamma is None or not 0.0 < self.gamma < 1.0:
                msg = f"discounted mode needs gamma in (0, 1), got {self.gamma}"
                raise ConfigError(msg)
        elif self.gamma is not None:
            msg = "gamma is only allowed in discounted mode"
            raise ConfigError(msg)
        if self.total_steps < 0:
            msg = "total_steps must be >= 0"
            raise ConfigError(msg)
        if min(self.record_every, self.window, self.progress_every) < 1:
            msg = "record_every, window and progress_every must be >= 1"
            raise ConfigError(msg)
        if not self.bound > 0.0:
            msg = "bound must be positive"
            raise ConfigError(msg)


class CriticState:
    """
    Ĵ plus one weight vector per prefix depth 0..N-1.

    With tabular features the weights are the Q̂_Ω tables themselves.
    """

    __slots__ = ("features", "gain", "weights")

    def __init__(
        self,
        features: FeatureMap,
        weights: Sequence[NDArray[np.float64]] | None = None,
        gain: float = 0.0,
    ) -> None:
        self.features = features
        depth = features.spec.depth
        if weights is None:
            weights = [np.zeros(features.dim(k)) for k in range(depth)]
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        if len(self.weights) != depth or any(
            w.shape != (features.dim(k),) for k, w in enumerate(self.weights)
        ):
            msg = "critic weights don't match the feature dimensions"
            raise InvalidHierarchyError(msg)
        self.gain = float(gain)

    def __repr__(self) -> str:
        return f"<CriticState(gain={self.gain:.6g}, depth={len(self.weights)})>"

    def copy(self) -> CriticState:
        return CriticState(self.features, self.weights, self.gain)

    def estimate(self, k: int, s: int, p: int) -> float:
        """
        Q̂_Ω(s, prefix *p* at depth *k*).
        """
        return float(self.features.context(k, s, p).dot(self.weights[k]))

    def table(self, k: int) -> NDArray[np.float64]:
        """
        All depth-*k* estimates as an ``(S, P_k)`` array.
        """
        return self.features.scores(k, self.weights[k])


@dataclass(frozen=True)
class StackPair:
    """
    Full-stack indices around one transition.

    Attributes:
        before: Stack active when the action was taken.

        after: Stack selected on arrival at the next state.

        keep: Highest level that kept its option on arrival.
    """

    before: int
    after: int
    keep: int = 0

    @classmethod
    def from_stacks(
        cls,
        spec: HierarchySpec,
        before: Sequence[int],
        after: Sequence[int],
        keep: int = 0,
    ) -> StackPair:
        return cls(spec.stack_index(before), spec.stack_index(after), keep)


class _Arrival:
    """
    Critic view of the arrival at s' with the incoming stack.

    ``q[i]`` is Q̂_i(s', o^{0:i}), ``beta[i]`` is β^i(s', o^{0:i}) and
    ``u[l]`` is the value upon arrival when levels l..N-1 terminated.
    """

    __slots__ = ("beta", "q", "u")

    def __init__(
        self, params: ActorParams, critic: CriticState, s: int, m: int
    ) -> None:
        spec = params.spec
        N = spec.depth
        self.q = [
            critic.estimate(i, s, spec.ancestor(m, i)) for i in range(N)
        ]
        self.beta = [0.0] + [
            termination_at(params, i, s, spec.ancestor(m, i))
            for i in range(1, N)
        ]
        self.u = [0.0, self.q[0]]
        for i in range(1, N):
            self.u.append(
                (1.0 - self.beta[i]) * self.q[i] + self.beta[i] * self.u[i]
            )

    @property
    def value(self) -> float:
        """
        Û(s', o^{0:N-1}).
        """
        return self.u[-1]


def _target(
    transition: Transition,
    arrival: _Arrival,
    critic: CriticState,
    gamma: float | None,
) -> float:
    if gamma is None:
        return transition.reward - critic.gain + arrival.value
    return transition.reward + gamma * arrival.value


def td_error(
    transition: Transition,
    stacks: StackPair,
    critic: CriticState,
    params: ActorParams,
    gamma: float | None = None,
) -> float:
    """
    δ_t = r - Ĵ + Û(s', o) - Q̂_Ω(s, o), or r + γÛ - Q̂_Ω with *gamma*.

    Û composes the per-depth critic estimates at the next state with the
    current terminations.
    """
    arrival = _Arrival(params, critic, transition.next_state, stacks.before)
    q = critic.estimate(
        params.spec.depth - 1, transition.state, stacks.before
    )
    return _target(transition, arrival, critic, gamma) - q


def _critic_update(
    critic: CriticState,
    transition: Transition,
    stacks: StackPair,
    params: ActorParams,
    schedule: StepSchedule,
    t: int,
    gamma: float | None,
) -> float:
    spec, fm = params.spec, params.features
    arrival = _Arrival(params, critic, transition.next_state, stacks.before)
    target = _target(transition, arrival, critic, gamma)

    rate = schedule.critic(t)
    delta = math.nan
    for k in range(spec.depth):
        ctx = fm.context(k, transition.state, spec.ancestor(stacks.before, k))
        delta = target - float(ctx.dot(critic.weights[k]))
        ctx.add(critic.weights[k], rate * delta, math.inf)

    if gamma is None:
        critic.gain += schedule.gain(t) * (transition.reward - critic.gain)

    return delta


def critic_step(
    critic: CriticState,
    transition: Transition,
    stacks: StackPair,
    params: ActorParams,
    schedule: StepSchedule,
    t: int,
    gamma: float | None = None,
) -> CriticState:
    """
    One fast-timescale update, in place.

    Every depth k moves towards the common target by
    ``b_t (target - Q̂_k(s, o^{0:k}))``; at the full stack that is δ_t.
    Ĵ moves by ``η_t (r - Ĵ)`` in average-reward mode only.
    """
    _critic_update(critic, transition, stacks, params, schedule, t, gamma)
    return critic


_Update = tuple[str, NDArray[np.float64], Context, "NDArray[np.float64] | float"]


def _direction(
    params: ActorParams,
    critic: CriticState,
    transition: Transition,
    stacks: StackPair,
    gamma: float | None,
    baseline: bool = False,
) -> tuple[list[_Update], float]:
    """
    Ψ as sparse per-context updates, and the sampled Q̂_U.
    """
    spec, fm = params.spec, params.features
    N = spec.depth
    s, s_next, m = transition.state, transition.next_state, stacks.before
    arrival = _Arrival(params, critic, s_next, m)
    q_u = _target(transition, arrival, critic, gamma)

    updates: list[_Update] = []

    ctx = fm.context(N - 1, s, m)
    W = params.policy[N]
    coeff = -softmax(ctx.dot(W))  # type: ignore[arg-type]
    coeff[transition.action] += 1.0
    scale = q_u - float(ctx.dot(critic.weights[N - 1])) if baseline else q_u
    updates.append((f"pi{N}", W, ctx, scale * coeff))  # type: ignore[arg-type]

    # above[l] = Π_{k=l+1}^{N-1} β^k(s', o^{0:k})
    above = [1.0] * N
    for level in range(N - 2, -1, -1):
        above[level] = above[level + 1] * arrival.beta[level + 1]

    for level in range(1, N):
        beta = arrival.beta[level]
        advantage = arrival.q[level] - arrival.u[level]
        W = params.termination[level]  # type: ignore[assignment]
        ctx = fm.context(level, s_next, spec.ancestor(m, level))
        updates.append(
            (
                f"beta{level}",
                W,
                ctx,
                -advantage * above[level] * (1.0 - beta),
            )
        )

        # Expected over the re-selected prefix and option, given that
        # levels level..N-1 terminated.
        weight = above[level] * beta
        prefixes = arrival_row(
            params, s_next, level - 1, spec.ancestor(m, level - 1)
        )
        W = params.policy[level]  # type: ignore[assignment]
        children = critic.table(level)[s_next].reshape(-1, spec.counts[level])
        for p in np.flatnonzero(prefixes > 0.0):
            ctx = fm.context(level - 1, s_next, int(p))
            pi = softmax(ctx.dot(W))  # type: ignore[arg-type]
            q = children[p]
            updates.append(
                (
                    f"pi{level}",
                    W,
                    ctx,
                    weight * prefixes[p] * pi * (q - pi @ q),
                )
            )

    return updates, q_u


@dataclass(frozen=True, eq=False)
class UpdateDirection:
    """
    The actor direction Ψ in the flat parameter layout.
    """

    vector: NDArray[np.float64]
    q_u: float


def update_direction(
    params: ActorParams,
    critic: CriticState,
    transition: Transition,
    stacks: StackPair,
    gamma: float | None = None,
    *,
    baseline: bool = False,
) -> UpdateDirection:
    """
    Ψ = Q̂_U ψ_{s,o,a} - Â_Ω ψ_β + Q̂_Ω β ψ_{s,o}, as :func:`actor_step`
    applies it before scaling and projection.

    With *baseline*, the first term uses Q̂_U - Q̂_Ω(s, o) instead.
    """
    updates, q_u = _direction(
        params, critic, transition, stacks, gamma, baseline
    )
    out = np.zeros(params.dimension)
    blocks = params.blocks
    for name, W, ctx, coeff in updates:
        out[blocks[name]] += ctx.scatter(W.shape, coeff).ravel()

    return UpdateDirection(out, q_u)


def _actor_update(
    params: ActorParams,
    critic: CriticState,
    transition: Transition,
    stacks: StackPair,
    schedule: StepSchedule,
    t: int,
    gamma: float | None,
    baseline: bool = False,
) -> float:
    updates, q_u = _direction(
        params, critic, transition, stacks, gamma, baseline
    )
    rate = schedule.actor(t)
    for _, W, ctx, coeff in updates:
        ctx.add(W, rate * coeff, params.bound)

    return q_u


def actor_step(
    params: ActorParams,
    critic: CriticState,
    transition: Transition,
    stacks: StackPair,
    schedule: StepSchedule,
    t: int,
    gamma: float | None = None,
    *,
    baseline: bool = False,
) -> ActorParams:
    """
    θ ← Γ[θ + α_t Ψ], in place; Γ clamps every weight to the bound.

    The termination term uses ψ_β = ∇ log β, so its coefficient carries
    ``1 - β`` rather than ``β(1 - β)``.
    """
    _actor_update(
        params, critic, transition, stacks, schedule, t, gamma, baseline
    )
    return params


@dataclass(frozen=True, eq=False)
class RunRecord:
    """
    Everything a training run produced.

    Attributes:
        curve:
            Rows ``(step, cycle, value, jhat)``. On MDPs with cycles, one row
            per completed cycle with the reward collected during it; else one
            row per window with the window's average reward and *cycle* the
            window index.

        cycle_states:
            State each cycle was completed from, one per *curve* row on MDPs
            with cycles; empty otherwise.

        jhat: Rows ``(step, Ĵ)`` every ``record_every`` steps.

        trace_steps: Steps at which traces were recorded.

        traces: ``(len(trace_steps), len(trace_ids))`` values.
    """

    config: LearnerConfig
    cyclic: bool
    curve: NDArray[np.float64]
    cycle_states: NDArray[np.int64]
    jhat: NDArray[np.float64]
    trace_ids: tuple[str, ...]
    trace_steps: NDArray[np.int64]
    traces: NDArray[np.float64]
    final_params: ActorParams
    final_critic: CriticState
    steps: int


def default_trace_ids(params: ActorParams, seed: int) -> tuple[str, ...]:
    """
    One random id from each family: Q̂_Ω at the full stack, π^N and π^1.
    """
    rng = np.random.default_rng([seed, 0x7ACE])
    N = params.spec.depth
    fm = params.features
    ids = [f"q{N - 1}:{int(rng.integers(fm.dim(N - 1)))}"]
    for level in dict.fromkeys((N, 1)):
        block = params.block(f"pi{level}")
        i = int(rng.integers(block.size))
        row, col = divmod(i, block.shape[1])
        ids.append(f"pi{level}:{row}:{col}")
    return tuple(ids)


def _resolve_trace(
    params: ActorParams, critic: CriticState, param_id: str
) -> tuple[NDArray[np.float64], int]:
    """
    Array and flat index that hold *param_id*; both are updated in place.
    """
    if param_id.startswith("q"):
        head, _, row = param_id.partition(":")
        try:
            k, i = int(head[1:]), int(row)
            if not 0 <= k < len(critic.weights):
                raise IndexError(k)  # noqa: TRY301
            weights = critic.weights[k]
            if not 0 <= i < weights.shape[0]:
                raise IndexError(i)  # noqa: TRY301
        except (ValueError, IndexError) as e:
            msg = f"unknown parameter id {param_id!r}"
            raise InvalidHierarchyError(msg) from e
        return weights, i

    return params._flat, params.coordinate_index(param_id)


def initial_stack(
    params: ActorParams, s: int, rng: np.random.Generator
) -> int:
    """
    Full stack drawn top-down at *s*.
    """
    return select_stack(params, s, 0, 0, rng)


def _report(
    details: ProgressDetails,
) -> None:
    for hook in CONFIG.on_progress:
        hook(details)


def train(
    mdp: TabularMdp,
    spec: HierarchySpec,
    config: LearnerConfig,
    features: FeatureMap | None = None,
    *,
    environment: str = "custom",
    name: str = "run",
) -> RunRecord:
    """
    Run the continuing-task loop for ``config.total_steps`` steps.

    Same *config* (including the seed) gives a bit-identical record.

    Raises:
        DivergenceError: If any estimate becomes non-finite.
    """
    fm = features or FeatureMap.tabular(spec, mdp.n_states)
    if fm.n_states != mdp.n_states or spec.n_actions != mdp.n_actions:
        msg = "hierarchy and features don't fit the MDP"
        raise InvalidHierarchyError(msg)

    testing = CONFIG.testing
    total = (
        config.total_steps
        if testing is None
        else testing.get_steps(config.total_steps)
    )
    gamma = config.gamma if config.mode == "discounted" else None
    schedule = config.schedule

    params = ActorParams(spec, fm, config.bound)
    critic = CriticState(fm)
    rng = np.random.default_rng(config.seed)

    trace_ids = config.trace_param_ids or default_trace_ids(params, config.seed)
    traced = [_resolve_trace(params, critic, pid) for pid in trace_ids]

    cyclic = mdp.cycle_mask is not None and bool(mdp.cycle_mask.any())
    curve: list[tuple[float, float, float, float]] = []
    cycle_states: list[int] = []
    jhat: list[tuple[float, float]] = []
    trace_steps: list[int] = []
    traces: list[list[float]] = []
    accumulated = 0.0
    n_cycles = 0

    def details(step: int, event: str) -> ProgressDetails:
        return ProgressDetails(
            name=name,
            environment=environment,
            mode=config.mode,
            seed=config.seed,
            step=step,
            total_steps=total,
            jhat=critic.gain,
            cycles=n_cycles,
            last_value=curve[-1][2] if curve else None,
            event=event,  # type: ignore[arg-type]
        )

    s = mdp.start
    m = initial_stack(params, s, rng)
    N = spec.depth
    for t in range(total):
        probs = policy_at(params, N, s, m)
        a = _categorical(probs, rng)
        tr = env_step(mdp, s, a, rng)
        keep, m_next = arrive(params, tr.next_state, m, rng)
        stacks = StackPair(m, m_next, keep)

        delta = _critic_update(
            critic, tr, stacks, params, schedule, t, gamma
        )
        q_u = (
            0.0
            if config.freeze_actor
            else _actor_update(
                params, critic, tr, stacks, schedule, t, gamma, config.baseline
            )
        )

        if not (
            math.isfinite(delta)
            and math.isfinite(q_u)
            and math.isfinite(critic.gain)
        ):
            diagnostics: dict[str, object] = {
                "step": t,
                "state": s,
                "stack": spec.prefix_tuple(N - 1, m),
                "action": a,
                "delta": delta,
                "q_u": q_u,
                "jhat": critic.gain,
            }
            _report(details(t, "diverged"))
            msg = f"training diverged at step {t}: {diagnostics}"
            raise DivergenceError(msg, diagnostics)

        step = t + 1
        accumulated += tr.reward
        if cyclic:
            if tr.cycle_completed:
                n_cycles += 1
                curve.append((step, n_cycles, accumulated, critic.gain))
                cycle_states.append(tr.state)
                accumulated = 0.0
        elif step % config.window == 0:
            n_cycles += 1
            curve.append(
                (step, n_cycles, accumulated / config.window, critic.gain)
            )
            accumulated = 0.0

        if step % config.record_every == 0:
            jhat.append((step, critic.gain))
            trace_steps.append(step)
            traces.append([float(arr[i]) for arr, i in traced])

        if step % config.progress_every == 0:
            _report(details(step, "progress"))

        s, m = tr.next_state, m_next

    _report(details(total, "finished"))

    return RunRecord(
        config=config,
        cyclic=cyclic,
        curve=np.array(curve, dtype=np.float64).reshape(-1, 4),
        cycle_states=np.array(cycle_states, dtype=np.int64),
        jhat=np.array(jhat, dtype=np.float64).reshape(-1, 2),
        trace_ids=tuple(trace_ids),
        trace_steps=np.array(trace_steps, dtype=np.int64),
        traces=np.array(traces, dtype=np.float64).reshape(
            -1, len(trace_ids)
        ),
        final_params=params,
        final_critic=critic,
        steps=total,
    )
