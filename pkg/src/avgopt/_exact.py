# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

"""
Exact evaluation of a fixed hierarchical policy.

Augmented states ``(s, o^{0:N-1})`` are numbered ``s * M + m`` where *m* is
the full-stack index and M the number of stacks.
"""

from __future__ import annotations

import warnings

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from numpy.typing import ArrayLike, NDArray

from ._errors import (
    ConfigError,
    InvalidHierarchyError,
    InvalidMdpError,
    SingularSystemError,
)
from ._hierarchy import (
    ActorParams,
    HierarchySpec,
    PolicyTables,
    initial_stack_distribution,
    policy_tables,
)
from ._markov import limiting_distribution, stationary
from ._mdp import (
    B_CYCLE,
    BLUE,
    R_CYCLE,
    RED,
    S0,
    TabularMdp,
    TrapChainSpec,
    build_trap_chain,
)


KERNEL_TOL = 1e-10
SOLVE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class AugmentedKernel:
    """
    One-step transition matrix of the augmented chain.

    Attributes:
        matrix: Row-stochastic ``(S*M, S*M)`` matrix.

        n_states: S.

        n_stacks: M, the number of full option stacks.
    """

    matrix: NDArray[np.float64]
    n_states: int
    n_stacks: int

    def __post_init__(self) -> None:
        n = self.n_states * self.n_stacks
        if self.matrix.shape != (n, n):
            msg = f"kernel must be {n}x{n}, got {self.matrix.shape}"
            raise InvalidHierarchyError(msg)
        if np.any(self.matrix < 0.0) or np.max(
            np.abs(self.matrix.sum(axis=1) - 1.0)
        ) > KERNEL_TOL:
            msg = "kernel rows must be probability vectors"
            raise InvalidHierarchyError(msg)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def index(self, s: int, m: int) -> int:
        return s * self.n_stacks + m

    def as_tensor(self) -> NDArray[np.float64]:
        """
        The kernel as ``K[s, m, s', m']``.
        """
        S, M = self.n_states, self.n_stacks
        return self.matrix.reshape(S, M, S, M)


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    """
    Stationary distribution ``d_π`` of an augmented kernel.
    """

    d: NDArray[np.float64]
    kernel: AugmentedKernel

    def by_stack(self) -> NDArray[np.float64]:
        """
        ``d_π`` reshaped to ``(S, M)``.
        """
        return self.d.reshape(self.kernel.n_states, self.kernel.n_stacks)

    def joint(self) -> NDArray[np.float64]:
        """
        μ_Ω(s, o^{0:N-1}, s') as an ``(S, M, S)`` array.
        """
        return self.by_stack()[:, :, None] * self.kernel.as_tensor().sum(
            axis=3
        )


@dataclass(frozen=True, eq=False)
class ValueTables:
    """
    Gain and differential values of a hierarchical policy.

    Values are anchored so that ``Σ d_π(s, o) Q_Ω(s, o^{0:N-1}) = 0``.

    Attributes:
        gain: J(π), the expected reward per step.

        q_omega: ``q_omega[l]`` is Q_Ω at depth l, shape ``(S, P_l)``.

        q_u: Q_U, shape ``(S, M, A)``.

        u:
            ``u[l]`` for l = 1..N is the value upon arrival when levels l..N-1
            terminated, shape ``(S, P_{l-1})``; ``u[0]`` is empty.
            ``u[N]`` is U(s', o^{0:N-1}) over full stacks.
    """

    gain: float
    q_omega: tuple[NDArray[np.float64], ...]
    q_u: NDArray[np.float64]
    u: tuple[NDArray[np.float64], ...]
    spec: HierarchySpec
    labels: tuple[str, ...] | None = None


@dataclass(frozen=True, eq=False)
class Advantage:
    """
    A_Ω(s', o^{0:l}) per depth l = 0..N-1, shape ``(S, P_l)``.
    """

    values: tuple[NDArray[np.float64], ...]


def _check_compatible(mdp: TabularMdp, params: ActorParams) -> None:
    if (
        mdp.n_states != params.features.n_states
        or mdp.n_actions != params.spec.n_actions
    ):
        msg = (
            f"parameters for {params.features.n_states} states and "
            f"{params.spec.n_actions} actions don't fit an MDP with "
            f"{mdp.n_states} states and {mdp.n_actions} actions"
        )
        raise InvalidHierarchyError(msg)


def arrival_matrices(
    spec: HierarchySpec, tables: PolicyTables
) -> list[NDArray[np.float64]]:
    """
    ``A[k][s, p, p']``: probability that prefix *p* at depth *k* becomes
    *p'* on arriving at *s*, given that every level above *k* terminated.

    ``A[N-1]`` is the full arrival distribution over stacks.
    """
    S = tables.beta[0].shape[0]
    arrivals = [np.ones((S, 1, 1))]
    for k in range(1, spec.depth):
        P_k = spec.prefix_counts[k]
        parent = np.arange(P_k) // spec.counts[k]
        reselect = np.einsum(
            "spq,sqo->spqo", arrivals[-1][:, parent, :], tables.pi[k]
        ).reshape(S, P_k, P_k)
        beta = tables.beta[k][:, :, None]
        arrivals.append(beta * reselect + (1.0 - beta) * np.eye(P_k))

    return arrivals


@dataclass(frozen=True, eq=False)
class _Evaluation:
    """
    Everything exact evaluation derives from one parameter setting.
    """

    tables: PolicyTables
    arrivals: list[NDArray[np.float64]]
    averaged: NDArray[np.float64]  # Σ_a π^N P, shape (S, M, S)
    kernel: AugmentedKernel


def _evaluate(mdp: TabularMdp, params: ActorParams) -> _Evaluation:
    _check_compatible(mdp, params)
    spec = params.spec
    S, M = mdp.n_states, spec.n_stacks

    tables = policy_tables(params)
    arrivals = arrival_matrices(spec, tables)
    averaged = np.einsum("sma,sat->smt", tables.pi[spec.depth], mdp.transition)
    K = np.einsum("smt,tmn->smtn", averaged, arrivals[-1])

    return _Evaluation(
        tables, arrivals, averaged, AugmentedKernel(K.reshape(S * M, S * M), S, M)
    )


def one_step_kernel(mdp: TabularMdp, params: ActorParams) -> AugmentedKernel:
    """
    Exact one-step kernel P^(1) of the augmented chain.

    Marginalizes the primitive action, applies the environment transition,
    then the termination cascade and re-selection at the next state.

    Raises:
        InvalidHierarchyError: If *params* don't fit *mdp*.
    """
    return _evaluate(mdp, params).kernel


def k_step_kernel(kernel: AugmentedKernel, k: int) -> AugmentedKernel:
    """
    P^(k) via P^(k) = P^(1) P^(k-1).
    """
    if k < 1:
        msg = f"k must be >= 1, got {k}"
        raise ValueError(msg)

    out = kernel.matrix
    for _ in range(k - 1):
        out = kernel.matrix @ out

    return AugmentedKernel(out, kernel.n_states, kernel.n_stacks)


def stationary_distribution(
    kernel: AugmentedKernel, tol: float = KERNEL_TOL
) -> StationaryDistribution:
    """
    Unique stationary distribution of *kernel*.

    Raises:
        NotUnichainError: If the chain has more than one recurrent class.
    """
    return StationaryDistribution(stationary(kernel.matrix, tol), kernel)


def _reward_by_stack(
    mdp: TabularMdp, spec: HierarchySpec, tables: PolicyTables
) -> NDArray[np.float64]:
    return np.einsum("sma,sa->sm", tables.pi[spec.depth], mdp.reward)  # type: ignore[no-any-return]


def _solve_anchored(
    K: NDArray[np.float64], d: NDArray[np.float64], b: NDArray[np.float64]
) -> NDArray[np.float64]:
    """
    Solve ``Q = b + K Q`` subject to ``d · Q = 0``.
    """
    n = K.shape[0]
    system = np.eye(n) - K + np.outer(np.ones(n), d)
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            Q = scipy.linalg.solve(system, b)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as e:
            msg = (
                "anchored Poisson system is singular; the augmented chain "
                "must be unichain"
            )
            raise SingularSystemError(msg) from e

    scale = max(1.0, float(np.max(np.abs(b))))
    if np.max(np.abs(Q - b - K @ Q)) > SOLVE_TOL * scale * n:
        msg = "Poisson residual too large; the augmented chain is ill-conditioned"
        raise SingularSystemError(msg)

    return Q  # type: ignore[no-any-return]


def _values(
    mdp: TabularMdp, spec: HierarchySpec, ev: _Evaluation
) -> tuple[ValueTables, Advantage, NDArray[np.float64]]:
    S, M, N = mdp.n_states, spec.n_stacks, spec.depth
    tables = ev.tables

    d = stationary(ev.kernel.matrix, KERNEL_TOL)
    r_sm = _reward_by_stack(mdp, spec, tables).ravel()
    gain = float(d @ r_sm)
    q_full = _solve_anchored(ev.kernel.matrix, d, r_sm - gain).reshape(S, M)

    q_omega = [q_full]
    for level in range(N - 1, 0, -1):
        children = q_omega[0].reshape(S, -1, spec.counts[level])
        q_omega.insert(0, np.einsum("spo,spo->sp", tables.pi[level], children))

    u = [np.empty((S, 0))]
    for level in range(1, N + 1):
        u.append(
            np.einsum("spq,sq->sp", ev.arrivals[level - 1], q_omega[level - 1])
        )

    q_u = (
        mdp.reward[:, None, :]
        - gain
        + np.einsum("sat,tm->sma", mdp.transition, u[N])
    )

    advantage = [q_omega[0]]
    for level in range(1, N):
        parent = np.arange(spec.prefix_counts[level]) // spec.counts[level]
        advantage.append(q_omega[level] - u[level][:, parent])

    values = ValueTables(
        gain, tuple(q_omega), q_u, tuple(u), spec, mdp.labels
    )
    return values, Advantage(tuple(advantage)), d.reshape(S, M)


def solve_values(
    mdp: TabularMdp, params: ActorParams
) -> tuple[ValueTables, Advantage]:
    """
    Gain, differential values and advantages of the policy *params*.

    Raises:
        NotUnichainError: If the augmented chain is not unichain.

        SingularSystemError: If the anchored system can't be solved.
    """
    values, advantage, _ = _values(mdp, params.spec, _evaluate(mdp, params))
    return values, advantage


def initial_distribution(
    params: ActorParams, s0: int
) -> NDArray[np.float64]:
    """
    Augmented-state distribution after selecting a fresh stack at *s0*.
    """
    S, M = params.features.n_states, params.spec.n_stacks
    out = np.zeros((S, M))
    out[s0] = initial_stack_distribution(params, s0)
    return out.ravel()


def average_reward(
    mdp: TabularMdp,
    params: ActorParams,
    initial: ArrayLike | None = None,
) -> float:
    """
    Gain of the hierarchical policy *params*.

    Without *initial* the augmented chain must be unichain. With a start
    distribution over augmented states, the long-run occupancy from that
    start is used, which also covers multichain MDPs like the trap chain.
    """
    ev = _evaluate(mdp, params)
    r_sm = _reward_by_stack(mdp, params.spec, ev.tables).ravel()
    if initial is None:
        d = stationary(ev.kernel.matrix, KERNEL_TOL)
    else:
        d = limiting_distribution(
            ev.kernel.matrix, np.asarray(initial, dtype=np.float64), KERNEL_TOL
        )

    return float(d @ r_sm)


# -- Flat policies ------------------------------------------------------------


def _check_flat_policy(
    mdp: TabularMdp, policy: ArrayLike
) -> NDArray[np.float64]:
    pi = np.asarray(policy, dtype=np.float64)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        msg = f"flat policy must have shape {(mdp.n_states, mdp.n_actions)}"
        raise InvalidMdpError(msg)
    if np.any(pi < 0.0) or np.max(np.abs(pi.sum(axis=1) - 1.0)) > 1e-12:
        msg = "flat policy rows must be probability vectors"
        raise InvalidMdpError(msg)
    return pi


def discounted_values(
    mdp: TabularMdp, policy: ArrayLike, gamma: float
) -> NDArray[np.float64]:
    """
    Solve ``v = r_π + γ P_π v`` for the flat *policy* of shape ``(S, A)``.
    """
    if not 0.0 < gamma < 1.0:
        msg = f"discount must lie in (0, 1), got {gamma}"
        raise ConfigError(msg)
    pi = _check_flat_policy(mdp, policy)

    P = np.einsum("sa,sat->st", pi, mdp.transition)
    r = np.einsum("sa,sa->s", pi, mdp.reward)

    return scipy.linalg.solve(np.eye(mdp.n_states) - gamma * P, r)  # type: ignore[no-any-return]


def flat_gain(
    mdp: TabularMdp, policy: ArrayLike, start: int | None = None
) -> float:
    """
    Gain of a flat policy; from *start* if given, else unichain required.
    """
    pi = _check_flat_policy(mdp, policy)
    P = np.einsum("sa,sat->st", pi, mdp.transition)
    r = np.einsum("sa,sa->s", pi, mdp.reward)
    if start is None:
        return float(stationary(P, KERNEL_TOL) @ r)

    initial = np.zeros(mdp.n_states)
    initial[start] = 1.0
    return float(limiting_distribution(P, initial, KERNEL_TOL) @ r)


def relative_value_iteration(
    mdp: TabularMdp,
    policy: ArrayLike,
    tol: float = 1e-12,
    max_iter: int = 10**6,
    reference: int = 0,
    tau: float = 0.5,
) -> tuple[float, NDArray[np.float64]]:
    """
    Gain and bias of a flat policy by relative value iteration.

    Iterates on the aperiodic transform ``τI + (1-τ)P``, which shares the
    bias and scales the gain by ``1-τ``.

    Returns:
        ``(gain, h)`` with ``h[reference] == 0``.

    Raises:
        SingularSystemError: If the iteration doesn't converge.
    """
    pi = _check_flat_policy(mdp, policy)
    P = tau * np.eye(mdp.n_states) + (1.0 - tau) * np.einsum(
        "sa,sat->st", pi, mdp.transition
    )
    r = (1.0 - tau) * np.einsum("sa,sa->s", pi, mdp.reward)

    h = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        w = r + P @ h
        g = w[reference]
        nxt = w - g
        if np.max(np.abs(nxt - h)) < tol:
            return float(g / (1.0 - tau)), nxt
        h = nxt

    msg = f"relative value iteration did not converge in {max_iter} steps"
    raise SingularSystemError(msg)


# -- Reports ------------------------------------------------------------------


def _key(values: ValueTables, s: int, prefix: Sequence[int]) -> str:
    label = values.labels[s] if values.labels else str(s)
    return f"{label}|{'.'.join(str(o) for o in prefix)}"


def values_to_json(
    values: ValueTables, advantage: Advantage | None = None
) -> dict[str, object]:
    """
    ValueTables as JSON, keyed by ``"<state label>|<o⁰.o¹...>"``.
    """
    spec = values.spec
    S = values.q_u.shape[0]
    doc: dict[str, object] = {"gain": values.gain}

    q_omega: dict[str, dict[str, float]] = {}
    for level, table in enumerate(values.q_omega):
        q_omega[str(level)] = {
            _key(values, s, spec.prefix_tuple(level, p)): float(table[s, p])
            for s in range(S)
            for p in range(table.shape[1])
        }
    doc["q_omega"] = q_omega

    doc["q_u"] = {
        f"{_key(values, s, spec.prefix_tuple(spec.depth - 1, m))}|{a}": float(
            values.q_u[s, m, a]
        )
        for s in range(S)
        for m in range(spec.n_stacks)
        for a in range(spec.n_actions)
    }
    doc["u"] = {
        str(level): {
            _key(values, s, spec.prefix_tuple(level - 1, p)): float(
                values.u[level][s, p]
            )
            for s in range(S)
            for p in range(values.u[level].shape[1])
        }
        for level in range(1, spec.depth + 1)
    }
    if advantage is not None:
        doc["advantage"] = {
            str(level): {
                _key(values, s, spec.prefix_tuple(level, p)): float(
                    table[s, p]
                )
                for s in range(S)
                for p in range(table.shape[1])
            }
            for level, table in enumerate(advantage.values)
        }

    return doc


@dataclass(frozen=True)
class TrapRow:
    """
    Discounted analysis of the trap chain at one γ.
    """

    gamma: float
    v_red: float
    v_blue: float
    v_red_closed_form: float
    v_blue_closed_form: float
    chosen: str

    @property
    def max_error(self) -> float:
        return max(
            abs(self.v_red - self.v_red_closed_form),
            abs(self.v_blue - self.v_blue_closed_form),
        )


@dataclass(frozen=True)
class TrapReport:
    """
    Discounted vs average-reward view of the trap chain.

    Both committed policies earn the same gain; the discounted preference
    for blue depends on γ only.
    """

    rows: tuple[TrapRow, ...]
    gain_red: float
    gain_blue: float

    def to_json(self) -> dict[str, object]:
        return {
            "gain_red": self.gain_red,
            "gain_blue": self.gain_blue,
            "rows": [
                {
                    "gamma": row.gamma,
                    "v_red_S11": row.v_red,
                    "v_blue_S21": row.v_blue,
                    "v_red_closed_form": row.v_red_closed_form,
                    "v_blue_closed_form": row.v_blue_closed_form,
                    "max_error": row.max_error,
                    "chosen_at_S0": row.chosen,
                }
                for row in self.rows
            ],
        }


def committed_policy(mdp: TabularMdp, action: int) -> NDArray[np.float64]:
    """
    Flat policy taking *action* everywhere.
    """
    pi = np.zeros((mdp.n_states, mdp.n_actions))
    pi[:, action] = 1.0
    return pi


def trap_analysis(
    gammas: Sequence[float] | None = None, spec: TrapChainSpec | None = None
) -> TrapReport:
    """
    Discounted values of both committed trap-chain policies per γ, next to
    their closed forms, plus the discounted choice at S0 and both gains.

    Without *gammas*, ``spec.discount_probe_set`` is used.
    """
    spec = spec or TrapChainSpec()
    mdp = build_trap_chain(spec)
    red, blue = committed_policy(mdp, RED), committed_policy(mdp, BLUE)

    rows = []
    for gamma in spec.discount_probe_set if gammas is None else gammas:
        v_red = discounted_values(mdp, red, gamma)
        v_blue = discounted_values(mdp, blue, gamma)
        q_red = mdp.reward[S0, RED] + gamma * v_red[R_CYCLE[0]]
        q_blue = mdp.reward[S0, BLUE] + gamma * v_blue[B_CYCLE[0]]
        rows.append(
            TrapRow(
                gamma=float(gamma),
                v_red=float(v_red[R_CYCLE[0]]),
                v_blue=float(v_blue[B_CYCLE[0]]),
                v_red_closed_form=gamma * (2 - gamma) / (1 - gamma**4),
                v_blue_closed_form=1 / (1 - gamma**4),
                chosen="blue" if q_blue > q_red else "red",
            )
        )

    return TrapReport(
        tuple(rows),
        flat_gain(mdp, red, start=S0),
        flat_gain(mdp, blue, start=S0),
    )
