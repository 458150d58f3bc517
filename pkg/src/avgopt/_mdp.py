# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

import json

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from numpy.typing import NDArray

from ._errors import InvalidMdpError
from ._markov import recurrent_classes


ROW_TOL = 1e-12

Cell = tuple[int, int]


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """
    A finite MDP with state-action rewards.

    Attributes:
        transition: ``P[s, a, s']``, every row sums to 1.

        reward: ``r[s, a]`` in reward units per step.

        labels: Optional state names for reports.

        cycle_mask:
            Optional ``[s, a]`` flags marking the state-action pairs that
            complete a delivery cycle (drop-off events).

        start: State that runs start in.

    Arrays are copied and frozen on construction.
    """

    transition: NDArray[np.float64]
    reward: NDArray[np.float64]
    labels: tuple[str, ...] | None = None
    cycle_mask: NDArray[np.bool_] | None = None
    start: int = 0
    _cdf: NDArray[np.float64] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        P = np.array(self.transition, dtype=np.float64)
        r = np.array(self.reward, dtype=np.float64)

        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            msg = f"transition must have shape (S, A, S), got {P.shape}"
            raise InvalidMdpError(msg)
        S, A, _ = P.shape
        if S < 1 or A < 1:
            msg = "an MDP needs at least one state and one action"
            raise InvalidMdpError(msg)
        if r.shape != (S, A):
            msg = f"reward must have shape {(S, A)}, got {r.shape}"
            raise InvalidMdpError(msg)
        if np.any(P < 0.0) or not np.all(np.isfinite(P)):
            msg = "transition probabilities must be finite and non-negative"
            raise InvalidMdpError(msg)
        worst = np.max(np.abs(P.sum(axis=2) - 1.0))
        if worst > ROW_TOL:
            msg = f"transition rows must sum to 1 (worst deviation {worst:g})"
            raise InvalidMdpError(msg)
        if not np.all(np.isfinite(r)):
            msg = "rewards must be finite"
            raise InvalidMdpError(msg)
        if self.labels is not None and len(self.labels) != S:
            msg = f"expected {S} labels, got {len(self.labels)}"
            raise InvalidMdpError(msg)
        if not 0 <= self.start < S:
            msg = f"start state {self.start} out of range"
            raise InvalidMdpError(msg)

        mask = None
        if self.cycle_mask is not None:
            mask = np.array(self.cycle_mask, dtype=bool)
            if mask.shape != (S, A):
                msg = f"cycle_mask must have shape {(S, A)}"
                raise InvalidMdpError(msg)
            mask.flags.writeable = False

        cdf = np.cumsum(P, axis=2)
        for arr in (P, r, cdf):
            arr.flags.writeable = False

        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "cycle_mask", mask)
        object.__setattr__(
            self, "labels", tuple(self.labels) if self.labels else None
        )
        object.__setattr__(self, "_cdf", cdf)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def label(self, s: int) -> str:
        return self.labels[s] if self.labels else str(s)


@dataclass(frozen=True)
class Transition:
    """
    One environment step.
    """

    __slots__ = ("action", "cycle_completed", "next_state", "reward", "state")

    state: int
    action: int
    reward: float
    next_state: int
    cycle_completed: bool


def env_step(
    mdp: TabularMdp, s: int, a: int, rng: np.random.Generator
) -> Transition:
    """
    Sample one step of *mdp* from state *s* under action *a*.

    Pure given *rng*: the only state that changes is the random stream.
    """
    if not (0 <= s < mdp.n_states and 0 <= a < mdp.n_actions):
        msg = f"invalid state/action pair ({s}, {a})"
        raise InvalidMdpError(msg)

    cdf = mdp._cdf[s, a]
    nxt = min(
        int(np.searchsorted(cdf, rng.random(), side="right")),
        mdp.n_states - 1,
    )

    return Transition(
        state=s,
        action=a,
        reward=float(mdp.reward[s, a]),
        next_state=nxt,
        cycle_completed=bool(
            mdp.cycle_mask is not None and mdp.cycle_mask[s, a]
        ),
    )


# -- Trap chain ---------------------------------------------------------------

RED, BLUE = 0, 1

S0 = 0
R_CYCLE = (1, 2, 3, 4)
B_CYCLE = (5, 6, 7, 8)

TRAP_LABELS = ("S0", "S11", "S12", "S13", "S14", "S21", "S22", "S23", "S24")

# Edge k of a cycle leaves its k-th state.
R_EDGE_REWARDS = (0.0, 2.0, -1.0, 0.0)
B_EDGE_REWARDS = (1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class TrapChainSpec:
    """
    Analysis settings for the discount trap.

    Attributes:
        discount_probe_set: Discount factors reported by the trap analysis.

        r_edge_rewards: Rewards on the four R-cycle edges, from ``S11`` on.

        b_edge_rewards: Rewards on the four B-cycle edges, from ``S21`` on.
    """

    discount_probe_set: tuple[float, ...] = (0.3, 0.5, 0.9, 0.99)
    r_edge_rewards: tuple[float, ...] = R_EDGE_REWARDS
    b_edge_rewards: tuple[float, ...] = B_EDGE_REWARDS

    def __post_init__(self) -> None:
        if not all(0.0 < g < 1.0 for g in self.discount_probe_set):
            msg = "discount probes must lie in (0, 1)"
            raise InvalidMdpError(msg)
        if len(self.r_edge_rewards) != 4 or len(self.b_edge_rewards) != 4:
            msg = "both cycles have exactly four edges"
            raise InvalidMdpError(msg)


def build_trap_chain(spec: TrapChainSpec | None = None) -> TabularMdp:
    """
    Build the two-cycle discount trap.

    At ``S0``, *red* enters the R-cycle ``S11..S14`` and *blue* the B-cycle
    ``S21..S24``; both cycles close onto themselves so ``S0`` is transient.
    Everywhere else both actions do the same thing.

    Rewards sit on the edges so that discounted evaluation gives
    ``v_R(S11) = γ(2-γ) / (1-γ⁴)`` and ``v_B(S21) = 1 / (1-γ⁴)``; both
    cycles earn 1/4 per step.
    """
    spec = spec or TrapChainSpec()
    S, A = len(TRAP_LABELS), 2
    P = np.zeros((S, A, S))
    r = np.zeros((S, A))

    P[S0, RED, R_CYCLE[0]] = 1.0
    P[S0, BLUE, B_CYCLE[0]] = 1.0
    for cycle, rewards in (
        (R_CYCLE, spec.r_edge_rewards),
        (B_CYCLE, spec.b_edge_rewards),
    ):
        for k, s in enumerate(cycle):
            P[s, :, cycle[(k + 1) % len(cycle)]] = 1.0
            r[s, :] = rewards[k]

    return TabularMdp(P, r, labels=TRAP_LABELS, start=S0)


# -- Delivery grid ------------------------------------------------------------

MOVES: tuple[Cell, ...] = ((0, 1), (1, 0), (0, -1), (-1, 0))
MOVE_NAMES = ("N", "E", "S", "W")

EMPTY, CREDITED, FROM_P1, FROM_P2 = range(4)
FLAG_NAMES = (
    "empty",
    "empty-credited",
    "carrying-from-P1",
    "carrying-from-P2",
)
DIVIDER: frozenset[Cell] = frozenset((4, y) for y in range(1, 10))

_SPECIAL_CELLS = (
    "pickup_p1",
    "pickup_p2",
    "dropoff",
    "trap_junction",
    "alt_junction",
)


@dataclass(frozen=True)
class DeliveryGridSpec:
    """
    Layout and rewards of the delivery gridworld.

    Cells are ``(x, y)``; *N* increases *y*.

    The trap junction pays *junction_trap_reward* and sits on the route to
    *pickup_p1*; the alternative junction pays *junction_alt_reward* on the
    route to *pickup_p2*. Junctions pay empty hands only, once per trip.

    The default *walls* are a divider column from (4, 1) to (4, 9), right
    above the drop-off. It splits the grid into a P1 half and a P2 half
    joined along the bottom row, so each junction only pays on its own route.
    Pass ``walls=frozenset()`` for an open grid.
    """

    width: int = 10
    height: int = 10
    walls: frozenset[Cell] = DIVIDER
    pickup_p1: Cell = (1, 8)
    pickup_p2: Cell = (8, 8)
    dropoff: Cell = (4, 0)
    trap_junction: Cell = (3, 4)
    alt_junction: Cell = (6, 4)
    junction_trap_reward: float = 20.0
    junction_alt_reward: float = 10.0
    parcel_reward_p1: float = 50.0
    parcel_reward_p2: float = 100.0
    step_reward: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "walls", frozenset(tuple(c) for c in self.walls)
        )
        for name in _SPECIAL_CELLS:
            object.__setattr__(self, name, tuple(getattr(self, name)))

        if self.width < 1 or self.height < 1:
            msg = "grid dimensions must be positive"
            raise InvalidMdpError(msg)
        specials = {name: getattr(self, name) for name in _SPECIAL_CELLS}
        if len(set(specials.values())) != len(specials):
            msg = f"special cells must be distinct: {specials}"
            raise InvalidMdpError(msg)
        for name, cell in specials.items():
            if not self.in_bounds(cell):
                msg = f"{name} {cell} is out of bounds"
                raise InvalidMdpError(msg)
            if cell in self.walls:
                msg = f"{name} {cell} is a wall"
                raise InvalidMdpError(msg)
        rewards = (
            self.junction_trap_reward,
            self.junction_alt_reward,
            self.parcel_reward_p1,
            self.parcel_reward_p2,
            self.step_reward,
        )
        if not all(np.isfinite(rewards)):
            msg = "rewards must be finite"
            raise InvalidMdpError(msg)

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def state(self, cell: Cell, flag: int) -> int:
        x, y = cell
        return (y * self.width + x) * len(FLAG_NAMES) + flag

    def decode(self, s: int) -> tuple[Cell, int]:
        cell, flag = divmod(s, len(FLAG_NAMES))
        y, x = divmod(cell, self.width)
        return (x, y), flag


def _enter(
    spec: DeliveryGridSpec, cell: Cell, flag: int
) -> tuple[float, int, bool]:
    """
    Reward, new flag, and cycle completion for entering *cell* with *flag*.
    """
    reward = spec.step_reward
    carrying = flag in (FROM_P1, FROM_P2)

    if cell == spec.dropoff and carrying:
        reward += (
            spec.parcel_reward_p1 if flag == FROM_P1 else spec.parcel_reward_p2
        )
        return reward, EMPTY, True
    if cell == spec.pickup_p1 and not carrying:
        return reward, FROM_P1, False
    if cell == spec.pickup_p2 and not carrying:
        return reward, FROM_P2, False
    if flag == EMPTY and cell == spec.trap_junction:
        return reward + spec.junction_trap_reward, CREDITED, False
    if flag == EMPTY and cell == spec.alt_junction:
        return reward + spec.junction_alt_reward, CREDITED, False

    return reward, flag, False


def build_delivery_grid(spec: DeliveryGridSpec | None = None) -> TabularMdp:
    """
    Compile the delivery gridworld into a deterministic continuing MDP.

    States are ``cell × carry-flag``; actions are N/E/S/W and bumping into a
    wall or the border leaves the agent where it is. Runs start on the
    drop-off cell with empty hands.

    Raises:
        InvalidMdpError:
            If the layout is invalid or the uniform-random policy doesn't
            induce a unichain chain (for example, walls cut the grid apart).
    """
    spec = spec or DeliveryGridSpec()
    n_flags = len(FLAG_NAMES)
    S = spec.width * spec.height * n_flags
    A = len(MOVES)

    P = np.zeros((S, A, S))
    r = np.zeros((S, A))
    mask = np.zeros((S, A), dtype=bool)
    labels = []

    for s in range(S):
        (x, y), flag = spec.decode(s)
        labels.append(f"({x},{y})/{FLAG_NAMES[flag]}")
        for a, (dx, dy) in enumerate(MOVES):
            target = (x + dx, y + dy)
            if not spec.in_bounds(target) or target in spec.walls:
                P[s, a, s] = 1.0
                r[s, a] = spec.step_reward
                continue
            reward, new_flag, done = _enter(spec, target, flag)
            P[s, a, spec.state(target, new_flag)] = 1.0
            r[s, a] = reward
            mask[s, a] = done

    uniform = P.mean(axis=1)
    n_classes = len(recurrent_classes(uniform))
    if n_classes != 1:
        msg = (
            f"delivery grid is not unichain under the uniform policy "
            f"({n_classes} recurrent classes); check the walls"
        )
        raise InvalidMdpError(msg)

    return TabularMdp(
        P,
        r,
        labels=tuple(labels),
        cycle_mask=mask,
        start=spec.state(spec.dropoff, EMPTY),
    )


# -- JSON ---------------------------------------------------------------------


def mdp_to_json(mdp: TabularMdp) -> dict[str, Any]:
    """
    Serialize *mdp* into a JSON-compatible document.

    Transitions are stored row-major as ``S·A`` rows of ``S`` probabilities;
    floats keep their shortest round-tripping representation.
    """
    doc: dict[str, Any] = {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "transitions": mdp.transition.reshape(-1, mdp.n_states).tolist(),
        "rewards": mdp.reward.tolist(),
        "labels": list(mdp.labels) if mdp.labels else None,
        "start": mdp.start,
    }
    if mdp.cycle_mask is not None:
        doc["cycle_mask"] = mdp.cycle_mask.tolist()

    return doc


def mdp_from_json(doc: dict[str, Any] | str) -> TabularMdp:
    """
    Inverse of :func:`mdp_to_json`; also accepts the JSON text.
    """
    if isinstance(doc, str):
        doc = json.loads(doc)
    try:
        S, A = int(doc["n_states"]), int(doc["n_actions"])
        P = np.asarray(doc["transitions"], dtype=np.float64)
        if P.shape != (S * A, S):
            msg = f"transitions must have {S * A} rows of {S} entries"
            raise InvalidMdpError(msg)
        return TabularMdp(
            P.reshape(S, A, S),
            np.asarray(doc["rewards"], dtype=np.float64),
            labels=tuple(doc["labels"]) if doc.get("labels") else None,
            cycle_mask=(
                np.asarray(doc["cycle_mask"], dtype=bool)
                if doc.get("cycle_mask") is not None
                else None
            ),
            start=int(doc.get("start", 0)),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, InvalidMdpError):
            raise
        msg = f"malformed MDP document: {e!r}"
        raise InvalidMdpError(msg) from e
