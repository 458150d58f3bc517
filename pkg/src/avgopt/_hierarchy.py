# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

"""
Depth-N option hierarchies.

Level 0 holds the single super-option o⁰ that never terminates (β⁰ ≡ 0),
levels 1..N-1 hold options, and level N holds the primitive actions, which
always terminate (β^N ≡ 1).

An *option prefix* at depth k is ``(o⁰, ..., o^k)``; prefixes at one depth
are numbered in mixed radix, so the children of prefix p at depth k are
``p * c_{k+1} + o`` and the ancestor of a full stack m at depth k is
``m // (P_{N-1} / P_k)``.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Union

import numpy as np

from numpy.typing import ArrayLike, NDArray
from scipy.special import expit, softmax

from ._errors import InvalidHierarchyError


DEFAULT_BOUND = 50.0

OptionStack = tuple[int, ...]
Encoder = Callable[[int, OptionStack], ArrayLike]


@dataclass(frozen=True)
class HierarchySpec:
    """
    Shape of an option hierarchy.

    Attributes:
        depth: N >= 1; with N = 1 there are no options at all.

        options_per_level: Option counts for levels 1..N-1.

        n_actions: Number of primitive actions (level N).
    """

    depth: int
    options_per_level: tuple[int, ...]
    n_actions: int

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "options_per_level", tuple(self.options_per_level)
        )
        if self.depth < 1:
            msg = f"depth must be >= 1, got {self.depth}"
            raise InvalidHierarchyError(msg)
        if len(self.options_per_level) != self.depth - 1:
            msg = (
                f"depth {self.depth} needs {self.depth - 1} option counts, "
                f"got {len(self.options_per_level)}"
            )
            raise InvalidHierarchyError(msg)
        if self.n_actions < 1 or any(c < 1 for c in self.options_per_level):
            msg = "option and action counts must be positive"
            raise InvalidHierarchyError(msg)

    @property
    def counts(self) -> tuple[int, ...]:
        """
        Number of choices at every level 0..N.
        """
        return (1, *self.options_per_level, self.n_actions)

    @property
    def prefix_counts(self) -> tuple[int, ...]:
        """
        Number of option prefixes at every depth 0..N-1.
        """
        out = [1]
        for c in self.options_per_level:
            out.append(out[-1] * c)
        return tuple(out)

    @property
    def n_stacks(self) -> int:
        return self.prefix_counts[-1]

    def ancestor(self, m: int, k: int) -> int:
        """
        Index at depth *k* of the prefix of full stack *m*.
        """
        pc = self.prefix_counts
        return m // (pc[-1] // pc[k])

    def prefix_index(self, context: Sequence[int]) -> int:
        """
        Index of the prefix ``(o⁰, ..., o^k)`` among all prefixes at depth
        ``k = len(context) - 1``.
        """
        if not context or len(context) > self.depth or context[0] != 0:
            msg = f"invalid option prefix {tuple(context)!r}"
            raise InvalidHierarchyError(msg)
        counts = self.counts
        idx = 0
        for level, o in enumerate(context[1:], start=1):
            if not 0 <= o < counts[level]:
                msg = f"option {o} out of range at level {level}"
                raise InvalidHierarchyError(msg)
            idx = idx * counts[level] + o
        return idx

    def prefix_tuple(self, k: int, idx: int) -> OptionStack:
        """
        Inverse of :meth:`prefix_index` for depth *k*.
        """
        options = []
        for level in range(k, 0, -1):
            idx, o = divmod(idx, self.counts[level])
            options.append(o)
        return (0, *reversed(options))

    def stack_index(self, stack: Sequence[int]) -> int:
        if len(stack) != self.depth:
            msg = f"a stack has {self.depth} entries, got {tuple(stack)!r}"
            raise InvalidHierarchyError(msg)
        return self.prefix_index(stack)


class _Row:
    """
    Tabular context: a single row of a weight table.
    """

    __slots__ = ("row",)

    def __init__(self, row: int) -> None:
        self.row = row

    def dot(self, W: NDArray[np.float64]) -> NDArray[np.float64]:
        return W[self.row]  # type: ignore[no-any-return]

    def add(
        self,
        W: NDArray[np.float64],
        coeff: NDArray[np.float64] | float,
        bound: float,
    ) -> None:
        view = W[self.row : self.row + 1]
        view += coeff
        np.clip(view, -bound, bound, out=view)

    def scatter(
        self, shape: tuple[int, ...], coeff: NDArray[np.float64] | float
    ) -> NDArray[np.float64]:
        out = np.zeros(shape)
        out[self.row] = coeff
        return out


class _Dense:
    """
    Linear-feature context: a dense feature vector.
    """

    __slots__ = ("x",)

    def __init__(self, x: NDArray[np.float64]) -> None:
        self.x = x

    def dot(self, W: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.x @ W  # type: ignore[no-any-return]

    def add(
        self,
        W: NDArray[np.float64],
        coeff: NDArray[np.float64] | float,
        bound: float,
    ) -> None:
        W += np.multiply.outer(self.x, coeff)
        np.clip(W, -bound, bound, out=W)

    def scatter(
        self, shape: tuple[int, ...], coeff: NDArray[np.float64] | float
    ) -> NDArray[np.float64]:
        return np.multiply.outer(self.x, coeff).reshape(shape)


Context = Union[_Row, _Dense]


class FeatureMap:
    """
    Encodes ``(state, option prefix)`` contexts at every prefix depth.

    Policies at level ℓ read depth ℓ-1 contexts; terminations and critics at
    level ℓ read depth ℓ contexts.

    Use :meth:`tabular` (the default everywhere) or :meth:`linear`.
    """

    __slots__ = ("_dims", "_encode", "_encodings", "n_states", "spec")

    def __init__(
        self,
        spec: HierarchySpec,
        n_states: int,
        dims: Sequence[int] | None = None,
        encode: Encoder | None = None,
    ) -> None:
        if n_states < 1:
            msg = "a feature map needs at least one state"
            raise InvalidHierarchyError(msg)
        self.spec = spec
        self.n_states = n_states
        self._encode = encode
        self._encodings: dict[int, NDArray[np.float64]] = {}
        if encode is None:
            self._dims = tuple(n_states * p for p in spec.prefix_counts)
        else:
            if dims is None or len(dims) != spec.depth:
                msg = f"linear features need {spec.depth} dimensions"
                raise InvalidHierarchyError(msg)
            self._dims = tuple(int(d) for d in dims)

    @classmethod
    def tabular(cls, spec: HierarchySpec, n_states: int) -> FeatureMap:
        """
        One-hot indicator per ``(state, prefix)`` pair.
        """
        return cls(spec, n_states)

    @classmethod
    def linear(
        cls,
        spec: HierarchySpec,
        n_states: int,
        encode: Encoder,
        dims: Sequence[int],
    ) -> FeatureMap:
        """
        User-supplied features: ``encode(s, prefix)`` returns a vector of
        length ``dims[len(prefix) - 1]``.
        """
        return cls(spec, n_states, dims, encode)

    def __repr__(self) -> str:
        mode = "tabular" if self.is_tabular else "linear"
        return f"<FeatureMap({mode}, dims={self._dims})>"

    @property
    def is_tabular(self) -> bool:
        return self._encode is None

    def dim(self, k: int) -> int:
        return self._dims[k]

    def encoding(self, k: int) -> NDArray[np.float64]:
        """
        Feature array of shape ``(S, P_k, d_k)`` for all depth-*k* contexts.
        """
        if k in self._encodings:
            return self._encodings[k]

        S, P = self.n_states, self.spec.prefix_counts[k]
        if self._encode is None:
            X = np.eye(S * P).reshape(S, P, S * P)
        else:
            X = np.empty((S, P, self._dims[k]))
            for s in range(S):
                for p in range(P):
                    x = np.asarray(
                        self._encode(s, self.spec.prefix_tuple(k, p)),
                        dtype=np.float64,
                    )
                    if x.shape != (self._dims[k],) or not np.all(
                        np.isfinite(x)
                    ):
                        msg = (
                            f"feature vector for ({s}, depth {k}, {p}) must "
                            f"be finite with shape ({self._dims[k]},)"
                        )
                        raise InvalidHierarchyError(msg)
                    X[s, p] = x
        X.flags.writeable = False
        self._encodings[k] = X

        return X

    def context(self, k: int, s: int, p: int) -> Context:
        if self._encode is None:
            return _Row(s * self.spec.prefix_counts[k] + p)
        return _Dense(self.encoding(k)[s, p])

    def scores(
        self, k: int, W: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """
        Linear scores of *W* for every depth-*k* context: shape
        ``(S, P_k, *W.shape[1:])``.
        """
        S, P = self.n_states, self.spec.prefix_counts[k]
        if self._encode is None:
            return W.reshape(S, P, *W.shape[1:])
        return np.tensordot(self.encoding(k), W, axes=([2], [0]))

    def backproject(
        self, k: int, coeff: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """
        Adjoint of :meth:`scores`: gradient w.r.t. the weights given the
        gradient *coeff* w.r.t. the scores.
        """
        if self._encode is None:
            return coeff.reshape(self._dims[k], *coeff.shape[2:])
        return np.tensordot(self.encoding(k), coeff, axes=([0, 1], [0, 1]))


class ActorParams:
    """
    Policy weights θ^ℓ (ℓ = 1..N) and termination weights φ^ℓ
    (ℓ = 1..N-1), stored in one flat vector.

    ``policy[l]`` has shape ``(d_{l-1}, c_l)``, ``termination[l]`` shape
    ``(d_l,)``; both are views into the flat vector. Every weight stays in
    ``[-bound, bound]``.
    """

    __slots__ = (
        "_blocks",
        "_flat",
        "bound",
        "features",
        "policy",
        "spec",
        "termination",
    )

    def __init__(
        self,
        spec: HierarchySpec,
        features: FeatureMap,
        bound: float = DEFAULT_BOUND,
        flat: ArrayLike | None = None,
    ) -> None:
        if not bound > 0.0:
            msg = f"projection bound must be positive, got {bound}"
            raise InvalidHierarchyError(msg)
        if features.spec != spec:
            msg = "feature map was built for another hierarchy"
            raise InvalidHierarchyError(msg)

        self.spec = spec
        self.features = features
        self.bound = float(bound)

        blocks: dict[str, tuple[slice, tuple[int, ...]]] = {}
        offset = 0
        for level in range(1, spec.depth + 1):
            shape = (features.dim(level - 1), spec.counts[level])
            blocks[f"pi{level}"] = (slice(offset, offset + shape[0] * shape[1]), shape)
            offset += shape[0] * shape[1]
        for level in range(1, spec.depth):
            shape = (features.dim(level),)
            blocks[f"beta{level}"] = (slice(offset, offset + shape[0]), shape)
            offset += shape[0]
        self._blocks = blocks

        if flat is None:
            self._flat = np.zeros(offset)
        else:
            self._flat = np.array(flat, dtype=np.float64)
            if self._flat.shape != (offset,):
                msg = f"expected {offset} parameters, got {self._flat.shape}"
                raise InvalidHierarchyError(msg)
            if not np.all(np.abs(self._flat) <= self.bound):
                msg = f"parameters must lie in [-{bound}, {bound}]"
                raise InvalidHierarchyError(msg)

        self.policy: tuple[NDArray[np.float64] | None, ...] = (
            None,
            *(self.block(f"pi{level}") for level in range(1, spec.depth + 1)),
        )
        self.termination: tuple[NDArray[np.float64] | None, ...] = (
            None,
            *(self.block(f"beta{level}") for level in range(1, spec.depth)),
        )

    @classmethod
    def zeros(
        cls,
        spec: HierarchySpec,
        n_states: int,
        bound: float = DEFAULT_BOUND,
    ) -> ActorParams:
        """
        Tabular parameters with all weights 0: uniform policies, β = 0.5.
        """
        return cls(spec, FeatureMap.tabular(spec, n_states), bound)

    def __repr__(self) -> str:
        return (
            f"<ActorParams(depth={self.spec.depth}, dim={self.dimension}, "
            f"bound={self.bound})>"
        )

    @property
    def dimension(self) -> int:
        return self._flat.shape[0]

    @property
    def blocks(self) -> dict[str, slice]:
        """
        Slices of the flat vector per block (``pi1``.., ``beta1``..).
        """
        return {name: sl for name, (sl, _) in self._blocks.items()}

    def block(self, name: str) -> NDArray[np.float64]:
        sl, shape = self._blocks[name]
        return self._flat[sl].reshape(shape)

    def vector(self) -> NDArray[np.float64]:
        """
        Copy of the flat parameter vector.
        """
        return self._flat.copy()

    def with_vector(
        self, flat: ArrayLike, bound: float | None = None
    ) -> ActorParams:
        """
        New parameters with the same layout and *flat* as values.
        """
        return ActorParams(
            self.spec,
            self.features,
            self.bound if bound is None else bound,
            flat,
        )

    def copy(self) -> ActorParams:
        return self.with_vector(self._flat)

    def coordinate_name(self, i: int) -> str:
        """
        Human-readable id of flat coordinate *i*, like ``pi2:17:1``.
        """
        for name, (sl, shape) in self._blocks.items():
            if sl.start <= i < sl.stop:
                idx = np.unravel_index(i - sl.start, shape)
                return ":".join((name, *(str(int(j)) for j in idx)))

        msg = f"coordinate {i} out of range"
        raise InvalidHierarchyError(msg)

    def coordinate_index(self, name: str) -> int:
        """
        Inverse of :meth:`coordinate_name`.
        """
        block, *idx = name.split(":")
        try:
            sl, shape = self._blocks[block]
            return sl.start + int(
                np.ravel_multi_index(tuple(int(j) for j in idx), shape)
            )
        except (KeyError, ValueError) as e:
            msg = f"unknown parameter id {name!r}"
            raise InvalidHierarchyError(msg) from e


@dataclass(frozen=True)
class PolicyTables:
    """
    All hierarchy probabilities for one parameter setting.

    Attributes:
        pi: ``pi[l]`` for l = 1..N, shape ``(S, P_{l-1}, c_l)``.

        beta:
            ``beta[l]`` for l = 0..N-1, shape ``(S, P_l)``; ``beta[0]`` is
            all zeros.
    """

    pi: tuple[NDArray[np.float64], ...]
    beta: tuple[NDArray[np.float64], ...]


def policy_tables(params: ActorParams) -> PolicyTables:
    spec, fm = params.spec, params.features
    pi = [np.empty(0)]
    for level in range(1, spec.depth + 1):
        pi.append(softmax(fm.scores(level - 1, params.policy[level]), axis=-1))  # type: ignore[arg-type]
    beta = [np.zeros((fm.n_states, 1))]
    for level in range(1, spec.depth):
        beta.append(expit(fm.scores(level, params.termination[level])))  # type: ignore[arg-type]

    return PolicyTables(tuple(pi), tuple(beta))


def _check_state(params: ActorParams, s: int) -> None:
    if not 0 <= s < params.features.n_states:
        msg = f"state {s} out of range"
        raise InvalidHierarchyError(msg)


def policy_prob(
    params: ActorParams, level: int, s: int, context: Sequence[int]
) -> NDArray[np.float64]:
    """
    ``π^ℓ(· | s, o^{0:ℓ-1})``: softmax over the level's choices.

    Args:
        level: 1..N; level N yields action probabilities.

        context: The option prefix ``(o⁰, ..., o^{ℓ-1})``.
    """
    spec = params.spec
    if not 1 <= level <= spec.depth or len(context) != level:
        msg = f"level {level} needs a prefix of length {level}"
        raise InvalidHierarchyError(msg)
    _check_state(params, s)

    ctx = params.features.context(level - 1, s, spec.prefix_index(context))
    return softmax(ctx.dot(params.policy[level]))  # type: ignore[arg-type,no-any-return]


def termination_prob(
    params: ActorParams, level: int, s: int, context: Sequence[int]
) -> float:
    """
    ``β^ℓ(s, o^{0:ℓ})``; exactly 0 at level 0 and exactly 1 at level N.
    """
    spec = params.spec
    if level <= 0:
        return 0.0
    if level >= spec.depth:
        return 1.0
    if len(context) != level + 1:
        msg = f"level {level} needs a prefix of length {level + 1}"
        raise InvalidHierarchyError(msg)
    _check_state(params, s)

    ctx = params.features.context(level, s, spec.prefix_index(context))
    return float(expit(ctx.dot(params.termination[level])))  # type: ignore[arg-type]


def _categorical(probs: NDArray[np.float64], rng: np.random.Generator) -> int:
    idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return min(idx, probs.shape[0] - 1)


def policy_at(
    params: ActorParams, level: int, s: int, p: int
) -> NDArray[np.float64]:
    """
    Index-based :func:`policy_prob` for the depth ``level - 1`` prefix *p*.
    """
    ctx = params.features.context(level - 1, s, p)
    return softmax(ctx.dot(params.policy[level]))  # type: ignore[arg-type,no-any-return]


def termination_at(params: ActorParams, level: int, s: int, p: int) -> float:
    """
    Index-based :func:`termination_prob` for 1 <= *level* <= N-1.
    """
    ctx = params.features.context(level, s, p)
    return float(expit(ctx.dot(params.termination[level])))  # type: ignore[arg-type]


def select_stack(
    params: ActorParams, s: int, keep: int, p: int, rng: np.random.Generator
) -> int:
    """
    Complete the depth-*keep* prefix *p* to a full stack by drawing levels
    keep+1..N-1 top-down from the policies at *s*.
    """
    spec = params.spec
    for level in range(keep + 1, spec.depth):
        probs = policy_at(params, level, s, p)
        p = p * spec.counts[level] + _categorical(probs, rng)
    return p


def arrive(
    params: ActorParams, s: int, m: int, rng: np.random.Generator
) -> tuple[int, int]:
    """
    Index-based :func:`sample_arrival`: returns the highest level that kept
    its option and the new full-stack index.
    """
    spec = params.spec

    keep = 0
    for level in range(spec.depth - 1, 0, -1):
        beta = termination_at(params, level, s, spec.ancestor(m, level))
        if rng.random() >= beta:
            keep = level
            break

    return keep, select_stack(params, s, keep, spec.ancestor(m, keep), rng)


def sample_arrival(
    params: ActorParams,
    s: int,
    stack: Sequence[int],
    rng: np.random.Generator,
) -> tuple[int, OptionStack]:
    """
    Sample which options terminate on arriving at *s* and re-select them.

    Terminations cascade outward from level N-1; the first level that does
    not terminate is *i* and keeps its prefix ``o^{0:i}``, levels above it
    are re-selected top-down from the policies at *s*.

    Returns:
        ``(i, new stack)``.
    """
    _check_state(params, s)
    m = params.spec.stack_index(stack)
    keep, m_new = arrive(params, s, m, rng)

    return keep, params.spec.prefix_tuple(params.spec.depth - 1, m_new)


def arrival_row(
    params: ActorParams, s: int, k: int, p: int
) -> NDArray[np.float64]:
    """
    Distribution over depth-*k* prefixes after arriving at *s* with prefix
    *p*, given that every level above *k* terminated.
    """
    spec, fm = params.spec, params.features
    if k == 0:
        return np.ones(1)

    beta = float(
        expit(fm.context(k, s, p).dot(params.termination[k]))  # type: ignore[arg-type]
    )
    parent = p // spec.counts[k]
    upper = arrival_row(params, s, k - 1, parent)
    # Each depth k-1 prefix re-selects its level-k option.
    probs = softmax(
        fm.scores(k - 1, params.policy[k])[s],  # type: ignore[arg-type]
        axis=-1,
    )
    row = beta * (upper[:, None] * probs).ravel()
    row[p] += 1.0 - beta

    return row  # type: ignore[no-any-return]


def next_option_distribution(
    params: ActorParams, s: int, context: Sequence[int]
) -> NDArray[np.float64]:
    """
    ``P_{π,β}(o'^{0:ℓ-1} | s', o^{0:ℓ-1})``, exactly.

    The distribution of the new prefix of length ℓ = ``len(context)`` after
    arriving at *s* given that levels ℓ..N-1 terminated. Entry *j* is the
    probability of ``spec.prefix_tuple(ℓ - 1, j)``. For ℓ = N this is the
    distribution of the stack drawn by :func:`sample_arrival`.
    """
    spec = params.spec
    if not 1 <= len(context) <= spec.depth:
        msg = f"context length must be in 1..{spec.depth}"
        raise InvalidHierarchyError(msg)
    _check_state(params, s)

    k = len(context) - 1
    return arrival_row(params, s, k, spec.prefix_index(context))


@dataclass(frozen=True)
class LogGradFeatures:
    """
    Log-likelihood gradients in the full actor dimension.

    Attributes:
        psi_action: ∇ log π^N(a | s, o^{0:N-1}).

        psi_option:
            ∇ log π^ℓ(o^ℓ | ·, o^{0:ℓ-1}) for ℓ = 1..N-1 (index ℓ-1).

        psi_beta: ∇ log β^ℓ(s', o^{0:ℓ}) for ℓ = 1..N-1 (index ℓ-1).
    """

    psi_action: NDArray[np.float64]
    psi_option: tuple[NDArray[np.float64], ...]
    psi_beta: tuple[NDArray[np.float64], ...]


def _embed(
    params: ActorParams, block: str, local: NDArray[np.float64]
) -> NDArray[np.float64]:
    out = np.zeros(params.dimension)
    out[params.blocks[block]] = local.ravel()
    return out


def log_grad(
    params: ActorParams,
    s: int,
    stack: Sequence[int],
    a: int,
    s_next: int,
    next_stack: Sequence[int] | None = None,
) -> LogGradFeatures:
    """
    Exact log-gradients of the softmax/sigmoid parameterization.

    The action term is taken at ``(s, stack)``, the termination terms at the
    arrival state *s_next* with the incoming *stack*. Option terms are taken
    at ``(s_next, next_stack)`` when the newly selected stack is given and
    at ``(s, stack)`` otherwise.
    """
    spec, fm = params.spec, params.features
    N = spec.depth
    _check_state(params, s)
    _check_state(params, s_next)
    m = spec.stack_index(stack)
    if not 0 <= a < spec.n_actions:
        msg = f"action {a} out of range"
        raise InvalidHierarchyError(msg)

    def policy_term(level: int, state: int, full: int) -> NDArray[np.float64]:
        p = spec.ancestor(full, level - 1)
        choice = (
            a
            if level == N
            else spec.ancestor(full, level) % spec.counts[level]
        )
        ctx = fm.context(level - 1, state, p)
        W = params.policy[level]
        coeff = -softmax(ctx.dot(W))  # type: ignore[arg-type]
        coeff[choice] += 1.0
        return _embed(params, f"pi{level}", ctx.scatter(W.shape, coeff))  # type: ignore[union-attr]

    if next_stack is None:
        opt_state, opt_stack = s, m
    else:
        opt_state, opt_stack = s_next, spec.stack_index(next_stack)

    psi_beta = []
    for level in range(1, N):
        ctx = fm.context(level, s_next, spec.ancestor(m, level))
        W = params.termination[level]
        beta = float(expit(ctx.dot(W)))  # type: ignore[arg-type]
        psi_beta.append(
            _embed(params, f"beta{level}", ctx.scatter(W.shape, 1.0 - beta))  # type: ignore[union-attr]
        )

    return LogGradFeatures(
        psi_action=policy_term(N, s, m),
        psi_option=tuple(
            policy_term(level, opt_state, opt_stack) for level in range(1, N)
        ),
        psi_beta=tuple(psi_beta),
    )


def initial_stack_distribution(
    params: ActorParams, s: int
) -> NDArray[np.float64]:
    """
    Distribution of the full stack selected top-down at *s* from scratch.
    """
    spec = params.spec
    dist = np.ones(1)
    for level in range(1, spec.depth):
        probs = softmax(
            params.features.scores(level - 1, params.policy[level])[s],  # type: ignore[arg-type]
            axis=-1,
        )
        dist = (dist[:, None] * probs).ravel()
    return dist


def params_to_json(params: ActorParams) -> dict[str, object]:
    """
    Snapshot of *params* as ``{block name -> nested weight lists}`` plus the
    hierarchy shape.
    """
    return {
        "depth": params.spec.depth,
        "options_per_level": list(params.spec.options_per_level),
        "n_actions": params.spec.n_actions,
        "n_states": params.features.n_states,
        "bound": params.bound,
        "blocks": {
            name: params.block(name).tolist() for name in params.blocks
        },
    }


def params_from_json(
    doc: dict[str, object], features: FeatureMap | None = None
) -> ActorParams:
    """
    Inverse of :func:`params_to_json`; tabular features unless *features* is
    passed.
    """
    try:
        spec = HierarchySpec(
            int(doc["depth"]),  # type: ignore[call-overload]
            tuple(doc["options_per_level"]),  # type: ignore[arg-type]
            int(doc["n_actions"]),  # type: ignore[call-overload]
        )
        fm = features or FeatureMap.tabular(spec, int(doc["n_states"]))  # type: ignore[call-overload]
        params = ActorParams(spec, fm, float(doc["bound"]))  # type: ignore[arg-type]
        flat = params.vector()
        blocks = doc["blocks"]
        for name, sl in params.blocks.items():
            flat[sl] = np.asarray(blocks[name], dtype=np.float64).ravel()  # type: ignore[index]
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, InvalidHierarchyError):
            raise
        msg = f"malformed parameter snapshot: {e!r}"
        raise InvalidHierarchyError(msg) from e

    return params.with_vector(flat)
