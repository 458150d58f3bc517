# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

"""
The exact policy gradient of the gain and a finite-difference oracle.
"""

from __future__ import annotations

from collections.abc import Collection
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from numpy.typing import ArrayLike, NDArray
from scipy.special import softmax
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from ._errors import ConfigError, InvalidHierarchyError, NotUnichainError
from ._exact import _evaluate, _values, stationary_distribution
from ._hierarchy import ActorParams, FeatureMap, HierarchySpec
from ._markov import stationary
from ._mdp import TabularMdp


FD_STEP = 1e-5
GRADCHECK_TOL = 1e-4
DENOMINATOR_FLOOR = 1e-8
MAX_RESAMPLES = 50
FLAT_TOL = 1e-9

TERMS = ("action", "option", "termination")


@dataclass(frozen=True, eq=False)
class GradientVector:
    """
    A gradient in the flat layout of *params*.
    """

    vector: NDArray[np.float64]
    params: ActorParams = field(repr=False)

    def __post_init__(self) -> None:
        if self.vector.shape != (self.params.dimension,):
            msg = "gradient dimension doesn't match the parameters"
            raise InvalidHierarchyError(msg)
        if not np.all(np.isfinite(self.vector)):
            msg = "gradient has non-finite entries"
            raise InvalidHierarchyError(msg)

    def block(self, name: str) -> NDArray[np.float64]:
        sl = self.params.blocks[name]
        return self.vector[sl].reshape(self.params.block(name).shape)


def theorem1_gradient(
    mdp: TabularMdp,
    params: ActorParams,
    terms: Collection[str] = TERMS,
) -> GradientVector:
    """
    Exact ∇_θ J as the μ_Ω-weighted sum of three terms.

    - ``action``: ∂π^N · Q_U.
    - ``option``: ∂π^ℓ · Q_Ω at the next state, weighted by the probability
      that levels ℓ..N-1 terminated there.
    - ``termination``: -∂β^ℓ · A_Ω, weighted by the probability that levels
      above ℓ terminated.

    Pass a subset of *terms* to get the masked sum.

    Raises:
        NotUnichainError: If the augmented chain is not unichain.
    """
    unknown = set(terms) - set(TERMS)
    if unknown:
        msg = f"unknown gradient terms: {sorted(unknown)}"
        raise ValueError(msg)

    spec, fm = params.spec, params.features
    S, M, N = mdp.n_states, spec.n_stacks, spec.depth

    ev = _evaluate(mdp, params)
    values, advantage, d = _values(mdp, spec, ev)
    tables = ev.tables

    out = np.zeros(params.dimension)
    blocks = params.blocks

    if "action" in terms:
        pi = tables.pi[N]
        coeff = d[:, :, None] * pi * (values.q_u - values.q_omega[N - 1][:, :, None])
        out[blocks[f"pi{N}"]] = fm.backproject(N - 1, coeff).ravel()

    # Mass arriving at s' with incoming stack m, times the probability that
    # every level above the current one terminated.
    weight = np.einsum("sm,smt->tm", d, ev.averaged)
    for level in range(N - 1, 0, -1):
        P_k = spec.prefix_counts[level]
        beta = tables.beta[level]

        if "termination" in terms:
            grouped = weight.reshape(S, P_k, -1).sum(axis=2)
            coeff = -grouped * beta * (1.0 - beta) * advantage.values[level]
            out[blocks[f"beta{level}"]] = fm.backproject(level, coeff)

        weight = weight * beta[:, np.arange(M) // (M // P_k)]

        if "option" in terms:
            grouped = weight.reshape(S, spec.prefix_counts[level - 1], -1).sum(
                axis=2
            )
            at_parent = np.einsum(
                "sp,spq->sq", grouped, ev.arrivals[level - 1]
            )
            children = values.q_omega[level].reshape(
                S, -1, spec.counts[level]
            )
            coeff = (
                at_parent[:, :, None]
                * tables.pi[level]
                * (children - values.q_omega[level - 1][:, :, None])
            )
            out[blocks[f"pi{level}"]] = fm.backproject(level - 1, coeff).ravel()

    return GradientVector(out, params)


def _gain(mdp: TabularMdp, params: ActorParams) -> float:
    return _values(mdp, params.spec, _evaluate(mdp, params))[0].gain


def finite_difference_gradient(
    mdp: TabularMdp, params: ActorParams, h: float = FD_STEP
) -> GradientVector:
    """
    Central differences of J(θ ± h e_i) for every coordinate.

    Probe points may leave the projection box by *h*.

    Raises:
        NotUnichainError: With ``coordinate`` set to the failing probe.
    """
    if not h > 0.0:
        msg = f"finite-difference step must be positive, got {h}"
        raise ConfigError(msg)

    theta = params.vector()
    out = np.zeros_like(theta)
    for i in range(theta.shape[0]):
        probe = theta.copy()
        try:
            probe[i] = theta[i] + h
            up = _gain(mdp, params.with_vector(probe, params.bound + h))
            probe[i] = theta[i] - h
            down = _gain(mdp, params.with_vector(probe, params.bound + h))
        except NotUnichainError as e:
            msg = f"probe of {params.coordinate_name(i)} is not unichain: {e}"
            raise NotUnichainError(msg, coordinate=i) from e
        out[i] = (up - down) / (2.0 * h)

    return GradientVector(out, params)


def flat_policy_gradient(
    mdp: TabularMdp, logits: ArrayLike
) -> NDArray[np.float64]:
    """
    ∇J of a flat softmax policy w.r.t. its ``(S, A)`` logits.

    Classical average-reward policy gradient: Σ_s d(s) Σ_a ∂π(a|s) q(s, a).
    """
    z = np.asarray(logits, dtype=np.float64)
    pi = softmax(z, axis=1)
    P = np.einsum("sa,sat->st", pi, mdp.transition)
    r = np.einsum("sa,sa->s", pi, mdp.reward)

    d = stationary(P, 1e-12)
    gain = d @ r
    n = mdp.n_states
    h = scipy.linalg.solve(np.eye(n) - P + np.outer(np.ones(n), d), r - gain)
    q = mdp.reward - gain + mdp.transition @ h
    v = np.einsum("sa,sa->s", pi, q)

    return d[:, None] * pi * (q - v[:, None])  # type: ignore[no-any-return]


def relative_error(
    exact: NDArray[np.float64], approx: NDArray[np.float64]
) -> NDArray[np.float64]:
    """
    Entrywise ``|exact - approx|`` over the floored sup-norm of *exact*.
    """
    denom = max(float(np.max(np.abs(exact), initial=0.0)), DENOMINATOR_FLOOR)
    return np.abs(exact - approx) / denom  # type: ignore[no-any-return]


@dataclass(frozen=True)
class GradcheckInstance:
    mdp: TabularMdp
    params: ActorParams


def _draw_instance(rng: np.random.Generator) -> GradcheckInstance:
    depth = int(rng.integers(2, 4))
    n_states = int(rng.integers(2, 7))
    n_actions = int(rng.integers(2, 4))
    options = tuple(int(c) for c in rng.integers(2, 4, size=depth - 1))
    spec = HierarchySpec(depth, options, n_actions)

    mdp = TabularMdp(
        rng.dirichlet(np.ones(n_states), size=(n_states, n_actions)),
        rng.uniform(-1.0, 1.0, size=(n_states, n_actions)),
    )
    params = ActorParams(spec, FeatureMap.tabular(spec, n_states))
    params = params.with_vector(rng.uniform(-1.0, 1.0, size=params.dimension))

    return GradcheckInstance(mdp, params)


def random_instance(rng: np.random.Generator) -> GradcheckInstance:
    """
    A random unichain instance; redraws until the augmented chain is
    unichain.
    """
    for attempt in Retrying(
        retry=retry_if_exception_type(NotUnichainError),
        stop=stop_after_attempt(MAX_RESAMPLES),
        reraise=True,
    ):
        with attempt:
            inst = _draw_instance(rng)
            stationary_distribution(
                _evaluate(inst.mdp, inst.params).kernel
            )

    return inst


@dataclass(frozen=True)
class BlockErrors:
    name: str
    max: float
    median: float


@dataclass(frozen=True)
class InstanceResult:
    index: int
    depth: int
    n_states: int
    options_per_level: tuple[int, ...]
    n_actions: int
    dimension: int
    max_error: float
    blocks: tuple[BlockErrors, ...]
    passed: bool


@dataclass(frozen=True)
class GradcheckReport:
    """
    Exact vs finite-difference gradients on random instances.
    """

    seed: int
    tolerance: float
    step: float
    results: tuple[InstanceResult, ...]
    flat_error: float | None = None

    @property
    def passed(self) -> bool:
        flat_ok = self.flat_error is None or self.flat_error < FLAT_TOL
        return flat_ok and all(r.passed for r in self.results)

    def to_json(self) -> dict[str, object]:
        return {
            "seed": self.seed,
            "tolerance": self.tolerance,
            "step": self.step,
            "passed": self.passed,
            "flat_error": self.flat_error,
            "instances": [
                {
                    "index": r.index,
                    "depth": r.depth,
                    "n_states": r.n_states,
                    "options_per_level": list(r.options_per_level),
                    "n_actions": r.n_actions,
                    "dimension": r.dimension,
                    "max_error": r.max_error,
                    "passed": r.passed,
                    "blocks": {
                        b.name: {"max": b.max, "median": b.median}
                        for b in r.blocks
                    },
                }
                for r in self.results
            ],
        }

    def format_table(self) -> str:
        lines = [
            f"gradcheck seed={self.seed} tolerance={self.tolerance:g} "
            f"h={self.step:g}",
            f"{'#':>3} {'N':>2} {'S':>2} {'options':<8} {'A':>2} "
            f"{'dim':>5} {'max rel err':>12}  result",
        ]
        lines.extend(
            f"{r.index:>3} {r.depth:>2} {r.n_states:>2} "
            f"{'x'.join(map(str, r.options_per_level)):<8} {r.n_actions:>2} "
            f"{r.dimension:>5} {r.max_error:>12.3e}  "
            f"{'pass' if r.passed else 'FAIL'}"
            for r in self.results
        )
        if self.flat_error is not None:
            lines.append(f"flat reduction (N=1) rel err {self.flat_error:.3e}")
        lines.append("PASS" if self.passed else "FAIL")

        return "\n".join(lines)


def check_instance(
    seed: int, index: int, tolerance: float = GRADCHECK_TOL, h: float = FD_STEP
) -> InstanceResult:
    """
    Draw instance *index* of the batch *seed* and compare both gradients.
    """
    inst = random_instance(np.random.default_rng([seed, index]))
    params = inst.params

    exact = theorem1_gradient(inst.mdp, params).vector
    approx = finite_difference_gradient(inst.mdp, params, h).vector
    err = relative_error(exact, approx)

    blocks = tuple(
        BlockErrors(name, float(err[sl].max()), float(np.median(err[sl])))
        for name, sl in params.blocks.items()
    )
    max_error = float(err.max(initial=0.0))

    return InstanceResult(
        index=index,
        depth=params.spec.depth,
        n_states=inst.mdp.n_states,
        options_per_level=params.spec.options_per_level,
        n_actions=params.spec.n_actions,
        dimension=params.dimension,
        max_error=max_error,
        blocks=blocks,
        passed=max_error < tolerance,
    )


def gradcheck_report(
    instances: int,
    seed: int,
    tolerance: float = GRADCHECK_TOL,
    h: float = FD_STEP,
    jobs: int = 1,
) -> GradcheckReport:
    """
    Compare exact and finite-difference gradients on *instances* random
    instances; reruns with the same *seed* give identical reports.
    """
    if instances < 0 or jobs < 1:
        msg = "instances must be >= 0 and jobs >= 1"
        raise ConfigError(msg)

    indices = range(instances)
    if jobs == 1 or instances < 2:
        results = [check_instance(seed, i, tolerance, h) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(
                    check_instance,
                    [seed] * instances,
                    indices,
                    [tolerance] * instances,
                    [h] * instances,
                )
            )

    return GradcheckReport(
        seed,
        tolerance,
        h,
        tuple(results),
        flat_reduction_error(seed) if instances else None,
    )


def flat_reduction_error(seed: int, n_states: int = 4, n_actions: int = 3) -> float:
    """
    Relative error between the depth-1 exact gradient and
    :func:`flat_policy_gradient` on a random flat MDP.
    """
    rng = np.random.default_rng([seed, 0xF1A7])
    mdp = TabularMdp(
        rng.dirichlet(np.ones(n_states), size=(n_states, n_actions)),
        rng.uniform(-1.0, 1.0, size=(n_states, n_actions)),
    )
    spec = HierarchySpec(1, (), n_actions)
    params = ActorParams(spec, FeatureMap.tabular(spec, n_states))
    params = params.with_vector(rng.uniform(-1.0, 1.0, size=params.dimension))

    exact = theorem1_gradient(mdp, params).vector
    flat = flat_policy_gradient(mdp, params.block("pi1")).ravel()

    return float(relative_error(exact, flat).max())
