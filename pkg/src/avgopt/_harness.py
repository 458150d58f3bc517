# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

"""
Multi-seed experiments: configuration, fan-out, aggregation and artifacts.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import itertools
import json
import logging
import os

from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any

import numpy as np

from numpy.typing import NDArray

from ._config import CONFIG
from ._errors import (
    AvgOptError,
    ConfigError,
    DivergenceError,
    InvalidHierarchyError,
    NotUnichainError,
)
from ._exact import average_reward, initial_distribution
from ._hierarchy import HierarchySpec, params_to_json
from ._learner import (
    DEFAULT_GAMMA,
    MODES,
    LearnerConfig,
    Mode,
    RunRecord,
    StepSchedule,
    train,
)
from ._mdp import (
    FROM_P1,
    FROM_P2,
    DeliveryGridSpec,
    TabularMdp,
    build_delivery_grid,
    build_trap_chain,
    mdp_from_json,
)


ENVIRONMENTS = ("trap-chain", "delivery-grid")
OUT_ENV_VAR = "AVGOPT_OUT"
CSV_FLOAT = "%.10g"


def _logger() -> Any:
    try:
        import structlog
    except ImportError:
        return None
    return structlog.get_logger("avgopt")


def _warn(event: str, **kw: object) -> None:
    logger = _logger()
    if logger is not None:
        logger.warning(event, **kw)
    else:
        logging.getLogger("avgopt").warning(
            event, extra={f"avgopt.{k}": v for k, v in kw.items()}
        )


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV_VAR) or "runs")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One experiment: an environment, a hierarchy, modes, and seeds.

    Attributes:
        environment:
            ``trap-chain``, ``delivery-grid``, or a path to an MDP JSON
            document.

        modes: Agents to train; every mode runs on every seed.

        gamma: Discount of the ``discounted`` agent.

        seed: First seed; runs use ``seed .. seed + n_seeds - 1``.

        window: Aggregation grid and the window of non-cyclic curves.

        out: Output root; ``$AVGOPT_OUT`` or ``./runs`` when None.

        jobs: Worker processes; 1 runs everything in-process.

        baseline: Passed to every run; see :class:`LearnerConfig`.
    """

    name: str = "experiment"
    environment: str = "trap-chain"
    grid: DeliveryGridSpec = field(default_factory=DeliveryGridSpec)
    modes: tuple[Mode, ...] = ("average-reward",)
    gamma: float = DEFAULT_GAMMA
    depth: int = 2
    options_per_level: tuple[int, ...] = (2,)
    schedule: StepSchedule = field(default_factory=StepSchedule)
    total_steps: int = 500_000
    n_seeds: int = 5
    seed: int = 0
    trace_param_ids: tuple[str, ...] = ()
    record_every: int = 100
    window: int = 1000
    out: Path | None = None
    jobs: int = 1
    baseline: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(
            self, "options_per_level", tuple(self.options_per_level)
        )
        object.__setattr__(self, "trace_param_ids", tuple(self.trace_param_ids))
        if self.out is not None:
            object.__setattr__(self, "out", Path(self.out))

        if self.n_seeds < 1:
            msg = f"n_seeds must be >= 1, got {self.n_seeds}"
            raise ConfigError(msg)
        if self.jobs < 1:
            msg = f"jobs must be >= 1, got {self.jobs}"
            raise ConfigError(msg)
        if not self.modes or any(m not in MODES for m in self.modes):
            msg = f"modes must be a non-empty subset of {MODES}"
            raise ConfigError(msg)
        if (
            self.environment not in ENVIRONMENTS
            and not Path(self.environment).is_file()
        ):
            msg = f"environment {self.environment!r} is neither built in nor an existing file"
            raise ConfigError(msg)
        try:
            HierarchySpec(self.depth, self.options_per_level, 1)
        except InvalidHierarchyError as e:
            raise ConfigError(str(e)) from e
        # Validates the learner fields once for all modes and seeds.
        for mode in self.modes:
            self.learner_config(mode, self.seed)

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(range(self.seed, self.seed + self.n_seeds))

    @property
    def out_root(self) -> Path:
        return self.out if self.out is not None else default_out()

    def learner_config(self, mode: Mode, seed: int) -> LearnerConfig:
        return LearnerConfig(
            mode=mode,
            gamma=self.gamma if mode == "discounted" else None,
            schedule=self.schedule,
            total_steps=self.total_steps,
            trace_param_ids=self.trace_param_ids,
            seed=seed,
            record_every=self.record_every,
            window=self.window,
            baseline=self.baseline,
        )

    def to_json(self) -> dict[str, Any]:
        doc = dataclasses.asdict(self)
        doc["grid"]["walls"] = sorted(list(c) for c in self.grid.walls)
        doc["out"] = str(self.out) if self.out is not None else None
        return doc


_NESTED = {"grid": DeliveryGridSpec, "schedule": StepSchedule}


def config_from_json(
    doc: Mapping[str, Any], overrides: Mapping[str, Any] | None = None
) -> ExperimentConfig:
    """
    Parse an experiment document; *overrides* (CLI flags) win.

    Raises:
        ConfigError: On unknown keys or invalid values.
    """
    merged = {k: v for k, v in doc.items() if k != "sweep"}
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})

    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(merged) - known
    if unknown:
        msg = f"unknown config keys: {sorted(unknown)}"
        raise ConfigError(msg)

    try:
        for key, cls in _NESTED.items():
            if key in merged and not isinstance(merged[key], cls):
                merged[key] = cls(**merged[key])
        return ExperimentConfig(**merged)
    except AvgOptError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e
    except TypeError as e:
        msg = f"malformed config: {e}"
        raise ConfigError(msg) from e


def load_config(
    path: str | os.PathLike[str] | None,
    overrides: Mapping[str, Any] | None = None,
) -> ExperimentConfig:
    """
    Read the JSON config at *path* (defaults only if None).
    """
    return config_from_json(_read_json(path) if path else {}, overrides)


def _read_json(path: str | os.PathLike[str]) -> dict[str, Any]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        msg = f"config file {str(path)!r} does not exist"
        raise ConfigError(msg) from e
    except json.JSONDecodeError as e:
        msg = f"config file {str(path)!r} is not valid JSON: {e}"
        raise ConfigError(msg) from e
    if not isinstance(doc, dict):
        msg = "a config document must be a JSON object"
        raise ConfigError(msg)
    return doc


def build_environment(config: ExperimentConfig) -> TabularMdp:
    if config.environment == "trap-chain":
        return build_trap_chain()
    if config.environment == "delivery-grid":
        return build_delivery_grid(config.grid)
    return mdp_from_json(Path(config.environment).read_text(encoding="utf-8"))


# -- Runs ---------------------------------------------------------------------


@dataclass(frozen=True)
class SeedOutcome:
    """
    A finished run, or the reason it failed.
    """

    mode: Mode
    seed: int
    record: RunRecord | None
    error: str | None = None
    exact_gain: float | None = None


def _exact_gain(mdp: TabularMdp, record: RunRecord) -> float | None:
    params = record.final_params
    try:
        return average_reward(
            mdp, params, initial_distribution(params, mdp.start)
        )
    except NotUnichainError:
        return None


def run_seed(
    config: ExperimentConfig, mode: Mode, seed: int
) -> SeedOutcome:
    """
    Train one agent; divergence is recorded, not raised.
    """
    mdp = build_environment(config)
    spec = HierarchySpec(config.depth, config.options_per_level, mdp.n_actions)
    try:
        record = train(
            mdp,
            spec,
            config.learner_config(mode, seed),
            environment=(
                config.environment
                if config.environment in ENVIRONMENTS
                else "custom"
            ),
            name=f"{config.name}/{mode}/seed-{seed}",
        )
    except DivergenceError as e:
        return SeedOutcome(mode, seed, None, str(e))

    return SeedOutcome(mode, seed, record, None, _exact_gain(mdp, record))


@dataclass(frozen=True, eq=False)
class AggregateCurve:
    """
    Mean and population standard deviation across seeds on a step grid.
    """

    mode: Mode
    steps: NDArray[np.int64]
    mean: NDArray[np.float64]
    std: NDArray[np.float64]
    n_seeds: int


def step_grid_values(
    record: RunRecord, window: int, total_steps: int
) -> NDArray[np.float64]:
    """
    A run's curve on the grid ``window, 2·window, ...``.

    Each grid point holds the mean value of the curve rows that fall into its
    window, or the previous point's value if there are none (0 at first).
    """
    n = total_steps // window
    out = np.zeros(n)
    steps, values = record.curve[:, 0], record.curve[:, 2]
    last = 0.0
    for j in range(n):
        inside = (steps > j * window) & (steps <= (j + 1) * window)
        if inside.any():
            last = float(values[inside].mean())
        out[j] = last
    return out


def aggregate(
    mode: Mode, records: Sequence[RunRecord], window: int, total_steps: int
) -> AggregateCurve:
    n = total_steps // window
    steps = np.arange(1, n + 1, dtype=np.int64) * window
    if not records:
        empty = np.full(n, np.nan)
        return AggregateCurve(mode, steps, empty, empty.copy(), 0)

    grid = np.stack(
        [step_grid_values(r, window, total_steps) for r in records]
    )
    return AggregateCurve(
        mode, steps, grid.mean(axis=0), grid.std(axis=0), len(records)
    )


# -- Artifacts ----------------------------------------------------------------


def _fmt(value: object) -> object:
    if isinstance(value, (float, np.floating)):
        return CSV_FLOAT % value
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_csv(
    path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]
) -> None:
    """
    Comma-separated, header row, ``%.10g`` floats, LF line endings.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([_fmt(v) for v in row] for row in rows)


def trace_report(
    record: RunRecord, param_ids: Sequence[str] = ()
) -> list[tuple[int, str, float]]:
    """
    Rows ``(step, param_id, value)`` for *param_ids*, or for every traced id
    (by default one per family) if empty.

    Raises:
        InvalidHierarchyError: For ids the run didn't trace.
    """
    ids = tuple(param_ids) or record.trace_ids
    unknown = [pid for pid in ids if pid not in record.trace_ids]
    if unknown:
        msg = f"parameters were not traced: {unknown}"
        raise InvalidHierarchyError(msg)

    cols = [record.trace_ids.index(pid) for pid in ids]
    return [
        (int(step), pid, float(record.traces[i, c]))
        for i, step in enumerate(record.trace_steps)
        for pid, c in zip(ids, cols)
    ]


def write_run(directory: Path, record: RunRecord) -> None:
    write_csv(
        directory / "curves.csv",
        ("step", "cycle", "reward_per_cycle_or_window", "jhat"),
        ((int(s), int(c), v, j) for s, c, v, j in record.curve),
    )
    write_csv(
        directory / "jhat.csv",
        ("step", "jhat"),
        ((int(s), j) for s, j in record.jhat),
    )
    write_csv(
        directory / "traces.csv",
        ("step", "param_id", "value"),
        trace_report(record),
    )
    _write_json(
        directory / "final_params.json", params_to_json(record.final_params)
    )


def _write_json(path: Path, doc: object) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def package_version() -> str:
    try:
        return version("avgopt")
    except PackageNotFoundError:
        return "0+unknown"


def _new_run_dir(root: Path, name: str) -> Path:
    stamp = dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%S.%fZ")
    path = root / name / stamp
    path.mkdir(parents=True, exist_ok=False)
    return path


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    directory: Path
    curves: dict[str, AggregateCurve]
    outcomes: tuple[SeedOutcome, ...]

    @property
    def failures(self) -> tuple[SeedOutcome, ...]:
        return tuple(o for o in self.outcomes if o.record is None)


def _modal_route(
    records: Sequence[RunRecord], grid: DeliveryGridSpec
) -> str | None:
    """
    The pickup most final-decile cycles went through, judged by the parcel
    the agent carried into the drop-off.
    """
    p1 = p2 = 0
    for r in records:
        if not r.cyclic or r.curve.shape[0] == 0:
            continue
        tail = r.cycle_states[r.curve[:, 0] > 0.9 * r.steps]
        flags = [grid.decode(int(s))[1] for s in tail]
        p1 += flags.count(FROM_P1)
        p2 += flags.count(FROM_P2)
    if p1 == p2 == 0:
        return None
    return "P2" if p2 > p1 else "P1"


def run_experiment(
    config: ExperimentConfig, directory: Path | None = None
) -> ExperimentResult:
    """
    Train every mode on every seed, aggregate, and write the artifacts.

    Artifacts go to ``<out>/<name>/<UTC timestamp>/`` unless *directory* is
    given. Diverged seeds are listed in the manifest and left out of the
    aggregate.
    """
    testing = CONFIG.testing
    if testing is not None:
        config = dataclasses.replace(
            config, total_steps=testing.get_steps(config.total_steps)
        )

    tasks = [(mode, seed) for mode in config.modes for seed in config.seeds]
    if config.jobs == 1 or len(tasks) < 2:
        outcomes = [run_seed(config, mode, seed) for mode, seed in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(
                pool.map(
                    run_seed,
                    [config] * len(tasks),
                    [m for m, _ in tasks],
                    [s for _, s in tasks],
                )
            )

    out = directory or _new_run_dir(config.out_root, config.name)
    out.mkdir(parents=True, exist_ok=True)

    curves: dict[str, AggregateCurve] = {}
    summary: dict[str, Any] = {}
    for mode in config.modes:
        done = [o for o in outcomes if o.mode == mode]
        records = [o.record for o in done if o.record is not None]
        for o in done:
            if o.record is not None:
                write_run(out / mode / f"seed-{o.seed}", o.record)
        curve = aggregate(mode, records, config.window, config.total_steps)
        curves[mode] = curve
        write_csv(
            out / mode / "aggregate.csv",
            ("step", "mean", "std", "n_seeds"),
            zip(curve.steps, curve.mean, curve.std, itertools.repeat(curve.n_seeds)),
        )
        summary[mode] = {
            "final_mean": float(curve.mean[-1]) if curve.mean.size else None,
            "final_std": float(curve.std[-1]) if curve.std.size else None,
            "modal_route": (
                _modal_route(records, config.grid)
                if config.environment == "delivery-grid"
                else None
            ),
        }

    write_csv(
        out / "aggregate.csv",
        ("step", "mode", "mean", "std", "n_seeds"),
        (
            (step, c.mode, mean, std, c.n_seeds)
            for c in curves.values()
            for step, mean, std in zip(c.steps, c.mean, c.std)
        ),
    )

    failures = [o for o in outcomes if o.record is None]
    if failures:
        _warn(
            "avgopt.seeds_failed",
            experiment=config.name,
            failed=len(failures),
            surviving=len(outcomes) - len(failures),
        )

    _write_json(
        out / "manifest.json",
        {
            "name": config.name,
            "version": package_version(),
            "created": dt.datetime.now(dt.timezone.utc).isoformat(),
            "config": config.to_json(),
            "seeds": list(config.seeds),
            "summary": summary,
            "runs": [
                {
                    "mode": o.mode,
                    "seed": o.seed,
                    "status": "ok" if o.record is not None else "diverged",
                    "error": o.error,
                    "final_jhat": (
                        o.record.final_critic.gain if o.record else None
                    ),
                    "exact_gain": o.exact_gain,
                }
                for o in outcomes
            ],
            "warnings": len(failures),
        },
    )

    return ExperimentResult(config, out, curves, tuple(outcomes))


# -- Sweeps -------------------------------------------------------------------


def _set_dotted(doc: dict[str, Any], key: str, value: object) -> None:
    head, _, rest = key.partition(".")
    if rest:
        sub = dict(doc.get(head) or {})
        _set_dotted(sub, rest, value)
        doc[head] = sub
    else:
        doc[head] = value


def expand_sweep(doc: Mapping[str, Any]) -> list[tuple[str, dict[str, Any]]]:
    """
    Cartesian product of a ``{"sweep": {field: [values, ...]}}`` block.

    Fields may be dotted (``schedule.actor_rate``). Returns
    ``(suffix, document)`` pairs; the suffix names the combination.
    """
    grid = doc.get("sweep") or {}
    if not isinstance(grid, Mapping) or not all(
        isinstance(v, list) and v for v in grid.values()
    ):
        msg = "sweep must map field names to non-empty lists"
        raise ConfigError(msg)

    base = {k: v for k, v in doc.items() if k != "sweep"}
    keys = sorted(grid)
    out = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        variant = json.loads(json.dumps(base))
        for key, value in zip(keys, combo):
            _set_dotted(variant, key, value)
        suffix = ",".join(f"{k}={v}" for k, v in zip(keys, combo)) or "base"
        out.append((suffix, variant))

    return out


def run_sweep(
    doc: Mapping[str, Any], overrides: Mapping[str, Any] | None = None
) -> list[ExperimentResult]:
    """
    Run every sweep combination into its own directory under one sweep
    directory, each with its own manifest.
    """
    variants = [
        (suffix, config_from_json(variant, overrides))
        for suffix, variant in expand_sweep(doc)
    ]
    if not variants:
        return []

    root = _new_run_dir(variants[0][1].out_root, variants[0][1].name)
    return [
        run_experiment(config, root / suffix) for suffix, config in variants
    ]
