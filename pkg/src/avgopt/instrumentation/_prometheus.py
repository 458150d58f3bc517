# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from typing import TYPE_CHECKING, NamedTuple

from ._data import ProgressDetails, ProgressHook, ProgressHookFactory


if TYPE_CHECKING:
    from prometheus_client import Counter, Gauge


class PrometheusMetrics(NamedTuple):
    steps_total: Counter
    cycles_total: Counter
    average_reward_estimate: Gauge


METRICS: PrometheusMetrics | None = None

LABELS = ("environment", "mode", "seed")


def init_prometheus() -> ProgressHook:
    """
    Initialize Prometheus instrumentation.
    """
    from prometheus_client import Counter, Gauge

    global METRICS  # noqa: PLW0603

    # Mostly for testing so we can call init_prometheus more than once.
    if METRICS is None:
        METRICS = PrometheusMetrics(
            Counter("avgopt_steps", "Total number of training steps.", LABELS),
            Counter("avgopt_cycles", "Total number of completed cycles.", LABELS),
            Gauge(
                "avgopt_average_reward_estimate",
                "Current average-reward estimate of a run.",
                LABELS,
            ),
        )

    # Counters only move forward, so remember what was already counted.
    seen: dict[str, tuple[int, int]] = {}

    def record_progress(details: ProgressDetails) -> None:
        labels = {
            "environment": details.environment,
            "mode": details.mode,
            "seed": str(details.seed),
        }
        steps, cycles = seen.get(details.name, (0, 0))
        METRICS.steps_total.labels(**labels).inc(max(details.step - steps, 0))
        METRICS.cycles_total.labels(**labels).inc(
            max(details.cycles - cycles, 0)
        )
        METRICS.average_reward_estimate.labels(**labels).set(details.jhat)
        if details.event == "progress":
            seen[details.name] = (details.step, details.cycles)
        else:
            seen.pop(details.name, None)

    return record_progress


def get_prometheus_metrics() -> PrometheusMetrics | None:
    """
    Return the Prometheus metrics for training progress.

    Returns:
        If active, the `counters and the gauge
        <https://github.com/prometheus/client_python>`_ for steps, cycles and
        the average-reward estimate. None otherwise.
    """
    from . import get_on_progress_hooks

    # Finalize the hooks if not done yet.
    get_on_progress_hooks()

    return METRICS


PrometheusOnProgressHook = ProgressHookFactory(init_prometheus)
