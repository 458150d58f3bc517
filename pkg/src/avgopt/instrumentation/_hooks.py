# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from typing import Iterable

from ._data import ProgressHook, ProgressHookFactory
from ._logging import LoggingOnProgressHook
from ._prometheus import PrometheusOnProgressHook
from ._structlog import StructlogOnProgressHook


def init_hooks(
    maybe_delayed: tuple[ProgressHook | ProgressHookFactory, ...],
) -> tuple[ProgressHook, ...]:
    """
    Execute delayed hook factories and return a tuple of finalized hooks.
    """
    return tuple(
        h.hook_factory() if isinstance(h, ProgressHookFactory) else h
        for h in maybe_delayed
    )


def get_default_hooks() -> tuple[ProgressHookFactory, ...]:
    """
    Return the default hooks according to availability.
    """
    hooks = []

    try:
        import prometheus_client  # noqa: F401

        hooks.append(PrometheusOnProgressHook)
    except ImportError:
        pass

    try:
        import structlog  # noqa: F401

        hooks.append(StructlogOnProgressHook)
    except ImportError:
        hooks.append(LoggingOnProgressHook)

    return tuple(hooks)


def set_on_progress_hooks(
    hooks: Iterable[ProgressHook | ProgressHookFactory] | None,
) -> None:
    """
    Set hooks that are called while runs train.

    Args:
        hooks:
            Hooks to call with progress reports. Passing None resets to
            default. To deactivate instrumentation, pass an empty iterable.
    """
    from .._config import CONFIG

    CONFIG.on_progress = tuple(hooks) if hooks is not None else hooks  # type: ignore[assignment,arg-type]


def get_on_progress_hooks() -> tuple[ProgressHook, ...]:
    """
    Get hooks that are called while runs train.

    Returns:
        Hooks that will run on the next progress report. Factories are called
        if they haven't already.
    """
    from .._config import CONFIG

    return CONFIG.on_progress
