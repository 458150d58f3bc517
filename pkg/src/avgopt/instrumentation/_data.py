# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Protocol


ProgressEvent = Literal["progress", "finished", "diverged"]


@dataclass(frozen=True)
class ProgressDetails:
    r"""
    Snapshot of a training run that is passed into :class:`ProgressHook`\ s.

    Attributes:
        name: Name of the run, usually ``<experiment>/<mode>/seed-<seed>``.

        environment: ``trap-chain``, ``delivery-grid``, or ``custom``.

        mode: ``average-reward`` or ``discounted``.

        seed: Seed of the run's random stream.

        step: Number of completed steps.

        total_steps: Number of steps the run will take.

        jhat: Current average-reward estimate Ĵ (0 in discounted mode).

        cycles: Number of completed cycles so far.

        last_value:
            Latest reward-per-cycle or windowed average reward; None before
            the first one is recorded.

        event:
            ``progress`` while running, ``finished`` once, or ``diverged``
            if the run was aborted.
    """

    __slots__ = (
        "cycles",
        "environment",
        "event",
        "jhat",
        "last_value",
        "mode",
        "name",
        "seed",
        "step",
        "total_steps",
    )

    name: str
    environment: str
    mode: str
    seed: int
    step: int
    total_steps: int
    jhat: float
    cycles: int
    last_value: float | None
    event: ProgressEvent


class ProgressHook(Protocol):
    """
    A callable that gets called periodically while a run trains, and once
    when it finishes or diverges.

    This is a :class:`typing.Protocol` that can be implemented by any callable
    that takes one argument of type :class:`ProgressDetails` and returns None.
    """

    def __call__(self, details: ProgressDetails) -> None: ...


@dataclass(frozen=True)
class ProgressHookFactory:
    """
    Wraps a callable that returns a :class:`ProgressHook`.

    They are called on the first progress report and can be used to delay
    initialization. If you need to pass arguments, you can do that using
    :func:`functools.partial`.
    """

    hook_factory: Callable[[], ProgressHook]
