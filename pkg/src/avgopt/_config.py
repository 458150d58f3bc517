# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from threading import Lock
from typing import Callable

from .instrumentation import ProgressHookFactory
from .instrumentation._hooks import get_default_hooks, init_hooks
from .typing import ProgressHook


class _Testing:
    """
    Test mode specification.

    Strictly private.
    """

    __slots__ = ("cap", "steps")

    steps: int
    cap: bool

    def __init__(self, steps: int, cap: bool) -> None:
        self.steps = steps
        self.cap = cap

    def get_steps(self, non_testing_steps: int) -> int:
        """
        Get the number of training steps to use.

        Args:
            non_testing_steps: The number of steps the run asked for.

        Returns:
            The number of steps to use.
        """
        if self.cap:
            return min(self.steps, non_testing_steps)

        return self.steps


class _Config:
    """
    Global avgopt configuration.

    Strictly private.
    """

    __slots__ = (
        "_get_on_progress",
        "_on_progress",
        "_testing",
        "lock",
    )

    lock: Lock
    _testing: _Testing | None
    _on_progress: (
        tuple[ProgressHook, ...]
        | tuple[ProgressHook | ProgressHookFactory, ...]
        | None
    )
    _get_on_progress: Callable[[], tuple[ProgressHook, ...]]

    def __init__(self, lock: Lock) -> None:
        self.lock = lock
        self._testing = None

        # Prepare delayed initialization.
        self._on_progress = None
        self._get_on_progress = self._init_on_first_report

    @property
    def testing(self) -> _Testing | None:
        return self._testing

    @testing.setter
    def testing(self, value: _Testing | None) -> None:
        with self.lock:
            self._testing = value

    @property
    def on_progress(self) -> tuple[ProgressHook, ...]:
        return self._get_on_progress()

    @on_progress.setter
    def on_progress(
        self, value: tuple[ProgressHook | ProgressHookFactory, ...] | None
    ) -> None:
        with self.lock:
            self._get_on_progress = self._init_on_first_report
            self._on_progress = value

    def _init_on_first_report(self) -> tuple[ProgressHook, ...]:
        """
        Perform delayed initialization of on_progress hooks.
        """
        with self.lock:
            # Ensure hooks didn't init while waiting for the lock.
            if self._get_on_progress == self._init_on_first_report:
                if self._on_progress is None:
                    self._on_progress = get_default_hooks()

                self._on_progress = init_hooks(self._on_progress)

                self._get_on_progress = lambda: self._on_progress  # type: ignore[assignment, return-value]

        return self._on_progress  # type: ignore[return-value]


CONFIG = _Config(Lock())


def is_testing() -> bool:
    """
    Check whether test mode is enabled.
    """
    return CONFIG.testing is not None


def set_testing(testing: bool, *, steps: int = 1000, cap: bool = True) -> None:
    """
    Activate or deactivate test mode.

    In testing mode, every training run takes *steps* steps.

    If *cap* is True (the default), the number of steps is not set but capped
    at *steps*, so runs that ask for fewer keep their own number.

    Is idempotent and can be called repeatedly with the same values. The
    harness applies the cap before it fans runs out to worker processes.
    """
    CONFIG.testing = _Testing(steps, cap) if testing else None
