# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from ._data import ProgressDetails, ProgressHook, ProgressHookFactory


def init_structlog() -> ProgressHook:
    """
    Initialize structlog instrumentation.
    """
    import structlog

    logger = structlog.get_logger("avgopt")

    def log_progress(details: ProgressDetails) -> None:
        log = logger.warning if details.event == "diverged" else logger.info
        log(
            "avgopt.training_progress",
            run=details.name,
            environment=details.environment,
            mode=details.mode,
            seed=details.seed,
            step=details.step,
            total_steps=details.total_steps,
            jhat=round(details.jhat, 6),
            cycles=details.cycles,
            last_value=details.last_value,
            phase=details.event,
        )

    return log_progress


StructlogOnProgressHook = ProgressHookFactory(init_structlog)
