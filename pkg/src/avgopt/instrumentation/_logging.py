# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

import logging

from ._data import ProgressDetails, ProgressHook, ProgressHookFactory


def init_logging(log_level: int = logging.INFO) -> ProgressHook:
    """
    Initialize logging using the standard library.

    Returned hook logs progress at *log_level* and divergence at WARNING.
    """
    logger = logging.getLogger("avgopt")

    def log_progress(details: ProgressDetails) -> None:
        logger.log(
            logging.WARNING if details.event == "diverged" else log_level,
            "avgopt.training_progress",
            extra={
                "avgopt.run": details.name,
                "avgopt.environment": details.environment,
                "avgopt.mode": details.mode,
                "avgopt.seed": details.seed,
                "avgopt.step": details.step,
                "avgopt.total_steps": details.total_steps,
                "avgopt.jhat": round(details.jhat, 6),
                "avgopt.cycles": details.cycles,
                "avgopt.last_value": details.last_value,
                "avgopt.phase": details.event,
            },
        )

    return log_progress


LoggingOnProgressHook = ProgressHookFactory(init_logging)
