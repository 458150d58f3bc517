# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from ._data import ProgressDetails, ProgressHook, ProgressHookFactory
from ._hooks import get_on_progress_hooks, set_on_progress_hooks
from ._logging import LoggingOnProgressHook
from ._prometheus import PrometheusOnProgressHook, get_prometheus_metrics
from ._structlog import StructlogOnProgressHook


__all__ = [
    "LoggingOnProgressHook",
    "ProgressDetails",
    "ProgressHook",
    "ProgressHookFactory",
    "PrometheusOnProgressHook",
    "StructlogOnProgressHook",
    "get_on_progress_hooks",
    "get_prometheus_metrics",
    "set_on_progress_hooks",
]
