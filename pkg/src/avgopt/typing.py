# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

from __future__ import annotations

from ._hierarchy import OptionStack
from .instrumentation import ProgressDetails, ProgressHook


__all__ = ["OptionStack", "ProgressDetails", "ProgressHook"]
