# SPDX-FileCopyrightText: 2024 The avgopt developers
#
# SPDX-License-Identifier: MIT

from __future__ import annotations


class AvgOptError(Exception):
    """
    Base class for all errors raised by *avgopt*.
    """


class InvalidMdpError(AvgOptError, ValueError):
    """
    An MDP, a state/action id, or an environment spec violates its
    invariants.
    """


class InvalidHierarchyError(AvgOptError, ValueError):
    """
    A hierarchy spec, level, option context, or parameter vector doesn't fit
    the hierarchy it is used with.
    """


class ConfigError(AvgOptError, ValueError):
    """
    A learner or experiment configuration is invalid.
    """


class NotUnichainError(AvgOptError):
    """
    The chain induced by a policy has more than one recurrent class, so its
    stationary distribution -- and therefore the gain -- is not unique.

    Attributes:
        coordinate:
            Index of the parameter coordinate whose probe point was not
            unichain, if raised from a finite-difference sweep.
    """

    coordinate: int | None

    def __init__(self, msg: str, coordinate: int | None = None) -> None:
        super().__init__(msg)
        self.coordinate = coordinate


class SingularSystemError(AvgOptError):
    """
    A linear system that should be non-singular after anchoring isn't.
    """


class DivergenceError(AvgOptError):
    """
    A training run produced a non-finite value.

    Attributes:
        diagnostics: State of the run at the time of divergence.
    """

    diagnostics: dict[str, object]

    def __init__(self, msg: str, diagnostics: dict[str, object]) -> None:
        super().__init__(msg)
        self.diagnostics = diagnostics
