# Copyright The arbilomod contributors.
# SPDX-License-Identifier: Apache-2.0
"""Localized reduced-basis engine for high-contrast elliptic problems."""

from ._core import (
    Config,
    ConditioningError,
    Error,
    Geometry,
    GeometryResolutionError,
    InvalidArgument,
    LoadError,
    Session,
    StalenessError,
    alpha_lb,
    alpha_lb_rigorous,
    diff,
    dof_counts,
    mark,
    pu_stability_bound,
)

__all__ = [
    "Config",
    "ConditioningError",
    "Error",
    "Geometry",
    "GeometryResolutionError",
    "InvalidArgument",
    "LoadError",
    "Session",
    "StalenessError",
    "alpha_lb",
    "alpha_lb_rigorous",
    "diff",
    "dof_counts",
    "mark",
    "pu_stability_bound",
]
