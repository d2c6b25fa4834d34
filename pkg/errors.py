#!/usr/bin/env python3
"""
Error types for the PCLF MPC toolkit
Every failure carries a short machine-readable code used by the CLI diagnostics
"""

from typing import Optional


class PclfError(ValueError):
    """Base class for all toolkit errors"""
    code = "error"


class EmptySet(PclfError):
    code = "empty-set"


class UnboundedSet(PclfError):
    code = "unbounded-set"


class DegenerateSet(PclfError):
    """Set is not full-dimensional"""
    code = "degenerate-set"


class Unsupported(PclfError):
    code = "unsupported"


class IterLimit(PclfError):
    code = "iter-limit"


class EmptyDoa(PclfError):
    """Contractive-set iteration collapsed to a set without interior"""
    code = "empty-doa"


class NotControlledInvariant(PclfError):
    code = "not-controlled-invariant"


class SingularSector(PclfError):
    code = "singular-sector"


class OutsideDoa(PclfError):
    """State lies outside {Fx <= 1}"""
    code = "outside-doa"


class NotStabilizable(PclfError):
    code = "not-stabilizable"


class ZeroTerminalSet(PclfError):
    """Riccati terminal ellipsoid shrinks to the origin"""
    code = "zero-terminal-set"


class DimensionMismatch(PclfError):
    code = "dimension-mismatch"


class Infeasible(PclfError):
    code = "infeasible"


class ConfigError(PclfError):
    """Experiment config could not be parsed or validated"""
    code = "config"

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None,
                 field: Optional[str] = None):
        self.path = path
        self.line = line
        self.field = field
        location = ""
        if path:
            location = f"{path}:{line}: " if line else f"{path}: "
        if field:
            location += f"{field}: "
        super().__init__(f"{location}{message}")
