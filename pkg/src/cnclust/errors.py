"""Exception types shared across the package.

Every error raised on purpose by this package derives from
:class:`CnclustError`, so callers (and the CLI) can catch one base class
and still pattern-match on the concrete type when they need details.
"""

from __future__ import annotations


class CnclustError(Exception):
    """Base class for all package errors."""


class TsvParseError(CnclustError):
    """Malformed tabular input; carries file, line and column context."""

    def __init__(self, path, line: int, column: int, message: str):
        self.path = str(path)
        self.line = line
        self.column = column
        super().__init__(f"{self.path}:{line}:{column}: {message}")


class NonTernaryValue(CnclustError):
    """A state entry outside {-1, 0, 1}."""

    def __init__(self, row: int, col: int, value):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(
            f"state[{row},{col}] = {value!r}; states must be -1, 0 or 1"
        )


class UnsortedRegions(CnclustError):
    """Region annotation not strictly ordered by (chromosome, start_bp)."""


class EmptyGroupDimensions(CnclustError):
    """A matrix or label vector too small to be meaningful (m < 1, n < 2, or an empty group)."""


class DimensionMismatch(CnclustError):
    """Array shapes inconsistent with the accompanying annotation."""


class ZeroDistance(CnclustError):
    """Two regions at raw distance zero under the chosen distance basis."""

    def __init__(self, j: int, k: int, basis: str):
        self.j = j
        self.k = k
        self.basis = basis
        super().__init__(
            f"regions {j} and {k} are at distance 0 under basis {basis!r}; "
            "duplicate positions indicate an annotation fault upstream"
        )


class InconsistentAlpha(CnclustError):
    """Stored log-normalizer disagrees with recomputation from (beta, gamma)."""


class IncompleteTable(CnclustError):
    """Candidate window table is missing a window required by the optimizer."""


class MismatchedUniverse(CnclustError):
    """Two partitions do not cover the same region index set."""


class TooFewSamples(CnclustError):
    """Not enough samples for the requested fold split."""


class InfeasibleShuffle(CnclustError):
    """No region arrangement satisfies the non-adjacency constraint."""


class EnsembleMismatch(CnclustError):
    """Permutation statistics come from a different ensemble or shape."""


class InvalidAlpha(CnclustError):
    """Significance level outside (0, 1)."""


class PartitionMismatch(CnclustError):
    """P-value vectors inconsistent with the partition they are tested against."""


class IllogicalTruthAssignment(CnclustError):
    """A truth assignment with a false cluster whose regions are all true."""


class ClusterTooLarge(CnclustError):
    """A cluster exceeds the enumeration bound of the exact sampler."""
