"""Core domain types: ternary state matrices, region annotation, labels, partitions.

States are coded -1 (loss, fewer than 2 copies), 0 (normal, 2 copies) and
+1 (gain, more than 2 copies) and stored as signed one-byte integers.
Regions are kept in strict genomic order; chromosomes are ordinal labels
1..22 with X mapped to 23 and Y to 24, which gives region ordering a
deterministic total order across runs.

All types are immutable after construction and safe to share across
concurrent readers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyGroupDimensions,
    NonTernaryValue,
    TsvParseError,
    UnsortedRegions,
)

CHROMOSOME_X = 23
CHROMOSOME_Y = 24

TERNARY_STATES = (-1, 0, 1)


def parse_chromosome(label) -> int:
    """Map a chromosome label ('1'..'22', 'X', 'Y', optional 'chr' prefix) to its ordinal."""
    if isinstance(label, (int, np.integer)):
        value = int(label)
    else:
        text = str(label).strip()
        if text.lower().startswith("chr"):
            text = text[3:]
        if text.upper() == "X":
            value = CHROMOSOME_X
        elif text.upper() == "Y":
            value = CHROMOSOME_Y
        else:
            try:
                value = int(text)
            except ValueError:
                raise ValueError(f"unrecognized chromosome label {label!r}") from None
    if not 1 <= value <= CHROMOSOME_Y:
        raise ValueError(f"chromosome ordinal {value} outside 1..{CHROMOSOME_Y}")
    return value


def format_chromosome(ordinal: int) -> str:
    """Inverse of :func:`parse_chromosome`."""
    if ordinal == CHROMOSOME_X:
        return "X"
    if ordinal == CHROMOSOME_Y:
        return "Y"
    return str(int(ordinal))


@dataclass(frozen=True)
class RegionMeta:
    """Genomic annotation of one region.

    probe_count is the number of collapsed measurement-unit probes the
    region stands for; it doubles as the unit of the probe-count distance
    basis.
    """

    chromosome: int
    start_bp: int
    end_bp: int
    probe_count: int = 1

    def __post_init__(self):
        if not 1 <= self.chromosome <= CHROMOSOME_Y:
            raise ValueError(f"chromosome {self.chromosome} outside 1..{CHROMOSOME_Y}")
        if self.start_bp < 0:
            raise ValueError(f"start_bp {self.start_bp} < 0")
        if self.end_bp < self.start_bp:
            raise ValueError(f"end_bp {self.end_bp} < start_bp {self.start_bp}")
        if self.probe_count < 1:
            raise ValueError(f"probe_count {self.probe_count} < 1")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.start_bp + self.end_bp)


class StateMatrix:
    """Immutable m x n matrix of ternary states with per-region annotation.

    Invariants enforced at construction:

    * every entry is -1, 0 or +1;
    * region_meta is strictly sorted by (chromosome, start_bp), so index
      order equals genomic order (position ties are rejected rather than
      ordered arbitrarily);
    * m >= 1 and n >= 2.
    """

    __slots__ = ("states", "region_meta", "sample_ids")

    def __init__(self, states, region_meta, sample_ids):
        raw = np.asarray(states)
        if raw.ndim != 2:
            raise DimensionMismatch(f"state matrix must be 2-D, got shape {raw.shape}")
        m, n = raw.shape
        meta = tuple(region_meta)
        ids = tuple(str(s) for s in sample_ids)
        if len(meta) != m:
            raise DimensionMismatch(f"{m} state rows but {len(meta)} region annotations")
        if len(ids) != n:
            raise DimensionMismatch(f"{n} state columns but {len(ids)} sample ids")
        if m < 1 or n < 2:
            raise EmptyGroupDimensions(f"need m >= 1 regions and n >= 2 samples, got {m}x{n}")

        bad = ~np.isin(raw, TERNARY_STATES)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise NonTernaryValue(int(r), int(c), raw[r, c])

        for i in range(1, m):
            prev, cur = meta[i - 1], meta[i]
            if (cur.chromosome, cur.start_bp) <= (prev.chromosome, prev.start_bp):
                raise UnsortedRegions(
                    f"regions {i - 1} and {i} not in strict (chromosome, start_bp) order: "
                    f"({format_chromosome(prev.chromosome)}, {prev.start_bp}) then "
                    f"({format_chromosome(cur.chromosome)}, {cur.start_bp})"
                )

        arr = raw.astype(np.int8)
        arr.flags.writeable = False
        object.__setattr__(self, "states", arr)
        object.__setattr__(self, "region_meta", meta)
        object.__setattr__(self, "sample_ids", ids)

    def __setattr__(self, name, value):
        raise AttributeError("StateMatrix is immutable")

    @property
    def m(self) -> int:
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def chromosomes(self) -> np.ndarray:
        """Per-region chromosome ordinals, length m."""
        return np.array([r.chromosome for r in self.region_meta], dtype=np.int64)

    def chromosome_spans(self) -> list[tuple[int, int, int]]:
        """Maximal runs of one chromosome as (chromosome, lo, hi) half-open index ranges."""
        spans = []
        chroms = self.chromosomes
        lo = 0
        for i in range(1, self.m + 1):
            if i == self.m or chroms[i] != chroms[lo]:
                spans.append((int(chroms[lo]), lo, i))
                lo = i
        return spans

    def select_samples(self, indices) -> "StateMatrix":
        """New matrix keeping the given sample columns (order as given)."""
        idx = np.asarray(indices, dtype=np.int64)
        return StateMatrix(
            self.states[:, idx],
            self.region_meta,
            [self.sample_ids[i] for i in idx],
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, StateMatrix):
            return NotImplemented
        return (
            np.array_equal(self.states, other.states)
            and self.region_meta == other.region_meta
            and self.sample_ids == other.sample_ids
        )

    def __hash__(self):
        return hash((self.states.tobytes(), self.region_meta, self.sample_ids))

    def __repr__(self) -> str:
        return f"StateMatrix(m={self.m}, n={self.n})"


def validate_matrix(raw, meta, ids) -> StateMatrix:
    """Validate raw ternary data against its annotation and wrap it.

    Raises NonTernaryValue, UnsortedRegions, EmptyGroupDimensions or
    DimensionMismatch; missing values are not imputed, any non-ternary
    content is rejected outright.
    """
    return StateMatrix(raw, meta, ids)


def column_multiset_fingerprint(x: StateMatrix) -> str:
    """Digest of the multiset of sample columns.

    Identical for any column permutation of x and (up to hash collision)
    different whenever a column's multiset membership changes.  Downstream
    clustering is required to depend on the input only through this
    fingerprint, which is what makes label-permutation tests after
    clustering valid.
    """
    h = hashlib.sha256()
    h.update(f"{x.m}x{x.n};".encode())
    for col in sorted(x.states[:, i].tobytes() for i in range(x.n)):
        h.update(col)
    return h.hexdigest()


class Labels:
    """Binary group labels for the n samples; both groups must be non-empty."""

    __slots__ = ("y",)

    def __init__(self, y):
        arr = np.asarray(y)
        if arr.ndim != 1:
            raise DimensionMismatch(f"labels must be 1-D, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            bad = arr[~np.isin(arr, (0, 1))][0]
            raise NonTernaryValue(-1, -1, bad)
        arr = arr.astype(np.int8)
        if (arr == 0).sum() == 0 or (arr == 1).sum() == 0:
            raise EmptyGroupDimensions("both label groups must be non-empty")
        arr.flags.writeable = False
        object.__setattr__(self, "y", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Labels is immutable")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def group_sizes(self) -> tuple[int, int]:
        return int((self.y == 0).sum()), int((self.y == 1).sum())

    def __eq__(self, other):
        if not isinstance(other, Labels):
            return NotImplemented
        return np.array_equal(self.y, other.y)

    def __hash__(self):
        return hash(self.y.tobytes())

    def __repr__(self):
        n0, n1 = self.group_sizes
        return f"Labels(n={self.n}, group0={n0}, group1={n1})"


@dataclass(frozen=True)
class ContiguousPartition:
    """Ordered, chromosome-respecting division of region indices into clusters.

    Clusters are the half-open index ranges [breaks[k], breaks[k+1]) with
    0 = breaks[0] < ... < breaks[-1] = m.  chromosomes[k] is the (single)
    chromosome covered by cluster k.
    """

    breaks: tuple[int, ...]
    chromosomes: tuple[int, ...]

    def __post_init__(self):
        if len(self.breaks) < 2 or self.breaks[0] != 0:
            raise ValueError("breaks must start at 0 and contain at least one cluster")
        if any(b >= c for b, c in zip(self.breaks, self.breaks[1:])):
            raise ValueError(f"breaks not strictly increasing: {self.breaks}")
        if len(self.chromosomes) != len(self.breaks) - 1:
            raise ValueError("need one chromosome label per cluster")

    @classmethod
    def from_breaks(cls, breaks, region_chromosomes) -> "ContiguousPartition":
        """Build from break positions, checking no cluster spans a chromosome boundary."""
        chroms = np.asarray(region_chromosomes, dtype=np.int64)
        breaks = tuple(int(b) for b in breaks)
        if breaks[-1] != len(chroms):
            raise ValueError(f"last break {breaks[-1]} != number of regions {len(chroms)}")
        labels = []
        for lo, hi in zip(breaks, breaks[1:]):
            block = chroms[lo:hi]
            if block.size == 0 or (block != block[0]).any():
                raise ValueError(f"cluster [{lo},{hi}) spans a chromosome boundary")
            labels.append(int(block[0]))
        return cls(breaks=breaks, chromosomes=tuple(labels))

    @classmethod
    def singletons(cls, region_chromosomes) -> "ContiguousPartition":
        m = len(region_chromosomes)
        return cls.from_breaks(range(m + 1), region_chromosomes)

    @property
    def n_regions(self) -> int:
        return self.breaks[-1]

    @property
    def n_clusters(self) -> int:
        return len(self.breaks) - 1

    def cluster_ranges(self) -> list[tuple[int, int]]:
        return list(zip(self.breaks, self.breaks[1:]))

    def sizes(self) -> np.ndarray:
        return np.diff(np.asarray(self.breaks, dtype=np.int64))

    def labels(self) -> np.ndarray:
        """Region index -> cluster index, length m."""
        out = np.empty(self.n_regions, dtype=np.int64)
        for k, (lo, hi) in enumerate(self.cluster_ranges()):
            out[lo:hi] = k
        return out

    def cluster_of(self, region: int) -> int:
        return int(np.searchsorted(np.asarray(self.breaks), region, side="right") - 1)

    def max_cluster_size(self) -> int:
        return int(self.sizes().max())


# ---------------------------------------------------------------------------
# TSV input/output
#
# State matrix format: header `chrom start end nprobes <sample_id>...`, one
# row per region, states written as -1|0|1.  Labels: header
# `sample_id group`, group in {0,1}.  All files are tab-separated.
# ---------------------------------------------------------------------------

_MATRIX_HEADER = ("chrom", "start", "end", "nprobes")


def _parse_int(path, lineno, colno, text, what):
    try:
        return int(text)
    except ValueError:
        raise TsvParseError(path, lineno, colno, f"expected integer {what}, got {text!r}") from None


def read_state_matrix(path) -> StateMatrix:
    """Parse a state-matrix TSV; errors name file, line and column."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise TsvParseError(path, 1, 1, "empty file")
    header = lines[0].split("\t")
    if tuple(header[:4]) != _MATRIX_HEADER:
        raise TsvParseError(path, 1, 1, f"header must start with {' '.join(_MATRIX_HEADER)}")
    sample_ids = header[4:]
    if len(set(sample_ids)) != len(sample_ids):
        dup = next(s for s in sample_ids if sample_ids.count(s) > 1)
        raise TsvParseError(path, 1, 5 + sample_ids.index(dup), f"duplicate sample id {dup!r}")
    n = len(sample_ids)

    meta = []
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4 + n:
            raise TsvParseError(path, lineno, len(fields) + 1,
                                f"expected {4 + n} fields, got {len(fields)}")
        try:
            chrom = parse_chromosome(fields[0])
        except ValueError as exc:
            raise TsvParseError(path, lineno, 1, str(exc)) from None
        start = _parse_int(path, lineno, 2, fields[1], "start")
        end = _parse_int(path, lineno, 3, fields[2], "end")
        nprobes = _parse_int(path, lineno, 4, fields[3], "nprobes")
        try:
            meta.append(RegionMeta(chrom, start, end, nprobes))
        except ValueError as exc:
            raise TsvParseError(path, lineno, 1, str(exc)) from None
        row = []
        for j, cell in enumerate(fields[4:], start=5):
            value = _parse_int(path, lineno, j, cell, "state")
            if value not in TERNARY_STATES:
                raise TsvParseError(path, lineno, j, f"state must be -1, 0 or 1, got {value}")
            row.append(value)
        rows.append(row)
    if not rows:
        raise TsvParseError(path, 2, 1, "no region rows")
    try:
        return StateMatrix(np.array(rows, dtype=np.int8), meta, sample_ids)
    except (UnsortedRegions, EmptyGroupDimensions) as exc:
        raise TsvParseError(path, 2, 1, str(exc)) from None


def write_state_matrix(x: StateMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(_MATRIX_HEADER + x.sample_ids) + "\n")
        for r, row in zip(x.region_meta, x.states):
            fields = [format_chromosome(r.chromosome), str(r.start_bp), str(r.end_bp),
                      str(r.probe_count)]
            fields.extend(str(int(v)) for v in row)
            fh.write("\t".join(fields) + "\n")


def read_labels(path, sample_ids) -> Labels:
    """Parse a labels TSV and align it to the given sample id order."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].split("\t") != ["sample_id", "group"]:
        raise TsvParseError(path, 1, 1, "header must be 'sample_id<TAB>group'")
    seen: dict[str, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise TsvParseError(path, lineno, len(fields) + 1, f"expected 2 fields, got {len(fields)}")
        sid, group_text = fields
        if sid in seen:
            raise TsvParseError(path, lineno, 1, f"duplicate sample id {sid!r}")
        group = _parse_int(path, lineno, 2, group_text, "group")
        if group not in (0, 1):
            raise TsvParseError(path, lineno, 2, f"group must be 0 or 1, got {group}")
        seen[sid] = group
    missing = [s for s in sample_ids if s not in seen]
    if missing:
        raise TsvParseError(path, 1, 1, f"labels missing for samples: {missing[:5]}")
    extra = [s for s in seen if s not in set(sample_ids)]
    if extra:
        raise TsvParseError(path, 1, 1, f"labels for unknown samples: {extra[:5]}")
    return Labels([seen[s] for s in sample_ids])


def write_labels(labels: Labels, sample_ids, path) -> None:
    if len(sample_ids) != labels.n:
        raise DimensionMismatch(f"{len(sample_ids)} ids for {labels.n} labels")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sample_id\tgroup\n")
        for sid, g in zip(sample_ids, labels.y):
            fh.write(f"{sid}\t{int(g)}\n")
