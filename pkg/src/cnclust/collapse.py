"""Lossless reduction of probe-level matrices to region-level matrices.

Consecutive rows on the same chromosome whose state vectors are identical
across all samples are merged into one region.  This is the 0%-loss special
case of collapsing: expanding every output region `probe_count` times
reproduces the input states exactly, and re-collapsing the output is the
identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import RegionMeta, StateMatrix


@dataclass(frozen=True)
class CollapseReport:
    """Bookkeeping for one collapse run.

    spans holds one (first_row, last_row, probe_count) triple per output
    region, in output order, with 0-based inclusive input row indices.
    """

    input_rows: int
    output_regions: int
    spans: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        if self.output_regions != len(self.spans):
            raise ValueError("span count disagrees with output_regions")

    def to_dict(self) -> dict:
        return {
            "input_rows": self.input_rows,
            "output_regions": self.output_regions,
            "spans": [list(s) for s in self.spans],
        }


def collapse_exact(probes: StateMatrix) -> tuple[StateMatrix, CollapseReport]:
    """Merge consecutive same-chromosome rows with identical state vectors.

    Merged annotation takes start_bp from the first row, end_bp from the
    last, and probe_count as the sum of the merged rows' probe counts (the
    plain row count when the input is probe-level), which keeps the
    operation idempotent on already-collapsed input.
    """
    states = probes.states
    meta = probes.region_meta
    m = probes.m

    groups: list[tuple[int, int]] = []  # half-open row ranges
    lo = 0
    for i in range(1, m):
        same_chrom = meta[i].chromosome == meta[lo].chromosome
        if not (same_chrom and np.array_equal(states[i], states[lo])):
            groups.append((lo, i))
            lo = i
    groups.append((lo, m))

    out_states = np.empty((len(groups), probes.n), dtype=np.int8)
    out_meta = []
    spans = []
    for k, (a, b) in enumerate(groups):
        out_states[k] = states[a]
        out_meta.append(
            RegionMeta(
                chromosome=meta[a].chromosome,
                start_bp=meta[a].start_bp,
                end_bp=meta[b - 1].end_bp,
                probe_count=sum(meta[i].probe_count for i in range(a, b)),
            )
        )
        spans.append((a, b - 1, out_meta[-1].probe_count))

    collapsed = StateMatrix(out_states, out_meta, probes.sample_ids)
    report = CollapseReport(input_rows=m, output_regions=len(groups), spans=tuple(spans))
    return collapsed, report
