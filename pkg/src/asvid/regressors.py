"""Assembly of the linear-in-parameters systems A @ X = b.

Each usable time step of a prepared dataset contributes one row.  Rows are
built per axis and per propeller-model kind:

* static surge: 7 columns, forward-forward steps only,
* static sway/yaw: 13 columns, steps outside reverse-reverse,
* dynamic surge: 11 columns, forward-forward at both k-1 and k,
* dynamic sway/yaw: 21 columns, matching (non-RR) regions at k-1 and k.

The right-hand side is always the next-minus-current velocity of the axis.
The two asymmetric thrust columns (10/12 static, 18/20 dynamic, 1-based)
carry the operating-region sign and are structurally zeroed in
forward-forward rows, which keeps the forward-forward-only systems from
chasing coefficients the data cannot show.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataprep import PreparedDataset, Segment
from .errors import DataError
from .model import OperatingRegion

__all__ = [
    "RegionMask",
    "SURGE_REGIONS",
    "SWAYYAW_REGIONS",
    "RegressionSystem",
    "COLUMN_COUNTS",
    "build_static_surge",
    "build_static_swayyaw",
    "build_dynamic_surge",
    "build_dynamic_swayyaw",
    "build_systems",
]

COLUMN_COUNTS = {
    ("static", "u"): 7,
    ("static", "v"): 13,
    ("static", "r"): 13,
    ("dynamic", "u"): 11,
    ("dynamic", "v"): 21,
    ("dynamic", "r"): 21,
}


@dataclass(frozen=True)
class RegionMask:
    """Set of operating regions a builder accepts; reverse-reverse never is."""

    allowed: frozenset[OperatingRegion]

    def __post_init__(self) -> None:
        if OperatingRegion.RR in self.allowed:
            raise ValueError("reverse-reverse data is never used for identification")

    def codes(self) -> np.ndarray:
        return np.array(sorted(int(r) for r in self.allowed), dtype=np.int8)


SURGE_REGIONS = RegionMask(frozenset({OperatingRegion.FF}))
SWAYYAW_REGIONS = RegionMask(
    frozenset({OperatingRegion.FF, OperatingRegion.FR, OperatingRegion.RF})
)


@dataclass
class RegressionSystem:
    """One assembled least-squares problem with row provenance.

    ``rows`` maps each matrix row back to its (segment_id, time index);
    ``base`` holds the current-step velocity of the axis so one-step
    predictions (base + A @ X) and truths (base + b) can be reconstructed.
    ``n_skipped`` counts candidate steps excluded by the preconditions.
    """

    a: np.ndarray
    b: np.ndarray
    rows: list[tuple[int, int]]
    model_kind: str
    axis: str
    base: np.ndarray = field(repr=False, default=None)
    n_skipped: int = 0

    def __post_init__(self) -> None:
        expected = COLUMN_COUNTS[(self.model_kind, self.axis)]
        if self.a.ndim != 2 or self.a.shape[1] != expected:
            raise DataError(
                f"{self.model_kind}/{self.axis} system must have {expected} columns, "
                f"got shape {self.a.shape}"
            )
        if self.b.shape != (self.a.shape[0],) or len(self.rows) != self.a.shape[0]:
            raise DataError("row count mismatch between a, b and provenance")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise DataError("regression system contains non-finite entries")

    @property
    def n_rows(self) -> int:
        return int(self.a.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.a.shape[1])

    def select(self, indices: np.ndarray) -> "RegressionSystem":
        """Row subset (used by train/validation partitions)."""
        indices = np.asarray(indices, dtype=int)
        return RegressionSystem(
            a=self.a[indices],
            b=self.b[indices],
            rows=[self.rows[i] for i in indices],
            model_kind=self.model_kind,
            axis=self.axis,
            base=self.base[indices],
            n_skipped=self.n_skipped,
        )


def _axis_series(seg: Segment, axis: str) -> np.ndarray:
    return {"u": seg.u, "v": seg.v, "r": seg.r}[axis]


def _region_sign(region: np.ndarray) -> np.ndarray:
    """+1 in FR, -1 in RF, 0 in FF (the asymmetric-column convention)."""
    return np.where(
        region == OperatingRegion.FR, 1.0, np.where(region == OperatingRegion.RF, -1.0, 0.0)
    )


def _finish(
    blocks_a: list[np.ndarray],
    blocks_b: list[np.ndarray],
    blocks_base: list[np.ndarray],
    rows: list[tuple[int, int]],
    kind: str,
    axis: str,
    n_skipped: int,
) -> RegressionSystem:
    cols = COLUMN_COUNTS[(kind, axis)]
    if rows:
        a = np.vstack(blocks_a)
        b = np.concatenate(blocks_b)
        base = np.concatenate(blocks_base)
    else:
        raise DataError(f"no usable rows for the {kind} {axis} system")
    return RegressionSystem(
        a=a, b=b, rows=rows, model_kind=kind, axis=axis, base=base, n_skipped=n_skipped
    )


def build_static_surge(ds: PreparedDataset) -> RegressionSystem:
    """Rows [u|u|, v r, r^2, u, 1, mean^2+diff^2/4, mean] against u(k+1)-u(k).

    Only forward-forward steps with a successor in the same segment qualify.
    """
    blocks_a, blocks_b, blocks_base = [], [], []
    rows: list[tuple[int, int]] = []
    skipped = 0
    for seg in ds.segments:
        n = len(seg)
        if n < 2:
            continue
        k = np.arange(n - 1)
        mask = seg.region[k] == OperatingRegion.FF
        skipped += int(np.sum(~mask))
        k = k[mask]
        if k.size == 0:
            continue
        u, v, r = seg.u[k], seg.v[k], seg.r[k]
        mean, diff = seg.delta_mean[k], seg.delta_diff[k]
        a = np.column_stack(
            [
                u * np.abs(u),
                v * r,
                r * r,
                u,
                np.ones_like(u),
                mean * mean + 0.25 * diff * diff,
                mean,
            ]
        )
        blocks_a.append(a)
        blocks_b.append(seg.u[k + 1] - seg.u[k])
        blocks_base.append(seg.u[k])
        rows.extend((seg.segment_id, int(i)) for i in k)
    return _finish(blocks_a, blocks_b, blocks_base, rows, "static", "u", skipped)


def build_static_swayyaw(ds: PreparedDataset, axis: str) -> RegressionSystem:
    """13-column sway or yaw rows with region-signed thrust columns.

    Columns 1..9 (1-based) are the velocity monomials
    [v|v|, v|r|, r|v|, r|r|, u v, u r, v, r, 1]; columns 10..13 are the
    thrust terms [s*(mean^2+diff^2/4), mean*diff, s*mean, diff/2] with
    s = +1 in FR, -1 in RF and the signed columns zeroed in FF.
    """
    if axis not in ("v", "r"):
        raise ValueError(f"axis must be 'v' or 'r', got {axis!r}")
    allowed = SWAYYAW_REGIONS.codes()
    blocks_a, blocks_b, blocks_base = [], [], []
    rows: list[tuple[int, int]] = []
    skipped = 0
    for seg in ds.segments:
        n = len(seg)
        if n < 2:
            continue
        k = np.arange(n - 1)
        mask = np.isin(seg.region[k], allowed)
        skipped += int(np.sum(~mask))
        k = k[mask]
        if k.size == 0:
            continue
        u, v, r = seg.u[k], seg.v[k], seg.r[k]
        mean, diff = seg.delta_mean[k], seg.delta_diff[k]
        sign = _region_sign(seg.region[k])
        a = np.column_stack(
            [
                v * np.abs(v),
                v * np.abs(r),
                r * np.abs(v),
                r * np.abs(r),
                u * v,
                u * r,
                v,
                r,
                np.ones_like(u),
                sign * (mean * mean + 0.25 * diff * diff),
                mean * diff,
                sign * mean,
                0.5 * diff,
            ]
        )
        series = _axis_series(seg, axis)
        blocks_a.append(a)
        blocks_b.append(series[k + 1] - series[k])
        blocks_base.append(series[k])
        rows.extend((seg.segment_id, int(i)) for i in k)
    return _finish(blocks_a, blocks_b, blocks_base, rows, "static", axis, skipped)


def build_dynamic_surge(ds: PreparedDataset) -> RegressionSystem:
    """11-column surge rows for the first-order propeller model.

    Columns (1-based): [u(k), u(k-1)|u(k-1)|, v(k-1)r(k-1), r(k-1)^2, u(k-1),
    u(k)|u(k)|, v(k)r(k), r(k)^2, 1, mean(k-1)^2+diff(k-1)^2/4, mean(k-1)].
    Rows need k-1, k, k+1 inside one segment and forward-forward operation
    at both k-1 and k.
    """
    blocks_a, blocks_b, blocks_base = [], [], []
    rows: list[tuple[int, int]] = []
    skipped = 0
    for seg in ds.segments:
        n = len(seg)
        if n < 3:
            continue
        k = np.arange(1, n - 1)
        mask = (seg.region[k] == OperatingRegion.FF) & (seg.region[k - 1] == OperatingRegion.FF)
        skipped += int(np.sum(~mask))
        k = k[mask]
        if k.size == 0:
            continue
        u0, v0, r0 = seg.u[k - 1], seg.v[k - 1], seg.r[k - 1]
        u1, v1, r1 = seg.u[k], seg.v[k], seg.r[k]
        mean0, diff0 = seg.delta_mean[k - 1], seg.delta_diff[k - 1]
        a = np.column_stack(
            [
                u1,
                u0 * np.abs(u0),
                v0 * r0,
                r0 * r0,
                u0,
                u1 * np.abs(u1),
                v1 * r1,
                r1 * r1,
                np.ones_like(u1),
                mean0 * mean0 + 0.25 * diff0 * diff0,
                mean0,
            ]
        )
        blocks_a.append(a)
        blocks_b.append(seg.u[k + 1] - seg.u[k])
        blocks_base.append(seg.u[k])
        rows.extend((seg.segment_id, int(i)) for i in k)
    return _finish(blocks_a, blocks_b, blocks_base, rows, "dynamic", "u", skipped)


def build_dynamic_swayyaw(ds: PreparedDataset, axis: str) -> RegressionSystem:
    """21-column sway or yaw rows for the first-order propeller model.

    Velocity monomials appear for both k-1 (columns 2..9) and k (10..15);
    column 1 is the axis velocity at k, column 16 the other axis at k and
    column 17 the bias.
    Thrust columns 18..21 use the k-1 PWM with the static sign convention
    applied at the region of k-1.  Rows need matching non-reverse-reverse
    regions at k-1 and k (mixed-region transitions would mix thrust-model
    branches inside one row).
    """
    if axis not in ("v", "r"):
        raise ValueError(f"axis must be 'v' or 'r', got {axis!r}")
    allowed = SWAYYAW_REGIONS.codes()
    blocks_a, blocks_b, blocks_base = [], [], []
    rows: list[tuple[int, int]] = []
    skipped = 0
    for seg in ds.segments:
        n = len(seg)
        if n < 3:
            continue
        k = np.arange(1, n - 1)
        mask = np.isin(seg.region[k], allowed) & (seg.region[k] == seg.region[k - 1])
        skipped += int(np.sum(~mask))
        k = k[mask]
        if k.size == 0:
            continue
        u0, v0, r0 = seg.u[k - 1], seg.v[k - 1], seg.r[k - 1]
        u1, v1, r1 = seg.u[k], seg.v[k], seg.r[k]
        mean0, diff0 = seg.delta_mean[k - 1], seg.delta_diff[k - 1]
        sign = _region_sign(seg.region[k - 1])
        own1, other1 = (v1, r1) if axis == "v" else (r1, v1)
        a = np.column_stack(
            [
                own1,
                v0 * np.abs(v0),
                v0 * np.abs(r0),
                r0 * np.abs(v0),
                r0 * np.abs(r0),
                u0 * v0,
                u0 * r0,
                v0,
                r0,
                v1 * np.abs(v1),
                v1 * np.abs(r1),
                r1 * np.abs(v1),
                r1 * np.abs(r1),
                u1 * v1,
                u1 * r1,
                other1,
                np.ones_like(u1),
                sign * (mean0 * mean0 + 0.25 * diff0 * diff0),
                mean0 * diff0,
                sign * mean0,
                0.5 * diff0,
            ]
        )
        series = _axis_series(seg, axis)
        blocks_a.append(a)
        blocks_b.append(series[k + 1] - series[k])
        blocks_base.append(series[k])
        rows.extend((seg.segment_id, int(i)) for i in k)
    return _finish(blocks_a, blocks_b, blocks_base, rows, "dynamic", axis, skipped)


def build_systems(ds: PreparedDataset, kind: str) -> dict[str, RegressionSystem]:
    """All three per-axis systems for one model kind."""
    if kind == "static":
        return {
            "u": build_static_surge(ds),
            "v": build_static_swayyaw(ds, "v"),
            "r": build_static_swayyaw(ds, "r"),
        }
    if kind == "dynamic":
        return {
            "u": build_dynamic_surge(ds),
            "v": build_dynamic_swayyaw(ds, "v"),
            "r": build_dynamic_swayyaw(ds, "r"),
        }
    raise ValueError(f"unknown model kind {kind!r}")
