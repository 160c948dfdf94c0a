"""Train/validation partitioning, one-step prediction and metrics.

Two partition methods are supported, mirroring how the vessel experiments
are evaluated: random selection of individual regression rows, and random
grouping of whole trajectory segments.  Surge rows form one partition group
and sway/yaw rows another (they share identical row sets by construction),
matching the split between forward and turning manoeuvres.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataprep import PreparedDataset
from .errors import DataError
from .estimator import IdentifiedModel, identify_from_systems
from .regressors import RegressionSystem, build_systems

__all__ = [
    "PartitionSpec",
    "RowSplit",
    "MetricsReport",
    "SensitivityReport",
    "partition",
    "predict_one_step_static",
    "predict_one_step_dynamic",
    "r_squared",
    "mae",
    "evaluate",
    "run_validation",
    "sensitivity_study",
    "training_fraction_sweep",
]

AXES = ("u", "v", "r")


@dataclass(frozen=True)
class PartitionSpec:
    """How to split rows into training and validation sets."""

    method: str = "by_points"
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in ("by_points", "by_segments"):
            raise ValueError(f"unknown partition method {self.method!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly inside (0, 1)")


@dataclass
class RowSplit:
    """Row indices (per axis) of a train/validation partition.

    For segment partitions the chosen segment ids are recorded too;
    ``realized_train_fraction`` reports the share actually achieved (whole
    segments rarely hit the requested fraction exactly).
    """

    spec: PartitionSpec
    train: dict[str, np.ndarray]
    val: dict[str, np.ndarray]
    realized_train_fraction: float
    train_segments: frozenset[int] | None = None
    val_segments: frozenset[int] | None = None

    def describe(self) -> dict:
        out = {
            "method": self.spec.method,
            "train_fraction": self.spec.train_fraction,
            "realized_train_fraction": self.realized_train_fraction,
            "seed": self.spec.seed,
        }
        if self.train_segments is not None:
            out["train_segments"] = sorted(self.train_segments)
        return out


def _vr_rows_consistent(systems: dict[str, RegressionSystem]) -> None:
    if systems["v"].rows != systems["r"].rows:
        raise DataError("sway and yaw systems must share their row set")


def _split_points(n: int, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n_train = int(round(fraction * n))
    if n_train <= 0 or n_train >= n:
        raise DataError(f"partition leaves an empty side ({n_train} of {n} rows)")
    perm = rng.permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def partition(
    ds: PreparedDataset,
    spec: PartitionSpec,
    kind: str = "static",
    systems: dict[str, RegressionSystem] | None = None,
) -> RowSplit:
    """Draw a seeded, reproducible train/validation split.

    ``by_points`` samples exactly round(fraction * n) rows per group;
    ``by_segments`` walks a shuffled segment order accumulating whole
    segments until the prepared-point count is as close to the requested
    fraction as the first crossing allows (the first seeded draw is kept
    and its realized fraction reported).
    """
    systems = systems if systems is not None else build_systems(ds, kind)
    _vr_rows_consistent(systems)

    if spec.method == "by_points":
        rng = np.random.default_rng(spec.seed)
        train_u, val_u = _split_points(systems["u"].n_rows, spec.train_fraction, rng)
        train_vr, val_vr = _split_points(systems["v"].n_rows, spec.train_fraction, rng)
        total = systems["u"].n_rows + systems["v"].n_rows
        realized = (train_u.size + train_vr.size) / total
        return RowSplit(
            spec=spec,
            train={"u": train_u, "v": train_vr, "r": train_vr},
            val={"u": val_u, "v": val_vr, "r": val_vr},
            realized_train_fraction=realized,
        )

    # by_segments: whole segments, shared across the three axes
    lengths = {seg.segment_id: len(seg) for seg in ds.segments}
    if len(lengths) < 2:
        raise DataError("segment partition needs at least two segments")
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(sorted(lengths))
    total_points = sum(lengths.values())
    target = spec.train_fraction * total_points
    train_ids: list[int] = []
    cum = 0
    for sid in order:
        if cum >= target:
            break
        train_ids.append(int(sid))
        cum += lengths[int(sid)]
    if len(train_ids) > 1 and abs(cum - lengths[train_ids[-1]] - target) < abs(cum - target):
        cum -= lengths[train_ids.pop()]
    train_set = frozenset(train_ids)
    val_set = frozenset(lengths) - train_set
    if not train_set or not val_set:
        raise DataError("segment partition leaves an empty side")

    train: dict[str, np.ndarray] = {}
    val: dict[str, np.ndarray] = {}
    for axis in AXES:
        seg_ids = np.array([sid for sid, _ in systems[axis].rows])
        in_train = np.isin(seg_ids, sorted(train_set))
        train[axis] = np.flatnonzero(in_train)
        val[axis] = np.flatnonzero(~in_train)
        if train[axis].size == 0 or val[axis].size == 0:
            raise DataError(f"segment partition leaves the {axis} system without rows on one side")
    return RowSplit(
        spec=spec,
        train=train,
        val=val,
        realized_train_fraction=cum / total_points,
        train_segments=train_set,
        val_segments=val_set,
    )


def _predict(model: IdentifiedModel, system: RegressionSystem, rows) -> tuple[np.ndarray, np.ndarray]:
    if system.model_kind != model.kind:
        raise ValueError(f"{model.kind} model cannot predict on a {system.model_kind} system")
    idx = np.arange(system.n_rows) if rows is None else np.asarray(rows, dtype=int)
    x = model.vector(system.axis)
    pred = system.base[idx] + system.a[idx] @ x
    truth = system.base[idx] + system.b[idx]
    return truth, pred


def predict_one_step_static(
    model: IdentifiedModel, system: RegressionSystem, rows=None
) -> tuple[np.ndarray, np.ndarray]:
    """One-step-ahead prediction nu(k) + A(k) @ X on static-model rows.

    Returns ``(truth, prediction)`` for the next-step velocity.  Rows that
    fail the builder preconditions never made it into the system; their
    count is on ``system.n_skipped``.
    """
    if model.kind != "static":
        raise ValueError("expected a static model")
    return _predict(model, system, rows)


def predict_one_step_dynamic(
    model: IdentifiedModel, system: RegressionSystem, rows=None
) -> tuple[np.ndarray, np.ndarray]:
    """One-step-ahead prediction on dynamic-model rows (k-1 and k context)."""
    if model.kind != "dynamic":
        raise ValueError("expected a dynamic model")
    return _predict(model, system, rows)


def r_squared(truth, prediction) -> float:
    """Coefficient of determination of a prediction series.

    ``1 - sum((truth - pred)^2) / sum((truth - mean(truth))^2)`` with the
    mean taken over the evaluated set.  Undefined for constant truth.
    """
    truth = np.asarray(truth, dtype=float)
    prediction = np.asarray(prediction, dtype=float)
    if truth.shape != prediction.shape or truth.ndim != 1:
        raise ValueError("series must be one-dimensional and of equal length")
    if truth.size < 2:
        raise ValueError("need at least two points")
    denom = float(np.sum((truth - truth.mean()) ** 2))
    if denom == 0.0:
        raise ValueError("truth series is constant; R^2 is undefined")
    return 1.0 - float(np.sum((truth - prediction) ** 2)) / denom


def mae(truth, prediction) -> float:
    """Mean absolute error between two equal-length series."""
    truth = np.asarray(truth, dtype=float)
    prediction = np.asarray(prediction, dtype=float)
    if truth.shape != prediction.shape or truth.ndim != 1:
        raise ValueError("series must be one-dimensional and of equal length")
    if truth.size == 0:
        raise ValueError("series are empty")
    return float(np.mean(np.abs(truth - prediction)))


@dataclass
class MetricsReport:
    """Per-axis R^2 and MAE of one evaluation pass."""

    kind: str
    r2: dict[str, float]
    mae: dict[str, float]
    evaluated: dict[str, int]
    skipped: dict[str, int]
    partition: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for axis in self.r2:
            if self.r2[axis] > 1.0 + 1e-12:
                raise ValueError("R^2 cannot exceed 1")
            if self.mae[axis] < 0.0:
                raise ValueError("MAE cannot be negative")

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "r2": dict(self.r2),
            "mae": dict(self.mae),
            "evaluated": dict(self.evaluated),
            "skipped": dict(self.skipped),
            "partition": dict(self.partition),
        }


def evaluate(
    model: IdentifiedModel,
    systems: dict[str, RegressionSystem],
    rows: dict[str, np.ndarray] | None = None,
    partition_info: dict | None = None,
) -> MetricsReport:
    """One-step metrics of a model over (a row subset of) the systems."""
    r2d: dict[str, float] = {}
    maed: dict[str, float] = {}
    counts: dict[str, int] = {}
    skipped: dict[str, int] = {}
    for axis in AXES:
        idx = None if rows is None else rows[axis]
        truth, pred = _predict(model, systems[axis], idx)
        r2d[axis] = r_squared(truth, pred)
        maed[axis] = mae(truth, pred)
        counts[axis] = truth.size
        skipped[axis] = systems[axis].n_skipped
    return MetricsReport(
        kind=model.kind,
        r2=r2d,
        mae=maed,
        evaluated=counts,
        skipped=skipped,
        partition=partition_info or {},
    )


def run_validation(
    ds: PreparedDataset,
    kind: str,
    spec: PartitionSpec,
    systems: dict[str, RegressionSystem] | None = None,
) -> tuple[IdentifiedModel, MetricsReport, MetricsReport]:
    """Partition, identify on the training side, evaluate both sides."""
    systems = systems if systems is not None else build_systems(ds, kind)
    split = partition(ds, spec, kind, systems=systems)
    model = identify_from_systems(kind, systems, ds.h, rows=split.train)
    info = split.describe()
    train_metrics = evaluate(model, systems, split.train, {**info, "side": "train"})
    val_metrics = evaluate(model, systems, split.val, {**info, "side": "validation"})
    return model, train_metrics, val_metrics


def prediction_traces(
    model: IdentifiedModel,
    systems: dict[str, RegressionSystem],
    ds: PreparedDataset,
    rows: dict[str, np.ndarray] | None = None,
) -> list[tuple[float, str, float, float]]:
    """Per-sample (time, axis, truth, prediction) rows for external plotting.

    The time stamps the predicted instant (one step past the row's k).
    """
    seg_t = {seg.segment_id: seg.t for seg in ds.segments}
    out: list[tuple[float, str, float, float]] = []
    for axis in AXES:
        system = systems[axis]
        idx = np.arange(system.n_rows) if rows is None else np.asarray(rows[axis], dtype=int)
        truth, pred = _predict(model, system, idx)
        for j, i in enumerate(idx):
            sid, k = system.rows[int(i)]
            out.append((float(seg_t[sid][k] + ds.h), axis, float(truth[j]), float(pred[j])))
    out.sort(key=lambda row: (row[1], row[0]))
    return out


@dataclass
class SensitivityReport:
    """Mean and sample SD of the metrics over repeated random partitions."""

    kind: str
    method: str
    repetitions: int
    mean_r2: dict[str, float]
    sd_r2: dict[str, float]
    mean_mae: dict[str, float]
    sd_mae: dict[str, float]

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "method": self.method,
            "repetitions": self.repetitions,
            "mean_r2": dict(self.mean_r2),
            "sd_r2": dict(self.sd_r2),
            "mean_mae": dict(self.mean_mae),
            "sd_mae": dict(self.sd_mae),
        }


def sensitivity_study(
    ds: PreparedDataset,
    kind: str,
    spec_base: PartitionSpec,
    repetitions: int = 20,
) -> SensitivityReport:
    """Repeat partition -> identify -> evaluate with counter-derived seeds.

    Validation-side metrics are aggregated with the sample (n-1) standard
    deviation.  Any failing repetition aborts the study with its index.
    """
    if repetitions < 2:
        raise ValueError("need at least two repetitions")
    systems = build_systems(ds, kind)
    r2s = {axis: [] for axis in AXES}
    maes = {axis: [] for axis in AXES}
    for rep in range(repetitions):
        spec = PartitionSpec(spec_base.method, spec_base.train_fraction, spec_base.seed + rep)
        try:
            split = partition(ds, spec, kind, systems=systems)
            model = identify_from_systems(kind, systems, ds.h, rows=split.train)
            metrics = evaluate(model, systems, split.val)
        except Exception as exc:
            raise RuntimeError(f"sensitivity repetition {rep} failed: {exc}") from exc
        for axis in AXES:
            r2s[axis].append(metrics.r2[axis])
            maes[axis].append(metrics.mae[axis])
    return SensitivityReport(
        kind=kind,
        method=spec_base.method,
        repetitions=repetitions,
        mean_r2={a: float(np.mean(r2s[a])) for a in AXES},
        sd_r2={a: float(np.std(r2s[a], ddof=1)) for a in AXES},
        mean_mae={a: float(np.mean(maes[a])) for a in AXES},
        sd_mae={a: float(np.std(maes[a], ddof=1)) for a in AXES},
    )


def training_fraction_sweep(
    ds: PreparedDataset,
    kind: str,
    fractions: tuple[float, ...] = (0.7, 0.6, 0.5),
    validation_fraction: float = 0.3,
    seed: int = 0,
) -> list[dict]:
    """Vary the training share against one fixed validation share.

    A seeded permutation per group fixes the validation rows once; each
    requested fraction then trains on that share of the whole row count,
    drawn from the remaining rows.  Returns one entry per fraction with
    train- and validation-side metrics.
    """
    if any(f + validation_fraction > 1.0 + 1e-12 for f in fractions):
        raise ValueError("train fraction plus validation fraction exceeds 1")
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError("validation_fraction must lie inside (0, 1)")
    systems = build_systems(ds, kind)
    _vr_rows_consistent(systems)
    rng = np.random.default_rng(seed)
    perms = {"u": rng.permutation(systems["u"].n_rows), "vr": rng.permutation(systems["v"].n_rows)}

    out: list[dict] = []
    for f in fractions:
        rows_train: dict[str, np.ndarray] = {}
        rows_val: dict[str, np.ndarray] = {}
        for group, axes in (("u", ("u",)), ("vr", ("v", "r"))):
            perm = perms[group]
            n = perm.size
            n_val = int(round(validation_fraction * n))
            n_train = int(round(f * n))
            if n_val <= 0 or n_train <= 0 or n_val + n_train > n:
                raise DataError(f"infeasible shares: {f} train + {validation_fraction} validation")
            val_idx = np.sort(perm[:n_val])
            train_idx = np.sort(perm[n_val : n_val + n_train])
            for axis in axes:
                rows_train[axis] = train_idx
                rows_val[axis] = val_idx
        model = identify_from_systems(kind, systems, ds.h, rows=rows_train)
        info = {"method": "by_points", "seed": seed, "train_fraction": f,
                "validation_fraction": validation_fraction}
        out.append(
            {
                "train_fraction": f,
                "train": evaluate(model, systems, rows_train, {**info, "side": "train"}),
                "validation": evaluate(model, systems, rows_val, {**info, "side": "validation"}),
            }
        )
    return out
