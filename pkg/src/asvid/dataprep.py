"""Raw sensor logs -> synchronized, filtered, segmented dataset.

The pipeline resamples the multi-rate streams (GNSS position, AHRS heading,
PWM commands) onto a uniform grid anchored to the GNSS stream, converts
geodetic fixes to a local NED frame, derives body velocities by backward
differencing, and smooths them.  Every stage uses only past samples, so a
perturbation of a raw sample can never change prepared values at earlier
grid times.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .errors import DataError
from .model import BodyVelocity, OperatingRegion, Pose, PwmFrame

__all__ = [
    "EARTH_RADIUS_M",
    "GeoReference",
    "RawLogBundle",
    "SavGolConfig",
    "PwmMapConfig",
    "PrepareConfig",
    "Segment",
    "PreparedSample",
    "PreparedDataset",
    "geodetic_to_ned",
    "ned_to_geodetic",
    "lever_arm_correct",
    "resample_causal",
    "savitzky_golay",
    "body_velocities_from_pose",
    "normalize_pwm",
    "denormalize_pwm",
    "build_prepared_dataset",
]

# Mean spherical earth radius; adequate for the sub-kilometre fields this
# toolkit targets (flat-earth tangent plane).
EARTH_RADIUS_M = 6371000.0

# Raw samples stamped within this of a grid time still count as "past".
_TIME_TOL = 1e-9


@dataclass(frozen=True)
class GeoReference:
    """Geodetic origin of the local NED frame plus the GNSS antenna lever arm.

    ``antenna_offset`` is the antenna position relative to the body origin,
    expressed in the body frame (m).
    """

    lat0: float
    lon0: float
    antenna_offset: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if abs(self.lat0) > 90.0:
            raise ValueError(f"latitude out of range: {self.lat0}")
        if abs(self.lon0) > 180.0:
            raise ValueError(f"longitude out of range: {self.lon0}")


def _check_stream(name: str, t: np.ndarray, *cols: np.ndarray) -> None:
    if t.size == 0:
        raise DataError(f"{name} stream is empty")
    if np.any(np.diff(t) <= 0):
        raise DataError(f"{name} timestamps must be strictly increasing")
    for c in cols:
        if c.shape != t.shape:
            raise DataError(f"{name} columns must match timestamp length")


@dataclass
class RawLogBundle:
    """Unsynchronized sensor logs: GNSS fixes, heading, and raw PWM in us."""

    gnss_t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    heading_t: np.ndarray
    psi: np.ndarray
    pwm_t: np.ndarray
    pwm_l: np.ndarray
    pwm_r: np.ndarray

    def __post_init__(self) -> None:
        for name in ("gnss_t", "lat", "lon", "heading_t", "psi", "pwm_t", "pwm_l", "pwm_r"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        _check_stream("gnss", self.gnss_t, self.lat, self.lon)
        _check_stream("heading", self.heading_t, self.psi)
        _check_stream("pwm", self.pwm_t, self.pwm_l, self.pwm_r)


@dataclass(frozen=True)
class SavGolConfig:
    """Savitzky-Golay filter settings: odd window length, order < window."""

    window_length: int = 11
    poly_order: int = 3

    def __post_init__(self) -> None:
        if self.window_length % 2 != 1 or self.window_length < 1:
            raise ValueError("window_length must be a positive odd integer")
        if not 0 <= self.poly_order < self.window_length:
            raise ValueError("poly_order must satisfy 0 <= order < window_length")


@dataclass(frozen=True)
class PwmMapConfig:
    """Affine map between PWM pulse widths (us) and normalized commands.

    Defaults follow the common RC convention 1100/1500/1900 us.  Samples
    farther than ``oob_fraction`` beyond the endpoints are flagged.
    """

    neutral_us: float = 1500.0
    half_span_us: float = 400.0
    oob_fraction: float = 0.05

    def __post_init__(self) -> None:
        if not self.half_span_us > 0:
            raise ValueError("half_span_us must be > 0")


@dataclass(frozen=True)
class PrepareConfig:
    """Settings for the raw-log pipeline.

    The causal resampler fits a sliding least-squares polynomial of the
    given degree over the last ``window`` raw samples.  Cubic fits serve the
    slowly sampled position and PWM streams; the heading stream gets a
    degree-8 fit over a wider window, which tolerates sample noise better
    than an interpolating spline of the same degree.
    """

    h: float = 0.2
    pwm_map: PwmMapConfig = field(default_factory=PwmMapConfig)
    savgol: SavGolConfig = field(default_factory=SavGolConfig)
    gnss_degree: int = 3
    gnss_window: int = 4
    heading_degree: int = 8
    heading_window: int = 15
    pwm_degree: int = 3
    pwm_window: int = 4
    gap_factor: float = 3.0  # stream silence > gap_factor*h splits segments

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise ValueError("h must be > 0")
        for deg, win, name in (
            (self.gnss_degree, self.gnss_window, "gnss"),
            (self.heading_degree, self.heading_window, "heading"),
            (self.pwm_degree, self.pwm_window, "pwm"),
        ):
            if win < deg + 1:
                raise ValueError(f"{name} window must hold at least degree+1 samples")


@dataclass
class Segment:
    """One contiguous run of prepared samples on the uniform grid."""

    segment_id: int
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    r: np.ndarray
    delta_mean: np.ndarray
    delta_diff: np.ndarray
    region: np.ndarray  # OperatingRegion codes, int8
    h: float
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    psi: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = self.t.size
        for name in ("u", "v", "r", "delta_mean", "delta_diff", "region"):
            if getattr(self, name).size != n:
                raise DataError(f"segment column {name} length mismatch")
        if n >= 2 and not np.allclose(np.diff(self.t), self.h, rtol=0.0, atol=1e-9):
            raise DataError("segment timestamps must step by exactly h")
        for name in ("u", "v", "r", "delta_mean", "delta_diff"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataError(f"segment column {name} has non-finite values")

    def __len__(self) -> int:
        return int(self.t.size)

    def sample(self, i: int) -> "PreparedSample":
        pose = None
        if self.x is not None:
            pose = Pose(float(self.x[i]), float(self.y[i]), float(self.psi[i]))
        return PreparedSample(
            t=float(self.t[i]),
            nu=BodyVelocity(float(self.u[i]), float(self.v[i]), float(self.r[i])),
            frame=PwmFrame.from_mean_diff(float(self.delta_mean[i]), float(self.delta_diff[i])),
            pose=pose,
        )


@dataclass(frozen=True)
class PreparedSample:
    """One synchronized sample: time, body velocity, PWM frame, optional pose."""

    t: float
    nu: BodyVelocity
    frame: PwmFrame
    pose: Pose | None = None


@dataclass
class PreparedDataset:
    """Segmented, uniformly sampled identification dataset."""

    segments: list[Segment]
    h: float

    def __post_init__(self) -> None:
        for seg in self.segments:
            if abs(seg.h - self.h) > 1e-12:
                raise DataError("all segments must share the dataset sampling period")

    @property
    def n_samples(self) -> int:
        return sum(len(s) for s in self.segments)

    @property
    def duration_minutes(self) -> float:
        return self.n_samples * self.h / 60.0

    def summary(self) -> dict:
        return {
            "points": self.n_samples,
            "segments": len(self.segments),
            "minutes": self.duration_minutes,
            "h": self.h,
        }


def geodetic_to_ned(lat, lon, ref: GeoReference):
    """Project geodetic coordinates (deg) to local north/east (m) about the origin.

    Flat-earth tangent plane on a spherical earth; the down component is
    dropped.  Accepts scalars or arrays.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if np.any(np.abs(lat) > 90.0):
        raise ValueError("latitude out of [-90, 90]")
    x = np.radians(lat - ref.lat0) * EARTH_RADIUS_M
    y = np.radians(lon - ref.lon0) * EARTH_RADIUS_M * math.cos(math.radians(ref.lat0))
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def ned_to_geodetic(x, y, ref: GeoReference):
    """Inverse of :func:`geodetic_to_ned` (same tangent-plane approximation)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lat = ref.lat0 + np.degrees(x / EARTH_RADIUS_M)
    lon = ref.lon0 + np.degrees(y / (EARTH_RADIUS_M * math.cos(math.radians(ref.lat0))))
    if lat.ndim == 0:
        return float(lat), float(lon)
    return lat, lon


def lever_arm_correct(x, y, psi, offset: tuple[float, float]):
    """Translate antenna positions to the body origin: pos - R2(psi) @ offset."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    psi = np.asarray(psi, dtype=float)
    ox, oy = offset
    c, s = np.cos(psi), np.sin(psi)
    cx = x - (c * ox - s * oy)
    cy = y - (s * ox + c * oy)
    if cx.ndim == 0:
        return float(cx), float(cy)
    return cx, cy


def _fit_eval_last(t_win: np.ndarray, y_win: np.ndarray, degree: int) -> float:
    """Least-squares polynomial through one trailing window, evaluated at its end."""
    tq = t_win[-1]
    span = max(tq - t_win[0], 1e-12)
    basis = 2.0 * (t_win - tq) / span + 1.0  # [-1, 1], query point at +1
    coef, *_ = np.linalg.lstsq(np.vander(basis, degree + 1, increasing=True), y_win, rcond=None)
    return float(coef.sum())


def resample_causal(
    t_raw: np.ndarray,
    y_raw: np.ndarray,
    t_grid: np.ndarray,
    degree: int,
    window: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Resample a stream onto a grid using only samples at or before each grid time.

    A polynomial of ``degree`` is least-squares fitted over the trailing
    ``window`` raw samples and evaluated at the grid time (extrapolation
    when the grid time falls past the newest sample).  Grid points with
    fewer than ``degree + 1`` prior samples are marked invalid.

    Returns ``(values, valid)``; invalid entries hold NaN.
    """
    t_raw = np.asarray(t_raw, dtype=float)
    y_raw = np.asarray(y_raw, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    if window < degree + 1:
        raise ValueError("window must hold at least degree+1 samples")
    if np.any(np.diff(t_raw) <= 0):
        raise ValueError("raw timestamps must be strictly increasing")

    n_avail = np.searchsorted(t_raw, t_grid + _TIME_TOL, side="right")
    valid = n_avail >= degree + 1
    out = np.full(t_grid.shape, np.nan)

    # Full-window grid points go through one batched QR solve.
    full = n_avail >= window
    if np.any(full):
        ends = n_avail[full]
        idx = ends[:, None] - window + np.arange(window)[None, :]
        t_win = t_raw[idx]
        y_win = y_raw[idx]
        tq = t_grid[full][:, None]
        span = np.maximum(tq - t_win[:, :1], 1e-12)
        basis = 2.0 * (t_win - tq) / span + 1.0
        vand = basis[..., None] ** np.arange(degree + 1)
        q, rmat = np.linalg.qr(vand)
        rhs = np.einsum("nwk,nw->nk", q, y_win)
        coef = np.linalg.solve(rmat, rhs[..., None])[..., 0]
        out[full] = coef.sum(axis=1)

    # Short-history points (warm-up tail) fall back to per-point fits.
    partial = valid & ~full
    for i in np.nonzero(partial)[0]:
        n = n_avail[i]
        out[i] = _fit_eval_last(t_raw[:n], y_raw[:n], degree)
    return out, valid


def _causal_edge_weights(window: int, order: int) -> np.ndarray:
    """Convolution weights of the trailing-window polynomial fit at its edge."""
    basis = 2.0 * np.arange(window) / (window - 1) - 1.0
    vand = np.vander(basis, order + 1, increasing=True)
    return np.linalg.pinv(vand).sum(axis=0)  # row vector of the edge fit


def savitzky_golay(signal: np.ndarray, cfg: SavGolConfig, causal: bool = False) -> np.ndarray:
    """Local least-squares polynomial smoothing.

    The default is the classic centered filter.  With ``causal=True`` each
    output uses only the trailing window (fitted polynomial evaluated at the
    window's newest point), so the filter never looks ahead; start-up points
    with short history use a shrinking window.  Both variants reproduce
    polynomials up to ``poly_order`` exactly.
    """
    signal = np.asarray(signal, dtype=float)
    w, order = cfg.window_length, cfg.poly_order
    if not causal:
        if signal.size < w:
            raise ValueError(f"signal length {signal.size} is shorter than window {w}")
        return scipy.signal.savgol_filter(signal, w, order, mode="interp")

    out = np.empty_like(signal)
    n = signal.size
    head = min(w - 1, n)
    for i in range(head):
        if i <= order:
            out[i] = signal[i]  # fit interpolates when points <= order+1
        else:
            x = 2.0 * np.arange(i + 1) / i - 1.0
            vand = np.vander(x, order + 1, increasing=True)
            coef, *_ = np.linalg.lstsq(vand, signal[: i + 1], rcond=None)
            out[i] = coef.sum()
    if n >= w:
        weights = _causal_edge_weights(w, order)
        out[w - 1 :] = np.convolve(signal, weights[::-1], mode="valid")
    return out


def body_velocities_from_pose(
    t: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    psi: np.ndarray,
    h: float,
    savgol: SavGolConfig | None = None,
    causal: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Derive (u, v, r) from a pose track on the uniform grid.

    Backward differences of position are rotated into the body frame at the
    midpoint heading of each step (the displacement accrues over the whole
    step; rotating at the endpoint heading leaks r*u*h/2 worth of surge
    into the much smaller sway channel).  The yaw rate differentiates the
    unwrapped heading.  Each series is then Savitzky-Golay filtered.
    Output arrays align with ``t[1:]`` (the first grid point has no
    backward difference).
    """
    if t.size < 2:
        raise DataError("need at least two samples to differentiate")
    dx = np.diff(x) / h
    dy = np.diff(y) / h
    psi_mid = 0.5 * (psi[1:] + psi[:-1])
    c, s = np.cos(psi_mid), np.sin(psi_mid)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    r = np.diff(psi) / h
    if savgol is not None:
        u = savitzky_golay(u, savgol, causal=causal)
        v = savitzky_golay(v, savgol, causal=causal)
        r = savitzky_golay(r, savgol, causal=causal)
    return u, v, r


def normalize_pwm(pwm_us, cfg: PwmMapConfig) -> tuple[np.ndarray, np.ndarray]:
    """Map PWM pulse widths (us) to [-1, 1].

    Returns ``(delta, flagged)``: values are clamped to [-1, 1] and samples
    beyond the endpoints by more than ``oob_fraction`` are flagged.
    """
    pwm_us = np.asarray(pwm_us, dtype=float)
    delta = (pwm_us - cfg.neutral_us) / cfg.half_span_us
    flagged = np.abs(delta) > 1.0 + cfg.oob_fraction
    return np.clip(delta, -1.0, 1.0), flagged


def denormalize_pwm(delta, cfg: PwmMapConfig) -> np.ndarray:
    """Inverse of :func:`normalize_pwm` for emitting synthetic logs."""
    return np.asarray(delta, dtype=float) * cfg.half_span_us + cfg.neutral_us


def _staleness(t_raw: np.ndarray, t_grid: np.ndarray) -> np.ndarray:
    """Age of the newest raw sample at each grid time (inf before the first)."""
    idx = np.searchsorted(t_raw, t_grid + _TIME_TOL, side="right")
    age = np.full(t_grid.shape, np.inf)
    has = idx > 0
    age[has] = t_grid[has] - t_raw[idx[has] - 1]
    return age


def _classify_regions(delta_l: np.ndarray, delta_r: np.ndarray) -> np.ndarray:
    codes = np.where(
        delta_l >= 0.0,
        np.where(delta_r >= 0.0, OperatingRegion.FF, OperatingRegion.FR),
        np.where(delta_r >= 0.0, OperatingRegion.RF, OperatingRegion.RR),
    )
    return codes.astype(np.int8)


def build_prepared_dataset(
    raw: RawLogBundle,
    ref: GeoReference,
    cfg: PrepareConfig | None = None,
) -> PreparedDataset:
    """Run the full preparation pipeline on a raw log bundle.

    The grid is anchored to the first GNSS timestamp with step ``cfg.h``.
    A grid point is usable only when every stream has enough causal history
    and none has been silent longer than ``gap_factor * h``; contiguous
    usable runs become segments, and the first point of each run is consumed
    by the backward difference.
    """
    cfg = cfg or PrepareConfig()
    h = cfg.h

    t0 = raw.gnss_t[0]
    n_grid = int(math.floor((raw.gnss_t[-1] - t0) / h + 1e-9)) + 1
    if n_grid < 2:
        raise DataError("GNSS stream spans less than one grid step")
    grid = t0 + h * np.arange(n_grid)

    lat, ok_lat = resample_causal(raw.gnss_t, raw.lat, grid, cfg.gnss_degree, cfg.gnss_window)
    lon, ok_lon = resample_causal(raw.gnss_t, raw.lon, grid, cfg.gnss_degree, cfg.gnss_window)
    psi_unwrapped = np.unwrap(raw.psi)
    psi, ok_psi = resample_causal(
        raw.heading_t, psi_unwrapped, grid, cfg.heading_degree, cfg.heading_window
    )
    pwm_l, ok_pl = resample_causal(raw.pwm_t, raw.pwm_l, grid, cfg.pwm_degree, cfg.pwm_window)
    pwm_r, ok_pr = resample_causal(raw.pwm_t, raw.pwm_r, grid, cfg.pwm_degree, cfg.pwm_window)

    gap = cfg.gap_factor * h
    fresh = (
        (_staleness(raw.gnss_t, grid) <= gap)
        & (_staleness(raw.heading_t, grid) <= gap)
        & (_staleness(raw.pwm_t, grid) <= gap)
    )
    usable = ok_lat & ok_lon & ok_psi & ok_pl & ok_pr & fresh
    if not np.any(usable):
        raise DataError("no usable grid points after warm-up and gap filtering")

    x, y = geodetic_to_ned(lat, lon, ref)
    x, y = lever_arm_correct(x, y, psi, ref.antenna_offset)
    delta_l, flag_l = normalize_pwm(pwm_l, cfg.pwm_map)
    delta_r, flag_r = normalize_pwm(pwm_r, cfg.pwm_map)
    n_flagged = int(np.sum((flag_l | flag_r) & usable))
    if n_flagged:
        warnings.warn(f"{n_flagged} PWM samples out of configured bounds by >5%", stacklevel=2)
    region = _classify_regions(delta_l, delta_r)
    delta_mean = 0.5 * (delta_l + delta_r)
    delta_diff = delta_l - delta_r

    segments: list[Segment] = []
    run_edges = np.flatnonzero(np.diff(np.concatenate(([0], usable.view(np.int8), [0]))))
    for start, stop in zip(run_edges[::2], run_edges[1::2]):
        if stop - start < 2:
            warnings.warn(f"dropping singleton segment at t={grid[start]:.3f}", stacklevel=2)
            continue
        sl = slice(start, stop)
        u, v, r = body_velocities_from_pose(
            grid[sl], x[sl], y[sl], psi[sl], h, savgol=cfg.savgol, causal=True
        )
        keep = slice(start + 1, stop)  # backward difference consumes the first point
        segments.append(
            Segment(
                segment_id=len(segments),
                t=grid[keep],
                u=u,
                v=v,
                r=r,
                delta_mean=delta_mean[keep],
                delta_diff=delta_diff[keep],
                region=region[keep],
                h=h,
                x=x[keep],
                y=y[keep],
                psi=psi[keep],
            )
        )
    if not segments:
        raise DataError("no segments with at least two usable points")
    return PreparedDataset(segments=segments, h=h)
