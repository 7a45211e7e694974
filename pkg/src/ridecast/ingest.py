"""GPX and activity-export ingestion.

Routes come in as GPX 1.1 tracks and leave as a :class:`RouteProfile`, a
uniform distance grid (10 m by default) carrying smoothed altitude, per-step
gradient and smoothed bearing. Activity metadata, per-second streams and
wellness records are read from plain CSV exports; the column dictionaries
live in ``docs/formats.md``.
"""

from __future__ import annotations

import csv
import io
import math
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptySeries,
    EmptyTrack,
    InsufficientData,
    MalformedFile,
    ZeroLengthTrack,
)

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_STEP_M = 10.0
MOVING_THRESHOLD_MS = 0.5
MAX_MISSING_FRACTION = 0.10
MIN_MOVING_TIME_S = 1800
MIN_INTENSITY_FACTOR = 0.5
SMOOTH_HALF_WIDTH = 2  # 5-point centered window

GPX_NS = "http://www.topografix.com/GPX/1/1"


@dataclass(frozen=True)
class TrackPoint:
    lat: float
    lon: float
    ele: float | None = None
    time: float | None = None  # UTC epoch seconds

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"coordinates out of range: ({self.lat}, {self.lon})")


@dataclass(eq=False)
class RouteProfile:
    """Route resampled onto a uniform distance grid.

    ``gradient[i]`` is the percent grade of the step from grid point ``i`` to
    ``i + 1`` and ``bearing[i]`` the heading of that step; both series carry
    the value of the final step again at the last grid point so that every
    series has the same length. Feature code works on the ``n - 1`` steps.
    """

    distance: np.ndarray
    altitude: np.ndarray
    bearing: np.ndarray
    latitude: np.ndarray | None = None
    longitude: np.ndarray | None = None
    gradient: np.ndarray = field(init=False)

    def __post_init__(self):
        self.distance = np.asarray(self.distance, dtype=float)
        self.altitude = np.asarray(self.altitude, dtype=float)
        self.bearing = np.mod(np.asarray(self.bearing, dtype=float), 360.0)
        n = self.distance.size
        if n < 2:
            raise InsufficientData("a route profile needs at least 2 grid points")
        if self.altitude.size != n or self.bearing.size != n:
            raise ValueError("distance, altitude and bearing must have equal length")
        steps = np.diff(self.distance)
        if np.any(steps <= 0):
            raise ValueError("distance grid must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-9):
            raise ValueError("distance grid must be uniform")
        if self.latitude is not None:
            self.latitude = np.asarray(self.latitude, dtype=float)
            self.longitude = np.asarray(self.longitude, dtype=float)
        grad = 100.0 * np.diff(self.altitude) / steps
        self.gradient = np.append(grad, grad[-1])

    @property
    def step(self) -> float:
        return float(self.distance[1] - self.distance[0])

    @property
    def total_distance(self) -> float:
        return float(self.distance[-1])

    def __len__(self) -> int:
        return self.distance.size

    def prefix(self, n_points: int) -> "RouteProfile":
        """First ``n_points`` grid points as a new profile."""
        lat = None if self.latitude is None else self.latitude[:n_points]
        lon = None if self.longitude is None else self.longitude[:n_points]
        return RouteProfile(
            self.distance[:n_points].copy(),
            self.altitude[:n_points].copy(),
            self.bearing[:n_points].copy(),
            lat if lat is None else lat.copy(),
            lon if lon is None else lon.copy(),
        )


@dataclass
class ActivityStreams:
    """Per-second sensor samples. Missing samples are NaN."""

    power: np.ndarray | None = None
    hr: np.ndarray | None = None
    speed: np.ndarray | None = None
    lat: np.ndarray | None = None
    lon: np.ndarray | None = None
    alt: np.ndarray | None = None

    def __len__(self) -> int:
        for arr in (self.lat, self.power, self.hr, self.speed, self.alt):
            if arr is not None:
                return len(arr)
        return 0

    def completeness(self) -> float:
        """Fraction of samples with a position and an altitude."""
        if self.lat is None or self.lon is None or self.alt is None or len(self) == 0:
            return 0.0
        ok = np.isfinite(self.lat) & np.isfinite(self.lon) & np.isfinite(self.alt)
        return float(np.mean(ok))

    def gps_movement(self) -> float:
        """Path length in meters over samples with a valid position."""
        if self.lat is None or self.lon is None:
            return 0.0
        ok = np.isfinite(self.lat) & np.isfinite(self.lon)
        if ok.sum() < 2:
            return 0.0
        lat, lon = self.lat[ok], self.lon[ok]
        return float(np.sum(haversine_m(lat[:-1], lon[:-1], lat[1:], lon[1:])))

    def track_points(self) -> list[TrackPoint]:
        if self.lat is None or self.lon is None:
            return []
        out = []
        alt = self.alt if self.alt is not None else np.full(len(self.lat), np.nan)
        for i, (la, lo, al) in enumerate(zip(self.lat, self.lon, alt)):
            if not (math.isfinite(la) and math.isfinite(lo)):
                continue
            out.append(TrackPoint(float(la), float(lo), float(al) if math.isfinite(al) else None, float(i)))
        return out


@dataclass
class ActivityRecord:
    id: str
    start_time: datetime
    moving_time: float
    elapsed_time: float
    distance: float
    type: str = "Ride"
    streams: ActivityStreams | None = None
    race: bool = False

    def __post_init__(self):
        if self.moving_time > self.elapsed_time:
            raise ValueError(f"{self.id}: moving_time exceeds elapsed_time")
        if self.distance < 0:
            raise ValueError(f"{self.id}: negative distance")

    @property
    def date(self) -> date:
        return self.start_time.astimezone(timezone.utc).date()


@dataclass(frozen=True)
class WellnessRecord:
    date: date
    ctl: float | None = None
    atl: float | None = None
    tsb: float | None = None
    weight: float | None = None


# ---------------------------------------------------------------------------
# geometry


def haversine_m(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters; accepts scalars or arrays (degrees)."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def haversine(p1: TrackPoint, p2: TrackPoint) -> float:
    """Distance between two track points in meters."""
    return float(haversine_m(p1.lat, p1.lon, p2.lat, p2.lon))


def initial_bearing(lat1, lon1, lat2, lon2):
    """Forward azimuth in degrees [0, 360), 0 = north, 90 = east."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    x = np.sin(dlmb) * np.cos(p2)
    y = np.cos(p1) * np.sin(p2) - np.sin(p1) * np.cos(p2) * np.cos(dlmb)
    return np.mod(np.degrees(np.arctan2(x, y)), 360.0)


def _window_bounds(n: int, half: int) -> tuple[np.ndarray, np.ndarray]:
    # symmetric window, shrunk near the ends so linear ramps pass unchanged
    idx = np.arange(n)
    h = np.minimum(half, np.minimum(idx, n - 1 - idx))
    return idx - h, idx + h + 1


def centered_mean(x: np.ndarray, half: int = SMOOTH_HALF_WIDTH) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    lo, hi = _window_bounds(x.size, half)
    c = np.concatenate([[0.0], np.cumsum(x)])
    return (c[hi] - c[lo]) / (hi - lo)


def circular_centered_mean(deg: np.ndarray, half: int = SMOOTH_HALF_WIDTH) -> np.ndarray:
    """Rolling mean of bearings taken on the unit circle (350 and 10 average to 0)."""
    rad = np.radians(deg)
    s = centered_mean(np.sin(rad), half)
    c = centered_mean(np.cos(rad), half)
    return np.mod(np.degrees(np.arctan2(s, c)), 360.0)


# ---------------------------------------------------------------------------
# GPX


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _parse_time(text: str) -> float:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def parse_gpx(data: bytes | str) -> list[TrackPoint]:
    """Parse track points from a GPX document.

    Only ``<trk>/<trkseg>/<trkpt>`` elements are read; routes and waypoints are
    ignored. Points keep document order across segments and tracks.

    Raises:
        MalformedFile: the XML does not parse or a point lacks valid coordinates.
        EmptyTrack: the document has no track points.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise MalformedFile(f"invalid XML: {exc}") from exc
    if _local(root.tag) != "gpx":
        raise MalformedFile(f"root element is <{_local(root.tag)}>, expected <gpx>")

    points: list[TrackPoint] = []
    last_time = None
    for trk in (el for el in root if _local(el.tag) == "trk"):
        for seg in (el for el in trk if _local(el.tag) == "trkseg"):
            for pt in (el for el in seg if _local(el.tag) == "trkpt"):
                try:
                    lat = float(pt.attrib["lat"])
                    lon = float(pt.attrib["lon"])
                except (KeyError, ValueError) as exc:
                    raise MalformedFile(f"track point without valid lat/lon: {pt.attrib}") from exc
                ele = t = None
                for child in pt:
                    name = _local(child.tag)
                    try:
                        if name == "ele" and child.text and child.text.strip():
                            ele = float(child.text)
                        elif name == "time" and child.text and child.text.strip():
                            t = _parse_time(child.text)
                    except ValueError as exc:
                        raise MalformedFile(f"bad <{name}> value {child.text!r}") from exc
                if t is not None:
                    if last_time is not None and t < last_time:
                        raise MalformedFile("track point timestamps go backwards")
                    last_time = t
                try:
                    points.append(TrackPoint(lat, lon, ele, t))
                except ValueError as exc:
                    raise MalformedFile(str(exc)) from exc
    if not points:
        raise EmptyTrack("GPX document contains no track points")
    return points


def read_gpx(path: str | os.PathLike) -> list[TrackPoint]:
    return parse_gpx(Path(path).read_bytes())


def write_gpx(points: Iterable[TrackPoint], name: str = "route") -> bytes:
    """Serialize points as a single-segment GPX 1.1 track."""
    buf = io.StringIO()
    buf.write('<?xml version="1.0" encoding="UTF-8"?>\n')
    buf.write(f'<gpx version="1.1" creator="ridecast" xmlns="{GPX_NS}">\n')
    buf.write(f"  <trk><name>{name}</name><trkseg>\n")
    for p in points:
        buf.write(f'    <trkpt lat="{p.lat!r}" lon="{p.lon!r}">')
        if p.ele is not None:
            buf.write(f"<ele>{p.ele!r}</ele>")
        if p.time is not None:
            ts = datetime.fromtimestamp(p.time, tz=timezone.utc).isoformat().replace("+00:00", "Z")
            buf.write(f"<time>{ts}</time>")
        buf.write("</trkpt>\n")
    buf.write("  </trkseg></trk>\n</gpx>\n")
    return buf.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# resampling


def resample_profile(points: Sequence[TrackPoint], step: float = DEFAULT_STEP_M) -> RouteProfile:
    """Resample track points onto a uniform distance grid.

    Missing altitudes are linearly interpolated along distance (ends take the
    nearest known value). Altitude is then smoothed with a 5-point centered
    mean, and bearings with the same window on the unit circle.

    Raises:
        InsufficientData: fewer than 2 points, or more than 10% lack altitude.
        ZeroLengthTrack: the track is shorter than one grid step.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if len(points) < 2:
        raise InsufficientData("need at least 2 track points")
    lat = np.array([p.lat for p in points], dtype=float)
    lon = np.array([p.lon for p in points], dtype=float)
    ele = np.array([np.nan if p.ele is None else p.ele for p in points], dtype=float)
    missing = np.mean(np.isnan(ele))
    if missing > MAX_MISSING_FRACTION:
        raise InsufficientData(f"{missing:.1%} of points lack altitude (limit 10%)")

    seg = haversine_m(lat[:-1], lon[:-1], lat[1:], lon[1:])
    keep = np.concatenate([[True], seg > 0])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    lat, lon, ele, cum = lat[keep], lon[keep], ele[keep], cum[keep]
    total = cum[-1]
    if total < step:
        raise ZeroLengthTrack(f"track length {total:.1f} m is below one {step} m step")

    known = ~np.isnan(ele)
    if known.sum() == 0:
        raise InsufficientData("no altitude samples")
    ele = np.interp(cum, cum[known], ele[known])

    n = int(math.floor(total / step + 1e-9)) + 1
    grid = np.arange(n) * step
    alt = centered_mean(np.interp(grid, cum, ele))
    glat = np.interp(grid, cum, lat)
    glon = np.interp(grid, cum, lon)
    raw_bearing = initial_bearing(glat[:-1], glon[:-1], glat[1:], glon[1:])
    raw_bearing = np.append(raw_bearing, raw_bearing[-1])
    bearing = circular_centered_mean(raw_bearing)
    return RouteProfile(grid, alt, bearing, glat, glon)


def profile_from_gpx(path: str | os.PathLike, step: float = DEFAULT_STEP_M) -> RouteProfile:
    return resample_profile(read_gpx(path), step)


# ---------------------------------------------------------------------------
# activities


def compute_moving_time(speed, threshold: float = MOVING_THRESHOLD_MS) -> float:
    """Seconds spent above ``threshold`` m/s in a 1 Hz speed series."""
    speed = np.asarray(speed, dtype=float)
    if speed.size == 0:
        raise EmptySeries("speed series is empty")
    return float(np.count_nonzero(speed > threshold))


def exclusion_reason(record: ActivityRecord, ftp: float | None = None) -> str | None:
    """Why ``record`` fails the data-cleaning filters, or None if it passes."""
    from .athlete import normalized_power  # athlete does not import ingest

    if record.type != "Ride":
        return f"type {record.type!r} is not a ride"
    if record.moving_time < MIN_MOVING_TIME_S:
        return f"moving time {record.moving_time / 60:.1f} min is under 30 min"
    s = record.streams
    if s is None or s.gps_movement() <= 1.0:
        return "no GPS movement (indoor session)"
    if s.completeness() < 1.0 - MAX_MISSING_FRACTION:
        return f"stream completeness {s.completeness():.1%} is under 90%"
    if ftp and s.power is not None:
        power = s.power[np.isfinite(s.power)]
        if power.size >= 30 and np.any(power > 0):
            intensity = normalized_power(power) / ftp
            if intensity < MIN_INTENSITY_FACTOR:
                return f"intensity factor {intensity:.2f} is below 0.5"
    return None


def filter_activities(records: Sequence[ActivityRecord], ftp: float | None = None) -> list[ActivityRecord]:
    """Keep outdoor rides of at least 30 min with complete streams and IF >= 0.5."""
    return [r for r in records if exclusion_reason(r, ftp) is None]


# ---------------------------------------------------------------------------
# CSV exports

ACTIVITY_COLUMNS = ["id", "start_time", "moving_time", "elapsed_time", "distance", "type"]
STREAM_COLUMNS = ["t", "power", "hr", "speed", "lat", "lon", "alt"]
WELLNESS_COLUMNS = ["date", "ctl", "atl", "tsb", "weight"]


def _opt_float(text: str | None) -> float | None:
    if text is None or text.strip() == "":
        return None
    return float(text)


def parse_datetime(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt


def _require_columns(reader: csv.DictReader, required: Sequence[str], path) -> None:
    have = reader.fieldnames or []
    missing = [c for c in required if c not in have]
    if missing:
        raise MalformedFile(f"{path}: missing columns {missing}")


def read_activities_csv(path: str | os.PathLike) -> list[ActivityRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader, ACTIVITY_COLUMNS, path)
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(
                    ActivityRecord(
                        id=row["id"],
                        start_time=parse_datetime(row["start_time"]),
                        moving_time=float(row["moving_time"]),
                        elapsed_time=float(row["elapsed_time"]),
                        distance=float(row["distance"]),
                        type=row["type"],
                        race=str(row.get("race", "")).strip().lower() in ("1", "true", "yes"),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise MalformedFile(f"{path}:{lineno}: {exc}") from exc
    return out


def write_activities_csv(records: Sequence[ActivityRecord], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ACTIVITY_COLUMNS)
        for r in records:
            w.writerow([
                r.id,
                r.start_time.astimezone(timezone.utc).isoformat().replace("+00:00", "Z"),
                repr(float(r.moving_time)),
                repr(float(r.elapsed_time)),
                repr(float(r.distance)),
                r.type,
            ])


def read_streams_csv(path: str | os.PathLike) -> ActivityStreams:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        have = reader.fieldnames or []
        if "t" not in have:
            raise MalformedFile(f"{path}: missing column 't'")
        cols: dict[str, list[float]] = {c: [] for c in STREAM_COLUMNS[1:] if c in have}
        for lineno, row in enumerate(reader, start=2):
            for c, values in cols.items():
                try:
                    v = _opt_float(row[c])
                except ValueError as exc:
                    raise MalformedFile(f"{path}:{lineno}: {exc}") from exc
                values.append(np.nan if v is None else v)
    arrays = {c: np.array(v, dtype=float) for c, v in cols.items()}
    return ActivityStreams(**arrays)


def write_streams_csv(streams: ActivityStreams, path: str | os.PathLike) -> None:
    n = len(streams)
    cols = {c: getattr(streams, c) for c in STREAM_COLUMNS[1:]}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(STREAM_COLUMNS)
        for i in range(n):
            row = [str(i)]
            for arr in cols.values():
                row.append("" if arr is None or not np.isfinite(arr[i]) else repr(float(arr[i])))
            w.writerow(row)


def read_wellness_csv(path: str | os.PathLike) -> list[WellnessRecord]:
    """Read daily wellness rows; at most one row per day is allowed."""
    out: dict[date, WellnessRecord] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader, ["date"], path)
        for lineno, row in enumerate(reader, start=2):
            try:
                day = date.fromisoformat(row["date"].strip()[:10])
                rec = WellnessRecord(
                    day,
                    _opt_float(row.get("ctl")),
                    _opt_float(row.get("atl")),
                    _opt_float(row.get("tsb")),
                    _opt_float(row.get("weight")),
                )
            except ValueError as exc:
                raise MalformedFile(f"{path}:{lineno}: {exc}") from exc
            if day in out:
                raise MalformedFile(f"{path}:{lineno}: duplicate wellness day {day}")
            out[day] = rec
    return sorted(out.values(), key=lambda r: r.date)


def write_wellness_csv(records: Sequence[WellnessRecord], path: str | os.PathLike) -> None:
    def fmt(v):
        return "" if v is None else repr(float(v))

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(WELLNESS_COLUMNS)
        for r in records:
            w.writerow([r.date.isoformat(), fmt(r.ctl), fmt(r.atl), fmt(r.tsb), fmt(r.weight)])
