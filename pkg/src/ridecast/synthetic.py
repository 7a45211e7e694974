"""Synthetic routes and ride corpora with a known linear duration model.

Routes are laid out on a local tangent plane and converted to lat/lon, so
they travel through the same GPX ingestion path as real rides. Durations are
an affine function of canonical features (computed from the ingested
profile and the load history) plus Gaussian noise, which makes the true
coefficients recoverable by the regression module.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .athlete import ZoneConfig, DailyLoad, build_state_features, write_load_csv, write_zone_seconds_csv
from .ingest import (
    EARTH_RADIUS_M,
    ActivityRecord,
    RouteProfile,
    TrackPoint,
    resample_profile,
    write_activities_csv,
    write_gpx,
)
from .topology import ascent_by_third, extract_topology

PLACEMENTS = ("uniform", "front", "back")
POINT_SPACING_M = 10.0
MAX_LAYOUT_DRAWS = 200
MIN_DURATION_MIN = 31.0  # keeps every ride above the 30 min cleaning filter


@dataclass
class GeneratorSpec:
    """Parameters of a synthetic corpus.

    Attributes:
        coefficients: true minutes per unit of each named feature. Names
            must be canonical feature names (topology or fitness).
        placement: where climbs go along the route. ``back`` draws climb
            positions with density proportional to x**2 over the route
            fraction x and redraws the layout until every distance quarter
            climbs more than the one before and the final third holds over
            half the ascent; ``front`` mirrors it and
            ``uniform`` is flat.
        sigma: standard deviation of the duration noise, minutes.
    """

    seed: int = 0
    n: int = 96
    distance_km: tuple[float, float] = (10.2, 110.1)
    # lognormal parameters before truncation; the truncated draw has
    # mean 24.4 km and sd 13.1 km
    distance_mean_km: float = 22.3
    distance_sd_km: float = 14.2
    gain_per_km_mean: float = 33.0
    gain_per_km_sd: float = 18.0
    placement: str = "uniform"
    undulation_share: float = 0.15
    intercept: float = 19.0
    coefficients: dict[str, float] = field(
        default_factory=lambda: {"total_distance": 3.2, "total_ascent": 0.05, "ctl": -0.3}
    )
    sigma: float = 5.0
    start: date = date(2024, 1, 1)
    n_days: int = 420
    base_tss: float = 30.0
    peak_tss: float = 100.0
    period_days: float = 160.0
    n_breaks: int = 3
    rest_prob: float = 0.3

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        lo, hi = self.distance_km
        if not 0 < lo < hi:
            raise ValueError("distance range must satisfy 0 < lo < hi")
        if self.placement not in PLACEMENTS:
            raise ValueError(f"placement must be one of {PLACEMENTS}")
        if self.n < 1 or self.n_days < 2:
            raise ValueError("need at least one ride and two days of history")


# ---------------------------------------------------------------------------
# routes


def _lognormal(rng, mean, sd, lo, hi):
    s2 = math.log(1 + (sd / mean) ** 2)
    mu = math.log(mean) - s2 / 2
    while True:
        x = float(rng.lognormal(mu, math.sqrt(s2)))
        if lo <= x <= hi:
            return x


def _position(rng, placement: str) -> float:
    u = float(rng.random())
    if placement == "back":
        return u ** (1 / 3)
    if placement == "front":
        return 1 - u ** (1 / 3)
    return u


def _grades(rng, n_steps: int, target_gain: float, placement: str, undulation_share: float) -> np.ndarray:
    step = POINT_SPACING_M
    s = np.arange(n_steps) * step
    wavelength = rng.uniform(600, 1500)
    amp = undulation_share * target_gain * wavelength / (2 * n_steps * step)
    phase = rng.uniform(0, 2 * math.pi)
    g = 100 * amp * (2 * math.pi / wavelength) * np.cos(2 * math.pi * s / wavelength + phase)

    gained = 0.0
    climb_target = (1 - undulation_share) * target_gain
    while gained < climb_target:
        grade = rng.uniform(3.5, 8.0)
        length = min(rng.uniform(600, 3000), (climb_target - gained) / (grade / 100), n_steps * step / 3)
        length = max(length, 600.0)
        k = int(round(length / step))
        if k >= n_steps:
            break
        i = int(_position(rng, placement) * (n_steps - k))
        g[i:i + k] += grade
        gained += k * step * grade / 100

    # descents take back most of the climbing, away from the loaded part
    lost = 0.0
    lo, hi = {"back": (0.0, 2 / 3), "front": (1 / 3, 1.0)}.get(placement, (0.0, 1.0))
    while lost < 0.9 * gained:
        grade = rng.uniform(4.0, 8.0)
        k = int(round(rng.uniform(400, 2000) / step))
        span = int((hi - lo) * n_steps) - k
        if span <= 0:
            break
        i = int(lo * n_steps) + int(rng.integers(span))
        g[i:i + k] -= grade
        lost += k * step * grade / 100
    return g


def _headings(rng, n_steps: int) -> np.ndarray:
    turn = rng.normal(0.0, 2.0, n_steps)
    corners = rng.random(n_steps) < 1 / 300
    turn[corners] += rng.choice([-1.0, 1.0], corners.sum()) * rng.uniform(60, 120, corners.sum())
    return np.mod(rng.uniform(0, 360) + np.cumsum(turn), 360.0)


def _to_points(heading_deg, altitude, lat0, lon0) -> list[TrackPoint]:
    h = np.radians(heading_deg)
    north = np.concatenate([[0.0], np.cumsum(POINT_SPACING_M * np.cos(h))])
    east = np.concatenate([[0.0], np.cumsum(POINT_SPACING_M * np.sin(h))])
    lat = lat0 + np.degrees(north / EARTH_RADIUS_M)
    lon = lon0 + np.degrees(east / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return [TrackPoint(round(float(a), 7), round(float(b), 7), round(float(e), 2))
            for a, b, e in zip(lat, lon, altitude)]


def generate_track(spec: GeneratorSpec, rng: np.random.Generator, distance_km: float | None = None,
                   gain_m: float | None = None, placement: str | None = None) -> list[TrackPoint]:
    """Track points of one synthetic route, roughly 10 m apart."""
    placement = placement or spec.placement
    if distance_km is None:
        distance_km = _lognormal(rng, spec.distance_mean_km, spec.distance_sd_km, *spec.distance_km)
    if gain_m is None:
        gain_m = distance_km * _lognormal(rng, spec.gain_per_km_mean, spec.gain_per_km_sd, 2.0, 80.0)
    n_steps = int(round(distance_km * 1000 / POINT_SPACING_M))
    lat0, lon0 = rng.uniform(44.0, 48.0), rng.uniform(5.0, 12.0)
    for _ in range(MAX_LAYOUT_DRAWS):
        g = _grades(rng, n_steps, gain_m, placement, spec.undulation_share)
        alt = rng.uniform(150, 600) + np.concatenate([[0.0], np.cumsum(g * POINT_SPACING_M / 100)])
        points = _to_points(_headings(rng, n_steps), alt, lat0, lon0)
        if placement == "uniform":
            return points
        profile = resample_profile(points)
        quarters, thirds = ascent_by_quarter(profile), ascent_by_third(profile)
        if placement == "front":
            quarters, thirds = quarters[::-1], thirds[::-1]
        if np.all(np.diff(quarters) > 0) and thirds[2] > 0.5:
            return points
    raise RuntimeError(f"no {placement}-loaded layout found in {MAX_LAYOUT_DRAWS} draws")


def ascent_by_quarter(profile: RouteProfile) -> np.ndarray:
    """Meters climbed in each distance quarter of the route."""
    up = np.maximum(np.diff(profile.altitude), 0.0)
    quarter = np.minimum((profile.distance[:-1] * 4.0 / profile.total_distance).astype(int), 3)
    return np.bincount(quarter, weights=up, minlength=4)


def generate_route(spec: GeneratorSpec, rng: np.random.Generator, **kw) -> RouteProfile:
    """One synthetic route, passed through the standard resampling."""
    return resample_profile(generate_track(spec, rng, **kw))


# ---------------------------------------------------------------------------
# load history and corpus


def generate_load_history(spec: GeneratorSpec, rng: np.random.Generator,
                          zones: ZoneConfig | None = None) -> list[DailyLoad]:
    """Daily TSS with a seasonal cycle, rest days and multi-week breaks."""
    zones = zones or ZoneConfig()
    t = np.arange(spec.n_days)
    phase = rng.uniform(0, 2 * math.pi)
    level = spec.base_tss + (spec.peak_tss - spec.base_tss) * 0.5 * (1 + np.sin(2 * math.pi * t / spec.period_days + phase))
    tss = level * rng.lognormal(0.0, 0.3, spec.n_days)
    tss[rng.random(spec.n_days) < spec.rest_prob] = 0.0
    for _ in range(spec.n_breaks):
        start = int(rng.integers(spec.n_days))
        tss[start:start + int(rng.integers(10, 31))] = 0.0
    tss[:14] = 0.0  # history opens from an untrained state
    n_p, n_h = zones.n_zones("power"), zones.n_zones("hr")
    out = []
    for i in range(spec.n_days):
        zs = {}
        if tss[i] > 0:
            secs = tss[i] / 55.0 * 3600.0
            for ch, n_z, alpha in (("power", n_p, [3, 5, 4, 3, 1.5, 1, 0.5][:n_p]), ("hr", n_h, [3, 5, 4, 2, 1][:n_h])):
                share = rng.dirichlet(np.resize(alpha, n_z))
                zs.update({(ch, z): float(secs * share[z]) for z in range(n_z)})
        out.append(DailyLoad(spec.start + timedelta(days=i), float(tss[i]), zs))
    return out


@dataclass
class Corpus:
    spec: GeneratorSpec
    activities: list[ActivityRecord]
    tracks: dict[str, list[TrackPoint]]
    profiles: dict[str, RouteProfile]
    load_history: list[DailyLoad]
    true_minutes: dict[str, float]  # noise-free ground truth
    zones: ZoneConfig


def true_duration(spec: GeneratorSpec, features: dict[str, float]) -> float:
    return spec.intercept + sum(c * features[name] for name, c in spec.coefficients.items())


def generate_corpus(spec: GeneratorSpec, zones: ZoneConfig | None = None) -> Corpus:
    """Rides, routes, load history and ground-truth durations for ``spec``."""
    zones = zones or ZoneConfig()
    rng = np.random.default_rng(spec.seed)
    history = generate_load_history(spec, rng, zones)
    days = np.sort(rng.choice(np.arange(1, spec.n_days), size=spec.n - 1, replace=spec.n - 1 > spec.n_days - 1))
    days = np.concatenate([[0], days])  # one ride before any training load
    activities, tracks, profiles, truth = [], {}, {}, {}
    for i, d in enumerate(days):
        aid = f"syn{i + 1:04d}"
        points = generate_track(spec, rng)
        profile = resample_profile(points)
        day = spec.start + timedelta(days=int(d))
        feats = {**extract_topology(profile), **build_state_features(history, day, zones)}
        clean = true_duration(spec, feats)
        minutes = max(clean + float(rng.normal(0.0, spec.sigma)), MIN_DURATION_MIN)
        start = datetime(day.year, day.month, day.day, tzinfo=timezone.utc) + timedelta(
            hours=int(rng.integers(6, 17)), minutes=int(rng.integers(60)))
        moving = round(minutes * 60.0, 1)
        activities.append(ActivityRecord(aid, start, moving, round(moving * 1.1, 1), round(profile.total_distance, 1)))
        tracks[aid], profiles[aid], truth[aid] = points, profile, clean
    return Corpus(spec, activities, tracks, profiles, history, truth, zones)


def write_corpus(corpus: Corpus, directory: str | os.PathLike) -> Path:
    """Write the corpus in the activity-directory layout the CLI reads."""
    root = Path(directory)
    (root / "gpx").mkdir(parents=True, exist_ok=True)
    write_activities_csv(corpus.activities, root / "activities.csv")
    for aid, points in corpus.tracks.items():
        (root / "gpx" / f"{aid}.gpx").write_bytes(write_gpx(points, aid))
    write_load_csv(corpus.load_history, root / "load.csv")
    write_zone_seconds_csv(corpus.load_history, root / "zones.csv")
    corpus.zones.to_json(root / "zones.json")
    with open(root / "truth.csv", "w", encoding="utf-8") as fh:
        fh.write("id,true_min\n")
        for aid, m in corpus.true_minutes.items():
            fh.write(f"{aid},{m!r}\n")
    return root
