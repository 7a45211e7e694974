"""Training-load state: TSS, CTL/ATL/TSB, ramp rate and rolling zone hours.

Every state feature for a ride on day ``t`` is computed from days strictly
before ``t``. Loads recorded on the ride's own day (including the ride
itself) or later never reach its features.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DuplicateDay, MalformedFile, NonPositiveFTP, SeriesTooShort, UnknownZone

CTL_DAYS = 42
ATL_DAYS = 7
RAMP_DAYS = 7
NP_WINDOW_S = 30
WINDOWS = (7, 14, 30, 60)
CHANNELS = ("power", "hr")

FITNESS_FEATURES = ("ctl", "atl", "tsb", "ramp_rate")


@dataclass(frozen=True)
class ZoneConfig:
    """Zone boundaries as fractions of FTP (power) and max HR (heart rate).

    ``power_bounds`` holds the 6 interior boundaries of zones Z0-Z6 and
    ``hr_bounds`` the 4 of Z0-Z4. A sample equal to a boundary falls in the
    upper zone.
    """

    ftp: float = 250.0
    max_hr: float = 190.0
    power_bounds: tuple[float, ...] = (0.55, 0.75, 0.90, 1.05, 1.20, 1.50)
    hr_bounds: tuple[float, ...] = (0.60, 0.70, 0.80, 0.90)

    def __post_init__(self):
        if self.ftp <= 0:
            raise NonPositiveFTP("ftp must be positive")
        if self.max_hr <= 0:
            raise ValueError("max_hr must be positive")
        for name, bounds, count in (("power_bounds", self.power_bounds, 6), ("hr_bounds", self.hr_bounds, 4)):
            if len(bounds) != count:
                raise ValueError(f"{name} needs {count} boundaries, got {len(bounds)}")
            if any(b >= a for a, b in zip(bounds[1:], bounds[:-1])):
                raise ValueError(f"{name} must be strictly increasing")

    def n_zones(self, channel: str) -> int:
        if channel == "power":
            return len(self.power_bounds) + 1
        if channel == "hr":
            return len(self.hr_bounds) + 1
        raise UnknownZone(f"unknown channel {channel!r}")

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "ZoneConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        kwargs = {k: raw[k] for k in ("ftp", "max_hr") if k in raw}
        for k in ("power_bounds", "hr_bounds"):
            if k in raw:
                kwargs[k] = tuple(float(x) for x in raw[k])
        return cls(**kwargs)

    def to_json(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {"ftp": self.ftp, "max_hr": self.max_hr,
                 "power_bounds": list(self.power_bounds), "hr_bounds": list(self.hr_bounds)},
                fh, indent=2,
            )


@dataclass
class DailyLoad:
    date: date
    tss: float = 0.0
    zone_seconds: dict[tuple[str, int], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.tss < 0:
            raise ValueError(f"{self.date}: negative TSS")
        for ch in CHANNELS:
            total = sum(v for (c, _), v in self.zone_seconds.items() if c == ch)
            if total > 86_400:
                raise ValueError(f"{self.date}: more than 86,400 s in {ch} zones")


@dataclass(frozen=True)
class FitnessState:
    date: date
    ctl: float
    atl: float
    tsb: float
    ramp_rate: float


def normalized_power(power) -> float:
    """Fourth root of the mean fourth power of the 30 s rolling average."""
    p = np.asarray(power, dtype=float)
    if p.size < NP_WINDOW_S:
        raise SeriesTooShort(f"normalized power needs >= {NP_WINDOW_S} samples, got {p.size}")
    c = np.concatenate([[0.0], np.cumsum(p)])
    rolling = (c[NP_WINDOW_S:] - c[:-NP_WINDOW_S]) / NP_WINDOW_S
    return float(np.mean(rolling ** 4) ** 0.25)


def compute_tss(power, ftp: float) -> float:
    """Training Stress Score of a 1 Hz power series.

    TSS = duration_s * NP * IF / (FTP * 3600) * 100, with IF = NP / FTP.
    """
    if not ftp > 0:
        raise NonPositiveFTP("ftp must be positive")
    p = np.asarray(power, dtype=float)
    np_w = normalized_power(p)
    intensity = np_w / ftp
    return p.size * np_w * intensity / (ftp * 3600.0) * 100.0


def zone_seconds(samples, channel: str, zones: ZoneConfig) -> dict[tuple[str, int], float]:
    """Seconds per zone for a 1 Hz power or heart-rate series (NaNs skipped)."""
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if channel == "power":
        edges = np.asarray(zones.power_bounds) * zones.ftp
    elif channel == "hr":
        edges = np.asarray(zones.hr_bounds) * zones.max_hr
    else:
        raise UnknownZone(f"unknown channel {channel!r}")
    idx = np.searchsorted(edges, x, side="right")
    counts = np.bincount(idx, minlength=edges.size + 1)
    return {(channel, z): float(counts[z]) for z in range(edges.size + 1) if counts[z]}


def _check_sorted_unique(history: Sequence[DailyLoad]) -> None:
    for a, b in zip(history, history[1:]):
        if b.date == a.date:
            raise DuplicateDay(f"two load records for {a.date}")
        if b.date < a.date:
            raise ValueError("load history must be sorted by date")


def evolve_fitness(history: Sequence[DailyLoad]) -> list[FitnessState]:
    """Run the CTL/ATL recursion over every calendar day of ``history``.

    Days absent from ``history`` count as TSS 0. The state starts from zero
    before the first day; ``ramp_rate`` is CTL minus CTL seven days earlier
    and stays 0 for the first seven days.
    """
    if not history:
        return []
    _check_sorted_unique(history)
    start = history[0].date
    n_days = (history[-1].date - start).days + 1
    tss = np.zeros(n_days)
    for d in history:
        tss[(d.date - start).days] = d.tss
    ctl = atl = 0.0
    ctls = []
    out = []
    for i in range(n_days):
        ctl = ctl + (tss[i] - ctl) / CTL_DAYS
        atl = atl + (tss[i] - atl) / ATL_DAYS
        ctls.append(ctl)
        ramp = ctl - ctls[i - RAMP_DAYS] if i >= RAMP_DAYS else 0.0
        out.append(FitnessState(start + timedelta(days=i), ctl, atl, ctl - atl, ramp))
    return out


def fitness_before(history: Sequence[DailyLoad], t: date) -> dict[str, float]:
    """Fitness features at the start of day ``t`` (end of day ``t - 1``)."""
    past = [d for d in history if d.date < t]
    if not past:
        return dict.fromkeys(FITNESS_FEATURES, 0.0)
    states = evolve_fitness(past)
    last = states[-1]
    # carry the recursion through rest days between the last record and t
    ctl, atl = last.ctl, last.atl
    ctls = [s.ctl for s in states]
    for _ in range((t - last.date).days - 1):
        ctl -= ctl / CTL_DAYS
        atl -= atl / ATL_DAYS
        ctls.append(ctl)
    ramp = ctls[-1] - ctls[-1 - RAMP_DAYS] if len(ctls) > RAMP_DAYS else 0.0
    return {"ctl": ctl, "atl": atl, "tsb": ctl - atl, "ramp_rate": ramp}


def rolling_zone_hours(history: Sequence[DailyLoad], t: date, w: int, channel: str, z: int,
                       zones: ZoneConfig | None = None) -> float:
    """Hours in zone ``z`` over days ``t'`` with ``t - w < t' < t``."""
    zones = zones or ZoneConfig()
    if channel not in CHANNELS or not 0 <= z < zones.n_zones(channel):
        raise UnknownZone(f"no zone {z} for channel {channel!r}")
    lo = t - timedelta(days=w)
    total = sum(d.zone_seconds.get((channel, z), 0.0) for d in history if lo < d.date < t)
    return total / 3600.0


def zone_feature_names(zones: ZoneConfig | None = None) -> list[str]:
    zones = zones or ZoneConfig()
    return [
        f"rolling_{w}d_{ch}_z{z}_hours"
        for ch in CHANNELS
        for w in WINDOWS
        for z in range(zones.n_zones(ch))
    ]


def state_feature_names(zones: ZoneConfig | None = None) -> list[str]:
    return list(FITNESS_FEATURES) + zone_feature_names(zones)


def build_state_features(history: Sequence[DailyLoad], t: date, zones: ZoneConfig | None = None) -> dict[str, float]:
    """Fitness plus rolling zone-hour features for a ride starting on day ``t``.

    Returns 52 features with the default zone layout: ``ctl``, ``atl``,
    ``tsb``, ``ramp_rate`` and ``rolling_{w}d_{channel}_z{z}_hours``.
    """
    zones = zones or ZoneConfig()
    _check_sorted_unique(history)
    feats = fitness_before(history, t)
    past = [d for d in history if d.date < t]
    for ch in CHANNELS:
        for w in WINDOWS:
            lo = t - timedelta(days=w)
            window = [d for d in past if d.date > lo]
            for z in range(zones.n_zones(ch)):
                secs = sum(d.zone_seconds.get((ch, z), 0.0) for d in window)
                feats[f"rolling_{w}d_{ch}_z{z}_hours"] = secs / 3600.0
    return {k: feats[k] for k in state_feature_names(zones)}


StateFn = Callable[[Sequence[DailyLoad], date, ZoneConfig | None], dict]


def merge_loads(loads: Iterable[DailyLoad]) -> list[DailyLoad]:
    """Sum loads that share a day; returns one sorted record per day."""
    by_day: dict[date, DailyLoad] = {}
    for d in loads:
        cur = by_day.get(d.date)
        if cur is None:
            by_day[d.date] = DailyLoad(d.date, d.tss, dict(d.zone_seconds))
        else:
            zs = dict(cur.zone_seconds)
            for k, v in d.zone_seconds.items():
                zs[k] = zs.get(k, 0.0) + v
            by_day[d.date] = DailyLoad(d.date, cur.tss + d.tss, zs)
    return [by_day[k] for k in sorted(by_day)]


def daily_loads_from_activities(records, zones: ZoneConfig) -> list[DailyLoad]:
    """Aggregate TSS and zone seconds of activity records per calendar day.

    Records without a usable power stream contribute zero TSS but still add
    heart-rate zone time when an HR stream is present.
    """
    loads = []
    for r in records:
        s = r.streams
        tss = 0.0
        zs: dict[tuple[str, int], float] = {}
        if s is not None and s.power is not None:
            p = np.nan_to_num(s.power, nan=0.0)
            if p.size >= NP_WINDOW_S:
                tss = compute_tss(p, zones.ftp)
            zs.update(zone_seconds(s.power, "power", zones))
        if s is not None and s.hr is not None:
            zs.update(zone_seconds(s.hr, "hr", zones))
        loads.append(DailyLoad(r.date, tss, zs))
    return merge_loads(loads)


def read_load_csv(path: str | os.PathLike) -> list[DailyLoad]:
    """Daily TSS file with columns ``date, tss``."""
    loads = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                loads.append(DailyLoad(date.fromisoformat(row["date"].strip()[:10]), float(row["tss"])))
            except (KeyError, ValueError) as exc:
                raise MalformedFile(f"{path}:{lineno}: {exc}") from exc
    return merge_loads(loads)


def read_zone_seconds_csv(path: str | os.PathLike) -> list[DailyLoad]:
    """Zone-time file with columns ``date, channel, zone, seconds``."""
    loads = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            try:
                ch = row["channel"].strip()
                if ch not in CHANNELS:
                    raise ValueError(f"unknown channel {ch!r}")
                key = (ch, int(row["zone"]))
                loads.append(DailyLoad(date.fromisoformat(row["date"].strip()[:10]), 0.0,
                                       {key: float(row["seconds"])}))
            except (KeyError, ValueError) as exc:
                raise MalformedFile(f"{path}:{lineno}: {exc}") from exc
    return merge_loads(loads)


def write_load_csv(history: Sequence[DailyLoad], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "tss"])
        for d in history:
            w.writerow([d.date.isoformat(), repr(float(d.tss))])


def write_zone_seconds_csv(history: Sequence[DailyLoad], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "channel", "zone", "seconds"])
        for d in history:
            for (ch, z), secs in sorted(d.zone_seconds.items()):
                w.writerow([d.date.isoformat(), ch, z, repr(float(secs))])


def cross_check(history: Sequence[DailyLoad], wellness, tol: float = 1.0) -> list[str]:
    """Compare imported wellness CTL/ATL with values computed from ``history``.

    Wellness values describe the start of their day, so they are matched with
    :func:`fitness_before`. Returns one message per day differing by more
    than ``tol``.
    """
    problems = []
    for rec in wellness:
        if rec.ctl is None and rec.atl is None:
            continue
        mine = fitness_before(history, rec.date)
        for key in ("ctl", "atl"):
            theirs = getattr(rec, key)
            if theirs is not None and abs(theirs - mine[key]) > tol:
                problems.append(f"{rec.date} {key}: imported {theirs:.1f}, computed {mine[key]:.1f}")
    return problems


def imported_fitness(wellness, t: date) -> dict[str, float] | None:
    """Fitness features taken from imported wellness rows for day ``t``."""
    by_day: Mapping[date, object] = {w.date: w for w in wellness}
    rec = by_day.get(t)
    if rec is None or rec.ctl is None or rec.atl is None:
        return None
    week = by_day.get(t - timedelta(days=RAMP_DAYS))
    ramp = rec.ctl - week.ctl if week is not None and week.ctl is not None else 0.0
    tsb = rec.tsb if rec.tsb is not None else rec.ctl - rec.atl
    return {"ctl": rec.ctl, "atl": rec.atl, "tsb": tsb, "ramp_rate": ramp}
