"""Route-topology features computed from a :class:`~ridecast.ingest.RouteProfile`.

All distance-weighted quantities work on grid *steps*: a profile with ``n``
points has ``n - 1`` steps of equal length, step ``i`` running from
``distance[i]`` to ``distance[i + 1]`` with grade ``gradient[i]`` and heading
``bearing[i]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InsufficientData, NonPositiveInput, RouteTooShort
from .ingest import RouteProfile

CLIMB_MIN_GRADIENT = 3.0
CLIMB_MIN_LENGTH_M = 500.0
CLIMB_MIN_SCORE = 1500.0
CLIMB_MERGE_GAP_M = 100.0
RECOVERY_WINDOW_M = 500.0
RECOVERY_MAX_GRADIENT = 2.0
TECH_DESCENT_GRADIENT = -5.0
SHARP_TURN_DEG = 45.0
SUSTAINED_WINDOW_M = 500.0

# lower bounds, checked in order
CATEGORY_THRESHOLDS = (
    ("HC", 80_000.0),
    ("Cat1", 64_000.0),
    ("Cat2", 32_000.0),
    ("Cat3", 16_000.0),
    ("Cat4", 8_000.0),
)

# half-open [lo, hi); "negative" is g < 0
GRADIENT_BUCKETS = (
    ("pct_slope_negative", -math.inf, 0.0),
    ("pct_slope_0_2", 0.0, 2.0),
    ("pct_slope_2_4", 2.0, 4.0),
    ("pct_slope_4_6", 4.0, 6.0),
    ("pct_slope_6_10", 6.0, 10.0),
    ("pct_slope_10_plus", 10.0, math.inf),
)
ABOVE_THRESHOLDS = (5.0, 8.0, 10.0)


class Category(str, Enum):
    HC = "HC"
    CAT1 = "Cat1"
    CAT2 = "Cat2"
    CAT3 = "Cat3"
    CAT4 = "Cat4"
    UNCATEGORIZED = "Uncategorized"


@dataclass(frozen=True)
class Climb:
    start_m: float
    end_m: float
    length: float
    avg_gradient: float
    score: float
    tdf_score: float
    category: Category
    start_index: int  # first step
    end_index: int  # last step, inclusive


# Every name emitted by extract_topology, in canonical order.
TOPOLOGY_FIELDS: tuple[str, ...] = (
    "total_distance",
    "total_ascent",
    "total_descent",
    "elevation_min",
    "elevation_max",
    "elevation_avg",
    "elevation_gain_per_km",
    "punchiness_score",
    "gradient_std",
    "gradient_cv",
    "num_climbs",
    "num_hc",
    "num_cat1",
    "num_cat2",
    "num_cat3",
    "num_cat4",
    "num_uncategorized",
    "total_climb_score",
    "max_climb_score",
    "total_tdf_score",
    "max_tdf_score",
    "climb_density",
    "avg_climb_gradient",
    "avg_climb_length",
    "max_climb_length",
    "total_climb_length",
    *(name for name, _, _ in GRADIENT_BUCKETS),
    "pct_above_5",
    "pct_above_8",
    "pct_above_10",
    "num_sharp_turns",
    "turn_density",
    "recovery_distance",
    "technical_descent",
    "max_sustained_gradient",
    "max_sustained_gradient_location",
    "longest_climb_distance",
    "ascent_first_third",
    "ascent_second_third",
    "ascent_final_third",
)

# The 27 topology inputs used for modelling. Dropped from TOPOLOGY_FIELDS:
# per-category counts and TdF scores (sparse, summarised by the climb
# scores), exact or near duplicates of kept columns (max_climb_length ==
# longest_climb_distance, pct_slope_negative is the complement of the other
# buckets, pct_above_10 ~ pct_slope_10_plus, turn_density), absolute
# elevation extremes, the location of the steepest window and the
# ascent-by-third fractions.
TOPOLOGY_MODEL_FEATURES: tuple[str, ...] = (
    "total_distance",
    "total_ascent",
    "total_descent",
    "elevation_avg",
    "elevation_gain_per_km",
    "punchiness_score",
    "gradient_std",
    "gradient_cv",
    "num_climbs",
    "total_climb_score",
    "max_climb_score",
    "climb_density",
    "avg_climb_gradient",
    "avg_climb_length",
    "total_climb_length",
    "pct_slope_0_2",
    "pct_slope_2_4",
    "pct_slope_4_6",
    "pct_slope_6_10",
    "pct_slope_10_plus",
    "pct_above_5",
    "pct_above_8",
    "num_sharp_turns",
    "recovery_distance",
    "technical_descent",
    "max_sustained_gradient",
    "longest_climb_distance",
)


def _steps(profile: RouteProfile) -> np.ndarray:
    return profile.gradient[:-1]


def score_and_categorize(d: float, g: float) -> tuple[float, Category]:
    """Climb score ``d * g`` and its category.

    Args:
        d: climb length in meters.
        g: average gradient in percent (8 for 8%).

    Returns:
        ``(score, category)``; scores under 8,000 are ``Uncategorized``.
    """
    if not d > 0 or not g > 0:
        raise NonPositiveInput(f"length and gradient must be positive, got d={d}, g={g}")
    score = d * g
    for name, lo in CATEGORY_THRESHOLDS:
        if score >= lo:
            return score, Category(name)
    return score, Category.UNCATEGORIZED


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (start, end) index pairs of True runs."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def _make_climb(profile: RouteProfile, i: int, j: int) -> Climb | None:
    step = profile.step
    length = (j - i + 1) * step
    rise = profile.altitude[j + 1] - profile.altitude[i]
    g = 100.0 * rise / length
    if length < CLIMB_MIN_LENGTH_M - 1e-9 or g < CLIMB_MIN_GRADIENT:
        return None
    score, cat = score_and_categorize(length, g)
    if score <= CLIMB_MIN_SCORE:
        return None
    return Climb(
        start_m=float(profile.distance[i]),
        end_m=float(profile.distance[j + 1]),
        length=float(length),
        avg_gradient=float(g),
        score=float(score),
        tdf_score=float(g * g * length),
        category=cat,
        start_index=i,
        end_index=j,
    )


def detect_climbs(profile: RouteProfile) -> list[Climb]:
    """Find climbs: steps graded >= 3% joined into segments of >= 500 m.

    Runs of qualifying steps separated by less than 100 m of shallower grade
    are chained together first. A chain whose overall gradient falls under 3%
    is split back into its runs, which are then judged on their own.
    Survivors must also score above 1,500.
    """
    if len(profile) < 2:
        return []
    g = _steps(profile)
    runs = _runs(g >= CLIMB_MIN_GRADIENT)
    if not runs:
        return []
    step = profile.step

    chains: list[list[tuple[int, int]]] = [[runs[0]]]
    for run in runs[1:]:
        gap = (run[0] - chains[-1][-1][1] - 1) * step
        if gap < CLIMB_MERGE_GAP_M - 1e-9:
            chains[-1].append(run)
        else:
            chains.append([run])

    climbs = []
    for chain in chains:
        whole = _make_climb(profile, chain[0][0], chain[-1][1])
        if whole is not None:
            climbs.append(whole)
            continue
        i, j = chain[0][0], chain[-1][1]
        rise = profile.altitude[j + 1] - profile.altitude[i]
        if len(chain) > 1 and 100.0 * rise / ((j - i + 1) * step) < CLIMB_MIN_GRADIENT:
            for a, b in chain:
                c = _make_climb(profile, a, b)
                if c is not None:
                    climbs.append(c)
    return climbs


def punchiness(profile: RouteProfile) -> float:
    """Population standard deviation of ``|g[t+1] - g[t]|`` over the steps."""
    if len(profile) < 3:
        raise InsufficientData("punchiness needs at least 3 grid points")
    dg = np.abs(np.diff(_steps(profile)))
    return float(np.std(dg))


def gradient_distribution(profile: RouteProfile) -> dict[str, float]:
    """Share of route distance per gradient bucket plus ``pct_above_*`` shares."""
    g = _steps(profile)
    n = g.size
    out = {}
    for name, lo, hi in GRADIENT_BUCKETS:
        out[name] = float(np.count_nonzero((g >= lo) & (g < hi)) / n)
    for x in ABOVE_THRESHOLDS:
        out[f"pct_above_{x:g}"] = float(np.count_nonzero(g > x) / n)
    return out


def recovery_distance(profile: RouteProfile, climbs: list[Climb]) -> float:
    """Meters of near-flat (|g| < 2%) road within 500 m after a climb ends.

    Only climbs averaging strictly more than 3% open a window; steps covered
    by overlapping windows are counted once.
    """
    g = _steps(profile)
    starts = profile.distance[:-1]
    window = np.zeros(g.size, dtype=bool)
    for c in climbs:
        if c.avg_gradient > CLIMB_MIN_GRADIENT:
            window |= (starts >= c.end_m - 1e-9) & (starts < c.end_m + RECOVERY_WINDOW_M - 1e-9)
    return float(np.count_nonzero(window & (np.abs(g) < RECOVERY_MAX_GRADIENT)) * profile.step)


def bearing_change(profile: RouteProfile) -> np.ndarray:
    """Wrapped heading change between consecutive steps, in degrees.

    Entry ``t`` compares step ``t + 1`` with step ``t``; the final step has no
    successor and gets 0, so the result has one entry per step.
    """
    b = profile.bearing[:-1]
    d = np.abs(np.diff(b))
    d = np.minimum(d, 360.0 - d)
    return np.append(d, 0.0)


def technical_descent(profile: RouteProfile) -> float:
    """Meters where grade is below -5% and heading swings by more than 45 degrees."""
    g = _steps(profile)
    hit = (g < TECH_DESCENT_GRADIENT) & (bearing_change(profile) > SHARP_TURN_DEG)
    return float(np.count_nonzero(hit) * profile.step)


def sharp_turns(profile: RouteProfile) -> tuple[int, float]:
    """Count of sharp turns and turns per km.

    Consecutive steps above the 45 degree threshold form one turn.
    """
    count = len(_runs(bearing_change(profile) > SHARP_TURN_DEG))
    km = profile.total_distance / 1000.0
    return count, (count / km if km > 0 else 0.0)


TIE_TOL = 1e-9  # percent; rolling means this close count as tied


def max_sustained_gradient(profile: RouteProfile, window: float = SUSTAINED_WINDOW_M) -> tuple[float, float]:
    """Steepest rolling-mean gradient over ``window`` meters and where it starts.

    Ties go to the earliest window.
    """
    k = int(round(window / profile.step))
    n_steps = len(profile) - 1
    if k < 1 or n_steps < k:
        raise RouteTooShort(f"route of {profile.total_distance:.0f} m is shorter than the {window:.0f} m window")
    # the mean of k step grades is the net rise over the window
    alt = profile.altitude
    means = 100.0 * (alt[k:] - alt[:-k]) / (k * profile.step)
    i = int(np.argmax(means >= means.max() - TIE_TOL))
    return float(means[i]), float(profile.distance[i])


def ascent_by_third(profile: RouteProfile) -> tuple[float, float, float]:
    """Share of total ascent gained in each distance third (zeros when flat)."""
    dh = np.diff(profile.altitude)
    up = np.maximum(dh, 0.0)
    total = up.sum()
    if total <= 0:
        return 0.0, 0.0, 0.0
    starts = profile.distance[:-1]
    third = np.minimum((starts * 3.0 / profile.total_distance).astype(int), 2)
    shares = np.bincount(third, weights=up, minlength=3) / total
    return float(shares[0]), float(shares[1]), float(shares[2])


def extract_topology(profile: RouteProfile) -> dict[str, float]:
    """Compute every topology feature, keyed and ordered as ``TOPOLOGY_FIELDS``.

    ``gradient_cv`` is NaN when the mean gradient is (numerically) zero.
    ``max_sustained_gradient`` and its location are NaN on routes shorter
    than 500 m.
    """
    alt = profile.altitude
    dh = np.diff(alt)
    g = _steps(profile)
    km = profile.total_distance / 1000.0
    ascent = float(np.sum(np.maximum(dh, 0.0)))
    descent = float(np.sum(np.maximum(-dh, 0.0)))

    f: dict[str, float] = {
        "total_distance": km,
        "total_ascent": ascent,
        "total_descent": descent,
        "elevation_min": float(alt.min()),
        "elevation_max": float(alt.max()),
        "elevation_avg": float(alt.mean()),
        "elevation_gain_per_km": ascent / km,
        "punchiness_score": punchiness(profile) if len(profile) >= 3 else 0.0,
    }
    sd = float(np.std(g))
    mean_g = float(np.mean(g))
    f["gradient_std"] = sd
    f["gradient_cv"] = sd / abs(mean_g) if abs(mean_g) >= 1e-9 else math.nan

    climbs = detect_climbs(profile)
    counts = {c: 0 for c in Category}
    for c in climbs:
        counts[c.category] += 1
    lengths = np.array([c.length for c in climbs])
    f["num_climbs"] = float(len(climbs))
    f["num_hc"] = float(counts[Category.HC])
    f["num_cat1"] = float(counts[Category.CAT1])
    f["num_cat2"] = float(counts[Category.CAT2])
    f["num_cat3"] = float(counts[Category.CAT3])
    f["num_cat4"] = float(counts[Category.CAT4])
    f["num_uncategorized"] = float(counts[Category.UNCATEGORIZED])
    f["total_climb_score"] = float(sum(c.score for c in climbs))
    f["max_climb_score"] = max((c.score for c in climbs), default=0.0)
    f["total_tdf_score"] = float(sum(c.tdf_score for c in climbs))
    f["max_tdf_score"] = max((c.tdf_score for c in climbs), default=0.0)
    f["climb_density"] = len(climbs) / km
    if climbs:
        f["avg_climb_gradient"] = float(sum(c.avg_gradient * c.length for c in climbs) / lengths.sum())
        f["avg_climb_length"] = float(lengths.mean())
        f["max_climb_length"] = float(lengths.max())
        f["total_climb_length"] = float(lengths.sum())
    else:
        f["avg_climb_gradient"] = f["avg_climb_length"] = 0.0
        f["max_climb_length"] = f["total_climb_length"] = 0.0

    f.update(gradient_distribution(profile))
    n_turns, density = sharp_turns(profile)
    f["num_sharp_turns"] = float(n_turns)
    f["turn_density"] = density
    f["recovery_distance"] = recovery_distance(profile, climbs)
    f["technical_descent"] = technical_descent(profile)
    try:
        msg, loc = max_sustained_gradient(profile)
    except RouteTooShort:
        msg, loc = math.nan, math.nan
    f["max_sustained_gradient"] = msg
    f["max_sustained_gradient_location"] = loc
    f["longest_climb_distance"] = f["max_climb_length"]
    thirds = ascent_by_third(profile)
    f["ascent_first_third"], f["ascent_second_third"], f["ascent_final_third"] = thirds
    return {name: f[name] for name in TOPOLOGY_FIELDS}
