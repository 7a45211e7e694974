"""Independent reference implementations used as test oracles.

Each oracle is written from the feature definitions with plain loops or
exhaustive enumeration and shares no code with the package.
"""

from __future__ import annotations

import math
from datetime import date, timedelta

import numpy as np

CATEGORY_TABLE = [("HC", 80000.0), ("Cat1", 64000.0), ("Cat2", 32000.0), ("Cat3", 16000.0), ("Cat4", 8000.0)]


def step_grades(altitude, step):
    return [100.0 * (altitude[i + 1] - altitude[i]) / step for i in range(len(altitude) - 1)]


def category_of(score):
    for name, lo in CATEGORY_TABLE:
        if score >= lo:
            return name
    return "Uncategorized"


# ---------------------------------------------------------------------------
# climbs by segment enumeration


def _longest_flat_stretch(g, i, j):
    """Longest run of sub-3% steps inside steps i..j inclusive."""
    best = cur = 0
    for t in range(i, j + 1):
        cur = cur + 1 if g[t] < 3.0 else 0
        best = max(best, cur)
    return best


def _judge(g, i, j, step):
    length = (j - i + 1) * step
    avg = sum(g[i:j + 1]) / (j - i + 1)
    if length >= 500.0 - 1e-9 and avg >= 3.0 and length * avg > 1500.0:
        return (i, j, length, avg, length * avg, category_of(length * avg))
    return None


def climbs_by_enumeration(altitude, step):
    """Climbs as (first_step, last_step, length, avg, score, category).

    Enumerates every (start, end) pair of qualifying steps, keeps the pairs
    that form a maximal chain (no internal flat stretch of 100 m or more,
    and a stretch of at least 100 m or the route edge on both sides), then
    judges each chain, falling back to its individual runs when the chain
    as a whole averages under 3%.
    """
    g = step_grades(altitude, step)
    n = len(g)
    gap_steps = 100.0 / step  # a gap counts as a break at >= 100 m
    q = [t for t in range(n) if g[t] >= 3.0]
    qs = set(q)

    def outside_gap_ok(i, j):
        before = 0
        t = i - 1
        while t >= 0 and t not in qs:
            before += 1
            t -= 1
        after = 0
        t = j + 1
        while t < n and t not in qs:
            after += 1
            t += 1
        left = q[0] < i
        right = q[-1] > j
        return (not left or before >= gap_steps - 1e-9) and (not right or after >= gap_steps - 1e-9)

    out = []
    for i in q:
        if i - 1 in qs:
            continue  # a chain starts at the start of a run
        for j in q:
            if j < i or j + 1 in qs:
                continue  # and ends at the end of a run
            if _longest_flat_stretch(g, i, j) >= gap_steps - 1e-9:
                break  # every longer span contains the same break
            if not outside_gap_ok(i, j):
                continue
            whole = _judge(g, i, j, step)
            if whole is not None:
                out.append(whole)
                continue
            runs = []
            t = i
            while t <= j:
                if g[t] >= 3.0:
                    s = t
                    while t + 1 <= j and g[t + 1] >= 3.0:
                        t += 1
                    runs.append((s, t))
                t += 1
            if len(runs) > 1 and sum(g[i:j + 1]) / (j - i + 1) < 3.0:
                for a, b in runs:
                    c = _judge(g, a, b, step)
                    if c is not None:
                        out.append(c)
    return sorted(out)


# ---------------------------------------------------------------------------
# direct-summation feature oracles


def punchiness_direct(altitude, step):
    g = step_grades(altitude, step)
    d = [abs(g[t + 1] - g[t]) for t in range(len(g) - 1)]
    m = sum(d) / len(d)
    return math.sqrt(sum((x - m) ** 2 for x in d) / len(d))


def buckets_direct(altitude, step):
    g = step_grades(altitude, step)
    names = ["pct_slope_negative", "pct_slope_0_2", "pct_slope_2_4", "pct_slope_4_6", "pct_slope_6_10",
             "pct_slope_10_plus"]
    counts = dict.fromkeys(names, 0)
    above = {5: 0, 8: 0, 10: 0}
    for x in g:
        if x < 0:
            counts["pct_slope_negative"] += 1
        elif x < 2:
            counts["pct_slope_0_2"] += 1
        elif x < 4:
            counts["pct_slope_2_4"] += 1
        elif x < 6:
            counts["pct_slope_4_6"] += 1
        elif x < 10:
            counts["pct_slope_6_10"] += 1
        else:
            counts["pct_slope_10_plus"] += 1
        for k in above:
            if x > k:
                above[k] += 1
    out = {k: v / len(g) for k, v in counts.items()}
    out.update({f"pct_above_{k}": v / len(g) for k, v in above.items()})
    return out


def recovery_direct(altitude, step, climb_ends_and_avgs):
    """Sum of step lengths starting in [end, end + 500) after a >3% climb, with |g| < 2."""
    g = step_grades(altitude, step)
    total = 0.0
    for t in range(len(g)):
        s = t * step
        inside = any(avg > 3.0 and end - 1e-9 <= s < end + 500.0 - 1e-9 for end, avg in climb_ends_and_avgs)
        if inside and abs(g[t]) < 2.0:
            total += step
    return total


def wrapped_change(b1, b2):
    d = abs(b2 - b1) % 360.0
    return min(d, 360.0 - d)


def technical_descent_direct(altitude, bearing, step):
    g = step_grades(altitude, step)
    total = 0.0
    for t in range(len(g)):
        dtheta = wrapped_change(bearing[t], bearing[t + 1]) if t + 1 < len(g) else 0.0
        if g[t] < -5.0 and dtheta > 45.0:
            total += step
    return total


def sharp_turns_direct(bearing, n_steps):
    count, inside = 0, False
    for t in range(n_steps - 1):
        hit = wrapped_change(bearing[t], bearing[t + 1]) > 45.0
        if hit and not inside:
            count += 1
        inside = hit
    return count


def max_sustained_direct(altitude, step, window=500.0):
    g = step_grades(altitude, step)
    k = int(round(window / step))
    best, where = -math.inf, None
    for i in range(len(g) - k + 1):
        m = sum(g[i:i + k]) / k
        if m > best + 1e-12:
            best, where = m, i * step
    return best, where


# ---------------------------------------------------------------------------
# training load


def ema_fitness(tss_by_day: dict, start: date, end: date):
    """CTL/ATL/TSB for each day from start to end, by the daily recursion."""
    ctl = atl = 0.0
    out = {}
    d = start
    while d <= end:
        x = tss_by_day.get(d, 0.0)
        ctl = ctl + (x - ctl) / 42.0
        atl = atl + (x - atl) / 7.0
        out[d] = (ctl, atl, ctl - atl)
        d += timedelta(days=1)
    return out


def zone_hours_direct(days: dict, t: date, w: int, key):
    """Hours in ``key`` summed over days strictly between t - w and t."""
    total = 0.0
    for d, zs in days.items():
        if (t - d).days > 0 and (t - d).days < w:
            total += zs.get(key, 0.0)
    return total / 3600.0


# ---------------------------------------------------------------------------
# regression


def orthonormal_design(rng, n, p):
    """Centered design with X.T @ X / n equal to the identity."""
    A = rng.normal(size=(n, p))
    A -= A.mean(axis=0)
    Q, _ = np.linalg.qr(A)
    return Q * math.sqrt(n)


def enet_orthonormal(X, y, alpha, l1_ratio):
    n = X.shape[0]
    z = X.T @ (y - y.mean()) / n
    t = alpha * l1_ratio
    return np.array([math.copysign(max(abs(v) - t, 0.0), v) for v in z]) / (1.0 + alpha * (1.0 - l1_ratio))


def ols_lstsq(X, y):
    A = np.column_stack([X, np.ones(X.shape[0])])
    sol, *_ = np.linalg.lstsq(A, y, rcond=None)
    return sol[:-1], sol[-1]
