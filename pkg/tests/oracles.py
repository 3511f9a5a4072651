"""Independent reference implementations used to verify the main code paths.

These deliberately avoid calling the functions they check: grouping and
fusion are recomputed from scratch with different data structures, and
line-of-sight is re-decided by dense point sampling.
"""

import math
from collections import defaultdict


def brute_force_global_map(detections, locations, delta):
    """Recompute the fused map by scanning every detection for every
    location. detections: (label, confidence, (x, y)); locations:
    (location_id, (x, y)). Returns {location_id: (label, confidence, pos)}."""
    result = {}
    for loc_id, loc_pos in locations:
        members = []
        for label, conf, pos in detections:
            dx = pos[0] - loc_pos[0]
            dy = pos[1] - loc_pos[1]
            if math.sqrt(dx * dx + dy * dy) <= delta:
                members.append((label, conf, pos))
        total = sum(c for _, c, _ in members)
        if not members or total == 0.0:
            result[loc_id] = (None, 0.0, None)
            continue
        mass = defaultdict(float)
        for label, conf, _ in members:
            mass[label] += conf
        best = sorted(mass.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
        conf = sum(c * c for _, c, _ in members) / total
        mean_x = sum(p[0] for _, _, p in members) / len(members)
        mean_y = sum(p[1] for _, _, p in members) / len(members)
        result[loc_id] = (best, conf, (mean_x, mean_y))
    return result


def sampled_segments_touch(p1, p2, p3, p4, samples=2001, tol=None):
    """Dense-sampling intersection check: do the segments come within tol
    of each other anywhere? Conclusive only away from grazing contact."""
    len_a = math.dist(p1, p2)
    len_b = math.dist(p3, p4)
    if tol is None:
        tol = 1.5 * max(len_a, len_b) / samples
    pts_a = [
        (p1[0] + (p2[0] - p1[0]) * i / (samples - 1), p1[1] + (p2[1] - p1[1]) * i / (samples - 1))
        for i in range(samples)
    ]
    best = math.inf
    for ax, ay in pts_a:
        d = _point_segment_distance(ax, ay, p3, p4)
        if d < best:
            best = d
            if best <= tol:
                return True, best
    return best <= tol, best


def _point_segment_distance(px, py, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / seg2))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def exact_segment_distance(p1, p2, p3, p4):
    """Minimum distance between two segments (0 iff they intersect)."""
    candidates = [
        _point_segment_distance(p1[0], p1[1], p3, p4),
        _point_segment_distance(p2[0], p2[1], p3, p4),
        _point_segment_distance(p3[0], p3[1], p1, p2),
        _point_segment_distance(p4[0], p4[1], p1, p2),
    ]
    if _proper_crossing(p1, p2, p3, p4):
        return 0.0
    return min(candidates)


def _proper_crossing(p1, p2, p3, p4):
    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        return (v > 0) - (v < 0)

    return (
        orient(p3, p4, p1) != orient(p3, p4, p2)
        and orient(p1, p2, p3) != orient(p1, p2, p4)
    )


def distance_from_width(width_px, size, gamma_deg):
    """Same formula as the decoder, evaluated directly."""
    return size / math.tan(math.radians(gamma_deg * width_px))


def quantization_bound(size, true_distance, gamma_deg):
    """Worst-case position displacement from half-pixel rounding of both the
    box width and the box center, derived by perturbing the decode formula.

    |pos' - pos| <= |d(w +- 0.5) - d(w)| + d(w - 0.5) * chord(gamma / 2)
    """
    w_exact = math.degrees(math.atan(size / true_distance)) / gamma_deg
    d_loose = distance_from_width(w_exact - 0.5, size, gamma_deg)
    d_exact = distance_from_width(w_exact, size, gamma_deg)
    distance_part = d_loose - d_exact
    chord = 2.0 * math.sin(math.radians(0.5 * gamma_deg) / 2.0)
    return distance_part + d_loose * chord + 1e-9
