"""Planar geometry helpers: headings, bearings and the eight egocentric sectors.

Headings are degrees in [0, 360), measured clockwise with 0 pointing along +y.
"""
import math
from typing import Tuple

Point = Tuple[float, float]

SECTOR_NAMES: Tuple[str, ...] = (
    "Front",
    "Right Front",
    "Right Side",
    "Right Rear",
    "Behind",
    "Left Rear",
    "Left Side",
    "Left Front",
)


def normalize_heading(heading: float) -> float:
    h = math.fmod(heading, 360.0)
    if h < 0:
        h += 360.0
    # fmod of a tiny negative can round back up to 360
    return 0.0 if h >= 360.0 else h


def heading_vector(heading: float) -> Point:
    rad = math.radians(heading)
    return math.sin(rad), math.cos(rad)


def bearing(a: Point, b: Point) -> float:
    """Absolute heading pointing from a to b."""
    return normalize_heading(math.degrees(math.atan2(b[0] - a[0], b[1] - a[1])))


def distance(a: Point, b: Point) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])


def angular_gap(a: float, b: float) -> float:
    """Smallest absolute difference between two headings."""
    d = abs(normalize_heading(a) - normalize_heading(b))
    return min(d, 360.0 - d)


def sector_of(rel_heading: float) -> Tuple[int, str]:
    """Map a relative heading to its sector (1..8) and name.

    Sector k covers the half-open arc [(k-1)*45 - 22.5, (k-1)*45 + 22.5).
    """
    h = normalize_heading(rel_heading)
    k = int(normalize_heading(h + 22.5) // 45.0) + 1
    return k, SECTOR_NAMES[k - 1]
