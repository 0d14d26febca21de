"""Offline reverse geocoding: latitude/longitude -> ISO country code.

Uses bundled simplified (1:110m-class) admin-0 boundaries with even-odd
ray-cast containment. Points that fall outside every polygon (coastlines
simplified away, small islands) fall back to the nearest boundary within
0.1 degrees. Fully deterministic, no network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

COASTAL_FALLBACK_DEG = 0.1


@dataclass(frozen=True)
class CountryBoundaries:
    """Per-country rings in degree space (lon, lat), holes included.

    Even-odd containment makes hole handling implicit: a point inside an
    even number of a polygon's rings is outside it.
    """

    rings: dict[str, list[np.ndarray]]  # code -> list of (N, 2) closed rings
    source: str

    @property
    def codes(self) -> list[str]:
        return sorted(self.rings)


def load_boundaries(path: str | Path | None = None) -> CountryBoundaries:
    """Load boundaries from a GeoJSON FeatureCollection (default: bundled)."""
    if path is None:
        raw = resources.files("socketgeo.data").joinpath(
            "country_boundaries.geojson"
        ).read_text("utf-8")
    else:
        raw = Path(path).read_text("utf-8")
    doc = json.loads(raw)
    rings: dict[str, list[np.ndarray]] = {}
    for feat in doc["features"]:
        code = feat["properties"]["code"]
        geom = feat["geometry"]
        polys = [geom["coordinates"]] if geom["type"] == "Polygon" else geom["coordinates"]
        out = rings.setdefault(code, [])
        for poly in polys:
            for ring in poly:
                arr = np.asarray(ring, dtype=np.float64)
                if not np.array_equal(arr[0], arr[-1]):
                    raise ValueError(f"unclosed ring for {code}")
                out.append(arr)
    return CountryBoundaries(rings=rings, source=doc.get("source", str(path)))


@lru_cache(maxsize=1)
def default_boundaries() -> CountryBoundaries:
    return load_boundaries(None)


def _ray_crossings(ring: np.ndarray, lon: float, lat: float) -> int:
    """Number of times a +x ray from (lon, lat) crosses the ring's edges."""
    x0, y0 = ring[:-1, 0], ring[:-1, 1]
    x1, y1 = ring[1:, 0], ring[1:, 1]
    straddles = (y0 > lat) != (y1 > lat)
    if not straddles.any():
        return 0
    xs0, ys0, xs1, ys1 = x0[straddles], y0[straddles], x1[straddles], y1[straddles]
    x_at_lat = xs0 + (lat - ys0) / (ys1 - ys0) * (xs1 - xs0)
    return int((x_at_lat > lon).sum())


def _min_dist_deg(ring: np.ndarray, lon: float, lat: float) -> float:
    """Minimum degree-space distance from a point to the ring's segments."""
    a = ring[:-1]
    b = ring[1:]
    ab = b - a
    p = np.array([lon, lat])
    denom = (ab * ab).sum(axis=1)
    denom[denom == 0] = 1.0
    t = np.clip(((p - a) * ab).sum(axis=1) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    d = np.hypot(proj[:, 0] - lon, proj[:, 1] - lat)
    return float(d.min())


def resolve_country(
    boundaries: CountryBoundaries, lat: float, lon: float
) -> str | None:
    """Country containing the point, else nearest within 0.1 deg, else None."""
    if not (-90.0 <= lat <= 90.0):
        raise ValueError(f"latitude out of range: {lat}")
    if not (-180.0 <= lon <= 180.0):
        raise ValueError(f"longitude out of range: {lon}")
    for code in boundaries.codes:
        crossings = sum(
            _ray_crossings(ring, lon, lat) for ring in boundaries.rings[code]
        )
        if crossings % 2 == 1:
            return code
    best_code, best_d = None, COASTAL_FALLBACK_DEG
    for code in boundaries.codes:
        for ring in boundaries.rings[code]:
            # Cheap bounding-box reject before the segment scan.
            if (
                lon < ring[:, 0].min() - COASTAL_FALLBACK_DEG
                or lon > ring[:, 0].max() + COASTAL_FALLBACK_DEG
                or lat < ring[:, 1].min() - COASTAL_FALLBACK_DEG
                or lat > ring[:, 1].max() + COASTAL_FALLBACK_DEG
            ):
                continue
            d = _min_dist_deg(ring, lon, lat)
            if d <= best_d and (best_code is None or d < best_d or code < best_code):
                best_code, best_d = code, d
    return best_code
