"""Region polygons loaded from GeoJSON, in planar (lon, lat) coordinates."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

from ..errors import GeometryError

Ring = tuple[tuple[float, float], ...]
Polygon = tuple[Ring, ...]  # outer ring first, then holes

BUILTIN_PREFIX = "builtin:"


@dataclass(frozen=True)
class GeometrySet:
    regions: dict[str, tuple[Polygon, ...]]

    @property
    def names(self) -> list[str]:
        return list(self.regions)

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [x for polys in self.regions.values() for poly in polys for ring in poly for x, _ in ring]
        ys = [y for polys in self.regions.values() for poly in polys for ring in poly for _, y in ring]
        return min(xs), min(ys), max(xs), max(ys)

    def require(self, groups: Iterable[str]) -> None:
        """Abort unless every group has a region of exactly the same name."""
        unmatched = [g for g in groups if g not in self.regions]
        if unmatched:
            raise GeometryError(
                f"groups without geometry: {unmatched}; geometry regions are {self.names}"
            )

    @classmethod
    def from_geojson(cls, doc: dict, name_property: str = "name") -> GeometrySet:
        if doc.get("type") != "FeatureCollection":
            raise GeometryError("geometry must be a GeoJSON FeatureCollection")
        regions: dict[str, tuple[Polygon, ...]] = {}
        for feat in doc.get("features", []):
            name = (feat.get("properties") or {}).get(name_property)
            if name is None:
                raise GeometryError(f"feature without a {name_property!r} property")
            geom = feat.get("geometry") or {}
            if geom.get("type") == "Polygon":
                polys = [geom["coordinates"]]
            elif geom.get("type") == "MultiPolygon":
                polys = geom["coordinates"]
            else:
                raise GeometryError(f"region {name!r}: unsupported geometry type {geom.get('type')!r}")
            parsed = []
            for poly in polys:
                rings = []
                for ring in poly:
                    pts = tuple((float(p[0]), float(p[1])) for p in ring)
                    if len(pts) < 4 or pts[0] != pts[-1]:
                        raise GeometryError(f"region {name!r}: polygon ring is not closed")
                    rings.append(pts)
                parsed.append(tuple(rings))
            regions[str(name)] = regions.get(str(name), ()) + tuple(parsed)
        if not regions:
            raise GeometryError("geometry has no features")
        return cls(regions)


def load_geometry(path: str | Path, name_property: str = "name") -> GeometrySet:
    """Read a GeoJSON file; ``builtin:<name>`` selects a bundled geometry."""
    text = str(path)
    try:
        if text.startswith(BUILTIN_PREFIX):
            res = resources.files("facetaudit") / "data" / f"{text[len(BUILTIN_PREFIX):]}.geojson"
            doc = json.loads(res.read_text(encoding="utf-8"))
        else:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise GeometryError(f"cannot read geometry {path}: {exc}") from None
    return GeometrySet.from_geojson(doc, name_property)


def ring_area_centroid(ring: Ring) -> tuple[float, float, float]:
    """Signed shoelace area and centroid of a closed ring."""
    a = cx = cy = 0.0
    for (x0, y0), (x1, y1) in zip(ring, ring[1:]):
        cross = x0 * y1 - x1 * y0
        a += cross
        cx += (x0 + x1) * cross
        cy += (y0 + y1) * cross
    a *= 0.5
    if a == 0:
        xs, ys = zip(*ring)
        return 0.0, sum(xs) / len(xs), sum(ys) / len(ys)
    return a, cx / (6 * a), cy / (6 * a)
