"""Sightseeing-spot catalog: loading, keyword search, and geodesic distance.

The catalog replaces an external search service with a local JSON dataset so
results are reproducible. Search scores a spot per keyword: 3 when the keyword
occurs in the name, plus 2 when it occurs in a genre, plus 1 when it occurs in
the description. Ties break by spot id. Substring lookup is accelerated by a
character n-gram inverted index, which is the standard trick for Japanese text
where there are no word boundaries to tokenize on.
"""

from __future__ import annotations

import json
import math
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

EARTH_RADIUS_KM = 6371.0088

NAME_WEIGHT = 3
GENRE_WEIGHT = 2
DESCRIPTION_WEIGHT = 1

MAX_RESULTS = 3


class CatalogError(Exception):
    pass


class SchemaError(CatalogError):
    """A catalog row failed validation; message carries row/field diagnostics."""


class DuplicateId(CatalogError):
    pass


def normalize(text: str) -> str:
    """Width/case-fold a string for matching (NFKC, casefold, trimmed)."""
    return unicodedata.normalize("NFKC", text).casefold().strip()


@dataclass(frozen=True)
class Spot:
    id: str
    name: str
    reading: str            # phonetic text, "｜" marks word breaks
    genres: frozenset[str]
    description: str
    image_ref: str
    lat: float
    lon: float


@dataclass
class SearchQuery:
    keywords: list[str]
    exclude_ids: set[str] = field(default_factory=set)

    def normalized_keywords(self) -> list[str]:
        seen: dict[str, None] = {}
        for kw in self.keywords:
            norm = normalize(kw)
            if norm:
                seen.setdefault(norm)
        return list(seen)


_REQUIRED_FIELDS = ("id", "name", "reading", "genres", "description", "image_ref", "lat", "lon")


def _grams(text: str) -> set[str]:
    """Character unigrams and bigrams of a normalized string."""
    out = set(text)
    out.update(text[i : i + 2] for i in range(len(text) - 1))
    return out


class Catalog:
    """Immutable after construction; safe to share across threads."""

    def __init__(self, spots: list[Spot]):
        self._spots = {s.id: s for s in spots}
        self._fields: dict[str, tuple[str, list[str], str]] = {}
        self._index: dict[str, set[str]] = {}
        for spot in spots:
            name = normalize(spot.name)
            genres = [normalize(g) for g in sorted(spot.genres)]
            desc = normalize(spot.description)
            self._fields[spot.id] = (name, genres, desc)
            for text in (name, desc, *genres):
                for gram in _grams(text):
                    self._index.setdefault(gram, set()).add(spot.id)

    def __len__(self) -> int:
        return len(self._spots)

    def __iter__(self):
        return iter(self.spots())

    def spots(self) -> list[Spot]:
        return sorted(self._spots.values(), key=lambda s: s.id)

    def get(self, spot_id: str) -> Spot:
        return self._spots[spot_id]

    def __contains__(self, spot_id: str) -> bool:
        return spot_id in self._spots

    def _candidates_for(self, keyword: str) -> set[str]:
        """Spot ids whose indexed grams could contain the keyword."""
        grams = _grams(keyword) if len(keyword) <= 2 else {
            keyword[i : i + 2] for i in range(len(keyword) - 1)
        }
        ids: set[str] | None = None
        for gram in grams:
            posting = self._index.get(gram, set())
            ids = posting.copy() if ids is None else ids & posting
            if not ids:
                return set()
        return ids or set()

    def score(self, spot_id: str, keywords: list[str]) -> int:
        """Weighted match count of normalized keywords against one spot."""
        name, genres, desc = self._fields[spot_id]
        total = 0
        for kw in keywords:
            if kw in name:
                total += NAME_WEIGHT
            if any(kw in g for g in genres):
                total += GENRE_WEIGHT
            if kw in desc:
                total += DESCRIPTION_WEIGHT
        return total

    def search(self, query: SearchQuery) -> list[Spot]:
        """Top 3 spots by weighted keyword score; deterministic ordering."""
        keywords = query.normalized_keywords()
        if not keywords:
            return []
        shortlist: set[str] = set()
        for kw in keywords:
            shortlist |= self._candidates_for(kw)
        shortlist -= query.exclude_ids
        scored = [
            (self.score(spot_id, keywords), spot_id)
            for spot_id in shortlist
        ]
        ranked = sorted(
            ((s, sid) for s, sid in scored if s > 0),
            key=lambda pair: (-pair[0], pair[1]),
        )
        return [self._spots[sid] for _, sid in ranked[:MAX_RESULTS]]


def search(catalog: Catalog, query: SearchQuery) -> list[Spot]:
    return catalog.search(query)


def load_catalog(source: str | Path) -> Catalog:
    """Load and validate a catalog JSON file (array of spot objects)."""
    path = Path(source)
    try:
        rows = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(rows, list):
        raise SchemaError(f"{path}: top-level value must be an array of spots")

    spots: list[Spot] = []
    seen_ids: set[str] = set()
    for i, row in enumerate(rows):
        spot = _parse_row(row, i)
        if spot.id in seen_ids:
            raise DuplicateId(f"row {i}: duplicate spot id {spot.id!r}")
        seen_ids.add(spot.id)
        spots.append(spot)
    return Catalog(spots)


def validate_catalog(source: str | Path) -> list[str]:
    """All schema findings for a catalog file; empty when clean."""
    path = Path(source)
    try:
        rows = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        return [f"{path}: {exc}"]
    except json.JSONDecodeError as exc:
        return [f"{path}: not valid JSON: {exc}"]
    if not isinstance(rows, list):
        return [f"{path}: top-level value must be an array of spots"]
    findings = []
    seen: set[str] = set()
    for i, row in enumerate(rows):
        try:
            spot = _parse_row(row, i)
        except SchemaError as exc:
            findings.append(str(exc))
            continue
        if spot.id in seen:
            findings.append(f"row {i}: duplicate spot id {spot.id!r}")
        seen.add(spot.id)
    return findings


def _parse_row(row: dict, index: int) -> Spot:
    if not isinstance(row, dict):
        raise SchemaError(f"row {index}: expected an object")
    missing = [f for f in _REQUIRED_FIELDS if f not in row]
    if missing:
        raise SchemaError(f"row {index}: missing fields {missing}")

    def fail(field_name: str, why: str):
        raise SchemaError(f"row {index}, field {field_name!r}: {why}")

    for key in ("id", "name", "reading", "description", "image_ref"):
        if not isinstance(row[key], str):
            fail(key, "must be a string")
    if not row["id"]:
        fail("id", "must be non-empty")
    if not row["reading"].strip():
        fail("reading", "must be non-empty")
    genres = row["genres"]
    if not isinstance(genres, list) or not all(isinstance(g, str) for g in genres):
        fail("genres", "must be a list of strings")
    if not genres:
        fail("genres", "at least one genre required")
    try:
        lat = float(row["lat"])
        lon = float(row["lon"])
    except (TypeError, ValueError):
        fail("lat/lon", "must be numbers")
    if not -90.0 <= lat <= 90.0:
        fail("lat", f"latitude {lat} out of range [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        fail("lon", f"longitude {lon} out of range [-180, 180]")

    return Spot(
        id=row["id"],
        name=row["name"],
        reading=row["reading"],
        genres=frozenset(genres),
        description=row["description"],
        image_ref=row["image_ref"],
        lat=lat,
        lon=lon,
    )


def distance(a: Spot, b: Spot) -> float:
    """Great-circle distance in km between two spots (haversine)."""
    return haversine_km(a.lat, a.lon, b.lat, b.lon)


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))


def feasible(plan, threshold_km: float) -> bool:
    """True when the plan's inter-spot distance is within the threshold (inclusive)."""
    return plan.inter_spot_distance <= threshold_km
