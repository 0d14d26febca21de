"""Dataset preparation: metadata consolidation, country-name standardization,
country-directory restructuring, and stratified k-fold split generation.
"""

from __future__ import annotations

import csv
import logging
import shutil
import unicodedata
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path

from .kb import ClfClass, iso_table

logger = logging.getLogger(__name__)


class ImageSource(Enum):
    TRAFFICKCAM = "traffickcam"
    TRAVEL_WEBSITE = "travel_website"


@dataclass(frozen=True)
class ImageMeta:
    """Ground-truth record for one corpus image."""

    image_id: str
    hotel_id: str
    latitude: float
    longitude: float
    source: ImageSource
    country: str | None = None

    def __post_init__(self):
        if not (-90.0 <= self.latitude <= 90.0):
            raise ValueError(f"{self.image_id}: latitude out of range: {self.latitude}")
        if not (-180.0 <= self.longitude <= 180.0):
            raise ValueError(f"{self.image_id}: longitude out of range: {self.longitude}")


def merge_metadata(csv_paths: list[str | Path]) -> list[ImageMeta]:
    """Consolidate image and hotel CSVs into one record per image.

    Files with an ``image_id`` column are image tables (image_id, hotel_id,
    optional source); files without are hotel tables (hotel_id, latitude,
    longitude). Hotel coordinates are joined onto image rows via hotel_id.
    """
    image_rows: list[dict] = []
    hotels: dict[str, tuple[float, float]] = {}
    for path in csv_paths:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            cols = reader.fieldnames or []
            if "image_id" in cols:
                if "hotel_id" not in cols:
                    raise ValueError(f"{path}: image table missing hotel_id column")
                image_rows.extend(reader)
            elif "hotel_id" in cols:
                if not {"latitude", "longitude"} <= set(cols):
                    raise ValueError(f"{path}: hotel table missing latitude/longitude")
                for row in reader:
                    hotels[row["hotel_id"]] = (
                        float(row["latitude"]), float(row["longitude"])
                    )
            else:
                raise ValueError(f"{path}: no image_id or hotel_id column")

    merged: list[ImageMeta] = []
    seen: set[str] = set()
    for row in image_rows:
        image_id = row["image_id"]
        if image_id in seen:
            raise ValueError(f"duplicate image_id: {image_id}")
        seen.add(image_id)
        hotel_id = row["hotel_id"]
        if hotel_id not in hotels:
            raise ValueError(f"image {image_id}: unknown hotel_id {hotel_id}")
        lat, lon = hotels[hotel_id]
        merged.append(
            ImageMeta(
                image_id=image_id,
                hotel_id=hotel_id,
                latitude=lat,
                longitude=lon,
                source=ImageSource(row.get("source") or "traffickcam"),
                country=row.get("country") or None,
            )
        )
    return merged


def _fold_text(s: str) -> str:
    """Case- and diacritic-insensitive key."""
    decomposed = unicodedata.normalize("NFKD", s)
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    return " ".join(stripped.casefold().split())


@lru_cache(maxsize=1)
def _name_index() -> dict[str, str]:
    """folded name -> code; exact names take precedence over aliases."""
    index: dict[str, str] = {}
    table = iso_table()
    for attr in ("name", "official"):
        for code in sorted(table):
            key = _fold_text(table[code][attr])
            index.setdefault(key, code)
    for code in sorted(table):
        for alias in table[code].get("aliases", []):
            index.setdefault(_fold_text(alias), code)
    for code in sorted(table):
        index.setdefault(code.casefold(), code)
    return index


def standardize_name(raw: str) -> str:
    """Resolve a country name (any supported spelling) to its alpha-2 code."""
    if not raw or not raw.strip():
        raise ValueError("empty country name")
    code = _name_index().get(_fold_text(raw))
    if code is None:
        raise ValueError(f"unresolvable country name: {raw!r}")
    return code


def country_display_name(code: str) -> str:
    return iso_table()[code]["name"]


def sanitize_dirname(name: str) -> str:
    """Spaces to underscores, strip anything outside [A-Za-z0-9_-]; idempotent."""
    if not name:
        raise ValueError("empty name")
    cleaned = "".join(
        ch for ch in name.replace(" ", "_") if ch.isascii() and (ch.isalnum() or ch in "_-")
    )
    if not cleaned:
        raise ValueError(f"name sanitized to empty string: {name!r}")
    return cleaned


MANIFEST_FIELDS = ["image_id", "hotel_id", "lat", "lon", "country", "source", "relative_path"]


def restructure(
    records: list[ImageMeta], src_root: str | Path, out_root: str | Path
) -> list[dict]:
    """Copy images into out_root/<country dir>/ and write a manifest CSV.

    Every record must have a resolved country. Source files are looked up as
    src_root/<image_id>.<ext>. Per-file I/O failures are logged and the run
    continues; the manifest only lists files actually placed.
    """
    src_root, out_root = Path(src_root), Path(out_root)
    missing = [r.image_id for r in records if r.country is None]
    if missing:
        raise ValueError(f"records without resolved country: {missing[:5]}")
    out_root.mkdir(parents=True, exist_ok=True)
    manifest: list[dict] = []
    for r in sorted(records, key=lambda r: r.image_id):
        matches = sorted(src_root.glob(f"{r.image_id}.*"))
        dirname = sanitize_dirname(country_display_name(r.country))
        try:
            if not matches:
                raise FileNotFoundError(f"no source file for {r.image_id}")
            src = matches[0]
            dest_dir = out_root / dirname
            dest_dir.mkdir(parents=True, exist_ok=True)
            dest = dest_dir / src.name
            shutil.copyfile(src, dest)
        except OSError as e:
            logger.error("restructure: %s: %s", r.image_id, e)
            continue
        manifest.append(
            {
                "image_id": r.image_id,
                "hotel_id": r.hotel_id,
                "lat": repr(r.latitude),
                "lon": repr(r.longitude),
                "country": r.country,
                "source": r.source.value,
                "relative_path": f"{dirname}/{dest.name}",
            }
        )
    with open(out_root / "manifest.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=MANIFEST_FIELDS)
        writer.writeheader()
        writer.writerows(manifest)
    return manifest


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: dict[str, int]  # item_id -> fold index

    def fold_items(self, fold: int) -> list[str]:
        return sorted(i for i, f in self.assignment.items() if f == fold)

    def sizes(self) -> list[int]:
        sizes = [0] * self.k
        for f in self.assignment.values():
            sizes[f] += 1
        return sizes


def make_folds(
    items: list[tuple[str, ClfClass]], k: int, seed: int
) -> FoldAssignment:
    """Stratified, seeded k-fold partition.

    Items are shuffled within each class and dealt round-robin with a global
    cursor, so per-class and overall fold sizes each differ by at most one.
    """
    import random

    if k < 2:
        raise ValueError(f"k must be >= 2: {k}")
    if k > len(items):
        raise ValueError(f"k={k} exceeds item count {len(items)}")
    ids = [i for i, _ in items]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate item ids")
    by_class: dict[ClfClass, list[str]] = {}
    for item_id, cls in items:
        by_class.setdefault(cls, []).append(item_id)
    rng = random.Random(seed)
    assignment: dict[str, int] = {}
    cursor = 0
    for cls in sorted(by_class, key=lambda c: c.value):
        group = sorted(by_class[cls])
        if len(group) < k:
            logger.warning(
                "class %s has %d items (< k=%d); stratification relaxed",
                cls.value, len(group), k,
            )
        rng.shuffle(group)
        for item_id in group:
            assignment[item_id] = cursor % k
            cursor += 1
    return FoldAssignment(k=k, assignment=assignment)
