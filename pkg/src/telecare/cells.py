"""Cell-tower database: maps a GSM cell sighting to a named place.

The database is a CSV file with the exact header
``mcc,mnc,lac,ci,place_id,lat,lon,category`` where category is one of
home, clinic, outdoor, other. Lookup is exact-match on the four cell
identifiers; a cell not in the database resolves to unknown (``None``)
and the server carries the last known place forward.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .types import CellObservation

CATEGORIES = ("home", "clinic", "outdoor", "other")
CSV_HEADER = ["mcc", "mnc", "lac", "ci", "place_id", "lat", "lon", "category"]


class CellDbError(ValueError):
    """The cell CSV file is ill-formed."""


class DuplicateKey(CellDbError):
    pass


class ParseError(CellDbError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class BadCategory(CellDbError):
    pass


@dataclass(frozen=True)
class PlaceRecord:
    place_id: str
    lat: float
    lon: float
    category: str

    def __post_init__(self):
        if not -90 <= self.lat <= 90:
            raise ValueError(f"lat out of range: {self.lat}")
        if not -180 <= self.lon <= 180:
            raise ValueError(f"lon out of range: {self.lon}")
        if self.category not in CATEGORIES:
            raise BadCategory(f"category {self.category!r} not in {CATEGORIES}")

    def to_dict(self) -> dict:
        return {
            "place_id": self.place_id,
            "lat": self.lat,
            "lon": self.lon,
            "category": self.category,
        }


class CellDb:
    """Immutable after load; safe for shared read access."""

    def __init__(self, entries: dict[tuple[int, int, int, int], PlaceRecord]):
        self._entries = dict(entries)

    def __len__(self) -> int:
        return len(self._entries)

    def resolve(self, cell: CellObservation) -> PlaceRecord | None:
        """Exact-match lookup; ``None`` means the cell is unknown."""
        return self._entries.get((cell.mcc, cell.mnc, cell.lac, cell.ci))


def load_cell_db(path: str | Path) -> CellDb:
    """Parse a cell CSV into a CellDb.

    Raises ParseError with the offending line number, DuplicateKey when the
    same (mcc, mnc, lac, ci) appears twice, and BadCategory for a category
    outside the closed set.
    """
    entries: dict[tuple[int, int, int, int], PlaceRecord] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "empty file") from None
        if header != CSV_HEADER:
            raise ParseError(1, f"header must be {','.join(CSV_HEADER)}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ParseError(line_no, f"expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                key = (int(row[0]), int(row[1]), int(row[2]), int(row[3]))
                lat, lon = float(row[5]), float(row[6])
            except ValueError as exc:
                raise ParseError(line_no, str(exc)) from None
            category = row[7].strip()
            if category not in CATEGORIES:
                raise BadCategory(f"line {line_no}: category {category!r} not in {CATEGORIES}")
            if key in entries:
                raise DuplicateKey(f"line {line_no}: duplicate cell {key}")
            try:
                entries[key] = PlaceRecord(place_id=row[4], lat=lat, lon=lon, category=category)
            except BadCategory:
                raise
            except ValueError as exc:
                raise ParseError(line_no, str(exc)) from None
    if not entries:
        raise ParseError(2, "cell database has no rows")
    return CellDb(entries)
