"""Plug-type taxonomy and the type -> country knowledge base.

The knowledge base is the ground truth used by stage 3: each of the 12
visually distinct plug-socket types maps to the set of countries where that
type is in domestic use. Entries carry a free-text provenance note so every
(type, country) pair is auditable. The KB is immutable after load; revisions
ship as new versioned files.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path


class PlugType(enum.Enum):
    """The 12 visually distinct plug-socket classes.

    D/M and J/N are merged: the constituent pairs are not reliably
    distinguishable from imagery, so they exist only as the merged values.
    """

    A = "A"
    B = "B"
    C = "C"
    DM = "DM"
    E = "E"
    F = "F"
    G = "G"
    H = "H"
    I = "I"  # noqa: E741
    JN = "JN"
    K = "K"
    L = "L"


class ClfClass(enum.Enum):
    """Classifier output space: the 12 plug types plus NOISE.

    NOISE covers non-socket crops (switches, thermostats, low-quality
    regions) and never maps to any country.
    """

    A = "A"
    B = "B"
    C = "C"
    DM = "DM"
    E = "E"
    F = "F"
    G = "G"
    H = "H"
    I = "I"  # noqa: E741
    JN = "JN"
    K = "K"
    L = "L"
    NOISE = "NOISE"

    @property
    def plug_type(self) -> PlugType | None:
        """The corresponding PlugType, or None for NOISE."""
        if self is ClfClass.NOISE:
            return None
        return PlugType(self.value)


class DetClass(enum.IntEnum):
    """Stage-1 detection classes; numeric ids are part of the CSV interchange."""

    NA_SWITCHBOARD = 0
    SOCKET = 1


#: Country-set sizes of the shipped v1 knowledge base, keyed by plug type.
#: Merged classes carry the summed count of their constituents (DM = 12 + 9,
#: JN = 5 + 4).
KB_V1_CARDINALITIES: dict[PlugType, int] = {
    PlugType.A: 46,
    PlugType.B: 28,
    PlugType.C: 65,
    PlugType.DM: 21,
    PlugType.E: 24,
    PlugType.F: 35,
    PlugType.G: 32,
    PlugType.H: 1,
    PlugType.I: 11,
    PlugType.JN: 9,
    PlugType.K: 6,
    PlugType.L: 9,
}


class KBError(ValueError):
    """Raised when a KB file fails to parse or violates an invariant."""


@lru_cache(maxsize=1)
def iso_table() -> dict[str, dict]:
    """Bundled ISO 3166-1 alpha-2 table: code -> {name, official, aliases}."""
    raw = resources.files("socketgeo.data").joinpath("iso3166.json").read_text("utf-8")
    return json.loads(raw)["codes"]


def is_valid_country_code(code: str) -> bool:
    return code in iso_table()


@dataclass(frozen=True)
class KnowledgeBase:
    """Versioned plug type -> ordered country set mapping with provenance.

    Read-only after construction; safe for unrestricted concurrent reads.
    """

    version: str
    entries: dict[PlugType, tuple[str, ...]]
    provenance: dict[tuple[PlugType, str], str]
    notes: str = ""
    _inverse: dict[str, frozenset[PlugType]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        inverse: dict[str, set[PlugType]] = {}
        for t, countries in self.entries.items():
            for c in countries:
                inverse.setdefault(c, set()).add(t)
        object.__setattr__(
            self, "_inverse", {c: frozenset(ts) for c, ts in inverse.items()}
        )

    def countries_for(self, t: PlugType) -> frozenset[str]:
        """All countries using plug type ``t``; never empty."""
        return frozenset(self.entries[t])

    def is_valid_pair(self, t: ClfClass | PlugType, country: str) -> bool:
        """True iff ``t`` is a real plug type and ``country`` is in its entry.

        NOISE always yields False.
        """
        if isinstance(t, ClfClass):
            pt = t.plug_type
            if pt is None:
                return False
        else:
            pt = t
        return country in self.entries[pt]

    def types_for_country(self, country: str) -> frozenset[PlugType]:
        """Inverse index: all plug types whose entry contains ``country``."""
        return self._inverse.get(country, frozenset())

    def cardinalities(self) -> dict[PlugType, int]:
        return {t: len(cs) for t, cs in self.entries.items()}

    def to_json(self) -> str:
        """Canonical serialization: types A->L, countries lexicographic."""
        doc = {
            "version": self.version,
            "notes": self.notes,
            "entries": {
                t.value: [
                    {"country": c, "source": self.provenance.get((t, c), "")}
                    for c in sorted(self.entries[t])
                ]
                for t in PlugType
            },
        }
        return json.dumps(doc, indent=1, ensure_ascii=False) + "\n"


def _parse_kb(doc: dict) -> KnowledgeBase:
    if not isinstance(doc, dict) or "entries" not in doc or "version" not in doc:
        raise KBError("KB document must contain 'version' and 'entries'")
    raw_entries = doc["entries"]
    entries: dict[PlugType, tuple[str, ...]] = {}
    provenance: dict[tuple[PlugType, str], str] = {}
    for t in PlugType:
        if t.value not in raw_entries:
            raise KBError(f"missing entry: {t.value}")
        seen: list[str] = []
        for item in raw_entries[t.value]:
            code = item["country"]
            if not is_valid_country_code(code):
                raise KBError(f"unknown country code {code!r} under type {t.value}")
            if code in seen:
                raise KBError(f"duplicate country {code} under type {t.value}")
            seen.append(code)
            provenance[(t, code)] = item.get("source", "")
        if not seen:
            raise KBError(f"empty entry: {t.value}")
        entries[t] = tuple(sorted(seen))
    unknown = set(raw_entries) - {t.value for t in PlugType}
    if unknown:
        raise KBError(f"unknown plug types in KB file: {sorted(unknown)}")
    return KnowledgeBase(
        version=doc["version"],
        entries=entries,
        provenance=provenance,
        notes=doc.get("notes", ""),
    )


def load_kb(path: str | Path) -> KnowledgeBase:
    """Load and validate a KB file (UTF-8 JSON, see ``to_json`` for the shape)."""
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except OSError as e:
        raise KBError(f"cannot read KB file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise KBError(f"KB file {path} is not valid JSON: {e}") from e
    return _parse_kb(doc)


@lru_cache(maxsize=1)
def default_kb() -> KnowledgeBase:
    """The bundled v1 knowledge base."""
    raw = resources.files("socketgeo.data").joinpath("kb_v1.json").read_text("utf-8")
    return _parse_kb(json.loads(raw))


def check_v1_cardinalities(kb: KnowledgeBase) -> None:
    """Assert the v1 per-type country counts; raises KBError on mismatch."""
    actual = kb.cardinalities()
    for t, expected in KB_V1_CARDINALITIES.items():
        if actual[t] != expected:
            raise KBError(
                f"cardinality mismatch for {t.value}: expected {expected}, got {actual[t]}"
            )
