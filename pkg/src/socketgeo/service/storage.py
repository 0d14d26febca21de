"""Durable case persistence: embedded SQLite plus a content-addressed blob dir.

Findings are immutable once written; review overrides are append-only. Every
API response is derivable from (findings + overrides), so re-reading a case
later reproduces the original outputs. Writes to a case are serialized via a
per-case lock; reads open fresh connections and never block on writes (WAL).
"""

from __future__ import annotations

import hashlib
import json
import sqlite3
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from ..kb import ClfClass
from ..pipeline import FindingStatus, PipelineConfig, SocketFinding, finding_status

OVERRIDE_ACTIONS = ("MARK_NOISE", "SET_CLASS", "RESTORE")

_SCHEMA = """
CREATE TABLE IF NOT EXISTS cases (
    case_id TEXT PRIMARY KEY,
    title TEXT NOT NULL,
    created_at TEXT NOT NULL,
    config_json TEXT NOT NULL,
    kb_version TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS images (
    case_id TEXT NOT NULL,
    image_id TEXT NOT NULL,
    sha256 TEXT NOT NULL,
    job_id TEXT NOT NULL,
    status TEXT NOT NULL,
    error TEXT,
    PRIMARY KEY (case_id, image_id)
);
CREATE TABLE IF NOT EXISTS findings (
    case_id TEXT NOT NULL,
    finding_id TEXT NOT NULL,
    payload TEXT NOT NULL,
    PRIMARY KEY (case_id, finding_id)
);
CREATE TABLE IF NOT EXISTS audit (
    case_id TEXT NOT NULL,
    seq INTEGER NOT NULL,
    payload TEXT NOT NULL,
    PRIMARY KEY (case_id, seq)
);
CREATE TABLE IF NOT EXISTS overrides (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    case_id TEXT NOT NULL,
    finding_id TEXT NOT NULL,
    action TEXT NOT NULL,
    set_class TEXT,
    actor TEXT NOT NULL,
    at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS truth (
    case_id TEXT NOT NULL,
    image_id TEXT NOT NULL,
    country TEXT NOT NULL,
    PRIMARY KEY (case_id, image_id)
);
"""


@dataclass(frozen=True)
class Case:
    case_id: str
    title: str
    created_at: str
    config: PipelineConfig
    kb_version: str

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "title": self.title,
            "created_at": self.created_at,
            "config": self.config.to_dict(),
            "kb_version": self.kb_version,
        }


class NotFound(KeyError):
    pass


class CaseStore:
    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.blob_dir = self.data_dir / "blobs"
        self.blob_dir.mkdir(parents=True, exist_ok=True)
        self.db_path = self.data_dir / "cases.db"
        with self._connect() as conn:
            conn.executescript(_SCHEMA)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.db_path, timeout=30)
        conn.execute("PRAGMA journal_mode=WAL")
        conn.row_factory = sqlite3.Row
        return conn

    def case_lock(self, case_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(case_id, threading.Lock())

    # --- blobs ------------------------------------------------------------

    def put_blob(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.blob_dir / digest[:2] / digest
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            tmp.rename(path)
        return digest

    def get_blob(self, digest: str) -> bytes:
        path = self.blob_dir / digest[:2] / digest
        if not path.exists():
            raise NotFound(f"blob {digest}")
        return path.read_bytes()

    # --- cases ------------------------------------------------------------

    def create_case(self, title: str, config: PipelineConfig, kb_version: str) -> Case:
        case = Case(
            case_id=uuid.uuid4().hex,
            title=title,
            created_at=datetime.now(timezone.utc).isoformat(),
            config=config,
            kb_version=kb_version,
        )
        with self._connect() as conn:
            conn.execute(
                "INSERT INTO cases VALUES (?, ?, ?, ?, ?)",
                (case.case_id, case.title, case.created_at,
                 json.dumps(config.to_dict()), case.kb_version),
            )
        return case

    def get_case(self, case_id: str) -> Case:
        with self._connect() as conn:
            row = conn.execute("SELECT * FROM cases WHERE case_id = ?", (case_id,)).fetchone()
        if row is None:
            raise NotFound(f"case {case_id}")
        return Case(
            case_id=row["case_id"],
            title=row["title"],
            created_at=row["created_at"],
            config=PipelineConfig.from_dict(json.loads(row["config_json"])),
            kb_version=row["kb_version"],
        )

    # --- images and jobs --------------------------------------------------

    def register_image(self, case_id: str, data: bytes, job_id: str) -> tuple[str, bool]:
        """Store an image blob; returns (image_id, is_new). Idempotent on bytes."""
        digest = self.put_blob(data)
        image_id = digest[:16]
        with self.case_lock(case_id), self._connect() as conn:
            row = conn.execute(
                "SELECT status FROM images WHERE case_id = ? AND image_id = ?",
                (case_id, image_id),
            ).fetchone()
            if row is not None:
                return image_id, False
            conn.execute(
                "INSERT INTO images VALUES (?, ?, ?, ?, 'PENDING', NULL)",
                (case_id, image_id, digest, job_id),
            )
        return image_id, True

    def image_sha(self, case_id: str, image_id: str) -> str:
        with self._connect() as conn:
            row = conn.execute(
                "SELECT sha256 FROM images WHERE case_id = ? AND image_id = ?",
                (case_id, image_id),
            ).fetchone()
        if row is None:
            raise NotFound(f"image {image_id}")
        return row["sha256"]

    def set_image_status(self, case_id: str, image_id: str, status: str, error: str | None = None):
        with self.case_lock(case_id), self._connect() as conn:
            conn.execute(
                "UPDATE images SET status = ?, error = ? WHERE case_id = ? AND image_id = ?",
                (status, error, case_id, image_id),
            )

    def job_status(self, case_id: str, job_id: str) -> list[dict]:
        with self._connect() as conn:
            rows = conn.execute(
                "SELECT image_id, status, error FROM images "
                "WHERE case_id = ? AND job_id = ? ORDER BY image_id",
                (case_id, job_id),
            ).fetchall()
        return [dict(r) for r in rows]

    # --- findings / audit -------------------------------------------------

    def add_findings(self, case_id: str, findings: list[SocketFinding], audit: list[dict]):
        with self.case_lock(case_id), self._connect() as conn:
            for f in findings:
                conn.execute(
                    "INSERT OR IGNORE INTO findings VALUES (?, ?, ?)",
                    (case_id, f.finding_id, json.dumps(f.to_dict(), sort_keys=True)),
                )
            start = conn.execute(
                "SELECT COALESCE(MAX(seq), -1) + 1 FROM audit WHERE case_id = ?",
                (case_id,),
            ).fetchone()[0]
            for i, record in enumerate(audit):
                conn.execute(
                    "INSERT INTO audit VALUES (?, ?, ?)",
                    (case_id, start + i, json.dumps(record, sort_keys=True)),
                )

    def findings(self, case_id: str) -> list[SocketFinding]:
        with self._connect() as conn:
            rows = conn.execute(
                "SELECT payload FROM findings WHERE case_id = ? ORDER BY finding_id",
                (case_id,),
            ).fetchall()
        return [SocketFinding.from_dict(json.loads(r["payload"])) for r in rows]

    def audit_log(self, case_id: str) -> list[dict]:
        with self._connect() as conn:
            rows = conn.execute(
                "SELECT payload FROM audit WHERE case_id = ? ORDER BY seq", (case_id,)
            ).fetchall()
        return [json.loads(r["payload"]) for r in rows]

    # --- overrides --------------------------------------------------------

    def add_override(
        self, case_id: str, finding_id: str, action: str,
        set_class: str | None, actor: str,
    ) -> dict:
        if action not in OVERRIDE_ACTIONS:
            raise ValueError(f"unknown override action: {action}")
        if action == "SET_CLASS":
            ClfClass(set_class)  # validates
        elif set_class is not None:
            raise ValueError(f"set_class only valid with SET_CLASS, not {action}")
        at = datetime.now(timezone.utc).isoformat()
        with self.case_lock(case_id), self._connect() as conn:
            exists = conn.execute(
                "SELECT 1 FROM findings WHERE case_id = ? AND finding_id = ?",
                (case_id, finding_id),
            ).fetchone()
            if exists is None:
                raise NotFound(f"finding {finding_id}")
            conn.execute(
                "INSERT INTO overrides (case_id, finding_id, action, set_class, actor, at) "
                "VALUES (?, ?, ?, ?, ?, ?)",
                (case_id, finding_id, action, set_class, actor, at),
            )
        return {"finding_id": finding_id, "action": action, "set_class": set_class,
                "actor": actor, "at": at}

    def overrides(self, case_id: str) -> list[dict]:
        with self._connect() as conn:
            rows = conn.execute(
                "SELECT finding_id, action, set_class, actor, at FROM overrides "
                "WHERE case_id = ? ORDER BY id", (case_id,),
            ).fetchall()
        return [dict(r) for r in rows]

    # --- truth ------------------------------------------------------------

    def set_truth(self, case_id: str, truth: dict[str, str]):
        with self.case_lock(case_id), self._connect() as conn:
            for image_id, country in truth.items():
                conn.execute(
                    "INSERT OR REPLACE INTO truth VALUES (?, ?, ?)",
                    (case_id, image_id, country),
                )

    def truth(self, case_id: str) -> dict[str, str]:
        with self._connect() as conn:
            rows = conn.execute(
                "SELECT image_id, country FROM truth WHERE case_id = ?", (case_id,)
            ).fetchall()
        return {r["image_id"]: r["country"] for r in rows}


def effective_findings(
    findings: list[SocketFinding],
    overrides: list[dict],
    config: PipelineConfig,
) -> list[SocketFinding]:
    """Apply review overrides; latest override per finding wins.

    MARK_NOISE forces NOISE status (score 0, no candidate support); SET_CLASS
    repoints the top class and recomputes status at the case threshold;
    RESTORE reverts to the pipeline output.
    """
    latest: dict[str, dict] = {}
    for o in overrides:
        latest[o["finding_id"]] = o
    out: list[SocketFinding] = []
    for f in findings:
        o = latest.get(f.finding_id)
        if o is None or o["action"] == "RESTORE":
            out.append(f)
        elif o["action"] == "MARK_NOISE":
            out.append(
                SocketFinding(
                    finding_id=f.finding_id, image_id=f.image_id, bbox=f.bbox,
                    det_conf=f.det_conf, probs=f.probs,
                    top_class=ClfClass.NOISE, top_prob=f.top_prob,
                    status=FindingStatus.NOISE,
                )
            )
        else:  # SET_CLASS
            cls = ClfClass(o["set_class"])
            out.append(
                SocketFinding(
                    finding_id=f.finding_id, image_id=f.image_id, bbox=f.bbox,
                    det_conf=f.det_conf, probs=f.probs,
                    top_class=cls, top_prob=f.top_prob,
                    status=finding_status(cls, f.top_prob, config),
                )
            )
    return out
