"""Persistent experiment state: artifact index, curation store, job registry.

Everything lives under one workspace directory as JSON files rewritten
atomically (write-new-then-rename), so a crash can never leave a truncated
index. Mutations go through per-store locks: many readers, one writer.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .factorization import CURATION_STATUSES

__all__ = [
    "StoreError",
    "ArtifactEntry",
    "ArtifactStore",
    "CurationState",
    "JobRegistry",
]

ARTIFACT_KINDS = (
    "dataset",
    "checkpoint",
    "factorization",
    "encoder",
    "hypernet",
    "records",
    "report",
)


class StoreError(ValueError):
    pass


def _atomic_write_json(path: Path, payload) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2))
    os.replace(tmp, path)


@dataclass
class ArtifactEntry:
    artifact_id: str
    kind: str
    path: str
    created_at: float
    parent_ids: list[str] = field(default_factory=list)


class ArtifactStore:
    """Append-only index of artifacts with provenance edges.

    Parents must exist at registration time, which keeps the provenance
    graph acyclic by construction.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._index_path = self.root / "index.json"
        self._lock = threading.Lock()
        self._entries: dict[str, ArtifactEntry] = {}
        if self._index_path.exists():
            try:
                raw = json.loads(self._index_path.read_text())
            except json.JSONDecodeError as exc:
                raise StoreError(f"corrupt artifact index: {exc}") from exc
            for item in raw["artifacts"]:
                entry = ArtifactEntry(**item)
                self._entries[entry.artifact_id] = entry

    def register(self, kind: str, path: str | Path, parent_ids=()) -> str:
        if kind not in ARTIFACT_KINDS:
            raise StoreError(f"unknown artifact kind {kind!r}")
        parent_ids = [str(p) for p in parent_ids]
        with self._lock:
            missing = [p for p in parent_ids if p not in self._entries]
            if missing:
                raise StoreError(f"unknown parent artifacts: {missing}")
            artifact_id = f"{kind}-{len(self._entries):04d}"
            self._entries[artifact_id] = ArtifactEntry(
                artifact_id=artifact_id,
                kind=kind,
                path=str(path),
                created_at=time.time(),
                parent_ids=parent_ids,
            )
            self._save()
        return artifact_id

    def _save(self) -> None:
        _atomic_write_json(
            self._index_path,
            {"artifacts": [asdict(e) for e in self._entries.values()]},
        )

    def get(self, artifact_id: str) -> ArtifactEntry:
        try:
            return self._entries[artifact_id]
        except KeyError:
            raise StoreError(f"unknown artifact {artifact_id!r}") from None

    def entries(self) -> list[ArtifactEntry]:
        return list(self._entries.values())

    def latest(self, kind: str) -> ArtifactEntry | None:
        of_kind = [e for e in self._entries.values() if e.kind == kind]
        return max(of_kind, key=lambda e: e.created_at) if of_kind else None

    def walk_parents(self, artifact_id: str) -> list[ArtifactEntry]:
        """All ancestors of an artifact, nearest first."""
        seen: list[ArtifactEntry] = []
        queue = list(self.get(artifact_id).parent_ids)
        visited = set()
        while queue:
            pid = queue.pop(0)
            if pid in visited:
                continue
            visited.add(pid)
            entry = self.get(pid)
            seen.append(entry)
            queue.extend(entry.parent_ids)
        return seen


class CurationState:
    """Per-direction review decisions with an append-only change log.

    Identical repeated updates are no-ops. A direction may only be marked
    duplicate_of one that is currently relevant.
    """

    def __init__(self, path: str | Path, n_directions: int):
        self.path = Path(path)
        self.log_path = self.path.with_suffix(".log.jsonl")
        self.n_directions = n_directions
        self._lock = threading.Lock()
        if self.path.exists():
            self._state = {int(k): v for k, v in json.loads(self.path.read_text()).items()}
        else:
            self._state = {
                i: {
                    "index": i,
                    "status": "unreviewed",
                    "name": None,
                    "duplicate_of": None,
                    "notes": None,
                    "reviewed_at": None,
                }
                for i in range(n_directions)
            }
            self._save()

    def _save(self) -> None:
        _atomic_write_json(self.path, {str(k): v for k, v in self._state.items()})

    def get(self, index: int) -> dict:
        if index not in self._state:
            raise StoreError(f"unknown direction index {index}")
        return dict(self._state[index])

    def all(self) -> list[dict]:
        return [dict(self._state[i]) for i in sorted(self._state)]

    def relevant_indices(self) -> list[int]:
        return [i for i in sorted(self._state) if self._state[i]["status"] == "relevant"]

    def set(
        self,
        index: int,
        status: str,
        name: str | None = None,
        duplicate_of: int | None = None,
        notes: str | None = None,
    ) -> dict:
        if status not in CURATION_STATUSES:
            raise StoreError(f"unknown status {status!r}")
        if index not in self._state:
            raise StoreError(f"unknown direction index {index}")
        if status == "duplicate":
            if duplicate_of is None:
                raise StoreError("duplicate status requires duplicate_of")
            if duplicate_of not in self._state:
                raise StoreError(f"unknown duplicate_of index {duplicate_of}")
            if self._state[duplicate_of]["status"] != "relevant":
                raise StoreError(
                    f"duplicate_of must reference a relevant direction, "
                    f"but {duplicate_of} is {self._state[duplicate_of]['status']}"
                )
        elif duplicate_of is not None:
            raise StoreError("duplicate_of only valid with duplicate status")

        with self._lock:
            current = self._state[index]
            unchanged = (
                current["status"] == status
                and current["name"] == name
                and current["duplicate_of"] == duplicate_of
                and current["notes"] == notes
            )
            if unchanged:
                return dict(current)
            updated = {
                "index": index,
                "status": status,
                "name": name,
                "duplicate_of": duplicate_of,
                "notes": notes,
                "reviewed_at": time.time(),
            }
            self._state[index] = updated
            with self.log_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(updated) + "\n")
            self._save()
            return dict(updated)

    def log_length(self) -> int:
        if not self.log_path.exists():
            return 0
        return sum(1 for line in self.log_path.read_text().splitlines() if line.strip())


class JobRegistry:
    """Status board for long-running stages, polled over the API."""

    STATES = ("pending", "running", "done", "failed")

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._jobs: dict[str, dict] = {}
        if self.path.exists():
            self._jobs = json.loads(self.path.read_text())

    def update(self, job_id: str, state: str, message: str = "", progress: float = 0.0,
               artifact_id: str | None = None) -> dict:
        if state not in self.STATES:
            raise StoreError(f"unknown job state {state!r}")
        with self._lock:
            job = {
                "job_id": job_id,
                "state": state,
                "message": message,
                "progress": progress,
                "artifact_id": artifact_id,
                "updated_at": time.time(),
            }
            self._jobs[job_id] = job
            _atomic_write_json(self.path, self._jobs)
            return dict(job)

    def get(self, job_id: str) -> dict:
        try:
            return dict(self._jobs[job_id])
        except KeyError:
            raise StoreError(f"unknown job {job_id!r}") from None

    def all(self) -> list[dict]:
        return [dict(v) for v in self._jobs.values()]
