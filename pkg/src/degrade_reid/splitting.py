"""Identity-disjoint data splitting for closed-set retrieval evaluation.

Identities are first partitioned into seen/unseen groups, then each
identity's images are assigned roles: seen images become train+database or
query, unseen images become database-only or query. Unseen identities never
contribute training images, and every query identity keeps at least one
database image (closed set). A time-aware variant sends each identity's
earliest images to the database so queries strictly postdate their gallery.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError, ValidationError
from .pipeline import derive_subseed

ROLE_TRAIN_DB = "train_and_database"
ROLE_DB_ONLY = "database_only"
ROLE_QUERY = "query"
ROLES = (ROLE_TRAIN_DB, ROLE_DB_ONLY, ROLE_QUERY)

GROUP_SEEN = "seen"
GROUP_UNSEEN = "unseen"

MANIFEST_COLUMNS = ("image_id", "identity_id", "path", "timestamp", "clarity")


@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    identity_id: str
    path: str = ""
    timestamp: float | None = None
    clarity: int | None = None
    dataset: str | None = None

    def __post_init__(self):
        if not self.image_id or not self.identity_id:
            raise ParameterError("manifest record needs non-empty image_id and identity_id")
        if self.clarity is not None and self.clarity not in (1, 2, 3, 4):
            raise ParameterError(f"clarity={self.clarity!r} not in {{1,2,3,4}}")


@dataclass(frozen=True)
class SplitConfig:
    seed: int = 0
    unseen_id_fraction: float = 0.17
    query_fraction_seen: float = 0.20
    query_fraction_unseen: float = 0.24
    time_aware: bool = False
    image_seed: int | None = None  # defaults to seed; lets image-level reshuffles keep id groups

    def __post_init__(self):
        for name in ("unseen_id_fraction", "query_fraction_seen", "query_fraction_unseen"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise ParameterError(f"{name}={value!r} outside (0, 1)")


@dataclass
class SplitAssignment:
    role_of: dict = field(default_factory=dict)       # image_id -> role
    group_of: dict = field(default_factory=dict)      # identity_id -> seen/unseen
    warnings: list = field(default_factory=list)

    def images_with_role(self, role: str) -> list[str]:
        return sorted(i for i, r in self.role_of.items() if r == role)

    def database_image_ids(self) -> list[str]:
        return sorted(i for i, r in self.role_of.items() if r != ROLE_QUERY)


@dataclass
class ValidationReport:
    violations: list
    counts: dict

    @property
    def ok(self) -> bool:
        return not self.violations

    def render(self) -> str:
        lines = []
        header = f"{'group':<8} {'role':<20} {'images':>8} {'identities':>11}"
        lines.append(header)
        lines.append("-" * len(header))
        for group in (GROUP_SEEN, GROUP_UNSEEN):
            for role in ROLES:
                cell = self.counts["by_group_role"].get((group, role), {"images": 0, "ids": 0})
                if cell["images"] == 0 and cell["ids"] == 0:
                    continue
                lines.append(f"{group:<8} {role:<20} {cell['images']:>8} {cell['ids']:>11}")
        lines.append(f"{'total':<8} {'':<20} {self.counts['total_images']:>8} "
                     f"{self.counts['total_identities']:>11}")
        if self.violations:
            lines.append("")
            lines.append("violations:")
            lines.extend(f"  - {v}" for v in self.violations)
        else:
            lines.append("no violations")
        return "\n".join(lines)


def _check_unique_ids(manifest: Sequence[ManifestRecord]) -> None:
    seen = set()
    for rec in manifest:
        if rec.image_id in seen:
            raise ValidationError(f"duplicate image_id {rec.image_id!r} in manifest")
        seen.add(rec.image_id)


def _by_identity(manifest: Sequence[ManifestRecord]) -> dict[str, list[ManifestRecord]]:
    groups: dict[str, list[ManifestRecord]] = {}
    for rec in manifest:
        groups.setdefault(rec.identity_id, []).append(rec)
    return groups


def _split_identities(identities: list[str], config: SplitConfig) -> dict[str, str]:
    """Identity-level randomization: pick the unseen subset first."""
    rng = np.random.default_rng(derive_subseed(config.seed, "identity-level"))
    order = list(identities)
    rng.shuffle(order)
    n_unseen = int(len(order) * config.unseen_id_fraction)
    unseen = set(order[:n_unseen])
    return {ident: (GROUP_UNSEEN if ident in unseen else GROUP_SEEN) for ident in identities}


def _query_count(n: int, fraction: float) -> int:
    # round to nearest, but always keep at least one database image
    return min(int(math.floor(fraction * n + 0.5)), n - 1)


def split_dataset(manifest: Sequence[ManifestRecord], config: SplitConfig) -> SplitAssignment:
    """Random role assignment; identity grouping first, image roles second."""
    if config.time_aware:
        return time_aware_split(manifest, config)
    _check_unique_ids(manifest)
    per_identity = _by_identity(manifest)
    assignment = SplitAssignment()
    assignment.group_of = _split_identities(sorted(per_identity), config)
    image_seed = config.seed if config.image_seed is None else config.image_seed
    for identity in sorted(per_identity):
        records = sorted(per_identity[identity], key=lambda r: r.image_id)
        group = assignment.group_of[identity]
        db_role = ROLE_TRAIN_DB if group == GROUP_SEEN else ROLE_DB_ONLY
        if len(records) == 1:
            assignment.role_of[records[0].image_id] = db_role
            assignment.warnings.append(
                f"identity {identity} has a single image; assigned to the database side")
            continue
        fraction = (config.query_fraction_seen if group == GROUP_SEEN
                    else config.query_fraction_unseen)
        n_query = _query_count(len(records), fraction)
        rng = np.random.default_rng(derive_subseed(image_seed, f"images:{identity}"))
        order = np.arange(len(records))
        rng.shuffle(order)
        query_idx = set(order[:n_query].tolist())
        for pos, rec in enumerate(records):
            assignment.role_of[rec.image_id] = ROLE_QUERY if pos in query_idx else db_role
    return assignment


def time_aware_split(manifest: Sequence[ManifestRecord], config: SplitConfig) -> SplitAssignment:
    """Database gets each identity's earliest images, queries the latest.

    Per identity the earliest ceil((1-q) * n) images by timestamp become the
    database side, the remainder queries, with q = query_fraction_unseen for
    every identity. Timestamp ties break by image_id; identities with a
    single shared timestamp fall back to the random split.
    """
    _check_unique_ids(manifest)
    missing = sorted(r.image_id for r in manifest if r.timestamp is None)
    if missing:
        raise ValidationError(f"records missing timestamps: {', '.join(missing)}")
    per_identity = _by_identity(manifest)
    assignment = SplitAssignment()
    assignment.group_of = _split_identities(sorted(per_identity), config)
    q = config.query_fraction_unseen
    image_seed = config.seed if config.image_seed is None else config.image_seed
    for identity in sorted(per_identity):
        records = sorted(per_identity[identity], key=lambda r: (r.timestamp, r.image_id))
        group = assignment.group_of[identity]
        db_role = ROLE_TRAIN_DB if group == GROUP_SEEN else ROLE_DB_ONLY
        if len(records) == 1:
            assignment.role_of[records[0].image_id] = db_role
            assignment.warnings.append(
                f"identity {identity} has a single image; assigned to the database side")
            continue
        stamps = {r.timestamp for r in records}
        if len(stamps) == 1:
            # no usable order; pick the query subset at random instead
            n_query = _query_count(len(records), q)
            rng = np.random.default_rng(derive_subseed(image_seed, f"images:{identity}"))
            order = np.arange(len(records))
            rng.shuffle(order)
            query_idx = set(order[:n_query].tolist())
            for pos, rec in enumerate(records):
                assignment.role_of[rec.image_id] = ROLE_QUERY if pos in query_idx else db_role
            assignment.warnings.append(
                f"identity {identity} has a single shared timestamp; used the random split")
            continue
        n_db = math.ceil((1.0 - q) * len(records))
        n_db = min(max(n_db, 1), len(records))
        for pos, rec in enumerate(records):
            assignment.role_of[rec.image_id] = db_role if pos < n_db else ROLE_QUERY
    return assignment


def validate_split(assignment: SplitAssignment,
                   manifest: Sequence[ManifestRecord]) -> ValidationReport:
    """Check partition, leakage, and closed-set invariants; tabulate counts."""
    violations: list[str] = []
    identity_of = {r.image_id: r.identity_id for r in manifest}
    manifest_ids = set(identity_of)
    assigned_ids = set(assignment.role_of)
    for image_id in sorted(manifest_ids - assigned_ids):
        violations.append(f"unassigned image {image_id}")
    for image_id in sorted(assigned_ids - manifest_ids):
        violations.append(f"assignment references unknown image {image_id}")
    for image_id, role in sorted(assignment.role_of.items()):
        if role not in ROLES:
            violations.append(f"image {image_id} has unknown role {role!r}")
    db_identities = set()
    query_identities = set()
    for image_id, role in assignment.role_of.items():
        identity = identity_of.get(image_id)
        if identity is None:
            continue
        group = assignment.group_of.get(identity)
        if group is None:
            violations.append(f"identity {identity} missing from group assignment")
            continue
        if group == GROUP_UNSEEN and role == ROLE_TRAIN_DB:
            violations.append(f"unseen-leak: image {image_id} of unseen identity "
                              f"{identity} marked {ROLE_TRAIN_DB}")
        if role == ROLE_QUERY:
            query_identities.add(identity)
        else:
            db_identities.add(identity)
    for identity in sorted(query_identities - db_identities):
        violations.append(f"open-set: query identity {identity} has no database image")

    by_group_role: dict = {}
    ids_by_cell: dict = {}
    for image_id, role in assignment.role_of.items():
        identity = identity_of.get(image_id)
        if identity is None:
            continue
        group = assignment.group_of.get(identity, "?")
        cell = by_group_role.setdefault((group, role), {"images": 0, "ids": 0})
        cell["images"] += 1
        ids_by_cell.setdefault((group, role), set()).add(identity)
    for key, idset in ids_by_cell.items():
        by_group_role[key]["ids"] = len(idset)
    counts = {
        "by_group_role": by_group_role,
        "total_images": len(assignment.role_of),
        "total_identities": len({identity_of[i] for i in assignment.role_of
                                 if i in identity_of}),
    }
    return ValidationReport(violations=violations, counts=counts)


def read_manifest(path) -> list[ManifestRecord]:
    """Read manifest rows from CSV or JSON lines (by file extension)."""
    path = str(path)
    records: list[ManifestRecord] = []
    if path.endswith((".jsonl", ".json")):
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(_record_from_row(json.loads(line), path))
    else:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in ("image_id", "identity_id") if c not in (reader.fieldnames or [])]
            if missing:
                raise ValidationError(f"manifest {path} missing columns: {', '.join(missing)}")
            for row in reader:
                records.append(_record_from_row(row, path))
    if not records:
        raise ValidationError(f"manifest {path} is empty")
    _check_unique_ids(records)
    return records


def _record_from_row(row: dict, path: str) -> ManifestRecord:
    def clean(key):
        value = row.get(key)
        if value is None:
            return None
        value = str(value).strip()
        return value or None

    timestamp = clean("timestamp")
    clarity = clean("clarity")
    try:
        return ManifestRecord(
            image_id=clean("image_id") or "",
            identity_id=clean("identity_id") or "",
            path=clean("path") or "",
            timestamp=float(timestamp) if timestamp is not None else None,
            clarity=int(clarity) if clarity is not None else None,
            dataset=clean("dataset"),
        )
    except (TypeError, ValueError, ParameterError) as exc:
        raise ValidationError(f"bad manifest row in {path}: {row!r} ({exc})") from exc


def write_manifest(path, manifest: Iterable[ManifestRecord]) -> None:
    """Write manifest rows as CSV, or JSON lines for .jsonl/.json paths."""
    if str(path).endswith((".jsonl", ".json")):
        with open(path, "w", encoding="utf-8") as fh:
            for rec in manifest:
                row = {"image_id": rec.image_id, "identity_id": rec.identity_id,
                       "path": rec.path, "timestamp": rec.timestamp,
                       "clarity": rec.clarity, "dataset": rec.dataset}
                fh.write(json.dumps({k: v for k, v in row.items() if v not in (None, "")},
                                    sort_keys=True) + "\n")
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS + ("dataset",))
        for rec in manifest:
            writer.writerow([
                rec.image_id, rec.identity_id, rec.path,
                "" if rec.timestamp is None else rec.timestamp,
                "" if rec.clarity is None else rec.clarity,
                rec.dataset or "",
            ])


def write_assignment(path, assignment: SplitAssignment,
                     manifest: Sequence[ManifestRecord]) -> None:
    """JSON lines of (image_id, role, identity_group), sorted by image_id."""
    identity_of = {r.image_id: r.identity_id for r in manifest}
    with open(path, "w", encoding="utf-8") as fh:
        for image_id in sorted(assignment.role_of):
            group = assignment.group_of.get(identity_of.get(image_id, ""), "")
            rec = {"image_id": image_id, "role": assignment.role_of[image_id],
                   "identity_group": group}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_assignment(path, manifest: Sequence[ManifestRecord]) -> SplitAssignment:
    identity_of = {r.image_id: r.identity_id for r in manifest}
    assignment = SplitAssignment()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            image_id = rec["image_id"]
            assignment.role_of[image_id] = rec["role"]
            identity = identity_of.get(image_id)
            if identity is not None and rec.get("identity_group"):
                assignment.group_of[identity] = rec["identity_group"]
    return assignment
