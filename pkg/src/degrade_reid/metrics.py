"""Closed-set retrieval: exhaustive cosine search and Rank-k / CMC / mAP.

Search scores are dot products of unit-normalized embedding rows, ranked
descending with ties broken by ascending database image id; a database entry
sharing the query's image id is excluded. Metrics follow the standard
closed-set definitions; average precision is taken over all relevant
database images of the query identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ParameterError, ValidationError
from .embeddings import EmbeddingMatrix

DEFAULT_KS = (1, 5, 10, 20)


@dataclass
class RankedResult:
    query_id: str
    entries: list  # [(db image_id, score), ...] score-descending


@dataclass
class MetricsReport:
    n_queries: int
    ks: tuple
    rank_k: dict
    map: float
    cmc: list
    strata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_queries": self.n_queries,
            "ks": list(self.ks),
            "rank_k": {str(k): v for k, v in self.rank_k.items()},
            "map": self.map,
            "cmc": list(self.cmc),
            "strata": self.strata,
        }


def search(queries: EmbeddingMatrix, database: EmbeddingMatrix,
           top_k: int | None = None) -> list[RankedResult]:
    """Exact exhaustive cosine ranking of every query against the database."""
    if queries.d != database.d:
        raise ParameterError(f"dimension mismatch: query d={queries.d}, db d={database.d}")
    if database.n == 0:
        raise ParameterError("empty database")
    if top_k is None:
        top_k = database.n
    if not (1 <= top_k <= database.n):
        raise ParameterError(f"top_k={top_k} outside [1, {database.n}]")
    qn = queries.normalized()
    dn = database.normalized()
    scores = qn @ dn.T
    db_ids = np.array(database.ids, dtype=object)
    id_rank = np.empty(database.n, dtype=np.int64)
    id_rank[np.argsort(db_ids, kind="stable")] = np.arange(database.n)
    results = []
    for qi, query_id in enumerate(queries.ids):
        row = scores[qi]
        order = np.lexsort((id_rank, -row))
        entries = [(db_ids[j], float(row[j])) for j in order if db_ids[j] != query_id]
        results.append(RankedResult(query_id=query_id, entries=entries[:top_k]))
    return results


def _first_correct_rank(result: RankedResult, identity_of: Mapping) -> int:
    """1-based rank of the first correct match; raises if none exists."""
    try:
        target = identity_of[result.query_id]
    except KeyError:
        raise ValidationError(f"query {result.query_id!r} missing from identity map")
    for pos, (db_id, _score) in enumerate(result.entries, start=1):
        if db_id not in identity_of:
            raise ValidationError(f"database image {db_id!r} missing from identity map")
        if identity_of[db_id] == target:
            return pos
    raise ValidationError(
        f"query {result.query_id!r} (identity {target!r}) has no match in the ranking; "
        "closed-set evaluation requires every query identity in the database")


def rank_k_accuracy(results: Sequence[RankedResult], identity_of: Mapping, k: int) -> float:
    if k < 1:
        raise ParameterError(f"k={k} must be >= 1")
    if not results:
        raise ParameterError("no queries")
    hits = sum(1 for r in results if _first_correct_rank(r, identity_of) <= k)
    return hits / len(results)


def cmc_curve(results: Sequence[RankedResult], identity_of: Mapping, max_k: int) -> np.ndarray:
    """Rank-k accuracy for every k in 1..max_k as one array."""
    if max_k < 1:
        raise ParameterError(f"max_k={max_k} must be >= 1")
    if not results:
        raise ParameterError("no queries")
    counts = np.zeros(max_k, dtype=np.float64)
    for r in results:
        first = _first_correct_rank(r, identity_of)
        if first <= max_k:
            counts[first - 1] += 1
    return np.cumsum(counts) / len(results)


def average_precision(result: RankedResult, identity_of: Mapping) -> float:
    _first_correct_rank(result, identity_of)  # closed-set check
    target = identity_of[result.query_id]
    precisions = []
    n_relevant_seen = 0
    for pos, (db_id, _score) in enumerate(result.entries, start=1):
        if identity_of[db_id] == target:
            n_relevant_seen += 1
            precisions.append(n_relevant_seen / pos)
    return float(np.mean(precisions))


def mean_average_precision(results: Sequence[RankedResult], identity_of: Mapping) -> float:
    if not results:
        raise ParameterError("no queries")
    return float(np.mean([average_precision(r, identity_of) for r in results]))


def _metrics_block(results, identity_of, ks) -> dict:
    max_k = max(ks)
    cmc = cmc_curve(results, identity_of, max_k)
    return {
        "n_queries": len(results),
        "rank_k": {str(k): float(cmc[k - 1]) for k in ks},
        "map": mean_average_precision(results, identity_of),
    }


def stratified_report(results: Sequence[RankedResult], manifest, assignment=None,
                      ks: Sequence[int] = DEFAULT_KS,
                      strata_keys: Sequence[str] = ()) -> MetricsReport:
    """Overall metrics plus per-stratum breakdowns.

    Stratum keys: ``clarity`` and ``dataset`` read the manifest fields,
    ``group`` reads the seen/unseen identity grouping of the assignment.
    """
    ks = tuple(sorted(set(int(k) for k in ks)))
    records = {r.image_id: r for r in manifest}
    identity_of = {r.image_id: r.identity_id for r in manifest}
    overall = _metrics_block(results, identity_of, ks)
    max_k = max(ks)
    cmc = cmc_curve(results, identity_of, max_k)
    strata: dict = {}
    for key in strata_keys:
        if key == "clarity":
            labeler = lambda r: records[r.query_id].clarity
        elif key == "dataset":
            labeler = lambda r: records[r.query_id].dataset
        elif key == "group":
            if assignment is None:
                raise ParameterError("group stratification needs a split assignment")
            labeler = lambda r: assignment.group_of.get(identity_of[r.query_id])
        else:
            raise ParameterError(f"unknown stratum key {key!r}")
        buckets: dict = {}
        for r in results:
            if r.query_id not in records:
                raise ValidationError(f"query {r.query_id!r} missing from manifest")
            label = labeler(r)
            buckets.setdefault("unknown" if label is None else str(label), []).append(r)
        strata[key] = {label: _metrics_block(rs, identity_of, ks)
                       for label, rs in sorted(buckets.items())}
    return MetricsReport(
        n_queries=overall["n_queries"], ks=ks,
        rank_k={int(k): v for k, v in overall["rank_k"].items()},
        map=overall["map"], cmc=[float(v) for v in cmc], strata=strata)
