"""Retrieval metrics against exhaustive scalar oracles and worked examples."""

import numpy as np
import pytest

from degrade_reid.embeddings import EmbeddingMatrix
from degrade_reid.errors import ParameterError, ValidationError
from degrade_reid.metrics import (
    RankedResult,
    average_precision,
    cmc_curve,
    mean_average_precision,
    rank_k_accuracy,
    search,
    stratified_report,
)

from conftest import make_manifest


def _oracle_rank(query_id, query_vec, db):
    """Scalar re-implementation: cosine scores, desc, ties by ascending id."""
    q = np.asarray(query_vec, dtype=np.float64)
    q = q / np.linalg.norm(q)
    scored = []
    for db_id, vec in db:
        if db_id == query_id:
            continue
        v = np.asarray(vec, dtype=np.float64)
        scored.append((db_id, float(q @ (v / np.linalg.norm(v)))))
    scored.sort(key=lambda e: (-e[1], e[0]))
    return scored


def _oracle_first_hit(entries, target, identity_of):
    for pos, (db_id, _s) in enumerate(entries, start=1):
        if identity_of[db_id] == target:
            return pos
    return None


def _oracle_ap(entries, target, identity_of):
    precisions = []
    hits = 0
    for pos, (db_id, _s) in enumerate(entries, start=1):
        if identity_of[db_id] == target:
            hits += 1
            precisions.append(hits / pos)
    return sum(precisions) / len(precisions)


def _random_instance(rng):
    n_identities = int(rng.integers(2, 8))
    d = int(rng.integers(2, 16))
    identity_of = {}
    db_ids, db_vecs = [], []
    n_db = int(rng.integers(n_identities, 50))
    for i in range(n_db):
        db_id = f"db{i:03d}"
        identity = f"id{int(rng.integers(n_identities)):02d}" if i >= n_identities \
            else f"id{i:02d}"  # every identity gets at least one db image
        identity_of[db_id] = identity
        db_ids.append(db_id)
        db_vecs.append(rng.normal(size=d))
    q_ids, q_vecs = [], []
    n_q = int(rng.integers(1, 11))
    for i in range(n_q):
        q_id = f"q{i:02d}"
        identity_of[q_id] = f"id{int(rng.integers(n_identities)):02d}"
        q_ids.append(q_id)
        q_vecs.append(rng.normal(size=d))
    queries = EmbeddingMatrix(ids=q_ids, vectors=np.array(q_vecs, dtype=np.float32))
    database = EmbeddingMatrix(ids=db_ids, vectors=np.array(db_vecs, dtype=np.float32))
    return queries, database, identity_of


class TestSearchOracle:
    def test_matches_scalar_oracle_on_random_instances(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            queries, database, identity_of = _random_instance(rng)
            results = search(queries, database)
            db_pairs = list(zip(database.ids,
                                np.asarray(database.vectors, dtype=np.float64)))
            for qi, result in enumerate(results):
                want = _oracle_rank(result.query_id,
                                    np.asarray(queries.vectors[qi], dtype=np.float64),
                                    db_pairs)
                assert [e[0] for e in result.entries] == [e[0] for e in want]
                got_scores = np.array([e[1] for e in result.entries])
                want_scores = np.array([e[1] for e in want])
                np.testing.assert_allclose(got_scores, want_scores, atol=1e-12)

    def test_metrics_match_scalar_oracles(self):
        rng = np.random.default_rng(777)
        for _ in range(100):
            queries, database, identity_of = _random_instance(rng)
            results = search(queries, database)
            firsts = [_oracle_first_hit(r.entries, identity_of[r.query_id], identity_of)
                      for r in results]
            assert all(f is not None for f in firsts)
            for k in (1, 3, 5):
                want = sum(1 for f in firsts if f <= k) / len(firsts)
                assert abs(rank_k_accuracy(results, identity_of, k) - want) <= 1e-12
            want_map = np.mean([_oracle_ap(r.entries, identity_of[r.query_id],
                                           identity_of) for r in results])
            assert abs(mean_average_precision(results, identity_of) - want_map) <= 1e-12
            max_k = len(database.ids)
            cmc = cmc_curve(results, identity_of, max_k)
            want_cmc = np.array([sum(1 for f in firsts if f <= k) / len(firsts)
                                 for k in range(1, max_k + 1)])
            np.testing.assert_allclose(cmc, want_cmc, atol=1e-12)

    def test_exact_tie_breaks_by_ascending_db_id(self):
        queries = EmbeddingMatrix(ids=["q"], vectors=np.array([[1.0, 0.0]], np.float32))
        vec = np.array([[1.0, 0.0]] * 3, dtype=np.float32)
        database = EmbeddingMatrix(ids=["b", "a", "c"], vectors=vec)
        results = search(queries, database)
        assert [e[0] for e in results[0].entries] == ["a", "b", "c"]

    def test_self_match_excluded(self):
        queries = EmbeddingMatrix(ids=["x"], vectors=np.array([[1.0, 0.0]], np.float32))
        database = EmbeddingMatrix(ids=["x", "y"],
                                   vectors=np.array([[1.0, 0.0], [0.0, 1.0]], np.float32))
        results = search(queries, database)
        assert [e[0] for e in results[0].entries] == ["y"]

    def test_dimension_mismatch_and_empty_db(self):
        q = EmbeddingMatrix(ids=["q"], vectors=np.zeros((1, 4), np.float32) + 1)
        db3 = EmbeddingMatrix(ids=["d"], vectors=np.zeros((1, 3), np.float32) + 1)
        with pytest.raises(ParameterError):
            search(q, db3)


class TestWorkedExamples:
    def test_two_relevant_at_ranks_one_and_three(self):
        # AP = (1/1 + 2/3) / 2 = 5/6
        result = RankedResult(query_id="q", entries=[
            ("d1", 0.9), ("d2", 0.8), ("d3", 0.7), ("d4", 0.6)])
        identity_of = {"q": "A", "d1": "A", "d2": "B", "d3": "A", "d4": "B"}
        ap = average_precision(result, identity_of)
        assert abs(ap - 5.0 / 6.0) <= 1e-12
        assert abs(mean_average_precision([result], identity_of) - 5.0 / 6.0) <= 1e-12

    def test_perfect_ranking_has_unit_everything(self):
        result = RankedResult(query_id="q", entries=[("d1", 0.9), ("d2", 0.1)])
        identity_of = {"q": "A", "d1": "A", "d2": "B"}
        assert rank_k_accuracy([result], identity_of, 1) == 1.0
        assert average_precision(result, identity_of) == 1.0

    def test_open_set_query_rejected(self):
        result = RankedResult(query_id="q", entries=[("d1", 0.9)])
        identity_of = {"q": "A", "d1": "B"}
        with pytest.raises(ValidationError):
            rank_k_accuracy([result], identity_of, 1)
        with pytest.raises(ValidationError):
            average_precision(result, identity_of)

    def test_empty_results_rejected(self):
        with pytest.raises(ParameterError):
            rank_k_accuracy([], {}, 1)
        with pytest.raises(ParameterError):
            mean_average_precision([], {})


class TestStratifiedReport:
    def _setup(self):
        manifest = make_manifest(6, 4, seed=1)
        identity_of = {r.image_id: r.identity_id for r in manifest}
        rng = np.random.default_rng(5)
        ids = [r.image_id for r in manifest]
        # embeddings: identity index encoded with noise so retrieval is imperfect
        base = {identity: rng.normal(size=8) for identity in set(identity_of.values())}
        vecs = np.array([base[identity_of[i]] + rng.normal(scale=0.6, size=8)
                         for i in ids], dtype=np.float32)
        queries = EmbeddingMatrix(ids=ids[:8], vectors=vecs[:8])
        database = EmbeddingMatrix(ids=ids, vectors=vecs)
        results = search(queries, database)
        return manifest, results

    def test_overall_block_and_cmc(self):
        manifest, results = self._setup()
        report = stratified_report(results, manifest, ks=(1, 5))
        assert report.n_queries == 8
        assert set(report.rank_k) == {1, 5}
        assert len(report.cmc) == 5
        assert report.cmc[-1] >= report.cmc[0]
        d = report.to_dict()
        assert d["rank_k"]["1"] == report.rank_k[1]

    def test_clarity_strata_partition_queries(self):
        manifest, results = self._setup()
        report = stratified_report(results, manifest, ks=(1,),
                                   strata_keys=("clarity",))
        total = sum(block["n_queries"] for block in report.strata["clarity"].values())
        assert total == report.n_queries

    def test_group_stratum_requires_assignment(self):
        manifest, results = self._setup()
        with pytest.raises(ParameterError):
            stratified_report(results, manifest, strata_keys=("group",))

    def test_unknown_stratum_key_rejected(self):
        manifest, results = self._setup()
        with pytest.raises(ParameterError):
            stratified_report(results, manifest, strata_keys=("camera",))
