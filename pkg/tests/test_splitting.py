"""Database/query splitting: invariants, time-aware mode, round trips."""

import numpy as np
import pytest

from degrade_reid.errors import ParameterError, ValidationError
from degrade_reid.splitting import (
    GROUP_SEEN,
    GROUP_UNSEEN,
    ROLE_DB_ONLY,
    ROLE_QUERY,
    ROLE_TRAIN_DB,
    ManifestRecord,
    SplitConfig,
    read_assignment,
    read_manifest,
    split_dataset,
    time_aware_split,
    validate_split,
    write_assignment,
    write_manifest,
)

from conftest import make_manifest


def _identity_images(manifest):
    out = {}
    for rec in manifest:
        out.setdefault(rec.identity_id, []).append(rec.image_id)
    return out


class TestSplitInvariants:
    def test_partition_and_counts(self):
        manifest = make_manifest(100, 10)
        config = SplitConfig(seed=5, unseen_id_fraction=0.17,
                             query_fraction_seen=0.20, query_fraction_unseen=0.24)
        assignment = split_dataset(manifest, config)
        report = validate_split(assignment, manifest)
        assert report.ok, report.violations
        # identity grouping: floor(100 * 0.17) unseen
        groups = list(assignment.group_of.values())
        assert groups.count(GROUP_UNSEEN) == 17
        assert groups.count(GROUP_SEEN) == 83
        # per-identity query counts land within 1 of the configured fraction
        by_identity = _identity_images(manifest)
        for identity, images in by_identity.items():
            n_query = sum(1 for i in images if assignment.role_of[i] == ROLE_QUERY)
            frac = (0.24 if assignment.group_of[identity] == GROUP_UNSEEN else 0.20)
            assert abs(n_query - frac * len(images)) <= 1.0
            assert n_query < len(images)  # at least one database image stays

    def test_no_unseen_identity_trains(self):
        manifest = make_manifest(60, 8)
        assignment = split_dataset(manifest, SplitConfig(seed=2, unseen_id_fraction=0.3))
        identity_of = {r.image_id: r.identity_id for r in manifest}
        for image_id, role in assignment.role_of.items():
            if assignment.group_of[identity_of[image_id]] == GROUP_UNSEEN:
                assert role in (ROLE_DB_ONLY, ROLE_QUERY)

    def test_singleton_identities_avoid_query(self):
        manifest = make_manifest(5, [1, 1, 4, 4, 4], seed=9)
        assignment = split_dataset(manifest, SplitConfig(seed=0, unseen_id_fraction=0.2))
        assert any("single" in w.lower() for w in assignment.warnings)
        report = validate_split(assignment, manifest)
        assert report.ok, report.violations

    def test_deterministic_per_seed(self):
        manifest = make_manifest(30, 6)
        a = split_dataset(manifest, SplitConfig(seed=7))
        b = split_dataset(manifest, SplitConfig(seed=7))
        c = split_dataset(manifest, SplitConfig(seed=8))
        assert a.role_of == b.role_of and a.group_of == b.group_of
        assert c.role_of != a.role_of or c.group_of != a.group_of

    def test_duplicate_image_ids_rejected(self):
        manifest = make_manifest(3, 3)
        manifest.append(manifest[0])
        with pytest.raises(ValidationError):
            split_dataset(manifest, SplitConfig(seed=0))

    def test_bad_config_rejected(self):
        with pytest.raises(ParameterError):
            SplitConfig(unseen_id_fraction=1.2)
        with pytest.raises(ParameterError):
            SplitConfig(query_fraction_seen=-0.1)


class TestTimeAware:
    def test_queries_are_strictly_later_than_database(self):
        manifest = make_manifest(40, 10, seed=3, with_timestamps=True)
        config = SplitConfig(seed=4, time_aware=True)
        assignment = time_aware_split(manifest, config)
        report = validate_split(assignment, manifest)
        assert report.ok, report.violations
        times = {r.image_id: r.timestamp for r in manifest}
        by_identity = _identity_images(manifest)
        for identity, images in by_identity.items():
            q = [times[i] for i in images if assignment.role_of[i] == ROLE_QUERY]
            db = [times[i] for i in images if assignment.role_of[i] != ROLE_QUERY]
            if q:
                assert min(q) >= max(db)

    def test_missing_timestamp_rejected(self):
        manifest = make_manifest(4, 4)
        with pytest.raises(ValidationError):
            time_aware_split(manifest, SplitConfig(seed=0, time_aware=True))

    def test_shared_timestamp_falls_back_with_warning(self):
        records = []
        for enc in range(6):
            records.append(ManifestRecord(image_id=f"a_img{enc}", identity_id="a",
                                          timestamp=5.0))
        for enc in range(6):
            records.append(ManifestRecord(image_id=f"b_img{enc}", identity_id="b",
                                          timestamp=float(enc)))
        assignment = time_aware_split(records, SplitConfig(seed=1, time_aware=True))
        assert any("timestamp" in w.lower() for w in assignment.warnings)
        assert validate_split(assignment, records).ok

    def test_split_dataset_dispatches_on_flag(self):
        manifest = make_manifest(10, 6, seed=5, with_timestamps=True)
        via_flag = split_dataset(manifest, SplitConfig(seed=2, time_aware=True))
        direct = time_aware_split(manifest, SplitConfig(seed=2, time_aware=True))
        assert via_flag.role_of == direct.role_of


class TestValidateSplit:
    def test_detects_unseen_leak(self):
        manifest = make_manifest(10, 5)
        assignment = split_dataset(manifest, SplitConfig(seed=3, unseen_id_fraction=0.3))
        unseen_identity = next(i for i, g in assignment.group_of.items()
                               if g == GROUP_UNSEEN)
        victim = next(r.image_id for r in manifest if r.identity_id == unseen_identity)
        assignment.role_of[victim] = ROLE_TRAIN_DB
        report = validate_split(assignment, manifest)
        assert not report.ok
        assert any("unseen" in v.lower() for v in report.violations)

    def test_detects_open_set_query(self):
        manifest = make_manifest(6, 4)
        assignment = split_dataset(manifest, SplitConfig(seed=3))
        victim_identity = manifest[0].identity_id
        for rec in manifest:
            if rec.identity_id == victim_identity:
                assignment.role_of[rec.image_id] = ROLE_QUERY
        report = validate_split(assignment, manifest)
        assert not report.ok
        assert any("no database image" in v.lower() for v in report.violations)

    def test_detects_incomplete_partition(self):
        manifest = make_manifest(6, 4)
        assignment = split_dataset(manifest, SplitConfig(seed=3))
        del assignment.role_of[manifest[0].image_id]
        assert not validate_split(assignment, manifest).ok
        assignment2 = split_dataset(manifest, SplitConfig(seed=3))
        assignment2.role_of["ghost"] = ROLE_QUERY
        assert not validate_split(assignment2, manifest).ok

    def test_detects_unknown_role(self):
        manifest = make_manifest(6, 4)
        assignment = split_dataset(manifest, SplitConfig(seed=3))
        assignment.role_of[manifest[0].image_id] = "holdout"
        assert not validate_split(assignment, manifest).ok

    def test_render_mentions_counts(self):
        manifest = make_manifest(8, 5)
        assignment = split_dataset(manifest, SplitConfig(seed=1))
        text = validate_split(assignment, manifest).render()
        assert "40" in text  # total images


class TestManifestIO:
    def test_csv_roundtrip(self, tmp_path):
        manifest = make_manifest(5, 4, with_timestamps=True)
        path = tmp_path / "manifest.csv"
        write_manifest(path, manifest)
        back = read_manifest(path)
        assert back == manifest

    def test_jsonl_roundtrip(self, tmp_path):
        manifest = make_manifest(4, 3, with_timestamps=True)
        path = tmp_path / "manifest.jsonl"
        write_manifest(path, manifest)
        back = read_manifest(path)
        assert back == manifest

    def test_missing_required_column_rejected(self, tmp_path):
        path = tmp_path / "broken.csv"
        path.write_text("image_id,path\nim0,images/im0.png\n")
        with pytest.raises(ValidationError):
            read_manifest(path)

    def test_assignment_roundtrip(self, tmp_path):
        manifest = make_manifest(12, 6)
        assignment = split_dataset(manifest, SplitConfig(seed=11))
        path = tmp_path / "assignment.jsonl"
        write_assignment(path, assignment, manifest)
        back = read_assignment(path, manifest)
        assert back.role_of == assignment.role_of
        assert back.group_of == assignment.group_of

    def test_assignment_bytes_are_stable(self, tmp_path):
        manifest = make_manifest(12, 6)
        assignment = split_dataset(manifest, SplitConfig(seed=11))
        p1, p2 = tmp_path / "a1.jsonl", tmp_path / "a2.jsonl"
        write_assignment(p1, assignment, manifest)
        write_assignment(p2, assignment, manifest)
        assert p1.read_bytes() == p2.read_bytes()
