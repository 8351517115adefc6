"""Synthetic identities, encounter rendering, and embedder training basics."""

import numpy as np
import pytest

from degrade_reid.errors import ParameterError, TrainingError
from degrade_reid.splitting import ROLE_TRAIN_DB, SplitConfig, split_dataset
from degrade_reid.synthbench import (
    POOLED_DIM,
    BenchConfig,
    GridReport,
    TinyEmbedder,
    TrainingLoader,
    init_embedder,
    load_bench_config,
    pool_input,
    read_grid_report,
    train_embedder,
    write_grid_report,
)
from degrade_reid.synthdata import (
    NCC_LIMIT,
    SIDE,
    EncounterSpec,
    generate_dataset,
    generate_identities,
    make_identity,
    pattern_ncc,
    pool_gray,
    render_base_pattern,
    render_encounter,
    sample_encounter,
    to_float,
)
from degrade_reid.pipeline import derive_subseed


class TestIdentities:
    def test_identity_generation_is_deterministic(self):
        a = make_identity(42)
        b = make_identity(42)
        assert a == b
        assert len(a.dots) == 49 and len(a.rings) == 4

    def test_pairwise_ncc_below_limit(self):
        identities = generate_identities(0, 12)
        pooled = []
        for identity in identities:
            flat = pool_gray(render_base_pattern(identity)).ravel()
            pooled.append((flat - flat.mean()) / max(flat.std(), 1e-12))
        for i in range(len(pooled)):
            for j in range(i + 1, len(pooled)):
                ncc = float(np.dot(pooled[i], pooled[j]) / pooled[i].size)
                assert abs(ncc) < NCC_LIMIT

    def test_base_pattern_is_valid_image(self):
        img = render_base_pattern(make_identity(7))
        assert img.shape == (SIDE, SIDE, 1)
        assert img.min() >= 0.0 and img.max() <= 1.0
        assert img.std() > 0.05  # carries actual contrast

    def test_pattern_ncc_self_is_one(self):
        img = render_base_pattern(make_identity(3))
        assert pattern_ncc(img, img) == pytest.approx(1.0, abs=1e-9)


class TestEncounters:
    def test_encounter_rendering_is_deterministic(self):
        identity = make_identity(11)
        spec = sample_encounter(identity.identity_seed, 555)
        a = render_encounter(identity, spec)
        b = render_encounter(identity, spec)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (SIDE, SIDE, 1)
        assert a.min() >= 0.0 and a.max() <= 1.0

    def test_different_instances_differ(self):
        identity = make_identity(11)
        a = render_encounter(identity, sample_encounter(identity.identity_seed, 1))
        b = render_encounter(identity, sample_encounter(identity.identity_seed, 2))
        assert np.abs(a - b).max() > 0.01

    def test_encounter_spec_bounds_enforced(self):
        with pytest.raises(ParameterError):
            EncounterSpec(identity_seed=0, instance_seed=0, translation=(100.0, 0.0),
                          rotation_deg=0.0, scale=1.0, brightness=0.0, contrast=1.0,
                          wobble=((0, 0),) * 4)
        with pytest.raises(ParameterError):
            EncounterSpec(identity_seed=0, instance_seed=0, translation=(0.0, 0.0),
                          rotation_deg=30.0, scale=1.0, brightness=0.0, contrast=1.0,
                          wobble=((0, 0),) * 4)
        with pytest.raises(ParameterError):
            EncounterSpec(identity_seed=0, instance_seed=0, translation=(0.0, 0.0),
                          rotation_deg=0.0, scale=1.0, brightness=0.0, contrast=1.0,
                          wobble=((9.0, 0),) * 4)

    def test_same_identity_more_similar_than_other_identity(self):
        id_a = make_identity(21)
        id_b = make_identity(22)
        a1 = render_encounter(id_a, sample_encounter(id_a.identity_seed, 1))
        a2 = render_encounter(id_a, sample_encounter(id_a.identity_seed, 2))
        b1 = render_encounter(id_b, sample_encounter(id_b.identity_seed, 1))
        assert pattern_ncc(a1, a2) > pattern_ncc(a1, b1)


class TestDataset:
    def test_generate_dataset_shapes_and_manifest(self):
        images, manifest = generate_dataset(0, 4, 3)
        assert len(images) == 12 and len(manifest) == 12
        for rec in manifest:
            img = images[rec.image_id]
            assert img.dtype == np.uint8
            assert img.shape == (SIDE, SIDE, 1)
            assert rec.path.startswith("synthetic://")
            assert rec.timestamp is not None
        identities = {r.identity_id for r in manifest}
        assert len(identities) == 4

    def test_generate_dataset_deterministic(self):
        img_a, man_a = generate_dataset(5, 3, 2)
        img_b, man_b = generate_dataset(5, 3, 2)
        assert man_a == man_b
        for image_id in img_a:
            np.testing.assert_array_equal(img_a[image_id], img_b[image_id])

    def test_to_float_uint8_roundtrip(self):
        arr = np.array([[[0], [255]], [[128], [64]]], dtype=np.uint8)
        out = to_float(arr)
        assert out.dtype == np.float64
        assert out.max() == 1.0 and out.min() == 0.0

    def test_tiny_dataset_rejected(self):
        with pytest.raises(ParameterError):
            generate_dataset(0, 1, 5)


class TestEmbedder:
    def test_parameter_budget_and_unit_norm(self):
        model = init_embedder(0)
        assert model.n_params <= 100_000
        pooled = np.random.default_rng(0).normal(size=(5, POOLED_DIM))
        emb = model.embed_pooled(pooled)
        assert emb.shape == (5, 64)
        np.testing.assert_allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-9)

    def test_pool_input_standardizes(self):
        images, _ = generate_dataset(1, 2, 2)
        pooled = pool_input(next(iter(images.values())))
        assert pooled.shape == (POOLED_DIM,)
        assert abs(pooled.mean()) < 1e-9
        assert abs(pooled.std() - 1.0) < 1e-6

    def test_embed_images_matches_pooled_path(self):
        images, _ = generate_dataset(1, 2, 2)
        model = init_embedder(3)
        imgs = [to_float(images[i]) for i in sorted(images)]
        via_images = model.embed_images(imgs)
        via_pooled = model.embed_pooled(np.stack([pool_input(i) for i in imgs]))
        np.testing.assert_array_equal(via_images, via_pooled)


class TestTraining:
    def _tiny_setup(self, pipeline="none", epochs=2):
        config = BenchConfig(n_identities=6, images_per_identity=4, epochs=epochs,
                             batch_size=8, master_seed=0,
                             pipelines=("none",), query_conditions=("none",))
        images, manifest = generate_dataset(0, 6, 4)
        split_cfg = SplitConfig(seed=derive_subseed(0, "split"),
                                unseen_id_fraction=config.unseen_fraction)
        assignment = split_dataset(manifest, split_cfg)
        return images, manifest, assignment, config

    def test_training_is_deterministic(self):
        images, manifest, assignment, config = self._tiny_setup()
        m1 = train_embedder(images, manifest, assignment, "none", config)
        m2 = train_embedder(images, manifest, assignment, "none", config)
        np.testing.assert_array_equal(m1.w1, m2.w1)
        np.testing.assert_array_equal(m1.w2, m2.w2)

    def test_training_only_sees_training_split(self):
        images, manifest, assignment, config = self._tiny_setup()
        info = {}
        train_embedder(images, manifest, assignment, "none", config, info_out=info)
        train_ids = {i for i, role in assignment.role_of.items()
                     if role == ROLE_TRAIN_DB}
        assert info["served_ids"] <= train_ids
        identity_of = {r.image_id: r.identity_id for r in manifest}
        unseen = {i for i in assignment.role_of
                  if assignment.group_of[identity_of[i]] == "unseen"}
        assert not (info["served_ids"] & unseen)

    def test_training_reduces_loss(self):
        images, manifest, assignment, config = self._tiny_setup(epochs=8)
        info = {}
        train_embedder(images, manifest, assignment, "none", config, info_out=info)
        trace = info["loss_trace"]
        first = np.mean(trace[: max(1, len(trace) // 4)])
        last = np.mean(trace[-max(1, len(trace) // 4):])
        assert np.isfinite(trace).all()
        assert last < first
        assert 0.0 <= info["final_t"] <= 1.0

    def test_augmented_training_runs(self):
        images, manifest, assignment, config = self._tiny_setup()
        model = train_embedder(images, manifest, assignment, "diverse", config)
        emb = model.embed_images([to_float(images[i]) for i in sorted(images)][:3])
        assert np.isfinite(emb).all()

    def test_unknown_pipeline_rejected(self):
        images, manifest, assignment, config = self._tiny_setup()
        with pytest.raises(ParameterError):
            train_embedder(images, manifest, assignment, "extreme", config)

    def test_loader_rejects_empty_training_set(self):
        images, manifest, assignment, config = self._tiny_setup()
        for image_id in assignment.role_of:
            assignment.role_of[image_id] = "query"
        with pytest.raises(ParameterError):
            TrainingLoader(images, manifest, assignment, "none", config)


class TestBenchConfigIO:
    def test_config_validation(self):
        with pytest.raises(ParameterError):
            BenchConfig(n_identities=1)
        with pytest.raises(ParameterError):
            BenchConfig(unseen_fraction=0.0)
        with pytest.raises(ParameterError):
            BenchConfig(pipelines=("none", "extreme"))
        with pytest.raises(ParameterError):
            BenchConfig(learning_rate=0.0)

    def test_load_bench_config_toml(self, tmp_path):
        path = tmp_path / "bench.toml"
        path.write_text(
            'n_identities = 10\nimages_per_identity = 4\nepochs = 3\n'
            'pipelines = ["none", "diverse-plus"]\nmaster_seed = 9\n')
        config = load_bench_config(path)
        assert config.n_identities == 10
        assert config.pipelines == ("none", "diverse_plus")
        assert config.master_seed == 9

    def test_load_bench_config_rejects_unknown_keys(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text('optimizer = "adam"\n')
        with pytest.raises(ParameterError):
            load_bench_config(path)

    def test_grid_report_roundtrip(self, tmp_path):
        report = GridReport(master_seed=3, config={"epochs": 2}, records=[
            {"train_pipeline": "none", "query_condition": "none",
             "stratum": "overall", "n_queries": 10,
             "rank_k": {"1": 0.9}, "map": 0.8}])
        path = tmp_path / "grid.json"
        write_grid_report(path, report)
        back = read_grid_report(path)
        assert back.to_dict() == report.to_dict()
        assert back.lookup("none", "none", "overall")["map"] == 0.8
        with pytest.raises(KeyError):
            back.lookup("none", "diverse", "overall")
