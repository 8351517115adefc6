"""Desk-scale benchmark: tiny trainable embedder plus the experiment grid.

The embedder block-pools a 384x384 image to a standardized 32x32 grayscale
patch, runs one tanh hidden layer and a linear head, and L2-normalizes the
output (well under 1e5 parameters, hand-written gradients). Training minimizes
the difficulty-adaptive margin loss over one class per seen identity with
SGD (momentum 0.9, cosine-annealed learning rate); each training image is
replaced by a freshly degraded copy with a configurable probability per
step. The grid trains one embedder per pipeline and evaluates every query
condition, reporting Rank-k and mAP overall and for seen/unseen queries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .curricular import CosineBatch, CurricularState, LossParams, curricular_forward, curricular_grad
from .embeddings import EmbeddingMatrix
from .errors import ParameterError, TrainingError
from .metrics import search, stratified_report
from .pipeline import DIVERSE, DIVERSE_PLUS, PIPELINE_KINDS, SIMPLE, apply_pipeline, derive_subseed
from .splitting import (
    GROUP_SEEN,
    GROUP_UNSEEN,
    ROLE_QUERY,
    ROLE_TRAIN_DB,
    SplitAssignment,
    SplitConfig,
    split_dataset,
    validate_split,
)
from .synthdata import POOL, generate_dataset, pool_gray, to_float

PIPELINE_NONE = "none"
TRAIN_PIPELINES = (PIPELINE_NONE, SIMPLE, DIVERSE, DIVERSE_PLUS)
QUERY_CONDITIONS = (PIPELINE_NONE, DIVERSE, DIVERSE_PLUS)

POOLED_DIM = (384 // POOL) ** 2
GRID_KS = (1, 5, 10, 20)


@dataclass(frozen=True)
class BenchConfig:
    n_identities: int = 100
    images_per_identity: int = 20
    unseen_fraction: float = 0.2
    pipelines: tuple = TRAIN_PIPELINES
    query_conditions: tuple = QUERY_CONDITIONS
    epochs: int = 36
    learning_rate: float = 0.03
    batch_size: int = 32
    master_seed: int = 0
    aug_probability: float = 0.5
    hidden_dim: int = 64
    embed_dim: int = 64
    momentum: float = 0.9
    ema_momentum: float = 0.99

    def __post_init__(self):
        if self.n_identities < 2 or self.images_per_identity < 2:
            raise ParameterError("need at least 2 identities and 2 images each")
        if not (0.0 < self.unseen_fraction < 1.0):
            raise ParameterError(f"unseen_fraction={self.unseen_fraction!r} outside (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ParameterError("learning_rate must be positive")
        if not (0.0 <= self.aug_probability <= 1.0):
            raise ParameterError("aug_probability outside [0, 1]")
        if self.hidden_dim < 1 or self.embed_dim < 1:
            raise ParameterError("hidden_dim and embed_dim must be positive")
        for p in self.pipelines:
            if p not in TRAIN_PIPELINES:
                raise ParameterError(f"unknown training pipeline {p!r}")
        for c in self.query_conditions:
            if c not in PIPELINE_KINDS + (PIPELINE_NONE,):
                raise ParameterError(f"unknown query condition {c!r}")


def load_bench_config(path) -> BenchConfig:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    fields = set(BenchConfig.__dataclass_fields__)
    unknown = set(data) - fields
    if unknown:
        raise ParameterError(f"unknown bench config keys: {sorted(unknown)}")
    for key in ("pipelines", "query_conditions"):
        if key in data:
            data[key] = tuple(str(v).replace("-", "_") for v in data[key])
    return BenchConfig(**data)


@dataclass
class TinyEmbedder:
    """Pool -> tanh hidden layer -> linear head -> unit-norm embedding."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def embed_pooled(self, pooled: np.ndarray) -> np.ndarray:
        """(B, POOLED_DIM) standardized patches to (B, d) unit-norm embeddings."""
        hidden = np.tanh(pooled @ self.w1 + self.b1)
        z = hidden @ self.w2 + self.b2
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        return z / np.maximum(norms, 1e-12)

    def embed_images(self, images) -> np.ndarray:
        pooled = np.stack([pool_input(img) for img in images])
        return self.embed_pooled(pooled)


def pool_input(img: np.ndarray) -> np.ndarray:
    """Pool to 32x32 grayscale and standardize to zero mean, unit variance."""
    patch = pool_gray(to_float(img)).ravel()
    return (patch - patch.mean()) / max(patch.std(), 1e-6)


def init_embedder(seed: int, hidden_dim: int = 64, embed_dim: int = 64) -> TinyEmbedder:
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, 1.0 / math.sqrt(POOLED_DIM), size=(POOLED_DIM, hidden_dim))
    w2 = rng.normal(0.0, 1.0 / math.sqrt(hidden_dim), size=(hidden_dim, embed_dim))
    return TinyEmbedder(w1=w1, b1=np.zeros(hidden_dim), w2=w2, b2=np.zeros(embed_dim))


class TrainingLoader:
    """Assembles seed-determined batches and records every id it serves.

    Only train-role images of seen identities are accepted; the served-id
    log lets callers assert nothing else ever reached the optimizer.
    """

    def __init__(self, images, manifest, assignment: SplitAssignment,
                 pipeline: str, config: BenchConfig, pooled_cache=None):
        identity_of = {r.image_id: r.identity_id for r in manifest}
        self.train_ids = sorted(
            image_id for image_id, role in assignment.role_of.items()
            if role == ROLE_TRAIN_DB
            and assignment.group_of.get(identity_of[image_id]) == GROUP_SEEN)
        if not self.train_ids:
            raise ParameterError("no training images in assignment")
        self.classes = sorted({identity_of[i] for i in self.train_ids})
        self.class_index = {c: k for k, c in enumerate(self.classes)}
        self.labels = np.array([self.class_index[identity_of[i]] for i in self.train_ids])
        self.images = images
        self.pipeline = pipeline
        self.config = config
        self.served_ids: set = set()
        if pooled_cache is None:
            pooled_cache = {}
        self.pooled_cache = pooled_cache
        for image_id in self.train_ids:
            if image_id not in pooled_cache:
                pooled_cache[image_id] = pool_input(images[image_id])

    def n_steps(self) -> int:
        per_epoch = math.ceil(len(self.train_ids) / self.config.batch_size)
        return per_epoch * self.config.epochs

    def batches(self, train_seed: int):
        """Yield (step, pooled X, labels); degraded copies are resampled per step."""
        cfg = self.config
        order_rng = np.random.default_rng(derive_subseed(train_seed, "batch-order"))
        step = 0
        for _epoch in range(cfg.epochs):
            perm = order_rng.permutation(len(self.train_ids))
            for lo in range(0, len(perm), cfg.batch_size):
                chosen = perm[lo:lo + cfg.batch_size]
                xs = []
                for idx in chosen:
                    image_id = self.train_ids[idx]
                    self.served_ids.add(image_id)
                    aug_rng = np.random.default_rng(
                        derive_subseed(train_seed, f"aug:{step}:{image_id}"))
                    if self.pipeline != PIPELINE_NONE and aug_rng.random() < cfg.aug_probability:
                        sub_seed = int(aug_rng.integers(0, 2**63))
                        degraded, _ = apply_pipeline(
                            to_float(self.images[image_id]), self.pipeline, sub_seed,
                            image_id=image_id)
                        xs.append(pool_input(degraded))
                    else:
                        xs.append(self.pooled_cache[image_id])
                yield step, np.stack(xs), self.labels[chosen]
                step += 1


def _normalize_rows(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.maximum(np.linalg.norm(mat, axis=1, keepdims=True), 1e-12)
    return mat / norms, norms


def train_embedder(images, manifest, assignment: SplitAssignment, pipeline: str,
                   config: BenchConfig, info_out: dict | None = None,
                   pooled_cache=None) -> TinyEmbedder:
    """SGD on the margin loss over seen-identity classes; deterministic per seed."""
    if pipeline not in TRAIN_PIPELINES:
        raise ParameterError(f"unknown training pipeline {pipeline!r}")
    loader = TrainingLoader(images, manifest, assignment, pipeline, config, pooled_cache)
    train_seed = derive_subseed(config.master_seed, f"train:{pipeline}")
    model = init_embedder(derive_subseed(train_seed, "init"),
                          config.hidden_dim, config.embed_dim)
    rng = np.random.default_rng(derive_subseed(train_seed, "classifier"))
    classifier = rng.normal(0.0, 1.0 / math.sqrt(config.embed_dim),
                            size=(len(loader.classes), config.embed_dim))
    params = LossParams()
    state = CurricularState(ema_momentum=config.ema_momentum)
    velocity = {name: 0.0 for name in ("w1", "b1", "w2", "b2", "cls")}
    total_steps = loader.n_steps()
    lr0 = config.learning_rate
    loss_trace = []
    for step, pooled, labels in loader.batches(train_seed):
        hidden = np.tanh(pooled @ model.w1 + model.b1)
        z = hidden @ model.w2 + model.b2
        e, z_norms = _normalize_rows(z)
        v_hat, v_norms = _normalize_rows(classifier)
        cosines = np.clip(e @ v_hat.T, -1.0, 1.0)
        batch = CosineBatch(cosines=cosines, labels=labels)
        grad_cos = curricular_grad(batch, params, state)  # uses this step's t
        loss, state = curricular_forward(batch, params, state)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}")
        loss_trace.append(loss)
        # back through the two unit-normalizations
        de = grad_cos @ v_hat
        dz = (de - (de * e).sum(axis=1, keepdims=True) * e) / z_norms
        dv_hat = grad_cos.T @ e
        dcls = (dv_hat - (dv_hat * v_hat).sum(axis=1, keepdims=True) * v_hat) / v_norms
        dw2 = hidden.T @ dz
        db2 = dz.sum(axis=0)
        dh = (dz @ model.w2.T) * (1.0 - hidden * hidden)
        dw1 = pooled.T @ dh
        db1 = dh.sum(axis=0)
        # linear warmup guards against the blown-up margin gradient near
        # collapsed inits, then the usual cosine decay with a small floor
        warmup = max(1, total_steps // 20)
        ramp = min(1.0, (step + 1) / warmup)
        lr = lr0 * ramp * (0.01 + 0.99 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps)))
        for name, param, grad in (("w1", model.w1, dw1), ("b1", model.b1, db1),
                                  ("w2", model.w2, dw2), ("b2", model.b2, db2),
                                  ("cls", classifier, dcls)):
            velocity[name] = config.momentum * velocity[name] - lr * grad
            param += velocity[name]
    if info_out is not None:
        info_out["served_ids"] = set(loader.served_ids)
        info_out["loss_trace"] = loss_trace
        info_out["classes"] = list(loader.classes)
        info_out["final_t"] = state.t
    return model


@dataclass
class GridReport:
    master_seed: int
    config: dict
    records: list = field(default_factory=list)

    def lookup(self, train_pipeline: str, query_condition: str, stratum: str) -> dict:
        for rec in self.records:
            if (rec["train_pipeline"] == train_pipeline
                    and rec["query_condition"] == query_condition
                    and rec["stratum"] == stratum):
                return rec
        raise KeyError((train_pipeline, query_condition, stratum))

    def to_dict(self) -> dict:
        return {"master_seed": self.master_seed, "config": self.config,
                "records": self.records}

    @classmethod
    def from_dict(cls, data: dict) -> "GridReport":
        return cls(master_seed=data["master_seed"], config=data.get("config", {}),
                   records=list(data["records"]))


def write_grid_report(path, report: GridReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_grid_report(path) -> GridReport:
    with open(path, "r", encoding="utf-8") as fh:
        return GridReport.from_dict(json.load(fh))


def _degrade_queries(images, query_ids, condition: str, seed: int) -> dict:
    if condition == PIPELINE_NONE:
        return {image_id: to_float(images[image_id]) for image_id in query_ids}
    out = {}
    for image_id in query_ids:
        sub_seed = derive_subseed(seed, image_id)
        degraded, _ = apply_pipeline(to_float(images[image_id]), condition, sub_seed,
                                     image_id=image_id)
        out[image_id] = degraded
    return out


def run_experiment_grid(config: BenchConfig) -> GridReport:
    """Train per-pipeline embedders and evaluate every query condition."""
    images, manifest = generate_dataset(config.master_seed, config.n_identities,
                                        config.images_per_identity)
    split_cfg = SplitConfig(seed=derive_subseed(config.master_seed, "split"),
                            unseen_id_fraction=config.unseen_fraction)
    assignment = split_dataset(manifest, split_cfg)
    report_check = validate_split(assignment, manifest)
    if not report_check.ok:
        raise TrainingError(f"invalid split: {report_check.violations[:3]}")
    identity_of = {r.image_id: r.identity_id for r in manifest}
    db_ids = assignment.database_image_ids()
    query_ids = assignment.images_with_role(ROLE_QUERY)
    manifest_by_id = {r.image_id: r for r in manifest}
    pooled_cache: dict = {}
    report = GridReport(master_seed=config.master_seed,
                        config={k: (list(v) if isinstance(v, tuple) else v)
                                for k, v in asdict(config).items()})
    train_role_ids = {
        image_id for image_id, role in assignment.role_of.items()
        if role == ROLE_TRAIN_DB}

    def pooled_clean(image_id: str) -> np.ndarray:
        if image_id not in pooled_cache:
            pooled_cache[image_id] = pool_input(images[image_id])
        return pooled_cache[image_id]

    for pipeline in config.pipelines:
        info: dict = {}
        model = train_embedder(images, manifest, assignment, pipeline, config,
                               info_out=info, pooled_cache=pooled_cache)
        if not info["served_ids"] <= train_role_ids:
            raise TrainingError("training loader served non-training images")
        # database embeddings always come from the original, clean images
        db_pooled = np.stack([pooled_clean(i) for i in db_ids])
        db_emb = EmbeddingMatrix(ids=list(db_ids),
                                 vectors=model.embed_pooled(db_pooled).astype(np.float32))
        for condition in config.query_conditions:
            cond_seed = derive_subseed(config.master_seed, f"querydeg:{condition}")
            degraded = _degrade_queries(images, query_ids, condition, cond_seed)
            q_pooled = np.stack([pool_input(degraded[i]) for i in query_ids])
            q_emb = EmbeddingMatrix(ids=list(query_ids),
                                    vectors=model.embed_pooled(q_pooled).astype(np.float32))
            results = search(q_emb, db_emb)
            metrics = stratified_report(
                results, [manifest_by_id[i] for i in set(query_ids) | set(db_ids)],
                assignment=assignment, ks=GRID_KS, strata_keys=("group",))
            blocks = {"overall": {"n_queries": metrics.n_queries,
                                  "rank_k": {str(k): metrics.rank_k[k] for k in metrics.ks},
                                  "map": metrics.map}}
            for group in (GROUP_SEEN, GROUP_UNSEEN):
                if group in metrics.strata.get("group", {}):
                    blocks[group] = metrics.strata["group"][group]
            for stratum, block in blocks.items():
                report.records.append({
                    "train_pipeline": pipeline,
                    "query_condition": condition,
                    "stratum": stratum,
                    "n_queries": block["n_queries"],
                    "rank_k": block["rank_k"],
                    "map": block["map"],
                })
    return report
