"""Pipeline stages wiring the modules together over file artifacts.

Every stage reads its declared inputs, writes its artifacts atomically
(temp file + rename), and is deterministic for a fixed config seed. The
global seed is fanned out to the seeded components with fixed offsets so
one config value reproduces the whole run.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import adversarial, classifier, ensemble, graphir, opcode_embed, sif, struct2vec
from ._jsonutil import fmt_float, fmt_float_list, fmt_str
from .errors import ConfigError, GraphShieldError, ParseError

# Seed offsets per seeded component.
SEED_SYNTH = 0
SEED_EMBED_BYTECODE = 1
SEED_S2V = 2
SEED_CLF_BYTECODE = 3
SEED_CLF_NATIVE = 4
SEED_SPLIT = 5
SEED_FUSE_WEIGHTS = 6
SEED_EMBED_NATIVE = 7

THREADS_ENV = "GRAPHSHIELD_THREADS"


class MissingInputError(GraphShieldError):
    """A required input artifact does not exist."""


@dataclass(frozen=True)
class PipelinePaths:
    corpus_dir: Path
    manifest: Path
    model_dir: Path
    report_dir: Path

    @staticmethod
    def under(root: Path) -> "PipelinePaths":
        root = Path(root)
        return PipelinePaths(
            corpus_dir=root / "corpus",
            manifest=root / "corpus" / "manifest.json",
            model_dir=root / "models",
            report_dir=root / "reports",
        )


@dataclass(frozen=True)
class SynthSpec:
    bytecode_per_class: int = 200
    native_per_class: int = 100
    min_nodes: int = 10
    max_nodes: int = 40
    native_min_nodes: int = 8
    native_max_nodes: int = 30
    # malware fraction of each layer's corpus; 0.5 keeps the per-class
    # counts as given, 0.10 yields the 10/90 imbalanced option
    class_ratio: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.class_ratio < 1.0:
            raise ConfigError(f"class_ratio must be in (0, 1), got {self.class_ratio}")

    def layer_counts(self, per_class: int) -> dict[str, int]:
        total = 2 * per_class
        malware = min(max(int(total * self.class_ratio + 0.5), 1), total - 1)
        return {"malware": malware, "benign": total - malware}


@dataclass(frozen=True)
class PipelineConfig:
    paths: PipelinePaths
    seed: int = 42
    synth: SynthSpec = field(default_factory=SynthSpec)
    skipgram: opcode_embed.SkipGramConfig = field(default_factory=opcode_embed.SkipGramConfig)
    sif_alpha: float = 1e-3
    s2v_T: int = 4
    s2v_sigma: str = "relu"
    s2v_readout: str = "last"
    train: classifier.TrainConfig = field(default_factory=classifier.TrainConfig)
    ensemble_mode: str = "logic_gate"
    attack: adversarial.AttackConfig = field(default_factory=adversarial.AttackConfig)


def config_from_json(data: bytes, base_dir: Path) -> PipelineConfig:
    """Build a config from JSON; relative paths resolve against ``base_dir``."""
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"invalid config: {exc}") from exc

    def resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(base_dir) / path

    if "paths" not in raw:
        raise ParseError("config must name its paths")
    p = raw["paths"]
    try:
        paths = PipelinePaths(corpus_dir=resolve(p["corpus_dir"]), manifest=resolve(p["manifest"]),
                              model_dir=resolve(p["model_dir"]), report_dir=resolve(p["report_dir"]))
    except KeyError as exc:
        raise ParseError(f"config paths missing {exc}") from exc

    try:
        synth = SynthSpec(**raw.get("synth", {}))
    except TypeError as exc:
        raise ParseError(f"bad synth config: {exc}") from exc
    sg = raw.get("skipgram", {})
    skipgram = opcode_embed.SkipGramConfig(
        negatives_k=int(sg.get("negatives_k", 5)),
        learning_rate=float(sg.get("learning_rate", 0.025)),
        epochs=int(sg.get("epochs", 5)),
    )
    s2v = raw.get("s2v", {})
    tr = raw.get("train", {})
    train = classifier.TrainConfig(
        epochs=int(tr.get("epochs", 30)),
        batch_size=int(tr.get("batch_size", 1)),
        split=float(tr.get("split", 0.70)),
        learning_rate=float(tr.get("learning_rate", 0.01)),
        l2_delta=float(tr.get("l2_delta", 0.0)),
        hidden=tuple(tr.get("hidden", (32, 16))),
    )
    at = raw.get("attack", {})
    attack = adversarial.AttackConfig(
        epsilon=float(at.get("epsilon", 0.05)),
        subset_sizes=tuple(at.get("subset_sizes", adversarial.DEFAULT_SUBSET_SIZES)),
    )
    return PipelineConfig(
        paths=paths, seed=int(raw.get("seed", 42)), synth=synth, skipgram=skipgram,
        sif_alpha=float(raw.get("sif", {}).get("alpha", 1e-3)),
        s2v_T=int(s2v.get("T", 4)), s2v_sigma=s2v.get("sigma", "relu"),
        s2v_readout=s2v.get("readout", "last"),
        train=train, ensemble_mode=raw.get("ensemble_mode", "logic_gate"), attack=attack,
    )


def atomic_write(path: Path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _parallel_map(fn, items):
    workers = thread_count()
    if workers == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _require_file(path: Path, what: str) -> Path:
    if not Path(path).is_file():
        raise MissingInputError(f"{what} not found: {path}")
    return Path(path)


def _load_manifest(cfg: PipelineConfig) -> graphir.DatasetManifest:
    path = _require_file(cfg.paths.manifest, "manifest")
    return graphir.manifest_from_json(path.read_bytes())


def _doc_path(cfg: PipelineConfig, rel: str) -> Path:
    return Path(cfg.paths.manifest).parent / rel


# ---------------------------------------------------------------- synth

def run_synth(cfg: PipelineConfig) -> list[Path]:
    """Generate the synthetic corpus and a manifest with a materialized split."""
    spec = cfg.synth
    corpus_dir = Path(cfg.paths.corpus_dir)
    rng = np.random.default_rng(cfg.seed + SEED_SYNTH)
    written = []

    def gen_layer(layer, per_class, lo, hi):
        docs = []
        counts = spec.layer_counts(per_class)
        for label in ("malware", "benign"):
            for i in range(counts[label]):
                n_nodes = int(rng.integers(lo, hi + 1))
                seed = int(rng.integers(0, 2**31 - 1))
                doc = graphir.synth_generate(label, n_nodes, seed, layer=layer)
                rel = f"{layer}/{doc.graph_id}.json"
                atomic_write(corpus_dir / rel, graphir.serialize_graph_doc(doc))
                written.append(corpus_dir / rel)
                docs.append((rel, doc))
        return docs

    bytecode = gen_layer("bytecode", spec.bytecode_per_class, spec.min_nodes, spec.max_nodes)
    native = gen_layer("native", spec.native_per_class, spec.native_min_nodes, spec.native_max_nodes)

    # stratified 70/30 split over apps (one app per bytecode document)
    split_rng = np.random.default_rng(cfg.seed + SEED_SPLIT)
    split_of: dict[str, str] = {}
    for label in ("malware", "benign"):
        apps = [doc.graph_id for _, doc in bytecode if doc.label == label]
        order = split_rng.permutation(len(apps))
        n_train = min(max(int(len(apps) * cfg.train.split + 0.5), 1), len(apps) - 1) if len(apps) > 1 else len(apps)
        for rank, idx in enumerate(order):
            split_of[apps[idx]] = "train" if rank < n_train else "test"

    entries = tuple(
        graphir.ManifestEntry(path=rel, label=doc.label, split=split_of[doc.graph_id], app_id=doc.graph_id)
        for rel, doc in bytecode
    )
    native_links: dict[str, list[str]] = {}
    for label in ("malware", "benign"):
        apps = [doc.graph_id for _, doc in bytecode if doc.label == label]
        layer_docs = [(rel, doc) for rel, doc in native if doc.label == label]
        for j, (rel, doc) in enumerate(layer_docs):
            app = apps[j % len(apps)]
            native_links.setdefault(app, []).append(rel)

    counts = spec.layer_counts(spec.bytecode_per_class)
    manifest = graphir.DatasetManifest(
        entries=entries,
        native_links={k: tuple(v) for k, v in native_links.items()},
        class_ratio=counts["malware"] / (counts["malware"] + counts["benign"]),
        split_ratio=cfg.train.split,
    )
    atomic_write(cfg.paths.manifest, graphir.manifest_to_json(manifest))
    written.append(Path(cfg.paths.manifest))
    return written


# ------------------------------------------------------------- validate

def run_validate(cfg: PipelineConfig) -> tuple[Path, list[str]]:
    """Check every manifest path: exists, parses, zero violations."""
    manifest = _load_manifest(cfg)
    problems: list[str] = []
    paths = [(e.path, e.label) for e in manifest.entries]
    for links in manifest.native_links.values():
        paths.extend((p, None) for p in links)
    for rel, label in paths:
        full = _doc_path(cfg, rel)
        if not full.is_file():
            problems.append(f"missing file: {rel}")
            continue
        try:
            doc = graphir.parse_graph_doc(full.read_bytes())
        except GraphShieldError as exc:
            problems.append(f"{rel}: {exc}")
            continue
        if label is not None and doc.label != label:
            problems.append(f"{rel}: manifest label {label} != document label {doc.label}")
    report = {
        "checked": len(paths),
        "problems": problems,
        "status": "ok" if not problems else "invalid",
    }
    out = Path(cfg.paths.report_dir) / "validate.json"
    atomic_write(out, json.dumps(report, indent=1, sort_keys=True).encode())
    return out, problems


# ----------------------------------------------------------- train-embed

def _split_docs(cfg: PipelineConfig, manifest: graphir.DatasetManifest):
    """Load all documents; returns (bytecode_entries, native_entries) where
    each element is (doc, app_id, split)."""
    bytecode = []
    for e in manifest.entries:
        doc = graphir.parse_graph_doc(_require_file(_doc_path(cfg, e.path), "graph document").read_bytes())
        bytecode.append((doc, e.app_id, e.split))
    split_of_app = {e.app_id: e.split for e in manifest.entries}
    native = []
    for app_id in sorted(manifest.native_links):
        for rel in manifest.native_links[app_id]:
            doc = graphir.parse_graph_doc(_require_file(_doc_path(cfg, rel), "graph document").read_bytes())
            native.append((doc, app_id, split_of_app.get(app_id, "train")))
    return bytecode, native


def run_train_embed(cfg: PipelineConfig) -> list[Path]:
    """Train both layers' token embeddings, the SIF model, and sample the
    frozen propagation weights; training-split documents only."""
    manifest = _load_manifest(cfg)
    bytecode, native = _split_docs(cfg, manifest)
    model_dir = Path(cfg.paths.model_dir)
    written = []

    bytecode_corpus = [list(n.opcodes) for doc, _, split in bytecode if split == "train"
                       for n in doc.nodes if n.opcodes]
    table_b = opcode_embed.train_skipgram(
        bytecode_corpus, replace(cfg.skipgram, seed=cfg.seed + SEED_EMBED_BYTECODE))
    atomic_write(model_dir / "embedding_bytecode.json", opcode_embed.table_to_json(table_b))
    written.append(model_dir / "embedding_bytecode.json")

    native_corpus = [list(n.opcodes) for doc, _, split in native if split == "train"
                     for n in doc.nodes if n.opcodes]
    table_n = opcode_embed.train_skipgram(
        native_corpus, replace(cfg.skipgram, seed=cfg.seed + SEED_EMBED_NATIVE))
    atomic_write(model_dir / "embedding_native.json", opcode_embed.table_to_json(table_n))
    written.append(model_dir / "embedding_native.json")

    freq = sif.build_frequency_table(native_corpus)
    sif_cfg = sif.SIFConfig(alpha=cfg.sif_alpha)
    functions = []
    for doc, _, split in native:
        if split != "train":
            continue
        for n in doc.nodes:
            if n.opcodes:
                vectors = table_n.input_vectors[[table_n.vocab.index_of(t) for t in n.opcodes]]
                functions.append((f"{doc.graph_id}/{n.id}", list(n.opcodes), vectors))
    sif_model = sif.fit_sif_model(functions, freq, sif_cfg)
    atomic_write(model_dir / "sif_model.json", sif.sif_model_to_json(sif_model))
    written.append(model_dir / "sif_model.json")

    s2v_params = struct2vec.sample_params(cfg.seed + SEED_S2V, T=cfg.s2v_T,
                                          sigma=cfg.s2v_sigma, readout=cfg.s2v_readout)
    atomic_write(model_dir / "s2v_params.json", struct2vec.params_to_json(s2v_params))
    written.append(model_dir / "s2v_params.json")
    return written


# ----------------------------------------------------------- embed-graphs

@dataclass(frozen=True)
class EmbeddingRecord:
    graph_id: str
    app_id: str
    label: str
    split: str
    vector: np.ndarray


def _records_to_json(layer: str, records: list[EmbeddingRecord]) -> bytes:
    chunks = [
        f'{{"graph_id": {fmt_str(r.graph_id)}, "app_id": {fmt_str(r.app_id)}, '
        f'"label": {fmt_str(r.label)}, "split": {fmt_str(r.split)}, '
        f'"vector": {fmt_float_list(r.vector)}}}'
        for r in records
    ]
    return (f'{{"layer": {fmt_str(layer)}, "records": [{", ".join(chunks)}]}}').encode("utf-8")


def _records_from_json(data: bytes) -> list[EmbeddingRecord]:
    raw = json.loads(data.decode("utf-8"))
    return [EmbeddingRecord(graph_id=r["graph_id"], app_id=r["app_id"], label=r["label"],
                            split=r["split"], vector=np.asarray(r["vector"], dtype=np.float64))
            for r in raw["records"]]


def _node_features_bytecode(doc, table):
    feats = []
    for n in doc.nodes:
        if n.feature is not None:
            feats.append(np.asarray(n.feature, dtype=np.float64))
        else:
            feats.append(opcode_embed.block_embedding(table, list(n.opcodes)))
    return np.stack(feats)


def _node_features_native(doc, table, sif_model):
    feats = []
    for n in doc.nodes:
        if n.feature is not None:
            feats.append(np.asarray(n.feature, dtype=np.float64))
        else:
            vectors = table.input_vectors[[table.vocab.index_of(t) for t in n.opcodes]]
            feats.append(sif_model.transform(list(n.opcodes), vectors))
    return np.stack(feats)


def run_embed_graphs(cfg: PipelineConfig) -> list[Path]:
    """Embed every document of both layers into one 64-dim vector each."""
    manifest = _load_manifest(cfg)
    bytecode, native = _split_docs(cfg, manifest)
    model_dir = Path(cfg.paths.model_dir)
    table_b = opcode_embed.table_from_json(
        _require_file(model_dir / "embedding_bytecode.json", "bytecode embedding table").read_bytes())
    table_n = opcode_embed.table_from_json(
        _require_file(model_dir / "embedding_native.json", "native embedding table").read_bytes())
    sif_model = sif.sif_model_from_json(
        _require_file(model_dir / "sif_model.json", "SIF model").read_bytes())
    s2v_params = struct2vec.params_from_json(
        _require_file(model_dir / "s2v_params.json", "propagation params").read_bytes())

    def embed_bytecode(item):
        doc, app_id, split = item
        feats = _node_features_bytecode(doc, table_b)
        vec = struct2vec.embed_graph(feats, graphir.build_adjacency(doc), s2v_params)
        return EmbeddingRecord(doc.graph_id, app_id, doc.label, split, vec)

    def embed_native(item):
        doc, app_id, split = item
        feats = _node_features_native(doc, table_n, sif_model)
        vec = struct2vec.embed_graph(feats, graphir.build_adjacency(doc), s2v_params)
        return EmbeddingRecord(doc.graph_id, app_id, doc.label, split, vec)

    recs_b = sorted(_parallel_map(embed_bytecode, bytecode), key=lambda r: r.graph_id)
    recs_n = sorted(_parallel_map(embed_native, native), key=lambda r: r.graph_id)
    written = []
    for layer, recs in (("bytecode", recs_b), ("native", recs_n)):
        out = model_dir / f"embeddings_{layer}.json"
        atomic_write(out, _records_to_json(layer, recs))
        written.append(out)
    return written


# ------------------------------------------------------------- train-clf

def _load_records(cfg: PipelineConfig, layer: str) -> list[EmbeddingRecord]:
    path = _require_file(Path(cfg.paths.model_dir) / f"embeddings_{layer}.json",
                         f"{layer} embeddings")
    return _records_from_json(path.read_bytes())


def run_train_clf(cfg: PipelineConfig) -> list[Path]:
    """Train one verdict network per layer on the training split; when the
    weighted ensemble is configured, fit the fusion weights as well."""
    model_dir = Path(cfg.paths.model_dir)
    written = []
    models = {}
    for layer, seed_offset in (("bytecode", SEED_CLF_BYTECODE), ("native", SEED_CLF_NATIVE)):
        records = [r for r in _load_records(cfg, layer) if r.split == "train"]
        dataset = [(r.vector, r.label) for r in records]
        params = classifier.train_classifier(dataset, replace(cfg.train, seed=cfg.seed + seed_offset))
        models[layer] = params
        out = model_dir / f"clf_{layer}.json"
        atomic_write(out, classifier.params_to_json(params))
        written.append(out)

    if cfg.ensemble_mode == "weighted":
        rows = _fusion_rows(cfg, models["bytecode"], models["native"], split="train")
        triples = [(s_b, s_n, label) for s_b, s_n, label, has_native, _, _ in rows if has_native]
        weights = ensemble.train_weights(triples, seed=cfg.seed + SEED_FUSE_WEIGHTS)
        out = model_dir / "ensemble_weights.json"
        atomic_write(out, ensemble.weights_to_json(weights))
        written.append(out)
    return written


def _fusion_rows(cfg: PipelineConfig, params_b, params_n, split: str):
    """(s_b, s_n_max, label, has_native, app_id) per app in the split."""
    recs_b = [r for r in _load_records(cfg, "bytecode") if r.split == split]
    recs_n = [r for r in _load_records(cfg, "native") if r.split == split]
    native_of: dict[str, list[float]] = {}
    for r in recs_n:
        native_of.setdefault(r.app_id, []).append(classifier.predict(params_n, r.vector)[1])
    rows = []
    for r in recs_b:
        s_b = classifier.predict(params_b, r.vector)[1]
        natives = native_of.get(r.app_id, [])
        s_n = ensemble.aggregate_native_score(natives) if natives else 0.0
        rows.append((s_b, s_n, r.label, bool(natives), r.app_id, natives))
    return rows


# -------------------------------------------------------------- evaluate

def run_evaluate(cfg: PipelineConfig) -> list[Path]:
    """Held-out metrics and ROC data per layer."""
    model_dir = Path(cfg.paths.model_dir)
    report_dir = Path(cfg.paths.report_dir)
    written = []
    for layer in ("bytecode", "native"):
        params = classifier.params_from_json(
            _require_file(model_dir / f"clf_{layer}.json", f"{layer} model").read_bytes())
        records = [r for r in _load_records(cfg, layer) if r.split == "test"]
        testset = [(r.vector, r.label) for r in records]
        metrics = classifier.evaluate(params, testset)
        out = report_dir / f"metrics_{layer}.json"
        atomic_write(out, classifier.metrics_to_json(metrics))
        written.append(out)
        if metrics.roc_points is not None:
            roc_out = report_dir / f"roc_{layer}.csv"
            atomic_write(roc_out, classifier.roc_to_csv(metrics.roc_points).encode())
            written.append(roc_out)
    return written


# ------------------------------------------------------------------ fuse

def run_fuse(cfg: PipelineConfig) -> list[Path]:
    """Per-app fusion over the test split; verdicts plus ensemble metrics."""
    model_dir = Path(cfg.paths.model_dir)
    report_dir = Path(cfg.paths.report_dir)
    params_b = classifier.params_from_json(
        _require_file(model_dir / "clf_bytecode.json", "bytecode model").read_bytes())
    params_n = classifier.params_from_json(
        _require_file(model_dir / "clf_native.json", "native model").read_bytes())
    weights = None
    if cfg.ensemble_mode == "weighted":
        weights = ensemble.weights_from_json(
            _require_file(model_dir / "ensemble_weights.json", "ensemble weights").read_bytes())

    rows = _fusion_rows(cfg, params_b, params_n, split="test")
    verdicts, labels = [], []
    for s_b, _, label, _, app_id, natives in rows:
        verdict = ensemble.fuse_app(app_id, s_b, natives, mode=cfg.ensemble_mode, weights=weights)
        verdicts.append(verdict)
        labels.append(label)

    lines = "\n".join(ensemble.verdict_to_json_line(v) for v in verdicts) + "\n"
    out_v = report_dir / "verdicts.jsonl"
    atomic_write(out_v, lines.encode())

    metrics = classifier.compute_metrics([v.final for v in verdicts], labels)
    payload = classifier.metrics_to_json(metrics).decode()
    payload = payload[:-1] + f', "mode": {fmt_str(cfg.ensemble_mode)}}}'
    out_m = report_dir / "ensemble_metrics.json"
    atomic_write(out_m, payload.encode())
    return [out_v, out_m]


# ---------------------------------------------------------------- attack

def run_attack(cfg: PipelineConfig) -> list[Path]:
    """Robustness of the bytecode classifier on the test split."""
    model_dir = Path(cfg.paths.model_dir)
    params = classifier.params_from_json(
        _require_file(model_dir / "clf_bytecode.json", "bytecode model").read_bytes())
    records = [r for r in _load_records(cfg, "bytecode") if r.split == "test"]
    testset = [(r.vector, r.label) for r in records]
    report = adversarial.robustness_eval(params, testset, cfg.attack)
    out = Path(cfg.paths.report_dir) / "robustness.json"
    atomic_write(out, adversarial.report_to_json(report))
    return [out]


# ---------------------------------------------------------------- report

def run_report(cfg: PipelineConfig) -> list[Path]:
    """Aggregate the per-layer, ensemble, and robustness reports."""
    report_dir = Path(cfg.paths.report_dir)
    parts = []
    for name, key in (("metrics_bytecode.json", "bytecode"), ("metrics_native.json", "native"),
                      ("ensemble_metrics.json", "ensemble")):
        path = _require_file(report_dir / name, name)
        parts.append(f'{fmt_str(key)}: {path.read_text()}')
    robustness = report_dir / "robustness.json"
    if robustness.is_file():
        parts.append(f'"robustness": {robustness.read_text()}')
    payload = "{" + ", ".join(parts) + "}"
    out = report_dir / "summary.json"
    atomic_write(out, payload.encode())
    return [out]
