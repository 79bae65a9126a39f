"""Graph interchange format: parse, serialize, validate, adjacency, synthesis.

A :class:`GraphDoc` carries one program graph per document: basic-block
nodes for the bytecode layer (program dependence graphs) or function
nodes for the native layer (function call graphs). Nodes hold either an
opcode token sequence or a precomputed 64-dim feature vector; when both
are present the feature vector wins downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._jsonutil import fmt_float, fmt_float_list, fmt_str
from .errors import ParseError, RangeError, ValidationError

NODE_CAP = 90_000
FEATURE_DIM = 64

LAYERS = ("bytecode", "native")
LABELS = ("malware", "benign", "unknown")
NODE_KINDS = ("basic_block", "function")


@dataclass(frozen=True)
class GraphNode:
    id: str
    kind: str
    class_desc: str = ""
    method_desc: str = ""
    opcodes: tuple[str, ...] = ()
    feature: tuple[float, ...] | None = None


@dataclass(frozen=True)
class GraphDoc:
    """One program graph. Node and edge order is canonicalized (sorted) at
    construction so that documents with identical content compare equal."""

    graph_id: str
    layer: str
    label: str
    nodes: tuple[GraphNode, ...]
    edges: tuple[tuple[str, str], ...]
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.id)))
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))

    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Square binary adjacency, row = edge source, stored as index pairs."""

    n: int
    entries: tuple[tuple[int, int], ...]
    node_order: tuple[str, ...]

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n, self.n), dtype=np.float64)
        for i, j in self.entries:
            dense[i, j] = 1.0
        return dense


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    split: str  # train | test
    app_id: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    native_links: dict[str, tuple[str, ...]] = field(default_factory=dict)
    class_ratio: float = 0.5
    split_ratio: float = 0.70

    def __post_init__(self):
        paths = [e.path for e in self.entries]
        for links in self.native_links.values():
            paths.extend(links)
        if len(set(paths)) != len(paths):
            raise ValidationError([Violation("duplicate-path", "manifest", "paths must be distinct")])
        if not 0.0 < self.split_ratio < 1.0:
            raise ValidationError([Violation("bad-split-ratio", "manifest", f"split_ratio {self.split_ratio} outside (0,1)")])
        if not 0.0 < self.class_ratio < 1.0:
            raise ValidationError([Violation("bad-class-ratio", "manifest", f"class_ratio {self.class_ratio} outside (0,1)")])


@dataclass(frozen=True)
class Violation:
    rule: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.rule}({self.subject}): {self.message}"


def validate_graph(doc: GraphDoc) -> list[Violation]:
    """Return every invariant violation in ``doc``; empty list iff valid."""
    out: list[Violation] = []
    if not doc.graph_id:
        out.append(Violation("empty-graph-id", "<doc>", "graph_id must be nonempty"))
    if doc.layer not in LAYERS:
        out.append(Violation("bad-layer", doc.layer, f"layer must be one of {LAYERS}"))
    if doc.label not in LABELS:
        out.append(Violation("bad-label", doc.label, f"label must be one of {LABELS}"))
    if len(doc.nodes) == 0:
        out.append(Violation("empty-graph", doc.graph_id, "document must contain at least one node"))
    if len(doc.nodes) > NODE_CAP:
        out.append(Violation("node-cap", doc.graph_id, f"node cap exceeded: {len(doc.nodes)} > {NODE_CAP}"))

    seen: set[str] = set()
    for node in doc.nodes:
        if not node.id:
            out.append(Violation("empty-node-id", "<node>", "node id must be nonempty"))
            continue
        if node.id in seen:
            out.append(Violation("duplicate-node-id", node.id, f"duplicate node id {node.id!r}"))
        seen.add(node.id)
        if node.kind not in NODE_KINDS:
            out.append(Violation("bad-kind", node.id, f"kind must be one of {NODE_KINDS}, got {node.kind!r}"))
        if not node.opcodes and node.feature is None:
            out.append(Violation("node-without-content", node.id, "node has neither opcodes nor a feature vector"))
        if node.feature is not None:
            if len(node.feature) != FEATURE_DIM:
                out.append(Violation("bad-feature", node.id, f"feature must have {FEATURE_DIM} entries, got {len(node.feature)}"))
            elif not all(np.isfinite(v) for v in node.feature):
                out.append(Violation("bad-feature", node.id, "feature entries must be finite"))

    seen_edges: set[tuple[str, str]] = set()
    for src, dst in doc.edges:
        for endpoint in (src, dst):
            if endpoint not in seen:
                out.append(Violation("unknown-endpoint", endpoint, f"unknown endpoint {endpoint!r}"))
        if (src, dst) in seen_edges:
            out.append(Violation("duplicate-edge", f"{src}->{dst}", f"duplicate edge ({src!r}, {dst!r})"))
        seen_edges.add((src, dst))
    return out


def _require(cond: bool, message: str):
    if not cond:
        raise ParseError(message)


_DOC_KEYS = {"graph_id", "layer", "label", "nodes", "edges", "meta"}
_NODE_KEYS = {"id", "kind", "class_desc", "method_desc", "opcodes", "feature"}


def parse_graph_doc(data: bytes) -> GraphDoc:
    """Parse the JSON wire format into a validated :class:`GraphDoc`.

    Raises :class:`ParseError` (with byte offset where available) on
    malformed input and :class:`ValidationError` listing all invariant
    violations otherwise.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"invalid UTF-8: {exc.reason}", offset=exc.start) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", offset=exc.pos) from exc

    _require(isinstance(raw, dict), "top-level value must be an object")
    unknown = set(raw) - _DOC_KEYS
    _require(not unknown, f"unknown document fields: {sorted(unknown)}")
    missing = _DOC_KEYS - set(raw)
    _require(not missing, f"missing document fields: {sorted(missing)}")
    _require(isinstance(raw["graph_id"], str), "graph_id must be a string")
    _require(isinstance(raw["layer"], str), "layer must be a string")
    _require(isinstance(raw["label"], str), "label must be a string")
    _require(isinstance(raw["nodes"], list), "nodes must be a list")
    _require(isinstance(raw["edges"], list), "edges must be a list")
    _require(isinstance(raw["meta"], dict), "meta must be an object")

    nodes = []
    for idx, rn in enumerate(raw["nodes"]):
        _require(isinstance(rn, dict), f"nodes[{idx}] must be an object")
        unknown = set(rn) - _NODE_KEYS
        _require(not unknown, f"nodes[{idx}] has unknown fields: {sorted(unknown)}")
        missing = {"id", "kind", "class_desc", "method_desc", "opcodes"} - set(rn)
        _require(not missing, f"nodes[{idx}] missing fields: {sorted(missing)}")
        _require(isinstance(rn["id"], str), f"nodes[{idx}].id must be a string")
        _require(isinstance(rn["kind"], str), f"nodes[{idx}].kind must be a string")
        _require(isinstance(rn["class_desc"], str), f"nodes[{idx}].class_desc must be a string")
        _require(isinstance(rn["method_desc"], str), f"nodes[{idx}].method_desc must be a string")
        _require(isinstance(rn["opcodes"], list) and all(isinstance(t, str) for t in rn["opcodes"]),
                 f"nodes[{idx}].opcodes must be a list of strings")
        feature = None
        if "feature" in rn:
            rf = rn["feature"]
            _require(isinstance(rf, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in rf),
                     f"nodes[{idx}].feature must be a list of numbers")
            feature = tuple(float(v) for v in rf)
        nodes.append(GraphNode(
            id=rn["id"], kind=rn["kind"], class_desc=rn["class_desc"],
            method_desc=rn["method_desc"], opcodes=tuple(rn["opcodes"]), feature=feature,
        ))

    edges = []
    for idx, re_ in enumerate(raw["edges"]):
        _require(isinstance(re_, list) and len(re_) == 2 and all(isinstance(e, str) for e in re_),
                 f"edges[{idx}] must be a [src, dst] string pair")
        edges.append((re_[0], re_[1]))

    for k, v in raw["meta"].items():
        _require(isinstance(k, str) and isinstance(v, str), "meta must map strings to strings")

    doc = GraphDoc(
        graph_id=raw["graph_id"], layer=raw["layer"], label=raw["label"],
        nodes=tuple(nodes), edges=tuple(edges), meta=dict(raw["meta"]),
    )
    violations = validate_graph(doc)
    if violations:
        raise ValidationError(violations)
    return doc


def serialize_graph_doc(doc: GraphDoc) -> bytes:
    """Serialize ``doc`` canonically: sorted nodes/edges/meta, 17-digit floats.

    The output is a pure function of document content, so an in-memory
    reordering of nodes or edges serializes to identical bytes.
    """
    violations = validate_graph(doc)
    if violations:
        raise ValidationError(violations)

    parts = ["{"]
    parts.append(f'"graph_id": {fmt_str(doc.graph_id)}, ')
    parts.append(f'"layer": {fmt_str(doc.layer)}, ')
    parts.append(f'"label": {fmt_str(doc.label)}, ')

    node_chunks = []
    for node in doc.nodes:  # already sorted by id at construction
        chunk = (
            f'{{"id": {fmt_str(node.id)}, "kind": {fmt_str(node.kind)}, '
            f'"class_desc": {fmt_str(node.class_desc)}, '
            f'"method_desc": {fmt_str(node.method_desc)}, '
            f'"opcodes": [{", ".join(fmt_str(t) for t in node.opcodes)}]'
        )
        if node.feature is not None:
            chunk += f', "feature": {fmt_float_list(node.feature)}'
        chunk += "}"
        node_chunks.append(chunk)
    parts.append(f'"nodes": [{", ".join(node_chunks)}], ')

    edge_chunks = [f"[{fmt_str(s)}, {fmt_str(d)}]" for s, d in doc.edges]
    parts.append(f'"edges": [{", ".join(edge_chunks)}], ')

    meta_chunks = [f"{fmt_str(k)}: {fmt_str(doc.meta[k])}" for k in sorted(doc.meta)]
    parts.append(f'"meta": {{{", ".join(meta_chunks)}}}')
    parts.append("}")
    return "".join(parts).encode("utf-8")


def build_adjacency(doc: GraphDoc) -> AdjacencyMatrix:
    """Binary adjacency over sorted node ids; entry (i, j) = 1 iff edge i->j."""
    order = tuple(sorted(n.id for n in doc.nodes))
    index = {nid: i for i, nid in enumerate(order)}
    entries = tuple(sorted((index[s], index[d]) for s, d in doc.edges))
    return AdjacencyMatrix(n=len(order), entries=entries, node_order=order)


# Synthetic two-class generator. The classes are separable by design:
# benign graphs are near-chains with tokens drawn from one categorical
# distribution, malware graphs add a planted dense 5-node motif and draw
# tokens from a reversed-weight distribution (total-variation distance
# between the two token distributions is about 0.57).
SYNTH_TOKENS = (
    "nop", "move", "move-wide", "const", "const-string", "goto",
    "if-eq", "if-ne", "add-int", "sub-int", "mul-int", "xor-int",
    "invoke-virtual", "invoke-static", "new-instance", "return-void",
)
_BENIGN_WEIGHTS = np.array([10, 9, 8, 8, 7, 6, 5, 4, 3, 2, 2, 1, 1, 1, 1, 1], dtype=np.float64)
SYNTH_P_BENIGN = _BENIGN_WEIGHTS / _BENIGN_WEIGHTS.sum()
SYNTH_P_MALWARE = SYNTH_P_BENIGN[::-1].copy()

_CLASS_CODE = {"benign": 0, "malware": 1}
_LAYER_CODE = {"bytecode": 0, "native": 1}
_MOTIF_SIZE = 5
_SKIP_EDGE_PROB = 0.05


def synth_generate(label: str, n_nodes: int, seed: int, layer: str = "bytecode") -> GraphDoc:
    """Deterministically generate one synthetic graph of the given class."""
    if label not in _CLASS_CODE:
        raise ValueError(f"label must be 'malware' or 'benign', got {label!r}")
    if layer not in _LAYER_CODE:
        raise ValueError(f"layer must be one of {LAYERS}, got {layer!r}")
    if not 1 <= n_nodes <= NODE_CAP:
        raise RangeError(f"n_nodes must be in [1, {NODE_CAP}], got {n_nodes}")

    rng = np.random.default_rng([seed, _CLASS_CODE[label], _LAYER_CODE[layer], n_nodes])
    p = SYNTH_P_MALWARE if label == "malware" else SYNTH_P_BENIGN
    kind = "basic_block" if layer == "bytecode" else "function"
    class_desc = "Lsynth/Generated;"
    method_desc = "run()V"

    nodes = []
    for i in range(n_nodes):
        length = int(rng.integers(3, 9))
        toks = tuple(SYNTH_TOKENS[t] for t in rng.choice(len(SYNTH_TOKENS), size=length, p=p))
        nodes.append(GraphNode(
            id=f"{class_desc}/{method_desc}/{i:05d}", kind=kind,
            class_desc=class_desc, method_desc=method_desc, opcodes=toks,
        ))
    ids = [n.id for n in nodes]

    edges: list[tuple[str, str]] = [(ids[i], ids[i + 1]) for i in range(n_nodes - 1)]
    edge_set = set(edges)

    def add(src: int, dst: int):
        e = (ids[src], ids[dst])
        if e not in edge_set:
            edge_set.add(e)
            edges.append(e)

    if label == "malware" and n_nodes >= 2:
        motif = rng.choice(n_nodes, size=min(_MOTIF_SIZE, n_nodes), replace=False)
        for a in motif:
            for b in motif:
                if a != b:
                    add(int(a), int(b))
    for i in range(n_nodes):
        if rng.random() < _SKIP_EDGE_PROB and i + 2 < n_nodes:
            add(i, int(rng.integers(i + 2, n_nodes)))

    return GraphDoc(
        graph_id=f"synth-{layer}-{label}-{seed:08d}",
        layer=layer, label=label,
        nodes=tuple(nodes), edges=tuple(edges),
        meta={"generator": "synth", "class": label, "seed": str(seed)},
    )


def manifest_to_json(manifest: DatasetManifest) -> bytes:
    parts = ['{"entries": [']
    chunks = []
    for e in manifest.entries:
        chunks.append(
            f'{{"path": {fmt_str(e.path)}, "label": {fmt_str(e.label)}, '
            f'"split": {fmt_str(e.split)}, "app_id": {fmt_str(e.app_id)}}}'
        )
    parts.append(", ".join(chunks))
    parts.append('], "native_links": {')
    links = []
    for app_id in sorted(manifest.native_links):
        paths = ", ".join(fmt_str(p) for p in manifest.native_links[app_id])
        links.append(f"{fmt_str(app_id)}: [{paths}]")
    parts.append(", ".join(links))
    parts.append(f'}}, "class_ratio": {fmt_float(manifest.class_ratio)}, ')
    parts.append(f'"split_ratio": {fmt_float(manifest.split_ratio)}}}')
    return "".join(parts).encode("utf-8")


def manifest_from_json(data: bytes) -> DatasetManifest:
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"invalid manifest: {exc}") from exc
    _require(isinstance(raw, dict) and "entries" in raw, "manifest must be an object with an entries list")
    entries = []
    for idx, re_ in enumerate(raw["entries"]):
        _require(isinstance(re_, dict), f"entries[{idx}] must be an object")
        try:
            entries.append(ManifestEntry(
                path=re_["path"], label=re_["label"], split=re_["split"], app_id=re_["app_id"],
            ))
        except KeyError as exc:
            raise ParseError(f"entries[{idx}] missing field {exc}") from exc
        if entries[-1].split not in ("train", "test"):
            raise ParseError(f"entries[{idx}].split must be 'train' or 'test'")
    native_links = {
        app: tuple(paths) for app, paths in raw.get("native_links", {}).items()
    }
    return DatasetManifest(
        entries=tuple(entries), native_links=native_links,
        class_ratio=float(raw.get("class_ratio", 0.5)),
        split_ratio=float(raw.get("split_ratio", 0.70)),
    )
