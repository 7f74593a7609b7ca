"""Citation-graph files and small synthetic graphs.

The on-disk format is the classic two-file layout used by Cora/Citeseer:

* ``<name>.content``: ``node_id <TAB> f_1 <TAB> ... <TAB> f_d <TAB> label``
* ``<name>.cites``:   ``cited_id <TAB> citing_id``

Other graphs (Amazon co-purchase, Cora-ML) can be used after conversion
to the same layout.
"""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .graph import SparseAdjacency
from .training import GraphDataset

log = logging.getLogger(__name__)


def _fields(line: str) -> list[str]:
    parts = line.rstrip("\r\n").split("\t")
    if len(parts) == 1:
        parts = line.split()
    return [p.strip() for p in parts]


def load_citation_dataset(content_path, cites_path, name: str | None = None) -> GraphDataset:
    """Read a ``.content`` / ``.cites`` pair into an undirected dataset.

    Citations are symmetrized and deduplicated; rows naming unknown nodes
    and self-citations are dropped and counted in ``dataset.info``. Class
    indices follow the first appearance of each label string.
    """
    content_path, cites_path = Path(content_path), Path(cites_path)
    ids: list[str] = []
    index: dict[str, int] = {}
    rows: list[np.ndarray] = []
    label_strings: list[str] = []
    width = None
    with content_path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = _fields(line)
            if len(parts) < 3:
                raise ParseError(content_path, lineno, "expected node id, features and label")
            node, feats, label = parts[0], parts[1:-1], parts[-1]
            if node in index:
                raise ParseError(content_path, lineno, f"duplicate node id {node!r}")
            try:
                vec = np.array([float(v) for v in feats])
            except ValueError as exc:
                raise ParseError(content_path, lineno, f"bad feature value ({exc})") from None
            if width is None:
                width = vec.size
            elif vec.size != width:
                raise ValidationError(
                    f"{content_path}:{lineno}: {vec.size} features, expected {width}"
                )
            index[node] = len(ids)
            ids.append(node)
            rows.append(vec)
            label_strings.append(label)

    class_names: list[str] = []
    class_index: dict[str, int] = {}
    for lab in label_strings:
        if lab not in class_index:
            class_index[lab] = len(class_names)
            class_names.append(lab)
    labels = np.array([class_index[lab] for lab in label_strings], dtype=np.int64)

    edges, raw, unknown, self_loops = [], 0, 0, 0
    with cites_path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = _fields(line)
            if len(parts) != 2:
                raise ParseError(cites_path, lineno, "expected 'cited<TAB>citing'")
            raw += 1
            a, b = parts
            if a not in index or b not in index:
                unknown += 1
                continue
            if a == b:
                self_loops += 1
                continue
            edges.append((index[a], index[b]))
    if unknown:
        log.warning("%s: dropped %d citation rows with unknown node ids", cites_path, unknown)

    n = len(ids)
    adjacency = SparseAdjacency.from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2))
    features = np.vstack(rows) if rows else np.zeros((0, 0))
    info = {
        "raw_citations": raw,
        "dropped_unknown": unknown,
        "dropped_self_citations": self_loops,
        "undirected_edges": adjacency.num_edges,
        "content_path": str(content_path),
        "cites_path": str(cites_path),
    }
    return GraphDataset(
        adjacency,
        features,
        labels,
        len(class_names),
        node_ids=tuple(ids),
        class_names=tuple(class_names),
        name=name or content_path.stem,
        info=info,
    )


def find_dataset_files(data_dir, name: str) -> tuple[Path, Path]:
    """Locate ``name.content`` / ``name.cites`` in ``data_dir`` or ``data_dir/name``."""
    data_dir = Path(data_dir)
    for base in (data_dir / name, data_dir):
        content, cites = base / f"{name}.content", base / f"{name}.cites"
        if content.is_file() and cites.is_file():
            return content, cites
    raise FileNotFoundError(f"no {name}.content/{name}.cites under {data_dir}")


def write_citation_dataset(ds: GraphDataset, content_path, cites_path) -> None:
    """Write ``ds`` in the two-file layout (one row per undirected edge)."""
    ids = ds.node_ids or tuple(str(i) for i in range(ds.n))
    names = ds.class_names or tuple(str(c) for c in range(ds.class_count))
    with Path(content_path).open("w") as fh:
        for i, node in enumerate(ids):
            feats = "\t".join(format(v, "g") for v in ds.features[i])
            fh.write(f"{node}\t{feats}\t{names[ds.labels[i]]}\n")
    with Path(cites_path).open("w") as fh:
        for i, j in ds.adjacency.edge_list():
            fh.write(f"{ids[i]}\t{ids[j]}\n")


def row_normalize(features: np.ndarray) -> np.ndarray:
    """Scale each row to unit L1 norm; all-zero rows stay zero."""
    s = np.abs(features).sum(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return features / s


def two_clique_dataset(size: int = 4, d: int = 3, seed: int = 0) -> GraphDataset:
    """Two ``size``-cliques joined by one edge; class = clique; uniform random features."""
    edges = []
    for base in (0, size):
        edges += [(base + i, base + j) for i in range(size) for j in range(i + 1, size)]
    edges.append((size - 1, size))
    adj = SparseAdjacency.from_edges(2 * size, edges)
    features = np.random.default_rng(seed).random((2 * size, d))
    labels = np.repeat([0, 1], size)
    return GraphDataset(adj, features, labels, 2, name="two-cliques")


def planted_partition(
    n: int = 600,
    classes: int = 6,
    d: int = 300,
    avg_degree: float = 4.0,
    homophily: float = 0.8,
    words_per_node: int = 18,
    topic_words: int = 40,
    topic_strength: float = 0.35,
    seed: int = 0,
) -> GraphDataset:
    """Citation-like synthetic graph with sparse bag-of-words features.

    Each edge joins two nodes of the same class with probability
    ``homophily``. Each class owns ``topic_words`` vocabulary entries from
    which a fraction ``topic_strength`` of every node's words are drawn;
    the rest come from the whole vocabulary.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, classes, size=n)
    members = [np.flatnonzero(labels == c) for c in range(classes)]
    m = int(round(avg_degree * n / 2))
    edges = []
    while len(edges) < m:
        i = int(rng.integers(n))
        if rng.random() < homophily and members[labels[i]].size > 1:
            j = int(rng.choice(members[labels[i]]))
        else:
            j = int(rng.integers(n))
        if i != j:
            edges.append((i, j))
    adj = SparseAdjacency.from_edges(n, edges)
    topics = [rng.choice(d, size=min(topic_words, d), replace=False) for _ in range(classes)]
    features = np.zeros((n, d))
    for i in range(n):
        k_topic = rng.binomial(words_per_node, topic_strength)
        words = np.concatenate([
            rng.choice(topics[labels[i]], size=k_topic),
            rng.integers(0, d, size=words_per_node - k_topic),
        ])
        features[i, words] = 1.0
    return GraphDataset(adj, features, labels.astype(np.int64), classes, name="planted-partition")
