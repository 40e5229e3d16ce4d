"""Editing-style database: code index, retrieval, clustering, purity.

Inverted codes are stored unit-normalized so cosine similarity is a dot
product. Clustering is spherical k-means; its quality on multi-tagged data
is scored with a purity variant where every tag votes for the cluster that
holds it most often.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .editops import PARAM_RANGES, EditRecipe, ImagePair
from .generator import GeneratorBundle
from .inversion import InversionConfig, invert_conditional_batch
from .metrics import FeatureExtractor

INDEX_FORMAT_VERSION = 1


@dataclass
class IndexEntry:
    id: str
    pair_id: str
    w_unit: np.ndarray
    tags: list[str]
    w_norm: float = 1.0  # magnitude, so w_unit * w_norm recovers the code

    @property
    def w(self) -> np.ndarray:
        return self.w_unit * np.float32(self.w_norm)


@dataclass
class CodeIndex:
    entries: dict[str, IndexEntry] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, entry: IndexEntry) -> None:
        if entry.id in self.entries:
            raise ValueError(f"duplicate index id {entry.id!r}")
        norm = float(np.linalg.norm(entry.w_unit))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"entry {entry.id!r} vector norm {norm} != 1")
        self.entries[entry.id] = entry

    def matrix(self) -> tuple[list[str], np.ndarray]:
        """Stable (ids, vectors) view sorted by id."""
        ids = sorted(self.entries)
        if not ids:
            return ids, np.zeros((0, 0), dtype=np.float32)
        return ids, np.stack([self.entries[i].w_unit for i in ids])


def unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float32)
    n = float(np.linalg.norm(v))
    if n == 0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def build_index(
    bundle: GeneratorBundle,
    pairs: list[ImagePair],
    inv_cfg: InversionConfig | None = None,
    extractor: FeatureExtractor | None = None,
    chunk_size: int = 32,
) -> CodeIndex:
    """Invert every pair and store its unit-norm code with recipe tags.

    A pair whose inversion fails is recorded under metadata['failures'] and
    skipped; the rest of the index still builds.
    """
    if inv_cfg is None:
        # reduced-resolution objective for bulk indexing
        inv_cfg = InversionConfig(steps=150, loss_resolution=bundle.config.resolution // 2)
    index = CodeIndex(
        metadata={
            "bundle_hash": bundle.generator_hash(),
            "inversion_resolution": inv_cfg.loss_resolution or bundle.config.resolution,
            "steps": inv_cfg.steps,
            "lambda_w": inv_cfg.lambda_w,
            "failures": [],
        }
    )
    for start in range(0, len(pairs), chunk_size):
        chunk = pairs[start:start + chunk_size]
        try:
            results = invert_conditional_batch(
                bundle,
                [p.before for p in chunk],
                [p.after for p in chunk],
                inv_cfg,
                extractor,
            )
        except RuntimeError as exc:
            index.metadata["failures"].extend(
                {"id": p.id, "error": str(exc)} for p in chunk
            )
            continue
        for pair, result in zip(chunk, results):
            index.add(
                IndexEntry(
                    id=pair.id,
                    pair_id=pair.id,
                    w_unit=unit(result.style.w),
                    tags=sorted(pair.recipe.tags) if pair.recipe else [],
                    w_norm=float(np.linalg.norm(result.style.w)),
                )
            )
    return index


def knn_query(index: CodeIndex, query_w: np.ndarray, k: int) -> list[tuple[str, float]]:
    """k nearest entries by cosine similarity, ties broken by id."""
    if len(index) == 0:
        raise ValueError("index is empty")
    if not 1 <= k <= len(index):
        raise ValueError(f"k must be in [1, {len(index)}], got {k}")
    q = unit(query_w).astype(np.float64)
    ids, mat = index.matrix()
    sims = mat.astype(np.float64) @ q
    ranked = sorted(zip(ids, sims), key=lambda t: (-t[1], t[0]))
    return [(i, float(s)) for i, s in ranked[:k]]


@dataclass
class Clustering:
    assignments: dict[str, int]
    centers: np.ndarray  # (K, dim), unit rows
    inertia: float
    objective_trace: list[float] = field(default_factory=list)


def _kmeanspp_seeds(mat: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = mat.shape[0]
    chosen = [int(rng.integers(n))]
    for _ in range(1, k):
        sims = mat @ mat[chosen].T  # (n, len(chosen))
        d = np.clip(1.0 - sims.max(axis=1), 0.0, None)
        d[chosen] = 0.0
        weights = d**2
        total = weights.sum()
        if total <= 0:
            remaining = [i for i in range(n) if i not in chosen]
            chosen.append(int(rng.choice(remaining)))
        else:
            chosen.append(int(rng.choice(n, p=weights / total)))
    return mat[chosen].copy()


def spherical_kmeans(index: CodeIndex, k: int, seed: int = 0, max_iter: int = 100) -> Clustering:
    """k-means on the unit sphere: max-cosine assignment, renormalized means."""
    if k <= 0:
        raise ValueError("K must be positive")
    if k > len(index):
        raise ValueError(f"K = {k} exceeds index size {len(index)}")
    ids, mat = index.matrix()
    mat = mat.astype(np.float64)
    n = mat.shape[0]
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_seeds(mat, k, rng)

    assign = np.full(n, -1)
    trace: list[float] = []
    for _ in range(max_iter):
        new_assign = np.argmax(mat @ centers.T, axis=1)
        # revive empty clusters at the farthest point, then reassign: both
        # moves can only lower the objective, keeping the trace monotone
        for _ in range(k):
            empty = [j for j in range(k) if not np.any(new_assign == j)]
            if not empty:
                break
            dists = 1.0 - (mat * centers[new_assign]).sum(axis=1)
            centers[empty[0]] = mat[int(np.argmax(dists))]
            new_assign = np.argmax(mat @ centers.T, axis=1)
        objective = float(np.sum(1.0 - (mat * centers[new_assign]).sum(axis=1)))
        trace.append(objective)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = mat[assign == j]
            total = members.sum(axis=0)
            norm = np.linalg.norm(total)
            if norm > 0:
                centers[j] = total / norm
    inertia = float(np.sum(1.0 - (mat * centers[assign]).sum(axis=1)))
    return Clustering(
        assignments={pid: int(a) for pid, a in zip(ids, assign)},
        centers=centers.astype(np.float32),
        inertia=inertia,
        objective_trace=trace,
    )


def customized_purity(assignments, tag_lists, tag_vocab) -> float:
    """Multi-label purity: each tag goes to the cluster holding it most
    (ties to the lowest cluster index); purity = sum(N_t) / sum(|C_t|)."""
    assignments = list(assignments)
    tag_lists = list(tag_lists)
    if len(assignments) != len(tag_lists):
        raise ValueError("every sample needs an assignment and a tag list")
    vocab = set(tag_vocab)
    clusters = sorted(set(assignments))
    sizes = {c: 0 for c in clusters}
    counts: dict[str, dict[int, int]] = {}
    for cluster, tags in zip(assignments, tag_lists):
        if cluster is None:
            raise ValueError("unassigned sample")
        sizes[cluster] += 1
        for tag in tags:
            if tag not in vocab:
                raise ValueError(f"tag {tag!r} not in vocabulary")
            counts.setdefault(tag, {}).setdefault(cluster, 0)
            counts[tag][cluster] += 1
    if not counts:
        raise ValueError("no tags present")
    numerator = 0
    denominator = 0
    for tag in sorted(counts):
        per_cluster = counts[tag]
        best_cluster = min(
            (c for c in clusters if per_cluster.get(c, 0) == max(per_cluster.values()))
        )
        numerator += per_cluster[best_cluster]
        denominator += sizes[best_cluster]
    return numerator / denominator


def recipe_param_vector(recipe: EditRecipe) -> np.ndarray:
    """Recipe parameters as a fixed-length vector (identity-filled), each
    dimension scaled to [0, 1] by its declared range. The operation-space
    clustering baseline works on these."""
    from .editops import IDENTITY_PARAMS

    values = []
    for kind in sorted(PARAM_RANGES):
        params = dict(IDENTITY_PARAMS[kind])
        for op in recipe.ops:
            if op.kind == kind:
                params.update(op.params)
        for name in sorted(PARAM_RANGES[kind]):
            lo, hi = PARAM_RANGES[kind][name]
            values.append((params[name] - lo) / (hi - lo))
    return np.asarray(values, dtype=np.float32)


def summarize_clusters(index: CodeIndex, clustering: Clustering,
                       top_tags: int = 3, exemplars: int = 4) -> dict:
    """Per-cluster representative tags and exemplar pair ids, JSON-ready."""
    by_cluster: dict[int, list[str]] = {}
    for pid, cluster in sorted(clustering.assignments.items()):
        by_cluster.setdefault(cluster, []).append(pid)
    report = {"k": len(clustering.centers), "inertia": clustering.inertia, "clusters": []}
    for cluster in sorted(by_cluster):
        members = by_cluster[cluster]
        pool: dict[str, int] = {}
        for pid in members:
            for tag in index.entries[pid].tags:
                pool[tag] = pool.get(tag, 0) + 1
        ranked = sorted(pool.items(), key=lambda t: (-t[1], t[0]))
        report["clusters"].append(
            {
                "cluster": cluster,
                "size": len(members),
                "tags": [t for t, _ in ranked[:top_tags]],
                "exemplars": members[:exemplars],
            }
        )
    return report


# --------------------------------------------------------------------------- #
# persistence: JSON-lines with a metadata header
# --------------------------------------------------------------------------- #

def save_index(index: CodeIndex, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        header = {"format_version": INDEX_FORMAT_VERSION, **index.metadata}
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for entry_id in sorted(index.entries):
            e = index.entries[entry_id]
            fh.write(
                json.dumps(
                    {
                        "id": e.id,
                        "pair_id": e.pair_id,
                        "w_unit": [float(x) for x in e.w_unit],
                        "w_norm": e.w_norm,
                        "tags": list(e.tags),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    return path


def load_index(path: str | Path) -> CodeIndex:
    path = Path(path)
    with path.open() as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path} is empty")
    header = json.loads(lines[0])
    if header.get("format_version") != INDEX_FORMAT_VERSION:
        raise ValueError(f"unsupported index format: {header.get('format_version')}")
    metadata = {k: v for k, v in header.items() if k != "format_version"}
    index = CodeIndex(metadata=metadata)
    for line in lines[1:]:
        row = json.loads(line)
        index.add(
            IndexEntry(
                id=row["id"],
                pair_id=row["pair_id"],
                w_unit=np.asarray(row["w_unit"], dtype=np.float32),
                tags=list(row["tags"]),
                w_norm=float(row.get("w_norm", 1.0)),
            )
        )
    return index
