"""Report rendering: matplotlib figures written to files next to the
delimited (CSV) and JSON outputs the figures are drawn from."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def write_json(data: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def write_csv(rows: list[dict], path: str | Path) -> Path:
    """Delimited output; column order comes from the first row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return path
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    return path


def save_traversal_strip(images: list[np.ndarray], alphas: list[float],
                         path: str | Path, title: str = "") -> Path:
    """One row of renders annotated with their traversal strengths."""
    if len(images) != len(alphas):
        raise ValueError("images and alphas must align")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = len(images)
    fig, axes = plt.subplots(1, n, figsize=(1.6 * n, 2.0))
    if n == 1:
        axes = [axes]
    for ax, img, alpha in zip(axes, images, alphas):
        ax.imshow(np.clip(img, 0.0, 1.0))
        ax.set_title(f"α={alpha:g}", fontsize=9)
        ax.axis("off")
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_cluster_report(summary: dict, purity: float, random_purity: float,
                        out_dir: str | Path) -> dict[str, Path]:
    """Cluster sizes/tags as JSON + CSV + a bar-chart figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = dict(summary)
    report["purity"] = purity
    report["random_purity"] = random_purity
    json_path = write_json(report, out_dir / "clusters.json")
    rows = [
        {
            "cluster": c["cluster"],
            "size": c["size"],
            "tags": "|".join(c["tags"]),
            "exemplars": "|".join(c["exemplars"]),
        }
        for c in summary["clusters"]
    ]
    csv_path = write_csv(rows, out_dir / "clusters.csv")

    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(rows)), 3.2))
    sizes = [c["size"] for c in summary["clusters"]]
    labels = [f"{c['cluster']}\n{','.join(c['tags'][:2])}" for c in summary["clusters"]]
    ax.bar(range(len(sizes)), sizes, color="#4878a8")
    ax.set_xticks(range(len(sizes)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("members")
    ax.set_title(f"K={summary['k']}  purity={purity:.3f} (random {random_purity:.3f})")
    fig.tight_layout()
    fig_path = out_dir / "clusters.png"
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return {"json": json_path, "csv": csv_path, "figure": fig_path}


# --------------------------------------------------------------------------- #
# evaluation report
# --------------------------------------------------------------------------- #

# minimal schema dialect: type, required, properties, items
EVAL_REPORT_SCHEMA: dict = {
    "type": "object",
    "required": [
        "checkpoint_hash",
        "dataset",
        "n_val_pairs",
        "inversion",
        "diversity",
        "fid",
        "runtime_seconds",
    ],
    "properties": {
        "checkpoint_hash": {"type": "string"},
        "dataset": {"type": "string"},
        "n_val_pairs": {"type": "integer"},
        "inversion": {
            "type": "object",
            "required": ["mean_init_error", "mean_final_error", "mean_identity_error"],
            "properties": {
                "mean_init_error": {"type": "number"},
                "mean_final_error": {"type": "number"},
                "mean_identity_error": {"type": "number"},
            },
        },
        "diversity": {
            "type": "object",
            "required": ["diversity_lpips", "constant_w_control"],
            "properties": {
                "diversity_lpips": {"type": "number"},
                "constant_w_control": {"type": "number"},
            },
        },
        "fid": {
            "type": "object",
            "required": ["trained", "untrained"],
            "properties": {
                "trained": {"type": "number"},
                "untrained": {"type": "number"},
            },
        },
        "retrieval": {
            "type": "object",
            "required": ["precision_at_5", "chance"],
            "properties": {
                "precision_at_5": {"type": "number"},
                "chance": {"type": "number"},
            },
        },
        "clustering": {
            "type": "object",
            "required": ["k", "purity", "random_purity"],
            "properties": {
                "k": {"type": "integer"},
                "purity": {"type": "number"},
                "random_purity": {"type": "number"},
            },
        },
        "runtime_seconds": {"type": "number"},
    },
}

_TYPES = {
    "object": dict,
    "string": str,
    "number": (int, float),
    "integer": int,
    "array": list,
    "boolean": bool,
}


def validate_schema(data, schema: dict, path: str = "$") -> None:
    """Raise ValueError where data violates the schema subset above."""
    expected = schema.get("type")
    if expected:
        py_type = _TYPES[expected]
        if isinstance(data, bool) and expected in ("number", "integer"):
            raise ValueError(f"{path}: expected {expected}, got boolean")
        if not isinstance(data, py_type):
            raise ValueError(f"{path}: expected {expected}, got {type(data).__name__}")
    if expected == "object":
        for key in schema.get("required", []):
            if key not in data:
                raise ValueError(f"{path}: missing required key {key!r}")
        for key, sub in schema.get("properties", {}).items():
            if key in data:
                validate_schema(data[key], sub, f"{path}.{key}")
    if expected == "array" and "items" in schema:
        for i, item in enumerate(data):
            validate_schema(item, schema["items"], f"{path}[{i}]")


def save_eval_report(report: dict, out_dir: str | Path) -> dict[str, Path]:
    """Validate, then write report.json, a flat metrics.csv, and a table figure."""
    validate_schema(report, EVAL_REPORT_SCHEMA)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = write_json(report, out_dir / "report.json")

    rows = []
    for section, values in report.items():
        if isinstance(values, dict):
            for key, value in values.items():
                rows.append({"section": section, "metric": key, "value": value})
        else:
            rows.append({"section": "", "metric": section, "value": values})
    csv_path = write_csv(rows, out_dir / "metrics.csv")

    fig, ax = plt.subplots(figsize=(6, 0.32 * len(rows) + 1))
    ax.axis("off")
    cells = [
        [r["section"], r["metric"],
         f"{r['value']:.4f}" if isinstance(r["value"], float) else str(r["value"])]
        for r in rows
    ]
    table = ax.table(cellText=cells, colLabels=["section", "metric", "value"],
                     loc="center", cellLoc="left")
    table.auto_set_font_size(False)
    table.set_fontsize(8)
    table.scale(1.0, 1.2)
    ax.set_title("evaluation summary", fontsize=10)
    fig.tight_layout()
    fig_path = out_dir / "metrics.png"
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return {"json": json_path, "csv": csv_path, "figure": fig_path}
