"""Publication-style figures from sampler run artifacts.

Pure consumer: every number plotted is read verbatim from the artifact files
(samples.jsonl, comparison.csv, tv_curve.csv, balance.json); nothing is
recomputed.  Each figure writes a JSON sidecar echoing the plotted values, so
figures are auditable without image inspection, and re-rendering is
idempotent (byte-identical sidecar).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGURE_KINDS = ("trace", "occupancy", "tv_curve", "balance_heatmap")
DPI = 120
FIGSIZE = (8.0, 4.5)


class SchemaError(ValueError):
    """An artifact is missing a required field."""

    def __init__(self, path, field: str):
        super().__init__(f"{path}: missing or invalid field {field!r}")
        self.field = field


@dataclass(frozen=True)
class PlotSpec:
    kind: str
    inputs: tuple[str, ...]
    output: str

    def validate(self) -> None:
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"expected one of {FIGURE_KINDS}")
        if not self.inputs:
            raise ValueError("at least one input artifact is required")
        for p in self.inputs:
            if not Path(p).exists():
                raise FileNotFoundError(f"input artifact not found: {p}")


def _sidecar_path(output) -> Path:
    out = Path(output)
    return out.with_suffix(out.suffix + ".json")


def _write_sidecar(output, payload: dict) -> Path:
    path = _sidecar_path(output)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _save(fig, output) -> None:
    fig.savefig(output, dpi=DPI, metadata={"Software": "realps-plots"})
    plt.close(fig)


def _read_jsonl(path):
    meta, rows = {}, []
    with open(path) as f:
        for line in f:
            d = json.loads(line)
            if "meta" in d:
                meta = d["meta"]
                continue
            for field in ("t", "level", "x", "event"):
                if field not in d:
                    raise SchemaError(path, field)
            rows.append(d)
    return meta, rows


def _render_trace(spec: PlotSpec) -> dict:
    path = spec.inputs[0]
    meta, rows = _read_jsonl(path)
    ts = [r["t"] for r in rows]
    levels = [r["level"] for r in rows]
    x0 = [r["x"][0] for r in rows]

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=FIGSIZE, sharex=True)
    if rows:
        ax1.step(ts, levels, where="post", lw=0.8)
        ax2.plot(ts, x0, lw=0.6)
    else:
        ax1.annotate("no samples", xy=(0.5, 0.5), xycoords="axes fraction",
                     ha="center", va="center")
    ax1.set_ylabel("level")
    ax2.set_ylabel("x[0]")
    ax2.set_xlabel("t")
    ax1.set_title(f"chain trace ({meta.get('scheme', 'unknown scheme')})")
    _save(fig, spec.output)
    return {"kind": "trace", "source": str(path), "t": ts, "level": levels,
            "x0": x0, "scheme": meta.get("scheme")}


def _read_csv(path):
    with open(path) as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise SchemaError(path, "header")
        return reader.fieldnames, list(reader)


def _render_occupancy(spec: PlotSpec) -> dict:
    path = spec.inputs[0]
    fields, rows = _read_csv(path)
    if "scheme" not in fields:
        raise SchemaError(path, "scheme")
    occ_cols = sorted(c for c in fields if c.startswith("occupancy_")
                      and c != "occupancy_error")
    if not occ_cols:
        raise SchemaError(path, "occupancy_*")
    labels, values = [], []
    for r in rows:
        if not r.get(occ_cols[0]):
            continue
        labels.append(f"{r['scheme']}/{r.get('seed', '')}")
        values.append([float(r[c]) for c in occ_cols])
    arr = np.array(values) if values else np.zeros((0, len(occ_cols)))

    fig, ax = plt.subplots(figsize=FIGSIZE)
    n, m = arr.shape if arr.size else (0, len(occ_cols))
    width = 0.8 / max(m, 1)
    for k in range(m):
        ax.bar(np.arange(n) + k * width, arr[:, k] if n else [],
               width=width, label=f"mode {k}")
    ax.set_xticks(np.arange(n) + 0.4 - width / 2)
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("target-level mode occupancy")
    ax.legend()
    fig.tight_layout()
    _save(fig, spec.output)
    return {"kind": "occupancy", "source": str(path), "labels": labels,
            "columns": occ_cols,
            "values": [[v for v in row] for row in values]}


def _render_tv_curve(spec: PlotSpec) -> dict:
    path = spec.inputs[0]
    fields, rows = _read_csv(path)
    for field in ("t", "tv"):
        if field not in fields:
            raise SchemaError(path, field)
    ts = [float(r["t"]) for r in rows]
    tvs = [float(r["tv"]) for r in rows]

    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.plot(ts, tvs, marker="o")
    ax.set_xlabel("t")
    ax.set_ylabel("TV estimate")
    ax.set_ylim(bottom=0.0)
    fig.tight_layout()
    _save(fig, spec.output)
    return {"kind": "tv_curve", "source": str(path), "t": ts, "tv": tvs}


def _render_balance_heatmap(spec: PlotSpec) -> dict:
    path = spec.inputs[0]
    with open(path) as f:
        payload = json.load(f)
    for field in ("log_z_bar", "h1_ratio_per_level", "h2_ratio"):
        if field not in payload:
            raise SchemaError(path, field)
    matrix = payload["log_z_component"] or payload["log_z_bar"]
    arr = np.asarray(matrix, dtype=float)

    fig, ax = plt.subplots(figsize=FIGSIZE)
    im = ax.imshow(arr, aspect="auto", origin="lower", cmap="viridis")
    ax.set_xlabel("component")
    ax.set_ylabel("level")
    ax.set_title(f"log partition masses (H1 max "
                 f"{max(payload['h1_ratio_per_level']):.2f}, "
                 f"H2 {payload['h2_ratio']:.2f})")
    fig.colorbar(im, ax=ax, label="log Z")
    fig.tight_layout()
    _save(fig, spec.output)
    return {"kind": "balance_heatmap", "source": str(path), "matrix": matrix,
            "h1_ratio_per_level": payload["h1_ratio_per_level"],
            "h2_ratio": payload["h2_ratio"]}


_RENDERERS = {
    "trace": _render_trace,
    "occupancy": _render_occupancy,
    "tv_curve": _render_tv_curve,
    "balance_heatmap": _render_balance_heatmap,
}


def render(spec: PlotSpec) -> Path:
    """Render the figure and its sidecar; returns the sidecar path."""
    spec.validate()
    payload = _RENDERERS[spec.kind](spec)
    return _write_sidecar(spec.output, payload)
