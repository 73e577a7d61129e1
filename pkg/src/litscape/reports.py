"""Report tables and SVG figures with byte-stable output."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import numpy as np  # noqa: E402
from matplotlib import rc_context  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

NOISE_COLOR = "#b0b0b0"
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22",
    "#393b79", "#637939", "#8c6d31", "#843c39", "#7b4173", "#3182bd", "#e6550d",
)
SVG_RC = {"svg.hashsalt": "litscape", "svg.fonttype": "none", "font.family": "DejaVu Sans", "font.size": 8}

REPORT_FILES = (
    "trend.csv",
    "ai_topics_by_year.csv",
    "lca_stages_by_year.csv",
    "lcia_methods_by_year.csv",
    "contingency.csv",
    "prisma.json",
    "cluster_summary.csv",
    "trends.svg",
    "label_distributions.svg",
    "contingency.svg",
)


class ReportError(Exception):
    pass


def cluster_color(label: int) -> str:
    return NOISE_COLOR if label < 0 else PALETTE[label % len(PALETTE)]


def _svg_bytes(fig: Figure) -> bytes:
    buf = io.BytesIO()
    with rc_context(SVG_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def _figure(width=7.0, height=5.0) -> Figure:
    with rc_context(SVG_RC):
        return Figure(figsize=(width, height))


def _short(text: str, limit: int = 60) -> str:
    return text if len(text) <= limit else text[:limit - 3].rstrip() + "..."


def emit_scatter(coords2d, labels, cards: Optional[Sequence] = None, title: str = "Document map") -> bytes:
    """SVG scatter of a 2-d projection, one colour per cluster, noise in gray.

    ``cards`` maps cluster ids to titles (a dict or objects with ``cluster_id``
    and ``title``). Legend entries carry ids ``legend-entry-<cluster>``.
    """
    coords = np.asarray(coords2d, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if coords.size == 0:
        coords = coords.reshape(0, 2)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ReportError(f"scatter needs 2 components, got shape {coords.shape}")
    if len(labels) != len(coords):
        raise ReportError(f"{len(labels)} labels for {len(coords)} points")
    if isinstance(cards, dict):
        titles = {int(k): v for k, v in cards.items()}
    else:
        titles = {int(c.cluster_id): c.title for c in (cards or [])}

    fig = _figure(8.0, 6.0)
    ax = fig.add_subplot(1, 1, 1)
    with rc_context(SVG_RC):
        noise = labels < 0
        if noise.any():
            ax.scatter(coords[noise, 0], coords[noise, 1], s=10, c=NOISE_COLOR, label="Noise", gid="points-noise",
                       linewidths=0)
        for lab in sorted(set(labels[~noise].tolist())):
            m = labels == lab
            name = f"C{lab}: {_short(titles.get(lab, f'Cluster {lab}'))}"
            ax.scatter(coords[m, 0], coords[m, 1], s=14, c=cluster_color(lab), label=name, gid=f"points-{lab}",
                       linewidths=0)
        ax.set_title(title)
        ax.set_xticks([])
        ax.set_yticks([])
        if len(labels):
            leg = ax.legend(loc="upper center", bbox_to_anchor=(0.5, -0.02), ncol=1, frameon=False, fontsize=7)
            for text in leg.get_texts():
                lab = text.get_text()
                gid = "legend-noise" if lab == "Noise" else "legend-entry-" + lab.split(":", 1)[0][1:]
                text.set_gid(gid)
        fig.tight_layout()
    return _svg_bytes(fig)


# ---------------------------------------------------------------------------
# tables

def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def _write_label_table(path: Path, table: dict) -> None:
    _write_csv(path, ["year"] + table["labels"],
               [[y] + list(row) for y, row in zip(table["years"], table["counts"])])


def _require(stats: dict, *keys) -> None:
    missing = [k for k in keys if k not in stats]
    if missing:
        raise ReportError(f"stats artifact lacks {missing}")


def emit_reports(stats: dict, out_dir) -> list:
    """Write the report tables and figures; returns the written paths."""
    _require(stats, "trend", "label_by_year", "contingency", "prisma", "clusters")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    _write_csv(out / "trend.csv", ["period", "term", "count", "height"],
               [[r["period"], r["term"], r["count"], _num(r["height"])] for r in stats["trend"]])
    lby = stats["label_by_year"]
    _write_label_table(out / "ai_topics_by_year.csv", lby["ai"])
    _write_label_table(out / "lca_stages_by_year.csv", lby["lca_stage"])
    _write_label_table(out / "lcia_methods_by_year.csv", lby["lcia"])

    cont = stats["contingency"]
    rows = []
    if cont:
        for i, r in enumerate(cont["rows"]):
            for j, c in enumerate(cont["cols"]):
                rows.append([r, c, _num(cont["observed"][i][j]), _num(cont["expected"][i][j]),
                             _num(cont["deviation"][i][j]), _num(cont["cell_p"][i][j]),
                             int(cont["significant"][i][j])])
    _write_csv(out / "contingency.csv",
               ["row_term", "col_term", "observed", "expected", "deviation", "p_value", "significant"], rows)

    (out / "prisma.json").write_text(json.dumps(stats["prisma"], indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    _write_csv(out / "cluster_summary.csv",
               ["cluster_id", "size", "llm_title", "tfidf_phrases", "tfidf_terms"],
               [[c["cluster_id"], c["size"], c["title"], "; ".join(c["top_phrases"]), "; ".join(c["top_terms"])]
                for c in stats["clusters"]])

    (out / "trends.svg").write_bytes(_trend_figure(stats["trend"]))
    (out / "label_distributions.svg").write_bytes(_distribution_figure(lby))
    (out / "contingency.svg").write_bytes(_contingency_figure(cont))
    return [out / f for f in REPORT_FILES]


# ---------------------------------------------------------------------------
# figures

def _trend_figure(trend: list) -> bytes:
    fig = _figure()
    ax = fig.add_subplot(1, 1, 1)
    with rc_context(SVG_RC):
        periods = list(dict.fromkeys(r["period"] for r in trend))
        terms = list(dict.fromkeys(r["term"] for r in trend))
        bottom = np.zeros(len(periods))
        for k, term in enumerate(terms):
            h = np.array([next(r["height"] for r in trend if r["period"] == p and r["term"] == term)
                          for p in periods])
            ax.bar(range(len(periods)), h, bottom=bottom, color=PALETTE[k % len(PALETTE)], label=term,
                   gid=f"trend-{k}")
            bottom += h
        ax.set_xticks(range(len(periods)))
        ax.set_xticklabels(periods)
        ax.set_ylabel("share of top-term occurrences")
        ax.set_title("Term trends by period")
        if terms:
            ax.legend(fontsize=6, loc="upper left", bbox_to_anchor=(1.0, 1.0), frameon=False)
        fig.tight_layout()
    return _svg_bytes(fig)


def _distribution_figure(lby: dict) -> bytes:
    fig = _figure(7.0, 9.0)
    with rc_context(SVG_RC):
        for panel, (key, title) in enumerate((("ai", "AI topics"), ("lca_stage", "LCA stages"),
                                              ("lcia", "LCIA methods"))):
            ax = fig.add_subplot(3, 1, panel + 1)
            table = lby[key]
            counts = np.asarray(table["counts"], dtype=float).reshape(len(table["years"]), len(table["labels"]))
            bottom = np.zeros(len(table["years"]))
            for k, lab in enumerate(table["labels"]):
                if counts[:, k].sum() == 0:
                    continue
                ax.bar(table["years"], counts[:, k], bottom=bottom, color=PALETTE[k % len(PALETTE)], label=lab)
                bottom += counts[:, k]
            ax.set_title(f"{title} by year")
            ax.set_ylabel("papers")
            if counts.sum() > 0:
                ax.legend(fontsize=6, loc="upper left", bbox_to_anchor=(1.0, 1.0), frameon=False)
        fig.tight_layout()
    return _svg_bytes(fig)


def _contingency_figure(cont: Optional[dict]) -> bytes:
    fig = _figure()
    ax = fig.add_subplot(1, 1, 1)
    with rc_context(SVG_RC):
        if cont and cont["rows"] and cont["cols"]:
            D = np.array([[np.nan if v is None else v for v in row] for row in cont["deviation"]], dtype=float)
            lim = max(1.0, float(np.nanmax(np.abs(D)))) if np.isfinite(D).any() else 1.0
            im = ax.imshow(np.nan_to_num(D), cmap="RdBu_r", vmin=-lim, vmax=lim, aspect="auto")
            ax.set_xticks(range(len(cont["cols"])))
            ax.set_xticklabels(cont["cols"], rotation=45, ha="right")
            ax.set_yticks(range(len(cont["rows"])))
            ax.set_yticklabels(cont["rows"])
            for i in range(D.shape[0]):
                for j in range(D.shape[1]):
                    if cont["significant"][i][j]:
                        ax.text(j, i, "*", ha="center", va="center")
            fig.colorbar(im, ax=ax, label="(observed - expected) / expected")
            ax.set_title(f"Term co-occurrence deviations (chi2 = {cont['chi2']:.3f}, p = {cont['p']:.3g})")
        else:
            ax.set_title("Term co-occurrence deviations (no data)")
        fig.tight_layout()
    return _svg_bytes(fig)
