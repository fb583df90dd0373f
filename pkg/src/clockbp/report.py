"""Aggregate result CSVs into summary tables and render figures.

The summary averages squared errors over trials (identifiable rows only)
per node and tick (or round count), carries the matching averaged lower
bounds, and adds network-level rows (node 0) that average the per-node
values over all non-reference nodes. Figures are written next to the
summary as PNG files: estimation error curves with the bound overlaid,
one figure for skew and one for offset.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

NETWORK_NODE = 0  # node id used for network-average summary rows


def read_rows(path) -> pd.DataFrame:
    df = pd.read_csv(path)
    df["identifiable"] = df["identifiable"].astype(str).str.lower() == "true"
    return df


def summarize(df: pd.DataFrame) -> pd.DataFrame:
    """Per (experiment, node, tick_or_n): trial-averaged squared errors,
    averaged bounds, trial count, and the fraction of identifiable rows;
    plus network-average rows under node 0."""
    grouped = df.groupby(["experiment", "node", "tick_or_n"], sort=True)
    summary = grouped.agg(
        mse_alpha=("se_alpha", "mean"),
        mse_theta=("se_theta", "mean"),
        crb_alpha=("crb_alpha", "mean"),
        crb_theta=("crb_theta", "mean"),
        n_trials=("trial", "count"),
        identified_frac=("identifiable", "mean"),
    ).reset_index()

    net = (
        summary.groupby(["experiment", "tick_or_n"], sort=True)
        .agg(
            mse_alpha=("mse_alpha", "mean"),
            mse_theta=("mse_theta", "mean"),
            crb_alpha=("crb_alpha", "mean"),
            crb_theta=("crb_theta", "mean"),
            n_trials=("n_trials", "sum"),
            identified_frac=("identified_frac", "mean"),
        )
        .reset_index()
    )
    net.insert(1, "node", NETWORK_NODE)
    out = pd.concat([net, summary], ignore_index=True)
    return out.sort_values(["experiment", "node", "tick_or_n"], ignore_index=True)


def _pick_default_nodes(summary: pd.DataFrame) -> list[int]:
    """Network average plus the per-node extremes of the skew bound (the
    best- and worst-bounded nodes bracket the network)."""
    per_node = summary[summary["node"] != NETWORK_NODE]
    byn = per_node.groupby("node")["crb_alpha"].mean()
    if byn.empty:
        return [NETWORK_NODE]
    return [NETWORK_NODE, int(byn.idxmin()), int(byn.idxmax())]


def _curve_label(node: int) -> str:
    return "network avg" if node == NETWORK_NODE else f"node {node}"


def render_figures(
    summary: pd.DataFrame,
    out_dir,
    prefix: str = "report",
    nodes: list[int] | None = None,
) -> list[Path]:
    """Write <prefix>_skew.png and <prefix>_offset.png under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = summary["experiment"].iloc[0]
    if nodes is None:
        nodes = _pick_default_nodes(summary)

    x_label = "tick" if kind == "mse_vs_tick" else "exchange rounds"
    written = []
    for quantity, mse_col, crb_col in (
        ("skew", "mse_alpha", "crb_alpha"),
        ("offset", "mse_theta", "crb_theta"),
    ):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for node in nodes:
            sel = summary[summary["node"] == node].sort_values("tick_or_n")
            if sel.empty:
                continue
            (line,) = ax.semilogy(
                sel["tick_or_n"], sel[mse_col], marker="o", markersize=3,
                label=f"MSE, {_curve_label(node)}",
            )
            ax.semilogy(
                sel["tick_or_n"], sel[crb_col], linestyle="--",
                color=line.get_color(), label=f"bound, {_curve_label(node)}",
            )
        ax.set_xlabel(x_label)
        ax.set_ylabel(f"clock {quantity} MSE")
        ax.set_title(f"Clock {quantity} estimation error vs {x_label}")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"{prefix}_{quantity}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written


def write_report(rows_csv, out_dir, prefix: str = "report", nodes=None) -> dict:
    """Full report path: read rows, write <prefix>_summary.csv, render
    figures; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    df = read_rows(rows_csv)
    summary = summarize(df)
    summary_path = out_dir / f"{prefix}_summary.csv"
    summary.to_csv(summary_path, index=False)
    figures = render_figures(summary, out_dir, prefix=prefix, nodes=nodes)
    return {"summary": summary_path, "figures": figures}
