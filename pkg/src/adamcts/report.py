"""Result files: per-episode CSV, per-cell summary (CSV and JSON), timing CSV and SVG plots.

``raw.csv`` carries no wall-clock data so that reruns with the same seed are
byte-identical; per-episode timing goes to ``timing.csv``.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

RAW_FIELDS = ["env", "p_old", "p_new", "label", "planner", "model_access", "episode", "return", "steps", "outcome",
              "regular_fraction"]
TIMING_FIELDS = RAW_FIELDS[:7] + ["decisions", "mean_decision_seconds"]
SUMMARY_FIELDS = ["env", "p_old", "p_new", "label", "planner", "model_access", "episodes", "mean", "stderr",
                  "goal_rate", "regular_fraction", "mean_decision_seconds", "error"]


def _num(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.10g}"


def _key(cfg) -> dict:
    return {"env": cfg.env_name, "p_old": _num(cfg.p_old), "p_new": _num(cfg.p_new), "label": cfg.label,
            "planner": cfg.planner, "model_access": cfg.model_access}


def summary_rows(results) -> list[dict]:
    rows = []
    for cfg, res, err in results:
        row = _key(cfg)
        if res is None:
            row.update(episodes=0, mean="", stderr="", goal_rate="", regular_fraction="", mean_decision_seconds="",
                       error=err or "")
        else:
            trace = res.mode_trace
            reg = float(np.nanmean(trace)) if np.isfinite(trace).any() else float("nan")
            row.update(episodes=len(res.episodes), mean=_num(res.mean), stderr=_num(res.stderr),
                       goal_rate=_num(np.mean([e.outcome == "goal" for e in res.episodes])),
                       regular_fraction=_num(reg), mean_decision_seconds=_num(res.mean_decision_seconds), error="")
        rows.append(row)
    return rows


def _write_csv(path: Path, fields, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_results(outdir, results, figures: bool = True) -> Path:
    """Write every artefact for a list of ``(config, result, error)`` triples."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    raw, timing = [], []
    for cfg, res, _ in results:
        if res is None:
            continue
        for e in res.episodes:
            raw.append({**_key(cfg), "episode": e.episode, "return": _num(e.ret), "steps": e.steps,
                        "outcome": e.outcome, "regular_fraction": _num(e.regular_fraction)})
            t = np.array(e.decision_seconds)
            timing.append({**_key(cfg), "episode": e.episode, "decisions": t.size,
                           "mean_decision_seconds": _num(t.mean() if t.size else float("nan"))})
    _write_csv(out / "raw.csv", RAW_FIELDS, raw)
    _write_csv(out / "timing.csv", TIMING_FIELDS, timing)
    summary = summary_rows(results)
    _write_csv(out / "summary.csv", SUMMARY_FIELDS, summary)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if figures:
        plot_returns(results, out)
        plot_mode_traces(results, out)
    return out


def write_timing(outdir, rows, speedups: dict) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    fields = ["env", "planner", "decisions", "mean_seconds", "std_seconds"]
    _write_csv(out / "timing.csv", fields, [
        {"env": r.env_name, "planner": r.planner, "decisions": r.decisions, "mean_seconds": _num(r.mean_seconds),
         "std_seconds": _num(r.std_seconds)} for r in rows])
    _write_csv(out / "speedup.csv", ["env", "speedup"], [{"env": e, "speedup": _num(v)} for e, v in speedups.items()])
    doc = {"rows": [r.__dict__ for r in rows], "speedup": speedups}
    (out / "summary.json").write_text(json.dumps(doc, indent=2) + "\n")
    return out


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "adamcts"
    return plt


def plot_returns(results, outdir) -> list[Path]:
    """One SVG per environment: mean return against the new slip probability, per planner column."""
    cells: dict = {}
    for cfg, res, _ in results:
        if res is not None:
            cells.setdefault(cfg.env_name, {}).setdefault(cfg.label, []).append((cfg.p_new, res.mean, res.stderr or 0))
    paths = []
    if not cells:
        return paths
    plt = _pyplot()
    for env, by_label in sorted(cells.items()):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, pts in sorted(by_label.items()):
            pts.sort()
            p, m, se = map(np.array, zip(*pts))
            ax.errorbar(p, m, yerr=se, marker="o", capsize=3, label=label)
        ax.set_xlabel("slip probability after the change")
        ax.set_ylabel("mean discounted return")
        ax.set_title(env)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = Path(outdir) / f"returns_{env}.svg"
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths


def plot_mode_traces(results, outdir) -> list[Path]:
    """Regular-mode fraction per episode for the adaptive planner cells."""
    traces = [(cfg, res) for cfg, res, _ in results if res is not None and cfg.planner == "ada-mcts"]
    if not traces:
        return []
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for cfg, res in traces:
        ax.plot(res.mode_trace, label=f"{cfg.env_name} p={cfg.p_new:g}")
    ax.set_xlabel("episode after the change")
    ax.set_ylabel("regular-mode fraction")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = Path(outdir) / "mode_occupancy.svg"
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
    return [path]
