"""Planner x layout x repetition grids and their summaries.

``run_experiment`` plays one episode per grid cell and streams rows to
``results.csv`` and ``results.jsonl`` (same rows, same order), plus one
trajectory file per episode.  ``report`` folds a results file into
mean/max/min blocks per planner and layout.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .env import EnvConfig, run_episode
from .errors import MissingArtifact
from .layouts import PRESETS, LayoutSpec, generate
from .planners import GreedyPlanner, RandomPlanner, StaticListPlanner
from .types import FruitLayout
from .workspace import WorkspaceConfig

log = logging.getLogger(__name__)

COLUMNS = (
    "planner",
    "layout",
    "rep",
    "seed",
    "makespan_s",
    "idle_arm1_s",
    "idle_arm2_s",
    "idle_arm3_s",
    "idle_arm4_s",
    "conflicts",
    "remaining",
    "abandoned",
    "picked",
    "planning_latency_mean_ms",
)
# Wall-clock columns; everything else is reproducible from the seed.
NONDETERMINISTIC = ("planning_latency_mean_ms",)

_INT_COLUMNS = ("rep", "seed", "conflicts", "remaining", "abandoned", "picked")


def make_planner(spec: str, ws: WorkspaceConfig):
    """Build a planner from ``random``, ``greedy``, ``static`` or ``ppo:<checkpoint>``."""
    if spec == "random":
        return RandomPlanner()
    if spec == "greedy":
        return GreedyPlanner(ws)
    if spec == "static":
        return StaticListPlanner(ws)
    if spec.startswith("ppo:"):
        from .ppo import PPOPlanner

        path = Path(spec[4:])
        if not path.is_file():
            raise MissingArtifact(f"checkpoint not found: {path}")
        return PPOPlanner.from_checkpoint(path, ws=ws)
    raise ValueError(f"unknown planner {spec!r}; expected random, greedy, static or ppo:<checkpoint>")


def load_layout(ref: str, ws: WorkspaceConfig) -> FruitLayout:
    """A preset name (``30-A`` ...), a layout JSON file, or a layout-spec JSON file."""
    if ref in PRESETS:
        return generate(PRESETS[ref], ws)
    path = Path(ref)
    if not path.is_file():
        raise MissingArtifact(f"layout not found: {ref} (presets: {', '.join(PRESETS)})")
    d = json.loads(path.read_text())
    if "positions" in d:
        lay = FruitLayout.from_dict(d)
    else:
        lay = generate(LayoutSpec.from_dict(d), ws)
    return lay


def _label(ref: str) -> str:
    return ref if ref in PRESETS else Path(ref).stem


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def _row(planner: str, layout: str, rep: int, seed: int, m) -> dict:
    row = {
        "planner": planner,
        "layout": layout,
        "rep": rep,
        "seed": seed,
        "makespan_s": round(m.makespan, 6),
    }
    for i, idle in enumerate(m.idle_per_arm, 1):
        row[f"idle_arm{i}_s"] = round(idle, 6)
    row.update(
        conflicts=m.conflicts,
        remaining=m.remaining,
        abandoned=m.abandoned,
        picked=m.picked_total,
        planning_latency_mean_ms=round(m.planning_latency_mean * 1e3, 6),
    )
    return row


@dataclass
class ExperimentResult:
    csv_path: Path
    jsonl_path: Path
    rows: list


def run_experiment(
    planners,
    layouts,
    reps: int = 5,
    seed: int = 0,
    out_dir="results",
    ws: WorkspaceConfig = WorkspaceConfig(),
    cfg: EnvConfig = EnvConfig(),
    trajectories: bool = True,
) -> ExperimentResult:
    """Run every (planner, layout, rep) cell in sorted order.

    Artifacts are resolved before the first episode so a missing file fails
    fast; rows are flushed as they are produced, so an interrupted grid
    leaves its finished prefix on disk.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    planners = sorted(set(planners))
    layouts = sorted(set(layouts), key=_label)
    built = {p: make_planner(p, ws) for p in planners}
    lays = {ref: load_layout(ref, ws) for ref in layouts}

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if trajectories:
        (out / "trajectories").mkdir(exist_ok=True)
    csv_path, jsonl_path = out / "results.csv", out / "results.jsonl"
    rows = []
    with open(csv_path, "w", newline="") as fc, open(jsonl_path, "w") as fj:
        writer = csv.DictWriter(fc, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        for p in planners:
            planner = built[p]
            for ref in layouts:
                lay, label = lays[ref], _label(ref)
                for rep in range(reps):
                    rep_seed = seed + rep
                    planner.reset(lay, seed=rep_seed)
                    ep = run_episode(lay, planner, cfg, ws, record=trajectories)
                    row = _row(p, label, rep, rep_seed, ep.metrics)
                    writer.writerow(row)
                    fj.write(json.dumps(row | {"steps": ep.metrics.steps, "done_reason": ep.metrics.done_reason}) + "\n")
                    fc.flush()
                    fj.flush()
                    if trajectories:
                        name = f"{_safe(p)}__{_safe(label)}__rep{rep}.jsonl"
                        with open(out / "trajectories" / name, "w") as ft:
                            ft.writelines(json.dumps(r) + "\n" for r in ep.records)
                    rows.append(row)
                    log.info("%s %s rep %d: makespan %.2f s, remaining %d", p, label, rep, row["makespan_s"], row["remaining"])
    return ExperimentResult(csv_path, jsonl_path, rows)


# ---------------------------------------------------------------------------
# Reporting


def _parse(raw: dict) -> Optional[dict]:
    try:
        row = {"planner": str(raw["planner"]), "layout": str(raw["layout"])}
        if not row["planner"] or not row["layout"]:
            return None
        for c in COLUMNS[2:]:
            v = float(raw[c])
            if not math.isfinite(v):
                return None
            row[c] = int(v) if c in _INT_COLUMNS else v
    except (KeyError, TypeError, ValueError):
        return None
    return row


def read_results(path) -> tuple:
    """Return (valid rows, number of malformed rows skipped)."""
    path = Path(path)
    if not path.is_file():
        raise MissingArtifact(f"results file not found: {path}")
    text = path.read_text()
    if path.suffix == ".jsonl":
        raws = []
        for line in text.splitlines():
            if not line.strip():
                continue
            try:
                raws.append(json.loads(line))
            except json.JSONDecodeError:
                raws.append(None)
    else:
        raws = list(csv.DictReader(text.splitlines()))
    rows = [_parse(r) if isinstance(r, dict) else None for r in raws]
    good = [r for r in rows if r is not None]
    return good, len(rows) - len(good)


def summarize(rows) -> dict:
    """``{planner: {layout: stats}}`` with makespan mean/max/min and per-trial remaining."""
    groups = {}
    for r in rows:
        groups.setdefault(r["planner"], {}).setdefault(r["layout"], []).append(r)
    out = {}
    for planner in sorted(groups):
        out[planner] = {}
        for layout in sorted(groups[planner]):
            g = sorted(groups[planner][layout], key=lambda r: r["rep"])
            ms = np.array([r["makespan_s"] for r in g])
            out[planner][layout] = {
                "n": len(g),
                "makespan_mean": float(ms.mean()),
                "makespan_max": float(ms.max()),
                "makespan_min": float(ms.min()),
                "planning_latency_mean_ms": float(np.mean([r["planning_latency_mean_ms"] for r in g])),
                "remaining": [r["remaining"] for r in g],
                "remaining_mean": float(np.mean([r["remaining"] for r in g])),
                "conflicts_mean": float(np.mean([r["conflicts"] for r in g])),
            }
    return out


def format_summary(summary: dict) -> str:
    header = ("layout", "n", "mean_s", "max_s", "min_s", "latency_ms", "remaining")
    blocks = []
    for planner, by_layout in summary.items():
        table = [header]
        for layout, s in by_layout.items():
            table.append((
                layout,
                str(s["n"]),
                f"{s['makespan_mean']:.2f}",
                f"{s['makespan_max']:.2f}",
                f"{s['makespan_min']:.2f}",
                f"{s['planning_latency_mean_ms']:.3f}",
                " ".join(map(str, s["remaining"])),
            ))
        widths = [max(len(r[i]) for r in table) for i in range(len(header))]
        lines = [f"[{planner}]"]
        lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in table]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def report(path, json_out=None) -> tuple:
    """Summarize a results file; returns (summary, skipped_rows).

    Malformed rows are dropped and counted.  If ``json_out`` is given the
    summary is written there as JSON.
    """
    rows, skipped = read_results(path)
    if skipped:
        log.warning("skipped %d malformed row(s) in %s", skipped, path)
    if not rows:
        log.warning("no results in %s", path)
    summary = summarize(rows)
    if json_out is not None:
        Path(json_out).write_text(json.dumps({"summary": summary, "skipped_rows": skipped}, indent=2) + "\n")
    return summary, skipped
