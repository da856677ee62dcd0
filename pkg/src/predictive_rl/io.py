"""On-disk formats: episode CSV + JSON sidecar, report JSON, plot data, manifest.

Output directory layout::

    config.ini                  effective configuration (reruns bit-identically)
    episodes/<tag>.csv          t, x, y, theta, v, omega, running_cost, accumulated_cost
    episodes/<tag>.json         episode metadata
    report.json                 per-cell aggregates and the config echo
    plots/N<h>/<quantity>.csv   plot data per horizon (+ .png renderings)
    manifest.json               config hash, version, timestamp, file list

Floats are written with 17 significant digits so they read back exactly.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import os
from pathlib import Path
from typing import Iterable, Sequence

from .costs import StageRecord
from .dynamics import GOAL, WORLD, Pose
from .harness import EpisodeLog

log = logging.getLogger(__name__)

EPISODE_COLUMNS = ("t", "x", "y", "theta", "v", "omega", "running_cost", "accumulated_cost")
PLOT_QUANTITIES = {
    "distance": ("distance",),
    "heading": ("theta",),
    "accumulated_cost": ("accumulated_cost",),
    "trajectory": ("x", "y"),
}


class CorruptLogError(ValueError):
    """An episode file pair could not be read back."""


def fmt(v: float) -> str:
    return "%.17g" % v


def episode_tag(ep: EpisodeLog) -> str:
    return f"{ep.method}_N{ep.horizon}_p{ep.start_index}_r{ep.repetition}"


def _rows(ep: EpisodeLog):
    acc = 0.0
    for r in ep.records:
        acc += r.cost
        yield (r.time, *r.state, *r.action, r.cost, ep.delta * acc)


def write_episode(ep: EpisodeLog, directory) -> list:
    """Write ``<tag>.csv`` and ``<tag>.json``; returns both paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tag = episode_tag(ep)
    csv_path, meta_path = directory / f"{tag}.csv", directory / f"{tag}.json"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(EPISODE_COLUMNS) + "\n")
        for row in _rows(ep):
            fh.write(",".join(fmt(v) for v in row) + "\n")
    meta = {
        "method": ep.method,
        "horizon": ep.horizon,
        "start": [ep.start.x, ep.start.y, ep.start.theta],
        "start_index": ep.start_index,
        "repetition": ep.repetition,
        "seed": ep.seed,
        "delta": ep.delta,
        "records": len(ep.records),
        "accumulated_cost": ep.accumulated_cost,
        "time_to_goal": ep.time_to_goal if math.isfinite(ep.time_to_goal) else None,
        "final_pose": None if ep.final_pose is None else ep.final_pose.as_array().tolist(),
        "failed": ep.failed,
        "error": ep.error,
        "csv": csv_path.name,
    }
    meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return [csv_path, meta_path]


def read_episode(meta_path) -> EpisodeLog:
    """Load an episode from its JSON sidecar and CSV; raises :class:`CorruptLogError`."""
    meta_path = Path(meta_path)
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        csv_path = meta_path.parent / meta["csv"]
        with open(csv_path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != EPISODE_COLUMNS:
                raise CorruptLogError(f"{csv_path.name}: unexpected header {header}")
            records = []
            for row in reader:
                vals = [float(v) for v in row]
                if len(vals) != len(EPISODE_COLUMNS):
                    raise CorruptLogError(f"{csv_path.name}: bad row {row}")
                records.append(StageRecord(vals[0], tuple(vals[1:4]), tuple(vals[4:6]), vals[6]))
        if len(records) != meta["records"]:
            raise CorruptLogError(f"{csv_path.name}: {len(records)} rows, metadata says {meta['records']}")
        final = meta["final_pose"]
        ep = EpisodeLog(
            method=meta["method"],
            horizon=int(meta["horizon"]),
            start=Pose(*meta["start"], frame=WORLD),
            seed=int(meta["seed"]),
            delta=float(meta["delta"]),
            records=records,
            final_pose=None if final is None else Pose(*final, frame=GOAL),
            time_to_goal=math.inf if meta["time_to_goal"] is None else float(meta["time_to_goal"]),
            failed=bool(meta["failed"]),
            error=meta.get("error", ""),
            start_index=int(meta["start_index"]),
            repetition=int(meta["repetition"]),
        )
    except CorruptLogError:
        raise
    except (OSError, ValueError, KeyError, TypeError, StopIteration) as exc:
        raise CorruptLogError(f"{meta_path.name}: {type(exc).__name__}: {exc}") from None
    return ep


def read_episodes(directory):
    """All readable episodes in ``directory`` and the list of problems found."""
    logs, problems = [], []
    for meta_path in sorted(Path(directory).glob("*.json")):
        try:
            logs.append(read_episode(meta_path))
        except CorruptLogError as exc:
            problems.append(str(exc))
    return logs, problems


def _json_default(o):
    raise TypeError(f"not serializable: {o!r}")


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, default=_json_default) + "\n", encoding="utf-8")
    return path


def plot_series(ep: EpisodeLog):
    """Per-record ``dict`` of plotted quantities for one episode."""
    t, S, _, c = ep.arrays()
    acc = [ep.delta * a for a in _cumsum(c.tolist())]
    return {
        "t": t.tolist(),
        "distance": [math.hypot(x, y) for x, y in S[:, :2].tolist()],
        "theta": S[:, 2].tolist() if len(S) else [],
        "accumulated_cost": acc,
        "x": S[:, 0].tolist() if len(S) else [],
        "y": S[:, 1].tolist() if len(S) else [],
    }


def _cumsum(values):
    out, acc = [], 0.0
    for v in values:
        acc += v
        out.append(acc)
    return out


def write_plot_data(logs: Sequence[EpisodeLog], directory, horizons: Iterable[int]) -> list:
    """Four long-format CSVs per horizon: distance, heading, accumulated cost, trajectory."""
    written = []
    for h in horizons:
        eps = [e for e in logs if e.horizon == h]
        sub = Path(directory) / f"N{h}"
        sub.mkdir(parents=True, exist_ok=True)
        series = [(e, plot_series(e)) for e in eps]
        for name, cols in PLOT_QUANTITIES.items():
            path = sub / f"{name}.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                fh.write(",".join(("method", "start_index", "repetition", "t") + cols) + "\n")
                for e, s in series:
                    for k in range(len(s["t"])):
                        vals = ",".join(fmt(s[c][k]) for c in ("t",) + cols)
                        fh.write(f"{e.method},{e.start_index},{e.repetition},{vals}\n")
            written.append(path)
    return written


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory, config_hash: str, version: str) -> Path:
    """List every file under ``directory`` (except the manifest) with its digest."""
    directory = Path(directory)
    files = sorted(
        p.relative_to(directory).as_posix()
        for p in directory.rglob("*")
        if p.is_file() and p.name != "manifest.json"
    )
    data = {
        "tool": "predictive-rl",
        "version": version,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config_hash": config_hash,
        "files": [{"path": f, "sha256": sha256(directory / f)} for f in files],
    }
    return write_json(directory / "manifest.json", data)


def default_out_root() -> Path:
    return Path(os.environ.get("PREDICTIVE_RL_OUT", "runs"))
