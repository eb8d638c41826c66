"""Output files: trajectory CSV, metrics and timing JSON.

Trajectory columns, in order::

    step, time_s, robot_x_m, robot_y_m, action_vx_mps, action_vy_mps,
    estop, plan_wall_s, agent0_x_m, agent0_y_m, agent1_x_m, ...

Floats are written with ``repr`` (shortest round-trip decimal); missing
values are empty fields.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .sim import EpisodeResult, TrajectoryRecord

TRAJECTORY_COLUMNS = ("step", "time_s", "robot_x_m", "robot_y_m", "action_vx_mps",
                      "action_vy_mps", "estop", "plan_wall_s")
FORMAT_VERSION = 1


class OutputError(OSError):
    pass


def _num(v) -> str:
    return "" if v is None else repr(v)


def _opt(s: str):
    return None if s == "" else float(s)


def trajectory_header(n_agents: int) -> list[str]:
    cols = list(TRAJECTORY_COLUMNS)
    for i in range(n_agents):
        cols += [f"agent{i}_x_m", f"agent{i}_y_m"]
    return cols


def write_trajectory(result: EpisodeResult | list, path) -> Path:
    records = result.records if isinstance(result, EpisodeResult) else list(result)
    n_agents = len(records[0].agents) if records else 0
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(trajectory_header(n_agents))
            for r in records:
                row = [str(r.step), _num(r.time), _num(r.x), _num(r.y), _num(r.vx), _num(r.vy),
                       str(int(r.estop)), _num(r.plan_wall)]
                for ax, ay in r.agents:
                    row += [_num(ax), _num(ay)]
                w.writerow(row)
    except OSError as exc:
        raise OutputError(f"cannot write trajectory to {path}: {exc.strerror or exc}") from exc
    return path


def read_trajectory(path) -> list[TrajectoryRecord]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file (no header)")
    header = rows[0]
    if tuple(header[:len(TRAJECTORY_COLUMNS)]) != TRAJECTORY_COLUMNS:
        raise ValueError(f"{path}: unexpected header {header[:len(TRAJECTORY_COLUMNS)]}")
    n_agents = (len(header) - len(TRAJECTORY_COLUMNS)) // 2
    out = []
    for row in rows[1:]:
        agents = tuple((float(row[8 + 2 * i]), float(row[9 + 2 * i])) for i in range(n_agents))
        out.append(TrajectoryRecord(int(row[0]), float(row[1]), float(row[2]), float(row[3]),
                                    _opt(row[4]), _opt(row[5]), int(row[6]), _opt(row[7]), agents))
    return out


def _write_json(doc: dict, path, what: str) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps({"format_version": FORMAT_VERSION, **doc}, indent=2) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {what} to {path}: {exc.strerror or exc}") from exc
    return path


def write_metrics(stats: dict, path) -> Path:
    """Campaign statistics; ``entries`` are keyed by (planner, agents)."""
    return _write_json(stats, path, "metrics")


def write_timing(tables, path) -> Path:
    """Timing tables; each entry is keyed by (planner, value) within its sweep."""
    tables = [tables] if isinstance(tables, dict) else list(tables)
    return _write_json({"tables": tables}, path, "timing")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())
