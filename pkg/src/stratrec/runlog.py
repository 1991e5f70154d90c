"""Run artifacts on disk: trajectory logs, epoch stats, histogram matrices.

Trajectory logs are JSON lines, one record per turn:
  {session_id, turn, strategy, strategy_name, strategy_logprob, action,
   user_text, reward, terminated, features_digest, outcome}
``outcome`` appears on the final turn of each session only. All JSON is
written with sorted keys so identical runs produce identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .session import EpochStats, SessionRollout
from .strategies import StrategyCatalog


def dumps_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_trajectory_log(
    rollouts: Sequence[SessionRollout],
    catalog: StrategyCatalog,
    path: str | Path,
) -> None:
    lines = []
    for rollout in rollouts:
        session_id = rollout.final_state.session_id
        n = len(rollout.turns)
        for i, turn in enumerate(rollout.turns, 1):
            rec = {
                "session_id": session_id,
                "turn": i,
                "strategy": turn.record.strategy,
                "strategy_name": catalog.by_id(turn.record.strategy).name,
                "strategy_logprob": turn.record.strategy_logprob,
                "action": turn.record.action_text,
                "user_text": turn.user_text,
                "reward": turn.record.reward,
                "terminated": turn.record.terminated,
                "features_digest": turn.record.state_features_digest,
            }
            if i == n:
                rec["outcome"] = rollout.trajectory.outcome.label()
            lines.append(dumps_record(rec))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trajectory_log(path: str | Path) -> list[list[dict]]:
    """Group log lines back into per-session turn lists, order preserved."""
    sessions: dict[str, list[dict]] = {}
    order: list[str] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        sid = rec["session_id"]
        if sid not in sessions:
            sessions[sid] = []
            order.append(sid)
        sessions[sid].append(rec)
    for turns in sessions.values():
        turns.sort(key=lambda r: r["turn"])
    return [sessions[sid] for sid in order]


def append_epoch_stats(stats: EpochStats, path: str | Path) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(dumps_record(stats.to_record()) + "\n")


def read_epoch_stats(path: str | Path) -> list[dict]:
    return [
        json.loads(line)
        for line in Path(path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


def write_histogram_matrix(matrix: np.ndarray, strategy_names: Iterable[str], path: str | Path) -> None:
    """Tab-separated (strategy x bucket) frequency matrix for plotting."""
    lines = ["strategy\t" + "\t".join(f"bucket_{i}" for i in range(matrix.shape[1]))]
    for name, row in zip(strategy_names, matrix):
        lines.append(name + "\t" + "\t".join(f"{v:.6f}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
