"""Navigation evaluation: endpoint metrics plus path-fidelity scores.

All paths are node-id lists over a world graph; distances are Euclidean
between node positions, so point-to-path distance is the minimum over the
path's nodes. The similarity scores (nDTW, SDTW, CLS) live in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .world import WorldGraph, path_length, shortest_path

DEFAULT_THRESHOLD = 3.0  # meters


class MetricsError(ValueError):
    pass


@dataclass
class EvalResult:
    PL: float
    NE: float
    success: float        # 0.0 or 1.0
    oracle_success: float
    SPL: float
    CLS: float
    nDTW: float
    SDTW: float


def _positions(world: WorldGraph, path: list[int]) -> np.ndarray:
    if not path:
        raise MetricsError("empty path")
    for v in path:
        if not 0 <= v < world.n_nodes:
            raise MetricsError(f"node {v} not in world (n={world.n_nodes})")
    return world.positions[np.asarray(path)]


def dtw_cost(world: WorldGraph, traj: list[int], ref: list[int]) -> float:
    """Dynamic-time-warping cost between two node paths."""
    p = _positions(world, traj)
    q = _positions(world, ref)
    d = np.sqrt(((p[:, None, :] - q[None, :, :]) ** 2).sum(-1))
    n, m = d.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i, j] = d[i - 1, j - 1] + min(acc[i - 1, j], acc[i, j - 1],
                                              acc[i - 1, j - 1])
    return float(acc[n, m])


def ndtw(world: WorldGraph, traj: list[int], ref: list[int],
         d_th: float = DEFAULT_THRESHOLD) -> float:
    return float(np.exp(-dtw_cost(world, traj, ref) / (len(ref) * d_th)))


def sdtw(world: WorldGraph, traj: list[int], ref: list[int],
         d_th: float = DEFAULT_THRESHOLD) -> float:
    goal_dist = float(np.linalg.norm(world.positions[traj[-1]] - world.positions[ref[-1]]))
    return (1.0 if goal_dist <= d_th else 0.0) * ndtw(world, traj, ref, d_th)


def cls_score(world: WorldGraph, traj: list[int], ref: list[int],
              d_th: float = DEFAULT_THRESHOLD) -> float:
    """Coverage of the reference path, discounted by length mismatch."""
    p = _positions(world, traj)
    q = _positions(world, ref)
    dist_to_traj = np.sqrt(((q[:, None, :] - p[None, :, :]) ** 2).sum(-1)).min(axis=1)
    coverage = float(np.mean(np.exp(-dist_to_traj / d_th)))
    expected = coverage * path_length(world, ref)
    pl = path_length(world, traj)
    denom = expected + abs(pl - expected)
    score = expected / denom if denom > 0 else 1.0
    return coverage * score


def nav_metrics(world: WorldGraph, traj: list[int], ref: list[int],
                d_th: float = DEFAULT_THRESHOLD) -> EvalResult:
    p = _positions(world, traj)
    goal = _positions(world, ref)[-1]
    ne = float(np.linalg.norm(p[-1] - goal))
    success = 1.0 if ne <= d_th else 0.0
    oracle = 1.0 if float(np.sqrt(((p - goal) ** 2).sum(-1)).min()) <= d_th else 0.0
    pl = path_length(world, traj)
    opt = path_length(world, shortest_path(world, traj[0], ref[-1]))
    spl = success if opt == 0.0 else success * opt / max(pl, opt)
    nd = ndtw(world, traj, ref, d_th)
    return EvalResult(PL=pl, NE=ne, success=success, oracle_success=oracle,
                      SPL=spl, CLS=cls_score(world, traj, ref, d_th),
                      nDTW=nd, SDTW=success * nd)


def aggregate(results: list[EvalResult]) -> dict[str, float]:
    """Mean of each field; SR/OSR are the means of the success flags."""
    if not results:
        raise MetricsError("no episodes to aggregate")
    out = {
        "PL": float(np.mean([r.PL for r in results])),
        "NE": float(np.mean([r.NE for r in results])),
        "SR": float(np.mean([r.success for r in results])),
        "OSR": float(np.mean([r.oracle_success for r in results])),
        "SPL": float(np.mean([r.SPL for r in results])),
        "CLS": float(np.mean([r.CLS for r in results])),
        "nDTW": float(np.mean([r.nDTW for r in results])),
        "SDTW": float(np.mean([r.SDTW for r in results])),
    }
    return out
