"""Navigation episodes: reference routes plus templated instructions.

An episode pairs a world with a start node, a reference route, and a token
sequence of the form ``go L1 then L2 ... stop Lg`` naming the landmark at
each route waypoint after the start. Routes come in two flavours:

* ``shortest`` — a metric shortest path between two sampled nodes,
* ``twisted``  — two shortest legs joined at a via node, so the full route
  is deliberately longer than the direct shortest path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .world import WorldGraph, path_length, shortest_path

TOK_GO = 0
TOK_THEN = 1
TOK_STOP = 2
LANDMARK_OFFSET = 3

DATASET_FORMAT = "graphnav-episodes"
DATASET_VERSION = 1


class EpisodeGenError(RuntimeError):
    pass


class DatasetError(ValueError):
    pass


def token_vocab_size(landmark_vocab: int) -> int:
    return LANDMARK_OFFSET + landmark_vocab


@dataclass
class Episode:
    world: WorldGraph
    start: int
    goal: int
    path: list[int]          # reference route, path[0] == start
    tokens: list[int]        # instruction token ids
    mode: str                # "shortest" | "twisted"

    def to_dict(self) -> dict:
        return {"world": self.world.to_dict(), "start": self.start,
                "goal": self.goal, "path": self.path, "tokens": self.tokens,
                "mode": self.mode}

    @classmethod
    def from_dict(cls, d: dict) -> "Episode":
        return cls(world=WorldGraph.from_dict(d["world"]),
                   start=int(d["start"]), goal=int(d["goal"]),
                   path=[int(x) for x in d["path"]],
                   tokens=[int(x) for x in d["tokens"]],
                   mode=str(d["mode"]))


def make_instruction(world: WorldGraph, path: list[int]) -> list[int]:
    """``go L1 then L2 ... then L_{k-1} stop Lk`` over the route waypoints."""
    if len(path) < 2:
        raise EpisodeGenError("route needs at least one move")
    lms = [int(world.landmarks[v]) for v in path[1:]]
    tokens = [TOK_GO, LANDMARK_OFFSET + lms[0]]
    for lm in lms[1:-1]:
        tokens += [TOK_THEN, LANDMARK_OFFSET + lm]
    tokens += [TOK_STOP, LANDMARK_OFFSET + lms[-1]]
    return tokens


def decode_instruction(tokens: list[int]) -> list[int]:
    """Landmark ids named by an instruction, in order."""
    lms = []
    for i in range(0, len(tokens), 2):
        kw, lm = tokens[i], tokens[i + 1]
        if kw not in (TOK_GO, TOK_THEN, TOK_STOP) or lm < LANDMARK_OFFSET:
            raise DatasetError(f"malformed instruction at token {i}: {tokens}")
        lms.append(lm - LANDMARK_OFFSET)
    return lms


def _sample_shortest(world: WorldGraph, rng: np.random.Generator,
                     hop_range: tuple[int, int]) -> list[int]:
    lo, hi = hop_range
    for _ in range(300):
        s, g = rng.integers(0, world.n_nodes, size=2)
        if s == g:
            continue
        path = shortest_path(world, int(s), int(g))
        if lo <= len(path) - 1 <= hi:
            return path
    raise EpisodeGenError(
        f"no shortest route with {lo}..{hi} hops found in 300 draws")


def _sample_twisted(world: WorldGraph, rng: np.random.Generator,
                    hop_range: tuple[int, int]) -> list[int]:
    lo, hi = hop_range
    leg_lo, leg_hi = max(lo // 2, 2), max(hi // 2 + 1, 3)
    for _ in range(300):
        s, via, g = rng.integers(0, world.n_nodes, size=3)
        if len({int(s), int(via), int(g)}) < 3:
            continue
        leg1 = shortest_path(world, int(s), int(via))
        leg2 = shortest_path(world, int(via), int(g))
        if not (leg_lo <= len(leg1) - 1 <= leg_hi and leg_lo <= len(leg2) - 1 <= leg_hi):
            continue
        route = leg1 + leg2[1:]
        if len(set(route)) != len(route):
            continue  # legs overlap; route would revisit a node
        direct = path_length(world, shortest_path(world, int(s), int(g)))
        if path_length(world, route) <= direct + 1e-9:
            continue  # not actually a detour
        return route
    raise EpisodeGenError(
        f"no twisted route with {leg_lo}..{leg_hi}-hop legs found in 300 draws")


def generate_episode(world: WorldGraph, mode: str, seed: int,
                     hop_range: tuple[int, int] = (3, 6)) -> Episode:
    rng = np.random.default_rng(seed)
    if mode == "shortest":
        path = _sample_shortest(world, rng, hop_range)
    elif mode == "twisted":
        path = _sample_twisted(world, rng, hop_range)
    else:
        raise EpisodeGenError(f"unknown episode mode {mode!r}")
    return Episode(world=world, start=path[0], goal=path[-1], path=path,
                   tokens=make_instruction(world, path), mode=mode)


def expert_actions(episode: Episode) -> list[int]:
    """Action ids that replay the reference route from the start node."""
    w = episode.world
    return [w.action_to(u, v) for u, v in zip(episode.path, episode.path[1:])]


def save_dataset(episodes: list[Episode], path: str) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"format": DATASET_FORMAT,
                             "version": DATASET_VERSION,
                             "count": len(episodes)}) + "\n")
        for ep in episodes:
            fh.write(json.dumps(ep.to_dict()) + "\n")


def load_dataset(path: str) -> list[Episode]:
    with open(path) as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:1: bad header: {exc}") from exc
        if header.get("format") != DATASET_FORMAT:
            raise DatasetError(f"{path}:1: not a {DATASET_FORMAT} file")
        if header.get("version") != DATASET_VERSION:
            raise DatasetError(
                f"{path}:1: unsupported version {header.get('version')!r}")
        episodes = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                episodes.append(Episode.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: bad record: {exc}") from exc
    if len(episodes) != header["count"]:
        raise DatasetError(
            f"{path}: header promises {header['count']} episodes, found {len(episodes)}")
    return episodes
