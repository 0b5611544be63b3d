"""Fire-egress distance: longest walk from the entrance to any reachable cell.

Shortest paths run over the walkable cells with 8-connectivity. Orthogonal
steps cost one cell, diagonal steps sqrt(2) cells, and a diagonal step is
only allowed when both orthogonal cells it passes are walkable, so paths
never slip through a wall corner. All Entrance cells are sources.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .plan import Floorplan, PlanError, ROOM_BASE, Tag

SQRT2 = float(np.sqrt(2.0))
FIRE_LIMIT = 15.0  # m


@dataclass(frozen=True, eq=False)
class EgressResult:
    max_distance: float  # m
    farthest_cell: tuple[int, int]  # (col, row)
    unreachable_cells: int
    distance_field: np.ndarray  # m, inf where not walkable or not reachable

    def to_dict(self) -> dict:
        return {
            "max_distance": self.max_distance,
            "farthest_cell": list(self.farthest_cell),
            "unreachable_cells": self.unreachable_cells,
        }


def walkable_mask(plan: Floorplan) -> np.ndarray:
    grid = plan.grid
    return (grid >= ROOM_BASE) | (grid == Tag.DOOR) | (grid == Tag.ENTRANCE)


def _step_graph(walk: np.ndarray) -> csr_matrix:
    h, w = walk.shape
    idx = np.arange(h * w).reshape(h, w)
    ortho_e = walk[:, :-1] & walk[:, 1:]
    ortho_s = walk[:-1, :] & walk[1:, :]
    # Both diagonals of a 2x2 block need the whole block walkable.
    block = walk[:-1, :-1] & walk[:-1, 1:] & walk[1:, :-1] & walk[1:, 1:]
    src = np.concatenate([idx[:, :-1][ortho_e], idx[:-1, :][ortho_s],
                          idx[:-1, :-1][block], idx[:-1, 1:][block]])
    dst = np.concatenate([idx[:, 1:][ortho_e], idx[1:, :][ortho_s],
                          idx[1:, 1:][block], idx[1:, :-1][block]])
    n_ortho = int(ortho_e.sum() + ortho_s.sum())
    weight = np.full(src.size, SQRT2)
    weight[:n_ortho] = 1.0
    return csr_matrix((weight, (src, dst)), shape=(h * w, h * w))


def step_distances(walk: np.ndarray, sources: np.ndarray) -> np.ndarray:
    """Geodesic distance in cell units from the ``sources`` mask over ``walk``."""
    h, w = walk.shape
    start = np.flatnonzero(sources.ravel())
    if start.size == 0:
        return np.full((h, w), np.inf)
    dist = dijkstra(_step_graph(walk), directed=False, indices=start, min_only=True)
    dist = dist.reshape(h, w)
    dist[~walk] = np.inf
    return dist


def egress_distance(plan: Floorplan) -> EgressResult:
    walk = walkable_mask(plan)
    sources = plan.grid == Tag.ENTRANCE
    if not sources.any():
        raise PlanError("no entrance")
    field = step_distances(walk, sources) * plan.scale
    reached = np.isfinite(field)
    unreachable = int(np.count_nonzero(walk & ~reached))
    masked = np.where(reached, field, -1.0)
    flat = int(np.argmax(masked))
    row, col = divmod(flat, plan.width)
    return EgressResult(float(masked.flat[flat]), (col, row), unreachable, field)


def egress_pass(result: EgressResult, limit: float = FIRE_LIMIT) -> bool:
    return result.max_distance <= limit and result.unreachable_cells == 0
