"""Batched neighbor search.

Two kernels produce the same pair set: a brute-force O(N²) scan parallel
over blocks of rows, and an O(N) cell list that bins every atom of every
sample into one grid, sorts atoms by cell id and scans the 27 surrounding
cells. Pairs from different samples are rejected at distance-check time.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from django.conf import settings

from common.exceptions import GeometryError, NeighborOverflowError
from neighbors.types import (
    SENTINEL,
    CanonicalPairs,
    NeighborList,
    NeighborSpec,
    Strategy,
    padded_list,
)
from structure.system import Box, System, minimum_image

logger = logging.getLogger(__name__)

# strategy=auto switches to the cell list from this many atoms on.
AUTO_CELL_THRESHOLD = 10_000
# A periodic direction needs this many cells for the 27-cell stencil.
MIN_PERIODIC_CELLS = 3
MAX_CELLS_PER_DIM = 1024
# Upper bound on candidate pairs held in memory by one brute-force block.
BRUTE_BLOCK_ELEMENTS = 1 << 20

_STENCIL = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.int64)


def _select(i, j, system: System, spec: NeighborSpec, box: Box | None):
    """Keep same-sample pairs with r_l < d <= r_u."""
    same = system.batch[i] == system.batch[j]
    i, j = i[same], j[same]
    deltas = minimum_image(system.positions[i] - system.positions[j], box)
    distances = np.sqrt(np.einsum("ij,ij->i", deltas, deltas))
    keep = (distances <= spec.cutoff_upper) & (distances > spec.cutoff_lower)
    return i[keep], j[keep], deltas[keep], distances[keep]


def _brute_block(start, stop, system, spec, box, batch_end):
    rows = np.arange(start, stop)
    # Samples are contiguous, so columns never reach past the last row's sample.
    col_stop = int(batch_end[stop - 1])
    cols = np.arange(start + 1, col_stop)
    if len(cols) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros((0, 3)), np.zeros(0)
    i, j = np.meshgrid(rows, cols, indexing="ij")
    upper = (j > i) & (j < batch_end[i])
    return _select(i[upper], j[upper], system, spec, box)


def brute_pairs(system: System, spec: NeighborSpec, box: Box | None, threads: int = 1):
    n = system.n_atoms
    batch_end = np.searchsorted(system.batch, system.batch, side="right")
    block = max(1, BRUTE_BLOCK_ELEMENTS // max(n, 1))
    bounds = [(s, min(s + block, n)) for s in range(0, n, block)]

    def run(bound):
        return _brute_block(bound[0], bound[1], system, spec, box, batch_end)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(bound) for bound in bounds]
    return _join(parts)


def _grid(system: System, cutoff: float, box: Box | None):
    """Cell indices per atom, or None when the box is too small for a grid."""
    positions = system.positions
    if box is not None:
        fractional = positions @ np.linalg.inv(box.vectors)
        fractional -= np.floor(fractional)
        widths = box.perpendicular_widths()
        n_cells = np.minimum(np.floor(widths / cutoff), MAX_CELLS_PER_DIM).astype(np.int64)
        if np.any(n_cells < MIN_PERIODIC_CELLS):
            return None
        index = np.floor(fractional * n_cells).astype(np.int64) % n_cells
        return index, n_cells, True
    lower = positions.min(axis=0) - cutoff
    extent = positions.max(axis=0) + cutoff - lower
    n_cells = np.clip(np.floor(extent / cutoff), 1, MAX_CELLS_PER_DIM).astype(np.int64)
    edge = extent / n_cells
    index = np.clip(np.floor((positions - lower) / edge).astype(np.int64), 0, n_cells - 1)
    return index, n_cells, False


def cell_pairs(system: System, spec: NeighborSpec, box: Box | None):
    grid = _grid(system, spec.cutoff_upper, box)
    if grid is None:
        return None
    index, n_cells, periodic = grid
    n = system.n_atoms
    cell_id = np.ravel_multi_index(index.T, n_cells)
    # hash-and-sort
    order = np.argsort(cell_id, kind="stable")
    occupied, starts = np.unique(cell_id[order], return_index=True)
    ends = np.append(starts[1:], n)

    atoms = np.arange(n)
    parts = []
    for offset in _STENCIL:
        neighbor = index + offset
        if periodic:
            neighbor %= n_cells
            inside = np.ones(n, dtype=bool)
        else:
            inside = np.all((neighbor >= 0) & (neighbor < n_cells), axis=1)
        neighbor_id = np.ravel_multi_index(neighbor[inside].T, n_cells)
        source = atoms[inside]
        slot = np.searchsorted(occupied, neighbor_id)
        slot = np.minimum(slot, len(occupied) - 1)
        found = occupied[slot] == neighbor_id
        source, slot = source[found], slot[found]

        counts = ends[slot] - starts[slot]
        total = int(counts.sum())
        if total == 0:
            continue
        i = np.repeat(source, counts)
        within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        j = order[np.repeat(starts[slot], counts) + within]
        half = i < j
        parts.append(_select(i[half], j[half], system, spec, box))
    return _join(parts)


def _join(parts):
    if not parts:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros((0, 3)), np.zeros(0)
    return tuple(np.concatenate(column) for column in zip(*parts))


def _resolve_strategy(system: System, spec: NeighborSpec) -> Strategy:
    if spec.strategy == Strategy.AUTO:
        return Strategy.BRUTE if system.n_atoms < AUTO_CELL_THRESHOLD else Strategy.CELL
    return spec.strategy


def build_neighbor_list(
    system: System, spec: NeighborSpec, threads: int | None = None
) -> NeighborList:
    """All same-sample pairs with r_l < d <= r_u, padded to ``spec.capacity``.

    Raises NeighborOverflowError (carrying the required capacity) instead of
    truncating.
    """
    box = system.box if system.is_periodic else None
    if box is not None and spec.cutoff_upper > box.max_cutoff():
        raise GeometryError(
            f"cutoff {spec.cutoff_upper} exceeds half the smallest box width "
            f"({box.max_cutoff():.6g})"
        )
    threads = settings.NEIGHBOR_THREADS if threads is None else threads

    strategy = _resolve_strategy(system, spec)
    notices = []
    found = None
    if strategy == Strategy.CELL:
        found = cell_pairs(system, spec, box)
        if found is None:
            notice = "box too small for a 3-cell grid, fell back to brute force"
            logger.info(notice)
            notices.append(notice)
            strategy = Strategy.BRUTE
    if found is None:
        found = brute_pairs(system, spec, box, threads=threads)
    i, j, deltas, distances = found

    if spec.include_self_loops:
        loops = np.arange(system.n_atoms)
        i = np.concatenate([i, loops])
        j = np.concatenate([j, loops])
        deltas = np.concatenate([deltas, np.zeros((len(loops), 3))])
        distances = np.concatenate([distances, np.zeros(len(loops))])

    if spec.full_list:
        mirror = i != j
        i, j = np.concatenate([i, j[mirror]]), np.concatenate([j, i[mirror]])
        deltas = np.concatenate([deltas, -deltas[mirror]])
        distances = np.concatenate([distances, distances[mirror]])
    else:
        # self-loops carry i == j already
        swap = i > j
        i, j = np.where(swap, j, i), np.where(swap, i, j)
        deltas = np.where(swap[:, None], -deltas, deltas)

    if spec.deterministic:
        order = np.lexsort((j, i))
        i, j, deltas, distances = i[order], j[order], deltas[order], distances[order]

    if len(i) > spec.capacity:
        raise NeighborOverflowError(required=len(i), capacity=spec.capacity)

    return padded_list(
        i,
        j,
        deltas,
        distances,
        spec.capacity,
        n_atoms=system.n_atoms,
        cutoff_upper=spec.cutoff_upper,
        cutoff_lower=spec.cutoff_lower,
        full_list=spec.full_list,
        strategy=strategy,
        notices=tuple(notices),
    )


def build_with_retry(system: System, spec: NeighborSpec, threads: int | None = None):
    """Build once, and on overflow rebuild at the reported required capacity."""
    try:
        return build_neighbor_list(system, spec, threads=threads), spec
    except NeighborOverflowError as error:
        resized = spec.with_capacity(error.required)
        logger.debug("neighbor capacity %d -> %d", spec.capacity, error.required)
        return build_neighbor_list(system, resized, threads=threads), resized


def canonicalize(neighbors: NeighborList) -> CanonicalPairs:
    """Strategy-independent view: sentinels dropped, i <= j, sorted."""
    valid = neighbors.valid
    pairs = neighbors.pairs[valid]
    distances = neighbors.distances[valid]
    if neighbors.full_list:
        keep = pairs[:, 0] <= pairs[:, 1]
        pairs, distances = pairs[keep], distances[keep]
    pairs = np.sort(pairs, axis=1)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return CanonicalPairs(pairs[order], distances[order])


__all__ = [
    "AUTO_CELL_THRESHOLD",
    "SENTINEL",
    "brute_pairs",
    "build_neighbor_list",
    "build_with_retry",
    "canonicalize",
    "cell_pairs",
]
