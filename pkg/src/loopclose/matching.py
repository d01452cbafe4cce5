"""Exact nearest-neighbor search over a descriptor map and thresholded
loop-closure decisions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Collection, Iterable, Sequence

import numpy as np

from . import _kernels
from .encoders import Descriptor
from .errors import DimMismatchError, EmptyDatabaseError, InvalidParamsError


@dataclass(frozen=True)
class Match:
    """A query resolved to its closest map entry."""

    query_id: str
    matched_id: str
    distance: float

    def __post_init__(self):
        if not (math.isfinite(self.distance) and self.distance >= 0.0):
            raise InvalidParamsError(f"bad match distance {self.distance}")


class DescriptorDatabase:
    """Immutable, insertion-ordered collection of equal-dimension descriptors."""

    def __init__(self, entries: Iterable[Descriptor]):
        entries = list(entries)
        ids = [e.image_id for e in entries]
        if len(set(ids)) != len(ids):
            raise InvalidParamsError("image ids must be unique")
        if entries:
            dim = entries[0].dim
            for e in entries:
                if e.dim != dim:
                    raise DimMismatchError(
                        f"entry {e.image_id!r} has dim {e.dim}, database has {dim}"
                    )
            self._matrix = np.ascontiguousarray(
                np.stack([e.values for e in entries])
            )
        else:
            self._matrix = np.zeros((0, 0))
        self._ids = tuple(ids)
        self._positions = {img_id: i for i, img_id in enumerate(ids)}

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def dim(self) -> int:
        return self._matrix.shape[1]

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    def position(self, image_id: str) -> int | None:
        """Insertion index of an id, or None when absent."""
        return self._positions.get(image_id)


def nearest_neighbor(
    query: Descriptor,
    db: DescriptorDatabase,
    exclude: Collection[str] = (),
) -> Match:
    """Exact minimum-Euclidean-distance entry; ties go to the earliest insertion.

    ``exclude`` removes map ids from consideration (used for masking
    temporally adjacent frames in single-sequence runs).
    """
    if len(db) == 0:
        raise EmptyDatabaseError("cannot query an empty database")
    if query.dim != db.dim:
        raise DimMismatchError(f"query dim {query.dim} != database dim {db.dim}")
    matrix = db._matrix
    ids = db.ids
    if exclude:
        keep = np.array([i not in exclude for i in ids], dtype=bool)
        if not keep.any():
            raise EmptyDatabaseError("every database entry is excluded")
        matrix = matrix[keep]
        ids = tuple(np.array(ids, dtype=object)[keep])
    idx, d2 = _kernels.assign_nearest(
        np.ascontiguousarray(query.values[None, :]), matrix
    )
    i = int(idx[0])
    return Match(
        query_id=query.image_id,
        matched_id=ids[i],
        distance=float(np.sqrt(max(d2[0], 0.0))),
    )


def detect_loops(
    queries: Sequence[Descriptor],
    db: DescriptorDatabase,
    threshold: float,
    exclude_ids: Sequence[Collection[str]] | None = None,
) -> list[tuple[Match, bool]]:
    """Nearest neighbor per query with a distance acceptance test.

    Results preserve query order; ``accepted`` is ``distance <= threshold``.
    ``exclude_ids`` optionally gives a per-query set of map ids to mask.
    """
    if exclude_ids is not None and len(exclude_ids) != len(queries):
        raise InvalidParamsError("exclude_ids must align with queries")
    out = []
    for i, q in enumerate(queries):
        m = nearest_neighbor(q, db, exclude=exclude_ids[i] if exclude_ids else ())
        out.append((m, m.distance <= threshold))
    return out
