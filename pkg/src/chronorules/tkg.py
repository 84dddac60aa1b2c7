"""Temporal knowledge graph core: catalogs, quadruple ingestion, indexed storage.

Facts are (subject, relation, object, t) quadruples over dense integer ids.
Timestamps are day indices (the datasets used here have 24-hour granularity);
ISO dates in input files are converted relative to the earliest date seen.
A built :class:`TemporalKG` is immutable and safe for concurrent reads.
"""

from __future__ import annotations

import datetime
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ParseError, ResolutionError

logger = logging.getLogger(__name__)

INVERSE_PREFIX = "inv_"


@dataclass(frozen=True, order=True)
class Quadruple:
    """One timestamped fact; all fields are dense integer ids / day index."""

    subject: int
    relation: int
    object: int
    t: int


class Catalog:
    """Dense integer ids for names, assigned in first-seen order."""

    def __init__(self, names: Iterable[str] = ()):
        self._names: list[str] = []
        self._ids: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        """Return the id for ``name``, creating a new entry if unseen."""
        existing = self._ids.get(name)
        if existing is not None:
            return existing
        new_id = len(self._names)
        self._names.append(name)
        self._ids[name] = new_id
        return new_id

    def id_of(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise ResolutionError(f"unknown name: {name!r}") from None

    def name_of(self, idx: int) -> str:
        if not 0 <= idx < len(self._names):
            raise ResolutionError(f"id {idx} out of range (catalog size {len(self._names)})")
        return self._names[idx]

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._names)

    @classmethod
    def from_id_file(cls, path: str | Path) -> "Catalog":
        """Load a ``name<TAB>id`` file; ids must be dense 0..n-1."""
        entries: dict[int, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError("expected name<TAB>id", str(path), lineno)
                name, raw_id = parts
                try:
                    idx = int(raw_id)
                except ValueError:
                    raise ParseError(f"id is not an integer: {raw_id!r}", str(path), lineno) from None
                if idx in entries:
                    raise ParseError(f"duplicate id {idx}", str(path), lineno)
                entries[idx] = name
        if sorted(entries) != list(range(len(entries))):
            raise DataError(f"{path}: ids are not dense 0..{len(entries) - 1}")
        return cls(entries[i] for i in range(len(entries)))

    def write_id_file(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for idx, name in enumerate(self._names):
                fh.write(f"{name}\t{idx}\n")


class RelationCatalog(Catalog):
    """Relation catalog with paired inverse relations.

    After :meth:`finalize_inverses`, the forward ids 0..F-1 are mirrored by
    inverse ids F..2F-1 named ``inv_<name>``; inverse-of is an involution and
    forward/inverse id ranges are disjoint.
    """

    def __init__(self, names: Iterable[str] = ()):
        self._n_forward: int | None = None
        super().__init__(names)

    @property
    def finalized(self) -> bool:
        return self._n_forward is not None

    @property
    def n_forward(self) -> int:
        if self._n_forward is None:
            return len(self)
        return self._n_forward

    def add(self, name: str) -> int:
        if self._n_forward is not None and name not in self:
            raise ResolutionError(
                f"cannot add relation {name!r}: catalog finalized with inverses"
            )
        return super().add(name)

    def finalize_inverses(self) -> None:
        """Append an ``inv_``-prefixed counterpart for every forward relation."""
        if self._n_forward is not None:
            return
        forward = list(self._names)
        self._n_forward = len(forward)
        for name in forward:
            super().add(INVERSE_PREFIX + name)

    def inverse_of(self, rid: int) -> int:
        if self._n_forward is None:
            raise ResolutionError("inverses not finalized; call finalize_inverses() first")
        if not 0 <= rid < len(self):
            raise ResolutionError(f"relation id {rid} out of range")
        return rid + self._n_forward if rid < self._n_forward else rid - self._n_forward

    def is_inverse(self, rid: int) -> bool:
        if self._n_forward is None:
            return False
        return rid >= self._n_forward


def _parse_time_token(token: str, path: str, lineno: int):
    """Return an int day index or a datetime.date."""
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return datetime.date.fromisoformat(token)
    except ValueError:
        raise ParseError(f"unparsable timestamp: {token!r}", path, lineno) from None


def _read_rows(path: str | Path) -> list[tuple[str, str, str, object]]:
    rows: list[tuple[str, str, str, object]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(
                    f"expected 4 tab-separated fields, got {len(parts)}", str(path), lineno
                )
            s, r, o, raw_t = parts
            rows.append((s, r, o, _parse_time_token(raw_t, str(path), lineno)))
    return rows


def _normalize_times(
    rows: Sequence[tuple[str, str, str, object]],
    path: str,
    epoch: datetime.date | None,
    time_divisor: int,
) -> list[tuple[str, str, str, int]]:
    has_dates = any(isinstance(r[3], datetime.date) for r in rows)
    has_ints = any(isinstance(r[3], int) for r in rows)
    if has_dates and has_ints:
        raise DataError(f"{path}: mixed integer and date timestamps in one dataset")
    out = []
    if has_dates:
        base = epoch or min(r[3] for r in rows)  # type: ignore[type-var]
        for s, r, o, t in rows:
            day = (t - base).days  # type: ignore[operator]
            if day < 0:
                raise DataError(f"{path}: date {t} precedes epoch {base}")
            out.append((s, r, o, day))
    else:
        for s, r, o, t in rows:
            if t % time_divisor != 0:  # type: ignore[operator]
                raise DataError(f"{path}: timestamp {t} not divisible by {time_divisor}")
            day = t // time_divisor  # type: ignore[operator]
            if day < 0:
                raise DataError(f"{path}: negative day index {day}")
            out.append((s, r, o, day))
    return out


def _intern(
    rows: Sequence[tuple[str, str, str, int]],
    entities: Catalog,
    relations: RelationCatalog,
    strict: bool,
) -> list[Quadruple]:
    quads = []
    for s, r, o, t in rows:
        if strict:
            quads.append(Quadruple(entities.id_of(s), relations.id_of(r), entities.id_of(o), t))
        else:
            quads.append(Quadruple(entities.add(s), relations.add(r), entities.add(o), t))
    return quads


def load_quadruples(
    path: str | Path,
    entities: Catalog | None = None,
    relations: RelationCatalog | None = None,
    strict: bool = False,
    epoch: datetime.date | None = None,
    time_divisor: int = 1,
) -> tuple[list[Quadruple], Catalog, RelationCatalog]:
    """Load a ``subject<TAB>relation<TAB>object<TAB>timestamp`` file.

    Unknown names extend the catalogs unless ``strict`` is set, in which case
    they raise :class:`ResolutionError`. Timestamps may be integer day indices
    or ISO-8601 dates (converted relative to ``epoch`` or the file minimum).
    """
    entities = entities if entities is not None else Catalog()
    relations = relations if relations is not None else RelationCatalog()
    rows = _normalize_times(_read_rows(path), str(path), epoch, time_divisor)
    return _intern(rows, entities, relations, strict), entities, relations


@dataclass
class DatasetSplit:
    """Chronological historical / current / future quadruple lists."""

    historical: list[Quadruple]
    current: list[Quadruple]
    future: list[Quadruple]

    def validate_chronology(self) -> None:
        if self.historical and self.current:
            if max(q.t for q in self.historical) > min(q.t for q in self.current):
                raise DataError("historical split overlaps current split in time")
        if self.current and self.future:
            if min(q.t for q in self.current) > min(q.t for q in self.future):
                raise DataError("current split starts after future split")


def load_splits(
    historical_path: str | Path,
    current_path: str | Path,
    future_path: str | Path,
    entity2id: str | Path | None = None,
    relation2id: str | Path | None = None,
    time_divisor: int = 1,
) -> tuple[DatasetSplit, Catalog, RelationCatalog]:
    """Load the three split files with shared catalogs and a shared date epoch."""
    strict = entity2id is not None or relation2id is not None
    entities = Catalog.from_id_file(entity2id) if entity2id else Catalog()
    relations = (
        RelationCatalog(Catalog.from_id_file(relation2id).names) if relation2id else RelationCatalog()
    )
    raw = [_read_rows(p) for p in (historical_path, current_path, future_path)]
    dates = [t for rows in raw for *_unused, t in rows if isinstance(t, datetime.date)]
    epoch = min(dates) if dates else None
    parts = []
    for rows, path in zip(raw, (historical_path, current_path, future_path)):
        normalized = _normalize_times(rows, str(path), epoch, time_divisor)
        parts.append(_intern(normalized, entities, relations, strict))
    split = DatasetSplit(*parts)
    split.validate_chronology()
    return split, entities, relations


class TemporalKG:
    """Immutable indexed store of quadruples.

    Maintains three coherent views over the same flat edge array: by subject
    (time-sorted), by (subject, relation), and by relation. Edge rows are
    int64 ``[subject, relation, object, t]``.
    """

    def __init__(
        self,
        edges: np.ndarray,
        entities: Catalog,
        relations: RelationCatalog,
        inverses_added: bool = False,
    ):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 4)
        self.entities = entities
        self.relations = relations
        self.inverses_added = inverses_added
        self._edges = edges
        self._edges.setflags(write=False)

        # subject-major view, time-sorted within each subject
        order = np.lexsort((edges[:, 2], edges[:, 1], edges[:, 3], edges[:, 0]))
        self._by_subject = edges[order]
        self._by_subject.setflags(write=False)
        self._subject_bounds = self._bounds(self._by_subject[:, 0], len(entities))

        # (subject, relation)-major view, time-sorted within each pair
        order = np.lexsort((edges[:, 2], edges[:, 3], edges[:, 1], edges[:, 0]))
        self._by_sub_rel = edges[order]
        self._by_sub_rel.setflags(write=False)
        self._sub_rel_slices = self._pair_slices(self._by_sub_rel)

        # relation-major view, time-sorted within each relation
        order = np.lexsort((edges[:, 2], edges[:, 0], edges[:, 3], edges[:, 1]))
        self._by_relation = edges[order]
        self._by_relation.setflags(write=False)
        self._relation_bounds = self._bounds(self._by_relation[:, 1], len(relations))

    @staticmethod
    def _bounds(sorted_keys: np.ndarray, n_keys: int) -> np.ndarray:
        return np.searchsorted(sorted_keys, np.arange(n_keys + 1))

    @staticmethod
    def _pair_slices(sorted_edges: np.ndarray) -> dict[tuple[int, int], tuple[int, int]]:
        slices: dict[tuple[int, int], tuple[int, int]] = {}
        if len(sorted_edges) == 0:
            return slices
        keys = sorted_edges[:, :2]
        change = np.nonzero(np.any(np.diff(keys, axis=0) != 0, axis=1))[0] + 1
        starts = np.concatenate(([0], change))
        ends = np.concatenate((change, [len(sorted_edges)]))
        for start, end in zip(starts, ends):
            slices[(int(keys[start, 0]), int(keys[start, 1]))] = (int(start), int(end))
        return slices

    # -- catalog-aware validation -------------------------------------------------

    def _check_entity(self, entity: int) -> None:
        if not 0 <= entity < len(self.entities):
            raise ResolutionError(f"unknown entity id {entity}")

    def _check_relation(self, relation: int) -> None:
        if not 0 <= relation < len(self.relations):
            raise ResolutionError(f"unknown relation id {relation}")

    # -- views --------------------------------------------------------------------

    @property
    def edges(self) -> np.ndarray:
        return self._edges

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def min_t(self) -> int | None:
        return int(self._edges[:, 3].min()) if len(self._edges) else None

    @property
    def max_t(self) -> int | None:
        return int(self._edges[:, 3].max()) if len(self._edges) else None

    def out_edges(self, subject: int) -> np.ndarray:
        """All outgoing edges of ``subject``, time-ascending."""
        self._check_entity(subject)
        lo, hi = self._subject_bounds[subject], self._subject_bounds[subject + 1]
        return self._by_subject[lo:hi]

    def edges_from(self, subject: int, relation: int) -> np.ndarray:
        """Edges from ``subject`` via ``relation``, time-ascending."""
        self._check_entity(subject)
        self._check_relation(relation)
        span = self._sub_rel_slices.get((subject, relation))
        if span is None:
            return self._by_sub_rel[0:0]
        return self._by_sub_rel[span[0] : span[1]]

    def edges_for_relation(self, relation: int) -> np.ndarray:
        """All edges with ``relation``, time-ascending."""
        self._check_relation(relation)
        lo, hi = self._relation_bounds[relation], self._relation_bounds[relation + 1]
        return self._by_relation[lo:hi]

    def neighbors_before(self, entity: int, t_max: int, strict: bool = True) -> np.ndarray:
        """Outgoing edges of ``entity`` earlier than ``t_max``, time-descending.

        ``strict`` keeps only t < t_max; otherwise t <= t_max.
        """
        rows = self.out_edges(entity)
        side = "left" if strict else "right"
        cut = int(np.searchsorted(rows[:, 3], t_max, side=side))
        return rows[:cut][::-1]

    def stats(self) -> dict:
        return {
            "entities": self.n_entities,
            "relations": self.n_relations,
            "edges": self.n_edges,
            "min_t": self.min_t,
            "max_t": self.max_t,
        }

    def stats_json(self) -> str:
        return json.dumps(self.stats(), sort_keys=True)


def build_kg(
    quads: Sequence[Quadruple],
    entities: Catalog,
    relations: RelationCatalog,
    add_inverses: bool = True,
) -> TemporalKG:
    """Build an indexed KG; with ``add_inverses`` each (s,r,o,t) is mirrored
    as (o, inv_r, s, t) and the relation catalog is finalized."""
    base = np.array(
        [(q.subject, q.relation, q.object, q.t) for q in quads], dtype=np.int64
    ).reshape(-1, 4)
    if add_inverses:
        relations.finalize_inverses()
        inv = base[:, [2, 1, 0, 3]].copy()
        n_fwd = relations.n_forward
        inv[:, 1] = np.where(inv[:, 1] < n_fwd, inv[:, 1] + n_fwd, inv[:, 1] - n_fwd)
        base = np.vstack([base, inv])
    return TemporalKG(base, entities, relations, inverses_added=add_inverses)


def write_quadruples(path: str | Path, quads: Sequence[Quadruple], entities: Catalog, relations: Catalog) -> None:
    """Write quadruples back to the tab-separated file format."""
    with open(path, "w", encoding="utf-8") as fh:
        for q in quads:
            fh.write(
                f"{entities.name_of(q.subject)}\t{relations.name_of(q.relation)}"
                f"\t{entities.name_of(q.object)}\t{q.t}\n"
            )
