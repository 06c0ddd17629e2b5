"""Event-log domain model: scored comment records, immutable datasets, CSV I/O.

The interchange format is a UTF-8 CSV with header
``comment_id,post_id,author_id,timestamp,is_root_post,score,intervention,author_prior_offense``.
Root posts carry an empty score field; interventions are spelled
``none|hide|delete``. Row order in a file is irrelevant: the in-memory
indexes impose (timestamp, comment_id) order.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import InvariantViolation, MalformedRow

COLUMNS = (
    "comment_id",
    "post_id",
    "author_id",
    "timestamp",
    "is_root_post",
    "score",
    "intervention",
    "author_prior_offense",
)


class Intervention(enum.IntEnum):
    NONE = 0
    HIDE = 1
    DELETE = 2

    def __str__(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "Intervention":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown intervention {text!r}") from None


_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False}


@dataclass(frozen=True)
class CommentRecord:
    """One scored comment or root-post event; the atomic log row."""

    comment_id: int
    post_id: int
    author_id: int
    timestamp: int
    is_root_post: bool
    score: Optional[float]  # absent exactly for root posts
    intervention: Intervention
    author_prior_offense: bool


@dataclass(frozen=True)
class FileFormat:
    """Delimited-text descriptor for event logs."""

    delimiter: str = ","
    encoding: str = "utf-8"


class Dataset:
    """Immutable, column-oriented view of an event log.

    Columns are read-only numpy arrays; thread and user groupings are
    precomputed in (timestamp, comment_id) order so cohort construction
    is deterministic under timestamp ties. The thread grouping covers
    non-root comments; the user grouping covers every record the user
    authored (root posts included).
    """

    def __init__(
        self,
        comment_ids: np.ndarray,
        post_ids: np.ndarray,
        author_ids: np.ndarray,
        timestamps: np.ndarray,
        is_root: np.ndarray,
        scores: np.ndarray,
        interventions: np.ndarray,
        prior_offense: np.ndarray,
        source: str = "",
    ):
        self.comment_ids = np.ascontiguousarray(comment_ids, dtype=np.int64)
        self.post_ids = np.ascontiguousarray(post_ids, dtype=np.int64)
        self.author_ids = np.ascontiguousarray(author_ids, dtype=np.int64)
        self.timestamps = np.ascontiguousarray(timestamps, dtype=np.int64)
        self.is_root = np.ascontiguousarray(is_root, dtype=bool)
        self.scores = np.ascontiguousarray(scores, dtype=np.float64)
        self.interventions = np.ascontiguousarray(interventions, dtype=np.int8)
        self.prior_offense = np.ascontiguousarray(prior_offense, dtype=bool)
        n = self.comment_ids.shape[0]
        for arr in self._columns():
            if arr.shape != (n,):
                raise ValueError("column length mismatch")

        self._build_groupings()
        self.meta = {"source": source, "n_records": int(n)}
        for arr in self._columns() + [
            self.thread_rows,
            self.thread_starts,
            self.thread_post_ids,
            self.user_rows,
            self.user_starts,
            self.user_author_ids,
        ]:
            arr.setflags(write=False)

    def _columns(self):
        return [
            self.comment_ids,
            self.post_ids,
            self.author_ids,
            self.timestamps,
            self.is_root,
            self.scores,
            self.interventions,
            self.prior_offense,
        ]

    def _build_groupings(self):
        comment_mask = ~self.is_root
        comment_rows = np.flatnonzero(comment_mask)
        order = np.lexsort(
            (
                self.comment_ids[comment_rows],
                self.timestamps[comment_rows],
                self.post_ids[comment_rows],
            )
        )
        self.thread_rows = comment_rows[order]
        tp = self.post_ids[self.thread_rows]
        boundaries = np.flatnonzero(np.diff(tp) != 0) + 1
        self.thread_starts = np.concatenate(
            ([0], boundaries, [tp.shape[0]])
        ).astype(np.int64)
        self.thread_post_ids = tp[self.thread_starts[:-1]] if tp.size else tp[:0]

        order = np.lexsort((self.comment_ids, self.timestamps, self.author_ids))
        self.user_rows = order.astype(np.int64)
        ua = self.author_ids[self.user_rows]
        boundaries = np.flatnonzero(np.diff(ua) != 0) + 1
        self.user_starts = np.concatenate(
            ([0], boundaries, [ua.shape[0]])
        ).astype(np.int64)
        self.user_author_ids = ua[self.user_starts[:-1]] if ua.size else ua[:0]

        self._row_of_id = {int(c): i for i, c in enumerate(self.comment_ids)}

    def __len__(self) -> int:
        return int(self.comment_ids.shape[0])

    def row_of(self, comment_id: int) -> int:
        return self._row_of_id[int(comment_id)]

    def record(self, row: int) -> CommentRecord:
        root = bool(self.is_root[row])
        return CommentRecord(
            comment_id=int(self.comment_ids[row]),
            post_id=int(self.post_ids[row]),
            author_id=int(self.author_ids[row]),
            timestamp=int(self.timestamps[row]),
            is_root_post=root,
            score=None if root else float(self.scores[row]),
            intervention=Intervention(int(self.interventions[row])),
            author_prior_offense=bool(self.prior_offense[row]),
        )

    def records(self) -> Iterable[CommentRecord]:
        for row in range(len(self)):
            yield self.record(row)

    @property
    def index_by_thread(self) -> dict:
        """post_id -> time-ordered comment ids (root excluded)."""
        out = {}
        ids = self.comment_ids[self.thread_rows]
        for k, pid in enumerate(self.thread_post_ids):
            lo, hi = self.thread_starts[k], self.thread_starts[k + 1]
            out[int(pid)] = ids[lo:hi].copy()
        return out

    @property
    def index_by_user(self) -> dict:
        """author_id -> time-ordered record ids (root posts included)."""
        out = {}
        ids = self.comment_ids[self.user_rows]
        for k, uid in enumerate(self.user_author_ids):
            lo, hi = self.user_starts[k], self.user_starts[k + 1]
            out[int(uid)] = ids[lo:hi].copy()
        return out

    @classmethod
    def from_records(cls, records: Iterable[CommentRecord], source: str = "") -> "Dataset":
        recs = list(records)
        n = len(recs)
        scores = np.full(n, np.nan)
        for i, r in enumerate(recs):
            if r.score is not None:
                scores[i] = r.score
        return cls(
            comment_ids=np.array([r.comment_id for r in recs], dtype=np.int64),
            post_ids=np.array([r.post_id for r in recs], dtype=np.int64),
            author_ids=np.array([r.author_id for r in recs], dtype=np.int64),
            timestamps=np.array([r.timestamp for r in recs], dtype=np.int64),
            is_root=np.array([r.is_root_post for r in recs], dtype=bool),
            scores=scores,
            interventions=np.array([int(r.intervention) for r in recs], dtype=np.int8),
            prior_offense=np.array([r.author_prior_offense for r in recs], dtype=bool),
            source=source,
        )


def _check_invariants(ds: Dataset) -> list:
    """Shared rule engine behind validate() and ingest()."""
    problems = []

    ids, counts = np.unique(ds.comment_ids, return_counts=True)
    for dup in ids[counts > 1]:
        problems.append(f"duplicate comment_id {int(dup)}")

    root_mask = ds.is_root
    score_present = ~np.isnan(ds.scores)
    for row in np.flatnonzero(root_mask & score_present):
        problems.append(f"record {int(ds.comment_ids[row])}: root post carries a score")
    for row in np.flatnonzero(~root_mask & ~score_present):
        problems.append(f"record {int(ds.comment_ids[row])}: comment is missing a score")
    bad = score_present & ((ds.scores < 0.0) | (ds.scores > 1.0))
    for row in np.flatnonzero(bad):
        problems.append(
            f"record {int(ds.comment_ids[row])}: score {ds.scores[row]!r} outside [0, 1]"
        )

    if np.any(ds.timestamps < 0):
        for row in np.flatnonzero(ds.timestamps < 0):
            problems.append(f"record {int(ds.comment_ids[row])}: negative timestamp")

    root_ts = {}
    for row in np.flatnonzero(root_mask):
        root_ts[int(ds.post_ids[row])] = int(ds.timestamps[row])
    comment_rows = np.flatnonzero(~root_mask)
    for row in comment_rows:
        pid = int(ds.post_ids[row])
        if pid not in root_ts:
            problems.append(
                f"record {int(ds.comment_ids[row])}: post_id {pid} has no root post"
            )
        elif int(ds.timestamps[row]) < root_ts[pid]:
            problems.append(
                f"record {int(ds.comment_ids[row])}: timestamp precedes root post {pid}"
            )
    return problems


def validate(dataset: Dataset) -> list:
    """Return human-readable invariant violations; empty when clean."""
    return _check_invariants(dataset)


def _parse_row(line_number: int, row: dict) -> CommentRecord:
    def want_int(name):
        raw = row[name].strip()
        try:
            return int(raw)
        except ValueError:
            raise MalformedRow(line_number, f"{name}={raw!r} is not an integer")

    def want_bool(name):
        raw = row[name].strip().lower()
        if raw not in _BOOL_WORDS:
            raise MalformedRow(line_number, f"{name}={row[name]!r} is not a boolean")
        return _BOOL_WORDS[raw]

    is_root = want_bool("is_root_post")
    raw_score = row["score"].strip()
    if raw_score == "":
        score = None
    else:
        try:
            score = float(raw_score)
        except ValueError:
            raise MalformedRow(line_number, f"score={raw_score!r} is not a number")
    try:
        intervention = Intervention.parse(row["intervention"])
    except ValueError as exc:
        raise MalformedRow(line_number, str(exc))

    ts = want_int("timestamp")
    if ts < 0:
        raise MalformedRow(line_number, f"timestamp={ts} is negative")
    return CommentRecord(
        comment_id=want_int("comment_id"),
        post_id=want_int("post_id"),
        author_id=want_int("author_id"),
        timestamp=ts,
        is_root_post=is_root,
        score=score,
        intervention=intervention,
        author_prior_offense=want_bool("author_prior_offense"),
    )


def ingest(path, fmt: FileFormat = FileFormat()) -> Dataset:
    """Read and validate an event-log CSV; abort on the first bad row."""
    records = []
    with open(path, "r", encoding=fmt.encoding, newline="") as fh:
        reader = csv.reader(fh, delimiter=fmt.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(1, "empty file") from None
        if tuple(h.strip() for h in header) != COLUMNS:
            raise MalformedRow(1, f"header must name {','.join(COLUMNS)}")
        for line_number, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(COLUMNS):
                raise MalformedRow(
                    line_number, f"expected {len(COLUMNS)} columns, found {len(raw)}"
                )
            records.append(_parse_row(line_number, dict(zip(COLUMNS, raw))))

    ds = Dataset.from_records(records, source=str(path))
    problems = _check_invariants(ds)
    if problems:
        raise InvariantViolation("; ".join(problems[:10]))
    return ds


def write_dataset(dataset: Dataset, path, fmt: FileFormat = FileFormat()) -> None:
    """Write the canonical CSV rendering, ordered by (timestamp, comment_id)."""
    order = np.lexsort((dataset.comment_ids, dataset.timestamps))
    with open(path, "w", encoding=fmt.encoding, newline="") as fh:
        writer = csv.writer(fh, delimiter=fmt.delimiter)
        writer.writerow(COLUMNS)
        for row in order:
            root = bool(dataset.is_root[row])
            writer.writerow(
                [
                    int(dataset.comment_ids[row]),
                    int(dataset.post_ids[row]),
                    int(dataset.author_ids[row]),
                    int(dataset.timestamps[row]),
                    "true" if root else "false",
                    "" if root else repr(float(dataset.scores[row])),
                    str(Intervention(int(dataset.interventions[row]))),
                    "true" if dataset.prior_offense[row] else "false",
                ]
            )
