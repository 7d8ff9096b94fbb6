"""CSV formats for event logs and item catalogs.

Raw event log::

    timestamp,user_id,item_id,payoff

Replay log (``candidates`` is a ``|``-separated list holding the served item)::

    timestamp,user_id,served_item_id,payoff,candidates

Item catalog (vectors are L2-normalised on ingest when their norm exceeds 1)::

    item_id,f0,f1,...,f{d-1}

Identifiers are kept as strings; timestamps are kept verbatim but must
parse as finite numbers.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .exceptions import DomainError
from .replay import RawEvent, RawEventLog, ReplayEvent, ReplayLog, one_hot_catalog

__all__ = [
    "LogParseError",
    "RAW_HEADER",
    "REPLAY_HEADER",
    "ingest",
    "load_catalog",
    "write_raw_log",
    "write_replay_log",
    "write_catalog",
]

RAW_HEADER = ["timestamp", "user_id", "item_id", "payoff"]
REPLAY_HEADER = ["timestamp", "user_id", "served_item_id", "payoff", "candidates"]
FORMATS = ("raw", "replay")


class LogParseError(ValueError):
    """A row does not follow the schema; ``line`` is 1-based."""

    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def _number(path, line, name, text) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise LogParseError(path, line, f"{name} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise LogParseError(path, line, f"{name} is not finite: {text!r}")
    return value


def _rows(path: Path, header: list[str]):
    """Yield ``(line_number, fields)``; an empty file yields nothing."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            return
        if [h.strip() for h in first] != header:
            raise LogParseError(path, 1, f"expected header {','.join(header)}")
        for fields in reader:
            if not fields:
                continue
            if len(fields) != len(header):
                raise LogParseError(path, reader.line_num, f"expected {len(header)} fields, got {len(fields)}")
            yield reader.line_num, [f.strip() for f in fields]


def _payoff(path, line, text) -> float:
    y = _number(path, line, "payoff", text)
    if not -1.0 <= y <= 1.0:
        raise DomainError(f"{path}:{line}: payoff {y} outside [-1, 1]")
    return y


def load_catalog(path) -> dict:
    """Read an item catalog; rows with norm above 1 are rescaled to unit norm."""
    path = Path(path)
    catalog: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return catalog
        header = [h.strip() for h in header]
        d = len(header) - 1
        if d < 1 or header[0] != "item_id" or header[1:] != [f"f{k}" for k in range(d)]:
            raise LogParseError(path, 1, "expected header item_id,f0,...,f{d-1}")
        for fields in reader:
            if not fields:
                continue
            line = reader.line_num
            if len(fields) != d + 1:
                raise LogParseError(path, line, f"expected {d + 1} fields, got {len(fields)}")
            item = fields[0].strip()
            if item in catalog:
                raise LogParseError(path, line, f"duplicate item id {item!r}")
            v = np.array([_number(path, line, f"f{k}", f) for k, f in enumerate(fields[1:])])
            norm = np.linalg.norm(v)
            catalog[item] = v / norm if norm > 1.0 else v
    return catalog


def ingest(path, format: str = "raw", catalog=None):
    """Read a raw or replay log.

    Parameters
    ----------
    path : str or Path
    format : {"raw", "replay"}
    catalog : str, Path or dict, optional
        Item catalog (file or mapping). Replay logs without one get a one-hot
        catalog over the items they mention.

    Returns
    -------
    RawEventLog or ReplayLog

    Raises
    ------
    LogParseError
        Malformed row, reported with its line number.
    DomainError
        Payoff outside [-1, 1], served item missing from its candidate list,
        or items absent from the catalog (all missing ids are listed).
    """
    if format not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {format!r}")
    path = Path(path)
    if isinstance(catalog, (str, Path)):
        catalog = load_catalog(catalog)

    if format == "raw":
        events = []
        for line, (ts, user, item, y) in _rows(path, RAW_HEADER):
            _number(path, line, "timestamp", ts)
            events.append(RawEvent(ts, user, item, _payoff(path, line, y)))
        log = RawEventLog(events=events, catalog=catalog)
        if catalog is not None:
            _check_covered(catalog, {e.item_id for e in events})
        return log

    events = []
    for line, (ts, user, served, y, cands) in _rows(path, REPLAY_HEADER):
        _number(path, line, "timestamp", ts)
        candidates = tuple(c.strip() for c in cands.split("|"))
        if served not in candidates:
            raise DomainError(f"{path}:{line}: served item {served!r} not among candidates")
        events.append(ReplayEvent(ts, user, served, _payoff(path, line, y), candidates))
    if catalog is None:
        catalog = one_hot_catalog(i for e in events for i in e.candidates)
    _check_covered(catalog, {i for e in events for i in e.candidates})
    return ReplayLog(events=events, catalog=dict(catalog))


def _check_covered(catalog: dict, items: set) -> None:
    missing = sorted(items - set(catalog))
    if missing:
        raise DomainError(f"items missing from catalog: {missing}")


def _fmt(y: float) -> str:
    return repr(float(y))


def write_raw_log(log: RawEventLog, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_HEADER)
        for e in log.events:
            w.writerow([e.timestamp, e.user_id, e.item_id, _fmt(e.payoff)])


def write_replay_log(log: ReplayLog, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPLAY_HEADER)
        for e in log.events:
            w.writerow([e.timestamp, e.user_id, e.served_item_id, _fmt(e.payoff), "|".join(map(str, e.candidates))])


def write_catalog(catalog: dict, path) -> None:
    d = len(next(iter(catalog.values()))) if catalog else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["item_id"] + [f"f{k}" for k in range(d)])
        for item, v in catalog.items():
            w.writerow([item] + [repr(float(a)) for a in v])
