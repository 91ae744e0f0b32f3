"""Square labelled dependency matrix and its CSV interchange format."""

from __future__ import annotations

import csv
import io
import logging
from enum import IntEnum
from typing import Any, Iterable, Sequence

log = logging.getLogger(__name__)


class DsmError(ValueError):
    pass


class LinkLabel(IntEnum):
    """Entry label; the integer value is the CSV token."""

    NO_LINK = 0
    LINK = 1
    UNKNOWN = 5

    @property
    def token(self) -> str:
        return str(int(self))


_TOKENS = {label.token: label for label in LinkLabel}


class Dsm:
    """N x N matrix of :class:`LinkLabel` with ordered, unique headings.

    Row ``i``/column ``j`` holds the answer about ``(headings[i], headings[j])``.
    The diagonal is always ``LINK``. Equality ignores provenance.
    """

    def __init__(
        self,
        headings: Sequence[str],
        entries: Sequence[Sequence[LinkLabel]] | None = None,
        provenance: dict[str, Any] | None = None,
    ):
        headings = tuple(headings)
        if not headings:
            raise DsmError("a DSM needs at least one heading")
        seen: dict[str, int] = {}
        for i, h in enumerate(headings):
            key = h.strip()
            if not key:
                raise DsmError(f"heading {i} is empty")
            if key in seen:
                raise DsmError(f"duplicate heading {h!r} at positions {seen[key]} and {i}")
            seen[key] = i
        n = len(headings)
        if entries is None:
            rows = [[LinkLabel.LINK if i == j else LinkLabel.UNKNOWN for j in range(n)] for i in range(n)]
        else:
            if len(entries) != n or any(len(r) != n for r in entries):
                raise DsmError(f"entries must be {n}x{n}")
            rows = [[LinkLabel(v) for v in r] for r in entries]
        for i in range(n):
            if rows[i][i] is not LinkLabel.LINK:
                raise DsmError(f"diagonal entry ({i}, {i}) must be LINK")
        self.headings = headings
        self._rows = rows
        self.provenance: dict[str, Any] = dict(provenance or {})

    @property
    def n(self) -> int:
        return len(self.headings)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dsm):
            return NotImplemented
        return self.headings == other.headings and self._rows == other._rows

    def __repr__(self) -> str:
        return f"Dsm(n={self.n}, headings={list(self.headings)!r})"

    def _check(self, row: int, col: int) -> None:
        n = self.n
        if not (0 <= row < n and 0 <= col < n):
            raise IndexError(f"entry ({row}, {col}) out of range for a {n}x{n} DSM")

    def get(self, row: int, col: int) -> LinkLabel:
        self._check(row, col)
        return self._rows[row][col]

    def set(self, row: int, col: int, label: LinkLabel) -> None:
        self._check(row, col)
        if row == col:
            raise DsmError(f"diagonal entry ({row}, {col}) is fixed to LINK")
        self._rows[row][col] = LinkLabel(label)

    def rows(self) -> list[list[LinkLabel]]:
        return [list(r) for r in self._rows]

    def off_diagonal(self) -> Iterable[tuple[int, int, LinkLabel]]:
        for i, row in enumerate(self._rows):
            for j, label in enumerate(row):
                if i != j:
                    yield i, j, label

    def transpose(self) -> "Dsm":
        n = self.n
        return Dsm(self.headings, [[self._rows[j][i] for j in range(n)] for i in range(n)], self.provenance)

    def copy(self) -> "Dsm":
        return Dsm(self.headings, self._rows, self.provenance)


def new_dsm(headings: Sequence[str]) -> Dsm:
    return Dsm(headings)


def get_entry(dsm: Dsm, row: int, col: int) -> LinkLabel:
    return dsm.get(row, col)


def set_entry(dsm: Dsm, row: int, col: int, label: LinkLabel) -> None:
    dsm.set(row, col, label)


def write_csv(dsm: Dsm) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["", *dsm.headings])
    for heading, row in zip(dsm.headings, dsm.rows()):
        writer.writerow([heading, *(label.token for label in row)])
    return buf.getvalue().encode("utf-8")


def read_csv(data: bytes | str) -> Dsm:
    """Parse the layout produced by :func:`write_csv`.

    Diagonal cells that are empty or not ``1`` are coerced to LINK with a
    warning, since published matrices often leave the diagonal blank.
    """
    text = data.decode("utf-8-sig") if isinstance(data, bytes) else data
    rows = [r for r in csv.reader(io.StringIO(text, newline="")) if r]
    if not rows:
        raise DsmError("empty CSV")
    header = rows[0]
    headings = header[1:]
    body = rows[1:]
    n = len(headings)
    if len(body) != n:
        raise DsmError(f"not square: {len(body)} rows for {n} column headings")
    entries: list[list[LinkLabel]] = []
    for i, row in enumerate(body):
        if len(row) - 1 != n:
            raise DsmError(f"not square: row {i} has {len(row) - 1} cells, expected {n}")
        if row[0].strip() != headings[i].strip():
            raise DsmError(f"row {i} heading {row[0]!r} does not match column heading {headings[i]!r}")
        parsed = []
        for j, cell in enumerate(row[1:]):
            token = cell.strip()
            if i == j:
                if token != "1":
                    log.warning("diagonal cell (%d, %d) is %r; treating it as 1", i, j, cell)
                parsed.append(LinkLabel.LINK)
                continue
            if token not in _TOKENS:
                raise DsmError(f"cell (row {i}, col {j}) has invalid value {cell!r}; expected 0, 1 or 5")
            parsed.append(_TOKENS[token])
        entries.append(parsed)
    return Dsm(headings, entries)
