"""Columnar primitives: typed columns, physical relations, take, allsel.

Offsets are 1-based throughout, with 0 reserved as the none/end-of-list
sentinel, so the linked-list encodings read exactly like the debug dumps.
Columns are immutable; a PhysicalRelation may only grow new named columns
(the nested semijoin extends its probe input in place).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Protocol, Sequence

from .errors import NameClashError, OutOfRange

#: Scalar values are 64-bit signed integers or UTF-8 strings; a column is
#: homogeneous in kind.  Two values of different kinds never compare equal
#: (Python guarantees int != str).
Value = int | str

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


def kind_of(value: Value) -> str:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise TypeError(f"unsupported value {value!r}; expected int or str")
    return "int" if isinstance(value, int) else "str"


class GenSink(Protocol):
    """Anything that can count generated column entries (see cost.Counters)."""

    def record_gen(self, length: int) -> None: ...


@dataclass(frozen=True)
class Column:
    """A named, homogeneous, immutable sequence of values, indexed 1..len."""

    name: str
    values: tuple[Value, ...]
    kind: str | None = None  # "int" | "str"; None only for empty columns

    def __post_init__(self):
        kind = self.kind
        for v in self.values:
            k = kind_of(v)
            if k == "int" and not (INT64_MIN <= v <= INT64_MAX):
                raise ValueError(f"integer {v} outside 64-bit range")
            if kind is None:
                kind = k
            elif k != kind:
                raise TypeError(
                    f"column {self.name!r} mixes {kind} and {k} values"
                )
        object.__setattr__(self, "kind", kind)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, pos: int) -> Value:
        """1-based access; position 0 is the reserved sentinel, never a value."""
        if not 1 <= pos <= len(self.values):
            raise OutOfRange(
                f"position {pos} outside column {self.name!r} of length {len(self.values)}"
            )
        return self.values[pos - 1]

    def __iter__(self) -> Iterator[Value]:
        return iter(self.values)

    def renamed(self, name: str) -> "Column":
        return Column(name, self.values, self.kind)


#: Position vectors are arbitrary sequences of 1-based row indices (repeats
#: and any order allowed); selection vectors are strictly increasing ones.
Positions = Sequence[int]


def is_strictly_increasing(entries: Sequence[int]) -> bool:
    return all(a < b for a, b in zip(entries, entries[1:]))


def take(col: Column, pos: Positions, counters: GenSink | None = None) -> Column:
    """New column c with c[i] = col[pos[i]].

    The workhorse of late materialization: every generated output column is a
    take.  Records one gen event of len(pos) when instrumentation is attached.
    """
    values = col.values
    n = len(values)
    out = []
    for p in pos:
        if not 1 <= p <= n:
            raise OutOfRange(
                f"take position {p} outside column {col.name!r} of length {n}"
            )
        out.append(values[p - 1])
    if counters is not None:
        counters.record_gen(len(pos))
    return Column(col.name, tuple(out), col.kind)


@dataclass
class PhysicalRelation:
    """Equal-length named columns; rows are addressed positionally (1-based).

    ``nrows`` makes the row count explicit so a relation can survive losing
    all of its columns (projection onto the empty scheme).
    """

    _cols: dict[str, Column] = field(default_factory=dict)
    nrows: int = 0

    @staticmethod
    def of(columns: Iterable[Column], nrows: int | None = None) -> "PhysicalRelation":
        rel = PhysicalRelation()
        for col in columns:
            rel.add_column(col)
        if nrows is not None:
            if rel._cols and len(rel) != nrows:
                raise ValueError(f"nrows={nrows} but columns have {len(rel)} rows")
            rel.nrows = nrows
        return rel

    @staticmethod
    def from_rows(
        names: Sequence[str],
        rows: Iterable[Sequence[Value]],
        kinds: Sequence[str | None] | None = None,
    ) -> "PhysicalRelation":
        rows = list(rows)
        if kinds is None:
            kinds = [None] * len(names)
        cols = []
        for i, (name, kind) in enumerate(zip(names, kinds)):
            cols.append(Column(name, tuple(row[i] for row in rows), kind))
        return PhysicalRelation.of(cols, nrows=len(rows))

    def __len__(self) -> int:
        for col in self._cols.values():
            return len(col)
        return self.nrows

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._cols)

    def column(self, name: str) -> Column:
        try:
            return self._cols[name]
        except KeyError:
            raise KeyError(f"no column {name!r}; have {list(self._cols)}") from None

    def has_column(self, name: str) -> bool:
        return name in self._cols

    def add_column(self, col: Column) -> None:
        """The only permitted mutation: growing a fresh named column."""
        if col.name in self._cols:
            raise NameClashError(f"relation already has a column {col.name!r}")
        if (self._cols or self.nrows) and len(col) != len(self):
            raise ValueError(
                f"column {col.name!r} has length {len(col)}, relation has {len(self)}"
            )
        self._cols[col.name] = col
        self.nrows = len(col)

    def row(self, pos: int, names: Sequence[str] | None = None) -> tuple[Value, ...]:
        names = self.names if names is None else names
        return tuple(self._cols[n][pos] for n in names)

    def rows(self, names: Sequence[str] | None = None) -> list[tuple[Value, ...]]:
        return [self.row(i, names) for i in range(1, len(self) + 1)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PhysicalRelation):
            return NotImplemented
        return (
            self.names == other.names
            and len(self) == len(other)
            and all(self._cols[n] == other._cols[n] for n in self.names)
        )


def allsel(rel: PhysicalRelation) -> tuple[int, ...]:
    """The identity selection vector [1..len(rel)]."""
    return tuple(range(1, len(rel) + 1))
