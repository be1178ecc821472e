"""Reader and writer for the ARFF subset used by dataset, split and prediction files.

Supported: ``@RELATION``, ``@ATTRIBUTE`` with NUMERIC/REAL/INTEGER, nominal
``{...}``, STRING and DATE types, dense rows and sparse ``{i v, ...}`` rows,
``%`` comments, ``?`` missing cells, and single- or double-quoted tokens with
backslash escapes. Relational attributes and instance weights are rejected.

Rows are always held densely; ``ArffDocument.sparse`` only records how the
document was (or should be) written. Omitted sparse cells default to ``0`` for
numeric attributes, the first declared value for nominal ones and ``""`` for
string and date attributes. Missing cells are ``None``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

MAX_INPUT_BYTES = 512 * 1024 * 1024

NUMERIC_TYPES = {"numeric", "real", "integer"}
_ESCAPES = {"\\": "\\", "'": "'", '"': '"', "n": "\n", "r": "\r", "t": "\t", "%": "%"}
_REVERSE_ESCAPES = {"\\": "\\\\", "'": "\\'", "\n": "\\n", "\r": "\\r", "\t": "\\t"}
# characters that force a token to be quoted on output
_SPECIAL = set(" \t\n\r,'\"%{}\\?")


class ParseError(ValueError):
    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


class ResourceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str  # numeric | nominal | string | date
    nominal_values: tuple[str, ...] = ()
    date_format: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "nominal_values", tuple(self.nominal_values))

    @property
    def sparse_default(self) -> Any:
        if self.kind == "numeric":
            return 0.0
        if self.kind == "nominal":
            return self.nominal_values[0]
        return ""


@dataclass(frozen=True)
class ArffDocument:
    relation: str
    attributes: tuple[Attribute, ...]
    rows: tuple[tuple[Any, ...], ...] = ()
    sparse: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        # with no rows the text cannot say which layout was used
        if not self.rows:
            object.__setattr__(self, "sparse", False)

    def column_index(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise KeyError(name)


# -- tokenizing ---------------------------------------------------------------


class _Scanner:
    """Character scanner over one logical line, tracking 1-based columns."""

    def __init__(self, text: str, lineno: int):
        self.text = text
        self.pos = 0
        self.lineno = lineno

    def error(self, message: str, pos: int | None = None) -> ParseError:
        return ParseError(self.lineno, (self.pos if pos is None else pos) + 1, message)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text) or self.text[self.pos] == "%"

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, char: str) -> None:
        self.skip_ws()
        if self.peek() != char:
            raise self.error(f"expected {char!r}")
        self.pos += 1

    def token(self, stops: str) -> tuple[str, bool, int]:
        """Read one token; return ``(value, was_quoted, start_pos)``."""
        self.skip_ws()
        start = self.pos
        ch = self.peek()
        if ch in ("'", '"'):
            return self._quoted(ch), True, start
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in stops or ch in " \t%":
                break
            if ch in "'\"":
                raise self.error("quote inside unquoted token")
            self.pos += 1
        value = self.text[start : self.pos]
        if not value:
            raise self.error("empty token", start)
        return value, False, start

    def _quoted(self, quote: str) -> str:
        start = self.pos
        self.pos += 1
        out = []
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch == "\\":
                nxt = self.text[self.pos + 1 : self.pos + 2]
                if nxt not in _ESCAPES:
                    raise self.error(f"unknown escape \\{nxt}")
                out.append(_ESCAPES[nxt])
                self.pos += 2
                continue
            if ch == quote:
                self.pos += 1
                return "".join(out)
            out.append(ch)
            self.pos += 1
        raise self.error("unterminated quoted string", start)


def _numeric(raw: str, scanner: _Scanner, start: int) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise scanner.error(f"non-numeric value {raw!r} in numeric column", start) from None
    if math.isnan(value):
        raise scanner.error("NaN is not a valid numeric cell; use ?", start)
    return value


def _cell(attr: Attribute, raw: str, quoted: bool, scanner: _Scanner, start: int) -> Any:
    if raw == "?" and not quoted:
        return None
    if attr.kind == "numeric":
        if quoted:
            raise scanner.error("quoted value in numeric column", start)
        return _numeric(raw, scanner, start)
    if attr.kind == "nominal" and raw not in attr.nominal_values:
        raise scanner.error(f"unknown nominal value {raw!r} for attribute {attr.name!r}", start)
    return raw


# -- parsing ------------------------------------------------------------------


def _parse_attribute(sc: _Scanner) -> Attribute:
    name, _, _ = sc.token(stops="{")
    sc.skip_ws()
    start = sc.pos
    if sc.peek() == "{":
        sc.pos += 1
        values: list[str] = []
        while True:
            sc.skip_ws()
            if sc.peek() == "}" and not values:
                raise sc.error("empty nominal value list")
            value, _, vpos = sc.token(stops=",}")
            if value in values:
                raise sc.error(f"duplicate nominal value {value!r}", vpos)
            values.append(value)
            sc.skip_ws()
            ch = sc.peek()
            sc.pos += 1
            if ch == "}":
                break
            if ch != ",":
                raise sc.error("expected ',' or '}' in nominal value list", sc.pos - 1)
        attr = Attribute(name, "nominal", tuple(values))
    else:
        type_name, _, _ = sc.token(stops="")
        lowered = type_name.lower()
        date_format = None
        if lowered in NUMERIC_TYPES:
            kind = "numeric"
        elif lowered == "string":
            kind = "string"
        elif lowered == "date":
            kind = "date"
            if not sc.at_end():
                date_format, _, _ = sc.token(stops="")
        elif lowered == "relational":
            raise sc.error("relational attributes are not supported", start)
        else:
            raise sc.error(f"unknown attribute type {type_name!r}", start)
        attr = Attribute(name, kind, (), date_format)
    if not sc.at_end():
        raise sc.error("trailing characters after attribute declaration")
    return attr


def _parse_dense(sc: _Scanner, attrs: Sequence[Attribute]) -> tuple[Any, ...]:
    cells = []
    while True:
        if len(cells) >= len(attrs):
            raise sc.error(f"too many values: expected {len(attrs)}")
        raw, quoted, start = sc.token(stops=",")
        cells.append(_cell(attrs[len(cells)], raw, quoted, sc, start))
        if sc.at_end():
            break
        ch = sc.peek()
        if ch == "{":
            raise sc.error("instance weights are not supported")
        sc.expect(",")
    if len(cells) != len(attrs):
        raise sc.error(f"expected {len(attrs)} values, got {len(cells)}")
    return tuple(cells)


def _parse_sparse(sc: _Scanner, attrs: Sequence[Attribute]) -> tuple[Any, ...]:
    row = [a.sparse_default for a in attrs]
    sc.expect("{")
    sc.skip_ws()
    last = -1
    if sc.peek() == "}":
        sc.pos += 1
    else:
        while True:
            raw_idx, quoted, ipos = sc.token(stops=",}")
            if quoted or not raw_idx.isdigit():
                raise sc.error(f"invalid sparse index {raw_idx!r}", ipos)
            idx = int(raw_idx)
            if idx >= len(attrs):
                raise sc.error(f"sparse index {idx} out of range", ipos)
            if idx <= last:
                raise sc.error("sparse indices must be strictly increasing", ipos)
            last = idx
            raw, quoted, start = sc.token(stops=",}")
            row[idx] = _cell(attrs[idx], raw, quoted, sc, start)
            sc.skip_ws()
            ch = sc.peek()
            sc.pos += 1
            if ch == "}":
                break
            if ch != ",":
                raise sc.error("expected ',' or '}' in sparse row", sc.pos - 1)
    if not sc.at_end():
        if sc.peek() == "{":
            raise sc.error("instance weights are not supported")
        raise sc.error("trailing characters after sparse row")
    return tuple(row)


def parse(text: str | bytes, max_bytes: int = MAX_INPUT_BYTES) -> ArffDocument:
    """Parse ARFF text into a document, raising :class:`ParseError` on any defect."""
    if isinstance(text, bytes):
        if len(text) > max_bytes:
            raise ResourceError(f"ARFF input exceeds {max_bytes} bytes")
        text = text.decode("utf-8")
    elif len(text) > max_bytes:
        raise ResourceError(f"ARFF input exceeds {max_bytes} bytes")

    relation: str | None = None
    attrs: list[Attribute] = []
    rows: list[tuple[Any, ...]] = []
    sparse: bool | None = None
    in_data = False

    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        sc = _Scanner(line, lineno)
        if sc.at_end():
            continue
        if not in_data:
            if sc.peek() != "@":
                raise sc.error("expected a header directive")
            directive, _, _ = sc.token(stops="")
            keyword = directive.lower()
            if keyword == "@relation":
                if relation is not None:
                    raise sc.error("duplicate @RELATION")
                relation, _, _ = sc.token(stops="")
                if not sc.at_end():
                    raise sc.error("trailing characters after relation name")
            elif keyword == "@attribute":
                if relation is None:
                    raise sc.error("@ATTRIBUTE before @RELATION")
                attr = _parse_attribute(sc)
                if any(a.name == attr.name for a in attrs):
                    raise sc.error(f"duplicate attribute name {attr.name!r}")
                attrs.append(attr)
            elif keyword == "@data":
                if relation is None:
                    raise sc.error("@DATA before @RELATION")
                if not attrs:
                    raise sc.error("@DATA without attributes")
                if not sc.at_end():
                    raise sc.error("trailing characters after @DATA")
                in_data = True
            else:
                raise sc.error(f"unknown directive {directive!r}")
            continue
        is_sparse = sc.peek() == "{"
        if sparse is None:
            sparse = is_sparse
        elif sparse != is_sparse:
            raise sc.error("mixed sparse and dense rows")
        rows.append(_parse_sparse(sc, attrs) if is_sparse else _parse_dense(sc, attrs))

    if relation is None:
        raise ParseError(1, 1, "missing @RELATION")
    if not in_data:
        raise ParseError(len(text.split("\n")), 1, "missing @DATA")
    return ArffDocument(relation, tuple(attrs), tuple(rows), bool(sparse))


# -- serializing --------------------------------------------------------------


def format_number(value: float) -> str:
    """Shortest text that reads back as exactly ``value``."""
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def quote(text: str) -> str:
    if text and text != "?" and not any(ch in _SPECIAL for ch in text):
        return text
    return "'" + "".join(_REVERSE_ESCAPES.get(ch, ch) for ch in text) + "'"


def _format_cell(attr: Attribute, value: Any) -> str:
    if value is None:
        return "?"
    if attr.kind == "numeric":
        return format_number(value)
    return quote(str(value))


def _format_type(attr: Attribute) -> str:
    if attr.kind == "nominal":
        return "{" + ",".join(quote(v) for v in attr.nominal_values) + "}"
    if attr.kind == "numeric":
        return "NUMERIC"
    if attr.kind == "date":
        return "DATE" + (f" {quote(attr.date_format)}" if attr.date_format else "")
    return "STRING"


def serialize(doc: ArffDocument) -> str:
    """Write ``doc`` as ARFF text with LF line endings."""
    lines = [f"@RELATION {quote(doc.relation)}", ""]
    lines += [f"@ATTRIBUTE {quote(a.name)} {_format_type(a)}" for a in doc.attributes]
    lines += ["", "@DATA"]
    attrs = doc.attributes
    for row in doc.rows:
        if doc.sparse:
            cells = [
                f"{i} {_format_cell(a, v)}"
                for i, (a, v) in enumerate(zip(attrs, row))
                if v is None or a.kind in ("string", "date") or v != a.sparse_default
            ]
            lines.append("{" + ", ".join(cells) + "}")
        else:
            lines.append(",".join(_format_cell(a, v) for a, v in zip(attrs, row)))
    return "\n".join(lines) + "\n"


def densify(doc: ArffDocument) -> ArffDocument:
    """Same document marked dense; rows are already held expanded."""
    if not doc.sparse:
        return doc
    return ArffDocument(doc.relation, doc.attributes, doc.rows, sparse=False)


def check_document(doc: ArffDocument) -> list[str]:
    """Invariant violations of an in-memory document (parse output never has any)."""
    errors = []
    names = [a.name for a in doc.attributes]
    if len(set(names)) != len(names):
        errors.append("attribute names not unique")
    for a in doc.attributes:
        if a.kind == "nominal" and (not a.nominal_values or len(set(a.nominal_values)) != len(a.nominal_values)):
            errors.append(f"invalid nominal values for {a.name}")
    for r, row in enumerate(doc.rows):
        if len(row) != len(doc.attributes):
            errors.append(f"row {r} has {len(row)} cells, expected {len(doc.attributes)}")
            continue
        for a, v in zip(doc.attributes, row):
            if v is None:
                continue
            if a.kind == "nominal" and v not in a.nominal_values:
                errors.append(f"row {r}: {v!r} is not a value of {a.name}")
            if a.kind == "numeric" and not isinstance(v, (int, float)):
                errors.append(f"row {r}: non-numeric value in {a.name}")
    return errors


# -- typed tables -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Column:
    """One typed column.

    ``values`` is float64 for numeric columns, int64 category codes (``-1`` when
    missing) for nominal columns, and an object array of str otherwise.
    """

    name: str
    kind: str
    values: np.ndarray
    missing: np.ndarray
    categories: tuple[str, ...] = ()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Column):
            return NotImplemented
        if (self.name, self.kind, self.categories) != (other.name, other.kind, other.categories):
            return False
        if not np.array_equal(self.missing, other.missing):
            return False
        mine = self.values[~self.missing]
        theirs = other.values[~other.missing]
        return bool(np.array_equal(mine, theirs))

    __hash__ = None  # type: ignore[assignment]

    def labels(self) -> list[str | None]:
        """Nominal codes mapped back to their category strings."""
        return [None if m else self.categories[c] for c, m in zip(self.values, self.missing)]


@dataclass(frozen=True)
class DataTable:
    columns: tuple[Column, ...]
    row_count: int = field(default=0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", tuple(self.columns))
        for c in self.columns:
            if len(c.values) != self.row_count or len(c.missing) != self.row_count:
                raise ValueError(f"column {c.name!r} length differs from row_count {self.row_count}")

    def __getitem__(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]


def _column(attr: Attribute, cells: Iterable[Any]) -> Column:
    cells = list(cells)
    missing = np.array([v is None for v in cells], dtype=bool)
    if attr.kind == "numeric":
        values = np.array([np.nan if v is None else float(v) for v in cells], dtype=np.float64)
    elif attr.kind == "nominal":
        lookup = {v: i for i, v in enumerate(attr.nominal_values)}
        values = np.array([-1 if v is None else lookup[v] for v in cells], dtype=np.int64)
    else:
        values = np.array(["" if v is None else str(v) for v in cells], dtype=object)
    return Column(attr.name, attr.kind, values, missing, attr.nominal_values)


def coerce_table(doc: ArffDocument) -> DataTable:
    """Turn a document into typed columns (sparse documents are densified first)."""
    doc = densify(doc)
    n = len(doc.rows)
    columns = tuple(_column(a, (row[i] for row in doc.rows)) for i, a in enumerate(doc.attributes))
    return DataTable(columns, n)
