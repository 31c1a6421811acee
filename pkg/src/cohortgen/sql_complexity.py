"""Token-level SQL complexity analysis.

Counting conventions (deterministic, documented in every stats report):

* tables_referenced — table references in FROM/JOIN position, counting
  repeats; CTE names defined in the statement's WITH clause are not tables.
* join_count — explicit JOIN keywords plus comma-separated FROM items
  beyond the first.
* logical_conditions — AND/OR/NOT tokens inside WHERE, HAVING, or ON
  clauses (token-level; the AND of BETWEEN counts).
* has_aggregation — any COUNT/SUM/AVG/MIN/MAX call.
* has_datetime_ops — any date/time function call, DATE/TIMESTAMP literal,
  or comparison against an ISO-formatted date string.
* has_subquery — any SELECT nested inside parentheses (CTE bodies count).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class SqlAnalysisError(ValueError):
    """SQL that the analyzer cannot tokenize, with parser diagnostics."""


@dataclass(frozen=True)
class SqlComplexity:
    tables_referenced: int
    join_count: int
    logical_conditions: int
    has_aggregation: bool
    has_datetime_ops: bool
    has_subquery: bool
    char_length: int
    table_names: frozenset[str] = field(default_factory=frozenset)
    column_names: frozenset[str] = field(default_factory=frozenset)


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<line_comment>--[^\n]*)
  | (?P<block_comment>/\*.*?\*/)
  | (?P<placeholder>\[[A-Za-z_][A-Za-z0-9_]*@[^\[\]]*\])
  | (?P<string>'(?:[^']|'')*')
  | (?P<qident>"(?:[^"]|"")*")
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<word>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<op><>|!=|<=|>=|::|\|\||[=<>+\-*/%,;.()])
    """,
    re.VERBOSE | re.DOTALL,
)

_AGG_FUNCS = {"COUNT", "SUM", "AVG", "MIN", "MAX"}
_DATETIME_FUNCS = {
    "DATE", "TIME", "DATETIME", "JULIANDAY", "STRFTIME", "DATEADD", "DATEDIFF",
    "DATE_TRUNC", "DATE_PART", "TO_DATE", "TO_TIMESTAMP", "EXTRACT", "YEAR",
    "MONTH", "DAY", "LAST_DAY", "NOW", "GETDATE", "CURRENT_DATE",
    "CURRENT_TIMESTAMP",
}
_COMPARATORS = {"=", "<", ">", "<=", ">=", "<>", "!="}
_CLAUSE_STARTERS = {"WHERE", "HAVING", "ON"}
_CLAUSE_TERMINATORS = {
    "SELECT", "FROM", "GROUP", "ORDER", "LIMIT", "OFFSET", "UNION",
    "INTERSECT", "EXCEPT", "FETCH", "WINDOW",
}
_JOIN_MODIFIERS = {"INNER", "LEFT", "RIGHT", "FULL", "OUTER", "CROSS"}
_FROM_ITEM_TERMINATORS = _CLAUSE_TERMINATORS | _CLAUSE_STARTERS | {"JOIN"} | _JOIN_MODIFIERS
_ISO_DATE_RE = re.compile(r"^'\d{4}-\d{2}-\d{2}'$")
_KEYWORDS_NOT_ALIASES = (
    _FROM_ITEM_TERMINATORS | {"AS", "AND", "OR", "NOT", "USING", "WITH", "SET", "BY"}
)


@dataclass
class _Token:
    kind: str
    text: str
    pos: int

    @property
    def upper(self) -> str:
        return self.text.upper()


@dataclass
class _Frame:
    """Clause state for one parenthesis nesting level."""

    clause: str | None = None  # WHERE / HAVING / ON while inside that clause
    in_from: bool = False      # currently inside a FROM item list


def _tokenize(sql: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            snippet = sql[pos : pos + 20]
            raise SqlAnalysisError(f"unrecognized character at offset {pos}: {snippet!r}")
        kind = m.lastgroup or ""
        if kind not in ("ws", "line_comment", "block_comment"):
            tokens.append(_Token(kind=kind, text=m.group(0), pos=pos))
        pos = m.end()
    return tokens


def _collect_cte_names(tokens: list[_Token]) -> set[str]:
    """Names bound by `<ident> AS ( SELECT` — CTE definitions."""
    names: set[str] = set()
    for i in range(len(tokens) - 3):
        if (
            tokens[i].kind == "word"
            and tokens[i + 1].upper == "AS"
            and tokens[i + 2].text == "("
            and tokens[i + 3].upper in ("SELECT", "WITH")
        ):
            names.add(tokens[i].text.lower())
    return names


def analyze_sql(sql: str) -> SqlComplexity:
    """Compute deterministic complexity counts for one SQL statement.

    Raises SqlAnalysisError for text the tokenizer cannot handle
    (unbalanced quotes or parentheses, empty input).
    """
    if not sql or not sql.strip():
        raise SqlAnalysisError("empty SQL text")
    tokens = _tokenize(sql)
    if not tokens:
        raise SqlAnalysisError("no tokens found")

    cte_names = _collect_cte_names(tokens)

    frames: list[_Frame] = [_Frame()]
    tables: list[str] = []
    table_names: set[str] = set()
    column_names: set[str] = set()
    join_count = 0
    logical = 0
    has_agg = False
    has_dt = False
    has_subquery = False
    expect_table = False  # next identifier is a FROM/JOIN table item
    prev: _Token | None = None

    i = 0
    n = len(tokens)
    while i < n:
        tok = tokens[i]
        up = tok.upper
        frame = frames[-1]

        if tok.text == "(":
            frames.append(_Frame())
            expect_table = False
            prev = tok
            i += 1
            continue
        if tok.text == ")":
            if len(frames) == 1:
                raise SqlAnalysisError(f"unbalanced ')' at offset {tok.pos}")
            frames.pop()
            prev = tok
            i += 1
            continue

        if tok.kind == "word":
            if up == "SELECT":
                if len(frames) > 1:
                    has_subquery = True
                frame.clause = None
                frame.in_from = False
            elif up == "FROM":
                frame.clause = None
                frame.in_from = True
                expect_table = True
            elif up == "JOIN":
                join_count += 1
                frame.clause = None
                frame.in_from = False
                expect_table = True
            elif up in _JOIN_MODIFIERS:
                frame.clause = None
            elif up in _CLAUSE_STARTERS:
                frame.clause = up
                frame.in_from = False
                expect_table = False
            elif up in _CLAUSE_TERMINATORS:
                frame.clause = None
                frame.in_from = False
                expect_table = False
            elif up in ("AND", "OR", "NOT"):
                if frame.clause in _CLAUSE_STARTERS:
                    logical += 1
            elif up in _AGG_FUNCS:
                if i + 1 < n and tokens[i + 1].text == "(":
                    has_agg = True
            if up in _DATETIME_FUNCS:
                nxt = tokens[i + 1] if i + 1 < n else None
                if up in ("CURRENT_DATE", "CURRENT_TIMESTAMP"):
                    has_dt = True
                elif nxt is not None and (nxt.text == "(" or nxt.kind == "string"):
                    has_dt = True

            if expect_table and up not in _FROM_ITEM_TERMINATORS and up != "AS":
                # qualified name: ident (. ident)*
                name_parts = [tok.text]
                j = i + 1
                while j + 1 < n and tokens[j].text == "." and tokens[j + 1].kind == "word":
                    name_parts.append(tokens[j + 1].text)
                    j += 2
                full = ".".join(name_parts).lower()
                if full not in cte_names:
                    tables.append(full)
                    table_names.add(full)
                expect_table = False
                i = j
                # consume optional alias
                if i < n and tokens[i].upper == "AS":
                    i += 1
                if (
                    i < n
                    and tokens[i].kind == "word"
                    and tokens[i].upper not in _KEYWORDS_NOT_ALIASES
                ):
                    i += 1
                prev = tokens[i - 1]
                continue

            # dotted column reference outside table position: alias.column
            if (
                i + 2 < n
                and tokens[i + 1].text == "."
                and tokens[i + 2].kind == "word"
            ):
                column_names.add(tokens[i + 2].text.lower())

        elif tok.text == ",":
            if frame.in_from and frame.clause is None:
                join_count += 1
                expect_table = True

        elif tok.kind == "string" and _ISO_DATE_RE.match(tok.text):
            nxt = tokens[i + 1] if i + 1 < n else None
            neighbors = {prev.upper if prev else "", nxt.upper if nxt else ""}
            neighbor_ops = {prev.text if prev else "", nxt.text if nxt else ""}
            if (
                neighbor_ops & _COMPARATORS
                or neighbors & {"BETWEEN", "AND", "IN", "DATE", "TIMESTAMP"}
            ):
                has_dt = True

        prev = tok
        i += 1

    if len(frames) != 1:
        raise SqlAnalysisError(
            f"unbalanced parentheses: {len(frames) - 1} unclosed at end of input"
        )

    return SqlComplexity(
        tables_referenced=len(tables),
        join_count=join_count,
        logical_conditions=logical,
        has_aggregation=has_agg,
        has_datetime_ops=has_dt,
        has_subquery=has_subquery,
        char_length=len(sql),
        table_names=frozenset(table_names),
        column_names=frozenset(column_names),
    )
