"""
Module for Query objects, filtering, grouping, reducing and sorting SAT or
aggregate rows
"""

import re
import csv
import copy
import math
import dataclasses

import sats.field
import sats.ingest

COMPARATORS = {
    ">=": "gte",
    "<=": "lte",
    "==": "eq",
    "!=": "ne",
    "=": "eq",
    ">": "gt",
    "<": "lt",
    "~": "like"
}

REDUCERS = ["mean", "count", "min", "max"]

CONDITION = re.compile(r"^\s*([A-Za-z][A-Za-z0-9_]*)\s*(>=|<=|==|!=|=|>|<|~)\s*(.*?)\s*$")

class QueryError(Exception):
    """
    Query Error which captures the query piece with the issue
    """

    def __init__(self, query, message):

        self.query = query
        self.message = message
        super().__init__(self.message)

class UnknownField(QueryError):
    """
    Field not in the table
    """

class BadComparator(QueryError):
    """
    Comparison that can't be parsed or isn't supported
    """

@dataclasses.dataclass
class Table:
    """
    Query result, columns in order and rows as dicts
    """

    columns: list
    rows: list

    def __len__(self):
        return len(self.rows)

def where_clause(wheres):
    """
    Normalizes conditions to (field, operator, value) triples

    Takes "mask_size>=100" strings, (field, comparator, value) triples or a
    dict of {"field__operator": value}.
    """

    if not wheres:
        return []

    if isinstance(wheres, dict):
        wheres = [(*(criterion.split("__", 1) if "__" in criterion else (criterion, "eq")), value) for criterion, value in sorted(wheres.items())]

    if isinstance(wheres, (str, tuple)):
        wheres = [wheres]

    clause = []

    for where in wheres:

        if isinstance(where, str):

            match = CONDITION.match(where)

            if not match:
                raise BadComparator(where, f"cannot parse condition {where!r}, expected field, comparator, value like mask_size>=100")

            field, comparator, value = match.groups()

        else:

            field, comparator, value = where

        operator = COMPARATORS.get(comparator, comparator)

        if operator not in sats.field.Field.OPERATORS:
            raise BadComparator(where, f"unknown comparator {comparator!r}, expected one of {sorted(COMPARATORS)}")

        if operator in ("in", "ne") and isinstance(value, str):
            value = value.split(",")

        clause.append((field, operator, value))

    return clause

def reduce_clause(reduces):
    """
    Normalizes reducers to (reducer, column) pairs, column None for count

    Takes "mean:abs_mean_attr" strings, "count", or (reducer, column) pairs.
    """

    if not reduces:
        return []

    if isinstance(reduces, (str, tuple)):
        reduces = [reduces]

    clause = []

    for reduce in reduces:

        if isinstance(reduce, str):
            reducer, _, column = reduce.partition(":")
        else:
            reducer, column = reduce

        if reducer not in REDUCERS:
            raise QueryError(reduce, f"unknown reducer {reducer!r}, expected one of {REDUCERS}")

        if reducer != "count" and not column:
            raise QueryError(reduce, f"reducer {reducer} needs a column, like {reducer}:abs_mean_attr")

        clause.append((reducer, column or None))

    return clause

def list_clause(values):
    """
    Normalizes group by or order by columns to a list
    """

    if not values:
        return []

    if isinstance(values, str):
        return [value.strip() for value in values.split(",") if value.strip()]

    return list(values)

class Query:
    """
    Query objects for exploring SAT and aggregate rows
    """

    def __init__(
        self,
        wheres=None,
        group_bys=None,
        reduces=None,
        order_bys=None,
        limits=None
    ):

        self.wheres = where_clause(wheres)
        self.group_bys = list_clause(group_bys)
        self.reduces = reduce_clause(reduces)
        self.order_bys = list_clause(order_bys)
        self.limits = limits

    def add(
        self,
        wheres=None,
        group_bys=None,
        reduces=None,
        order_bys=None,
        limits=None
    ):
        """
        Adds clauses to the query
        """

        self.wheres.extend(where_clause(wheres))
        self.group_bys.extend(list_clause(group_bys))
        self.reduces.extend(reduce_clause(reduces))
        self.order_bys.extend(list_clause(order_bys))

        if limits is not None:
            self.limits = limits

    def set(
        self,
        wheres=None,
        group_bys=None,
        reduces=None,
        order_bys=None,
        limits=None
    ):
        """
        Sets clauses on the query, leaving those not given alone
        """

        if wheres is not None:
            self.wheres = where_clause(wheres)
        if group_bys is not None:
            self.group_bys = list_clause(group_bys)
        if reduces is not None:
            self.reduces = reduce_clause(reduces)
        if order_bys is not None:
            self.order_bys = list_clause(order_bys)
        if limits is not None:
            self.limits = limits

    @staticmethod
    def resolve(schema, name):
        """
        Field name for a name or alias, raising with the valid ones
        """

        resolved = schema.resolve(name)

        if resolved is None:
            raise UnknownField(name, f"unknown field {name!r}, valid fields: {', '.join(schema.columns())}")

        return resolved

    def filter(self, schema, rows):
        """
        Rows satisfying every condition
        """

        if not self.wheres:
            return list(rows)

        record = schema.record()

        for field, operator, value in self.wheres:
            try:
                record.filter(f"{self.resolve(schema, field)}__{operator}", value)
            except sats.field.FieldError as exception:
                raise QueryError(field, exception.message)

        return [row for row in rows if record.satisfy(row)]

    def group(self, schema, rows):
        """
        Reduces rows per group, groups sorted by their values
        """

        if not self.group_bys and not self.reduces:
            return list(schema.columns()), rows

        group_bys = [self.resolve(schema, name) for name in self.group_bys]
        reduces = [(reducer, column if column is None else self.resolve(schema, column)) for reducer, column in self.reduces or [("count", None)]]

        for reducer, column in reduces:
            if reducer == "mean" and schema.record()[column].kind is str:
                raise QueryError(column, f"cannot take the mean of text field {column}")

        groups = {}

        for row in rows:
            groups.setdefault(tuple(row.get(name) for name in group_bys), []).append(row)

        columns = group_bys + [reducer if column is None else f"{reducer}_{column}" for reducer, column in reduces]

        table = []

        for key in sorted(groups, key=lambda key: [(value is None, value if value is not None else "") for value in key]):

            values = dict(zip(group_bys, key))

            for (reducer, column), name in zip(reduces, columns[len(group_bys):]):

                if column is None:
                    values[name] = len(groups[key])
                    continue

                present = [row[column] for row in groups[key] if row.get(column) is not None]

                if reducer == "count":
                    values[name] = len(present)
                elif not present:
                    values[name] = None
                elif reducer == "mean":
                    values[name] = math.fsum(present) / len(present)
                elif reducer == "min":
                    values[name] = min(present)
                else:
                    values[name] = max(present)

            table.append(values)

        return columns, table

    def order(self, columns, rows):
        """
        Sorts by each column in turn, ties broken by every column in order
        and missing values last
        """

        if not self.order_bys:
            return rows

        def key(row, column):
            value = row.get(column)
            return (value is None, value if value is not None else "")

        rows = sorted(rows, key=lambda row: [key(row, column) for column in columns])

        for order_by in reversed(self.order_bys):

            descending = order_by.startswith("-")
            column = order_by.lstrip("-+")

            if column not in columns:
                raise UnknownField(order_by, f"cannot sort by {column!r}, valid columns: {', '.join(columns)}")

            present = [row for row in rows if row.get(column) is not None]
            missing = [row for row in rows if row.get(column) is None]

            rows = sorted(present, key=lambda row, column=column: row[column], reverse=descending) + missing

        return rows

    def get(self, schema, rows):
        """
        Runs the query over typed rows read with schema
        """

        if self.limits is not None and self.limits < 1:
            raise QueryError(self.limits, f"top k must be at least 1, got {self.limits}")

        rows = self.filter(schema, rows)
        columns, rows = self.group(schema, rows)
        rows = self.order(columns, rows)

        if self.limits is not None:
            rows = rows[:self.limits]

        return Table(columns=list(columns), rows=rows)

    def get_add(self, schema, rows, *args, **kwargs):
        """
        Adds clauses and runs without changing the original query
        """

        query = copy.deepcopy(self)

        query.add(*args, **kwargs)

        return query.get(schema, rows)

def query(schema, rows, spec):
    """
    Runs a query given as a dict of clauses or a Query
    """

    if isinstance(spec, dict):
        spec = Query(**spec)

    return spec.get(schema, rows)

def write_table(table, path):
    """
    Writes a table as CSV to a path or an open file, floats with 17 significant digits
    """

    def cell(value):
        if value is None:
            return ""
        if isinstance(value, float):
            return f"{value:.17g}"
        return str(value)

    def write(file):
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([cell(row.get(column)) for column in table.columns])

    if hasattr(path, "write"):
        write(path)
        return

    try:
        with open(path, "w", encoding="utf-8", newline="") as file:
            write(file)
    except OSError as exception:
        raise sats.ingest.IoError(path, exception.strerror or str(exception))
