"""
sats module for aggregating SATs across a corpus

Relative aggregation averages each segment name over the SATs that have it.
Absolute aggregation first fills every SAT up to the union of names, missing
names getting zero attribution and rank n + 1, then averages over all SATs.
"""

import csv
import math
import logging
import dataclasses

import numpy as np
import scipy.stats

import sats.core
import sats.schema
import sats.ingest

logger = logging.getLogger(__name__)

MODES = ["both", "relative", "absolute"]

class AggregateError(Exception):
    """
    Aggregate Error which captures the SATs or aggregate with the issue
    """

    def __init__(self, subject, message):

        self.subject = subject
        self.message = message
        super().__init__(self.message)

class EmptyCorpus(AggregateError):
    """
    Nothing to aggregate
    """

class UnknownName(AggregateError):
    """
    A SAT has a name its union doesn't
    """

class MixedMethods(AggregateError):
    """
    SATs from different saliency methods in one aggregate
    """

class AggregateSchema(sats.schema.Schema):
    """
    Aggregate CSV columns, in order
    """

    name = str, False
    relative_mean_attr = float
    absolute_mean_attr = float
    relative_mean_rank = float
    absolute_mean_rank = float
    appearance_count = int, False
    corpus_size = int, False
    relative_signed_mean_attr = float
    absolute_signed_mean_attr = float
    class_label = str
    method_tag = str

    ALIASES = {"segment_name": "name"}

class ComparisonSchema(sats.schema.Schema):
    """
    Comparison CSV columns, in order
    """

    name = str, False
    baseline_mean_attr = float
    other_mean_attr = float
    delta_mean_attr = float
    baseline_mean_rank = float
    other_mean_rank = float
    rank_shift = float
    baseline_appearance_count = int
    other_appearance_count = int

def union_names(sats_list):
    """
    Every name in the corpus, in order of first appearance
    """

    return list(dict.fromkeys(name for sat in sats_list for name in sat.names))

def fill_to_union(sat, k_star):
    """
    Adds a zero row ranked n + 1 for each name in k_star the SAT lacks

    Existing rows are kept as they are, fill rows follow in k_star order.
    """

    k_star = list(k_star)

    unknown = [name for name in sat.names if name not in k_star]

    if unknown:
        raise UnknownName(sat, f"{sat.image_id} has names {unknown} outside the union")

    present = set(sat.names)
    rank = float(sat.original_size + 1)

    fills = [
        sats.core.SatRow(
            segment_name=name,
            mean_attr=0.0,
            abs_mean_attr=0.0,
            total_attr=0.0,
            mask_size=0,
            rank=rank,
            position=None,
            image_id=sat.image_id,
            segment_id=f"{sat.image_id}/{name}",
            method_tag=sat.method_tag,
            filled=True
        )
        for name in k_star if name not in present
    ]

    if not fills:
        return sat

    return sats.core.Sat(rows=sat.rows + tuple(fills), image_id=sat.image_id, method_tag=sat.method_tag, filled=True)

def check(sats_list):
    """
    Makes sure SATs can be aggregated together, returning their method
    """

    sats_list = list(sats_list)

    if not sats_list:
        raise EmptyCorpus(sats_list, "no SATs to aggregate")

    methods = sorted({sat.method_tag for sat in sats_list})

    if len(methods) > 1:
        raise MixedMethods(sats_list, f"cannot aggregate methods {methods} together")

    return sats_list, methods[0]

def fold(sats_list):
    """
    Per name lists of (abs mean, signed mean, rank) and the images having it
    """

    folded = {}

    for sat in sats_list:
        for row in sat.rows:
            values = folded.setdefault(row.segment_name, {"abs": [], "signed": [], "ranks": [], "images": set()})
            values["abs"].append(row.abs_mean_attr)
            values["signed"].append(row.mean_attr)
            values["ranks"].append(row.rank)
            if not row.filled:
                values["images"].add(row.image_id)

    return folded

def mean(values):
    """
    Order independent mean
    """

    return math.fsum(values) / len(values)

def aggregate(sats_list, mode="both", class_label=None):
    """
    Aggregates SATs of one method, relative, absolute or both families

    Rows come in descending order of the primary attribution, relative if
    computed, ties broken by name. Absolute and relative means are each a
    correctly rounded division of the same exact sum, so absolute equals
    relative * appearance_count / corpus_size only to rounding.
    """

    if mode not in MODES:
        raise AggregateError(mode, f"mode {mode} not in {MODES}")

    sats_list, method_tag = check(sats_list)

    corpus_size = len(sats_list)

    names = union_names(sats_list)

    relative = fold(sats_list) if mode != "absolute" else {}
    absolute = fold([fill_to_union(sat, names) for sat in sats_list]) if mode != "relative" else {}

    rows = []

    for name in names:

        values = relative.get(name) or absolute.get(name)

        row = {
            "name": name,
            "appearance_count": len(values["images"]),
            "corpus_size": corpus_size,
            "relative_mean_attr": None,
            "relative_mean_rank": None,
            "relative_signed_mean_attr": None,
            "absolute_mean_attr": None,
            "absolute_mean_rank": None,
            "absolute_signed_mean_attr": None
        }

        for family, folded in (("relative", relative), ("absolute", absolute)):
            if name in folded:
                row[f"{family}_mean_attr"] = mean(folded[name]["abs"])
                row[f"{family}_mean_rank"] = mean(folded[name]["ranks"])
                row[f"{family}_signed_mean_attr"] = mean(folded[name]["signed"])

        rows.append(sats.core.AggregateRow(**row))

    primary = "absolute_mean_attr" if mode == "absolute" else "relative_mean_attr"

    rows.sort(key=lambda row: (-getattr(row, primary), row.name))

    return sats.core.AggregateSat(rows=tuple(rows), corpus_size=corpus_size, method_tag=method_tag, class_label=class_label)

def aggregate_relative(sats_list):
    """
    Means over only the SATs having each name
    """

    return aggregate(sats_list, mode="relative")

def aggregate_absolute(sats_list):
    """
    Means over every SAT after filling to the union of names
    """

    return aggregate(sats_list, mode="absolute")

def stratify(sats_list, labels=None, merge_classes=False):
    """
    Groups SATs by (class_label, method_tag), keys sorted

    Without labels, or merging classes, the class label is None.
    """

    strata = {}

    for sat in sats_list:
        label = None if merge_classes or labels is None else labels.get(sat.image_id)
        strata.setdefault((label, sat.method_tag), []).append(sat)

    return {key: strata[key] for key in sorted(strata, key=lambda key: (key[0] or "", key[1]))}

def aggregate_strata(sats_list, labels=None, mode="both", merge_classes=False):
    """
    One aggregate per (class_label, method_tag) stratum
    """

    sats_list = list(sats_list)

    if not sats_list:
        raise EmptyCorpus(sats_list, "no SATs to aggregate")

    return [
        aggregate(stratum, mode=mode, class_label=label)
        for (label, _), stratum in stratify(sats_list, labels, merge_classes).items()
    ]

def require_segments(sats_list, names):
    """
    Keeps only the SATs that have every one of names
    """

    names = list(names)

    kept = [sat for sat in sats_list if all(name in sat.names for name in names)]

    logger.info("kept %d SATs having %s", len(kept), names)

    return kept

def compare_aggregates(baseline, other, family="relative"):
    """
    Per name attribution delta and rank shift, other minus baseline

    Names missing from either side have None deltas.
    """

    rows = []

    for name in sorted(set(baseline.names) | set(other.names)):

        before = baseline.row(name)
        after = other.row(name)

        values = {"name": name}

        for side, row in (("baseline", before), ("other", after)):
            values[f"{side}_mean_attr"] = getattr(row, f"{family}_mean_attr") if row else None
            values[f"{side}_mean_rank"] = getattr(row, f"{family}_mean_rank") if row else None
            values[f"{side}_appearance_count"] = row.appearance_count if row else None

        complete = None not in (values["baseline_mean_attr"], values["other_mean_attr"])

        values["delta_mean_attr"] = values["other_mean_attr"] - values["baseline_mean_attr"] if complete else None
        values["rank_shift"] = values["other_mean_rank"] - values["baseline_mean_rank"] if complete else None

        rows.append(values)

    rows.sort(key=lambda values: (values["delta_mean_attr"] is None, -(values["delta_mean_attr"] or 0), values["name"]))

    return rows

def method_agreement(aggregates):
    """
    Spearman correlation of relative mean ranks between methods, over the
    names both have; NaN where fewer than two names are shared
    """

    methods = [aggregated.method_tag for aggregated in aggregates]

    matrix = np.eye(len(aggregates))

    for one, first in enumerate(aggregates):
        for two in range(one + 1, len(aggregates)):

            second = aggregates[two]
            common = sorted(set(first.names) & set(second.names))

            rho = np.nan

            if len(common) > 1:
                ranks = [[aggregated.row(name).relative_mean_rank for name in common] for aggregated in (first, second)]
                if len(set(ranks[0])) > 1 and len(set(ranks[1])) > 1:
                    rho, _ = scipy.stats.spearmanr(ranks[0], ranks[1])

            matrix[one, two] = matrix[two, one] = rho

    return methods, matrix

def aggregate_rows(aggregates):
    """
    Flattens aggregates to dict rows with their stratum
    """

    if isinstance(aggregates, sats.core.AggregateSat):
        aggregates = [aggregates]

    rows = []

    for aggregated in aggregates:
        for row in aggregated.rows:
            values = dataclasses.asdict(row)
            values["class_label"] = aggregated.class_label
            values["method_tag"] = aggregated.method_tag
            rows.append(values)

    return rows

def write_rows(path, schema, rows, decimals=None):
    """
    Writes typed rows as CSV in schema order
    """

    record = schema.record()

    try:
        with open(path, "w", encoding="utf-8", newline="") as file:
            writer = csv.DictWriter(file, fieldnames=list(record), lineterminator="\n")
            writer.writeheader()
            for values in rows:
                writer.writerow(record.write(values, decimals=decimals))
    except OSError as exception:
        raise sats.ingest.IoError(path, exception.strerror or str(exception))

def write_aggregate_csv(aggregates, path, decimals=None):
    """
    Writes aggregates, floats with fixed decimals if given
    """

    write_rows(path, AggregateSchema, aggregate_rows(aggregates), decimals=decimals)

def read_aggregate_csv(path):
    """
    Reads aggregates back, one per (class_label, method_tag) in file order
    """

    grouped = {}

    for values in sats.ingest.read_csv(path, AggregateSchema):
        grouped.setdefault((values.pop("class_label"), values.pop("method_tag")), []).append(values)

    aggregates = []

    for (label, method_tag), rows in grouped.items():
        try:
            aggregates.append(sats.core.AggregateSat(
                rows=tuple(sats.core.AggregateRow(**values) for values in rows),
                corpus_size=rows[0]["corpus_size"],
                method_tag=method_tag,
                class_label=label
            ))
        except sats.core.CoreError as exception:
            raise sats.ingest.SchemaViolation(path, exception.message)

    return aggregates

def write_comparison_csv(rows, path):
    """
    Writes compare_aggregates rows
    """

    write_rows(path, ComparisonSchema, rows)
