"""
sats module for the significance behind critical difference diagrams:
paired Wilcoxon signed-rank tests, Holm correction and cliques
"""

import math
import json
import logging
import itertools
import dataclasses

import numpy as np
import scipy.stats

import sats.core
import sats.ingest
import sats.aggregate

logger = logging.getLogger(__name__)

MODES = ["auto", "exact", "normal"]
EXACT_LIMIT = 25 # auto switches to the normal approximation above this

class StatsError(Exception):
    """
    Stats Error which captures the values with the issue
    """

    def __init__(self, subject, message):

        self.subject = subject
        self.message = message
        super().__init__(self.message)

class OutOfRangeP(StatsError):
    """
    p value outside [0, 1]
    """

class DegenerateCorpus(StatsError):
    """
    Too few SATs to compare anything
    """

@dataclasses.dataclass(frozen=True)
class PairedSample:
    """
    Per image rank differences of two names, after filling to the union
    """

    name_a: str
    name_b: str
    differences: tuple

    def __post_init__(self):

        object.__setattr__(self, "differences", tuple(float(difference) for difference in self.differences))

        if not all(math.isfinite(difference) for difference in self.differences):
            raise StatsError(self, f"non-finite difference between {self.name_a} and {self.name_b}")

@dataclasses.dataclass(frozen=True)
class WilcoxonResult:
    """
    Outcome of one signed-rank test

    all_zero flags the case with no nonzero difference, where p is 1.0.
    """

    statistic: float
    p_value: float
    n_effective: int
    mode: str
    all_zero: bool = False

def exact_counts(doubled_ranks):
    """
    How many sign assignments give each doubled positive rank sum

    Counting subsets by sum is the same as enumerating all 2^n assignments.
    Counts are Python ints, which past 62 ranks no longer fit 64 bits.
    """

    counts = np.zeros(int(sum(doubled_ranks)) + 1, dtype=object)
    counts[0] = 1

    for rank in doubled_ranks:
        shifted = counts.copy()
        shifted[rank:] += counts[:counts.size - rank]
        counts = shifted

    return counts

def wilcoxon_signed_rank(differences, mode="auto"):
    """
    Two sided Wilcoxon signed-rank test, zero differences discarded

    The statistic is min(W+, W-) over average ranks of |d|. exact counts
    every sign assignment; normal uses the tie and continuity corrected
    approximation; auto is exact up to 25 nonzero differences.
    """

    if mode == "normal-approx":
        mode = "normal"

    if mode not in MODES:
        raise StatsError(mode, f"mode {mode} not in {MODES}")

    differences = np.asarray(differences, dtype=np.float64).ravel()

    if not differences.size:
        raise StatsError(differences, "need at least one difference")

    if not np.all(np.isfinite(differences)):
        raise StatsError(differences, "differences must be finite")

    nonzero = differences[differences != 0]
    count = int(nonzero.size)

    if not count:
        return WilcoxonResult(statistic=0.0, p_value=1.0, n_effective=0, mode=mode if mode != "auto" else "exact", all_zero=True)

    magnitudes = np.abs(nonzero)
    ranks = scipy.stats.rankdata(magnitudes, method="average")

    positive = math.fsum(ranks[nonzero > 0].tolist())
    statistic = min(positive, count * (count + 1) / 2 - positive)

    if mode == "auto":
        mode = "exact" if count <= EXACT_LIMIT else "normal"

    if mode == "exact":

        doubled = [int(round(2 * rank)) for rank in ranks]
        counts = exact_counts(doubled)

        tail = int(round(2 * statistic))
        p_value = 2 * int(counts[:tail + 1].sum()) / 2 ** count

    else:

        _, ties = np.unique(magnitudes, return_counts=True)

        expected = count * (count + 1) / 4
        variance = count * (count + 1) * (2 * count + 1) / 24 - float(np.sum(ties ** 3 - ties)) / 48

        z = max(0.0, abs(statistic - expected) - 0.5) / math.sqrt(variance)
        p_value = 2 * float(scipy.stats.norm.sf(z))

    return WilcoxonResult(statistic=float(statistic), p_value=min(1.0, p_value), n_effective=count, mode=mode)

def holm_adjust(p_values):
    """
    Holm step-down adjusted p values, in the original order
    """

    p_values = np.asarray(p_values, dtype=np.float64).ravel()

    if np.any(np.isnan(p_values)) or np.any(p_values < 0) or np.any(p_values > 1):
        raise OutOfRangeP(p_values, "p values must be in [0, 1]")

    count = p_values.size

    order = np.argsort(p_values, kind="stable")

    scaled = (count - np.arange(count)) * p_values[order]

    adjusted = np.empty(count)
    adjusted[order] = np.minimum(1.0, np.maximum.accumulate(scaled))

    return adjusted

def cliques(names, rejected):
    """
    Maximal runs of names, in rank order, whose every pair is not rejected

    Grows a window from each name while the new member is compatible with
    all before it, then drops windows inside others.
    """

    names = list(names)
    rejected = np.asarray(rejected, dtype=bool)

    windows = []

    for start in range(len(names)):

        end = start + 1

        while end < len(names) and not rejected[start:end, end].any():
            end += 1

        windows.append((start, end))

    kept = [
        (start, end) for start, end in windows
        if not any(other != (start, end) and other[0] <= start and end <= other[1] for other in windows)
    ]

    return [tuple(names[start:end]) for start, end in sorted(set(kept))]

def paired_samples(filled, names):
    """
    Rank differences for every pair of names, filled SATs in corpus order
    """

    ranks = np.array([[sat.row(name).rank for name in names] for sat in filled])

    return [
        PairedSample(name_a=names[one], name_b=names[two], differences=ranks[:, one] - ranks[:, two])
        for one, two in itertools.combinations(range(len(names)), 2)
    ]

def build_significance(sats_list, alpha=0.05, mode="auto"):
    """
    Pairwise tests on absolute ranks, Holm adjusted together, and cliques
    """

    sats_list = list(sats_list)

    if len(sats_list) < 2:
        raise DegenerateCorpus(sats_list, f"need at least 2 SATs, got {len(sats_list)}")

    if not 0 < alpha < 1:
        raise StatsError(alpha, f"alpha {alpha} not in (0, 1)")

    aggregated = sats.aggregate.aggregate(sats_list, mode="both")

    rows = sorted(aggregated.rows, key=lambda row: (row.absolute_mean_rank, row.name))
    names = [row.name for row in rows]

    filled = [sats.aggregate.fill_to_union(sat, names) for sat in sats_list]

    count = len(names)
    index = {name: position for position, name in enumerate(names)}

    p_matrix = np.ones((count, count))
    n_paired = np.zeros((count, count), dtype=int)

    zero_pairs = []
    pair_modes = []
    p_values = []

    samples = paired_samples(filled, names)

    for sample in samples:

        result = wilcoxon_signed_rank(sample.differences, mode=mode)

        one, two = index[sample.name_a], index[sample.name_b]

        p_matrix[one, two] = p_matrix[two, one] = result.p_value
        n_paired[one, two] = n_paired[two, one] = result.n_effective

        if result.all_zero:
            zero_pairs.append((sample.name_a, sample.name_b))

        pair_modes.append((sample.name_a, sample.name_b, result.mode))
        p_values.append(result.p_value)

    if zero_pairs:
        logger.info("%d pairs have all zero rank differences", len(zero_pairs))

    adjusted_matrix = np.ones((count, count))

    if samples:
        for sample, adjusted in zip(samples, holm_adjust(p_values)):
            one, two = index[sample.name_a], index[sample.name_b]
            adjusted_matrix[one, two] = adjusted_matrix[two, one] = adjusted

    rejected = adjusted_matrix < alpha
    np.fill_diagonal(rejected, False)

    return sats.core.SignificanceReport(
        segment_names=tuple(names),
        mean_ranks={row.name: row.absolute_mean_rank for row in rows},
        p_matrix=p_matrix,
        adjusted_matrix=adjusted_matrix,
        rejected=rejected,
        cliques=cliques(names, rejected),
        alpha=alpha,
        n_paired=n_paired,
        relative_mean_ranks={row.name: row.relative_mean_rank for row in rows},
        appearance_counts={row.name: row.appearance_count for row in rows},
        corpus_size=aggregated.corpus_size,
        zero_pairs=tuple(zero_pairs),
        pair_modes=tuple(pair_modes)
    )

def upper(matrix):
    """
    Row major upper triangle, diagonal excluded
    """

    return [value.item() for value in np.asarray(matrix)[np.triu_indices(len(matrix), k=1)]]

def square(values, count, diagonal, dtype=np.float64):
    """
    Symmetric matrix from a row major upper triangle
    """

    matrix = np.full((count, count), diagonal, dtype=dtype)
    rows, columns = np.triu_indices(count, k=1)

    matrix[rows, columns] = values
    matrix[columns, rows] = values

    return matrix

def report_to_json(report):
    """
    Report as a JSON ready dict, matrices as row major upper triangles
    """

    return {
        "names": list(report.segment_names),
        "mean_ranks": [report.mean_ranks[name] for name in report.segment_names],
        "relative_mean_ranks": [(report.relative_mean_ranks or {}).get(name) for name in report.segment_names],
        "appearance_counts": [(report.appearance_counts or {}).get(name) for name in report.segment_names],
        "corpus_size": report.corpus_size,
        "p_values": upper(report.p_matrix),
        "adjusted_p_values": upper(report.adjusted_matrix),
        "n_paired": upper(report.n_paired),
        "cliques": [list(clique) for clique in report.cliques],
        "zero_pairs": [list(pair) for pair in report.zero_pairs],
        "pair_modes": [list(pair) for pair in report.pair_modes],
        "alpha": report.alpha
    }

def report_from_json(document):
    """
    Report back from report_to_json's dict
    """

    names = document["names"]
    count = len(names)

    adjusted = square(document["adjusted_p_values"], count, 1.0)
    rejected = adjusted < document["alpha"]
    np.fill_diagonal(rejected, False)

    return sats.core.SignificanceReport(
        segment_names=tuple(names),
        mean_ranks=dict(zip(names, document["mean_ranks"])),
        p_matrix=square(document["p_values"], count, 1.0),
        adjusted_matrix=adjusted,
        rejected=rejected,
        cliques=document["cliques"],
        alpha=document["alpha"],
        n_paired=square(document["n_paired"], count, 0, dtype=int),
        relative_mean_ranks=dict(zip(names, document["relative_mean_ranks"])),
        appearance_counts=dict(zip(names, document["appearance_counts"])),
        corpus_size=document["corpus_size"],
        zero_pairs=document.get("zero_pairs", []),
        pair_modes=document.get("pair_modes", [])
    )

def write_report(report, path):
    """
    Writes a report as JSON
    """

    sats.ingest.write_json(path, report_to_json(report))

def read_report(path):
    """
    Reads a report written by write_report
    """

    return report_from_json(sats.ingest.read_json(path))

def report_json(report):
    """
    Report as JSON text
    """

    return json.dumps(report_to_json(report), indent=2, sort_keys=True)
