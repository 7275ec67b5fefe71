"""
Core SAT types: grids, saliency and segmentation maps, SATs and their aggregates
"""

# pylint: disable=too-many-instance-attributes

import math
import dataclasses

import numpy as np

import sats.schema

VERTICAL = ["top", "centre", "bottom"]
HORIZONTAL = ["left", "centre", "right"]
POSITIONS = [f"{vertical}-{horizontal}" for vertical in VERTICAL for horizontal in HORIZONTAL]

class CoreError(Exception):
    """
    Core Error which captures the value breaking an invariant
    """

    def __init__(self, subject, message):

        self.subject = subject
        self.message = message
        super().__init__(self.message)

    def __reduce__(self):
        return (self.__class__, (self.subject, self.message))

def frozen(array, dtype):
    """
    Read only copy of an array
    """

    array = np.array(array, dtype=dtype)
    array.setflags(write=False)

    return array

@dataclasses.dataclass(frozen=True)
class ImageGrid:
    """
    Height and width of an image in pixels
    """

    width: int
    height: int

    def __post_init__(self):

        for name in ("width", "height"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise CoreError(self, f"{name} must be a positive integer, got {value!r}")

    @property
    def shape(self):
        """
        Shape as numpy sees it, rows first
        """
        return (self.height, self.width)

    @classmethod
    def of(cls, array):
        """
        Grid of a 2-D array
        """

        height, width = np.shape(array)
        return cls(width=int(width), height=int(height))

@dataclasses.dataclass(frozen=True, eq=False)
class SaliencyMap:
    """
    Per pixel attributions for one image and one saliency method
    """

    grid: ImageGrid
    values: np.ndarray
    method_tag: str

    def __post_init__(self):

        values = frozen(self.values, np.float64)

        if values.shape != self.grid.shape:
            raise CoreError(self, f"values shape {values.shape} != grid {self.grid.shape}")

        if not np.all(np.isfinite(values)):
            raise CoreError(self, "values must be finite")

        object.__setattr__(self, "values", values)

@dataclasses.dataclass(frozen=True, eq=False)
class SegmentMask:
    """
    A named boolean mask
    """

    name: str
    mask: np.ndarray

    def __post_init__(self):

        if not isinstance(self.name, str) or not self.name:
            raise CoreError(self, "segment name must be a non-empty string")

        mask = frozen(self.mask, bool)

        if mask.ndim != 2:
            raise CoreError(self, f"mask for {self.name} must be 2-D")

        if not mask.any():
            raise CoreError(self, f"mask for {self.name} is empty")

        object.__setattr__(self, "mask", mask)

    @property
    def size(self):
        """
        Number of pixels set
        """
        return int(np.count_nonzero(self.mask))

@dataclasses.dataclass(frozen=True, eq=False)
class SegmentationMap:
    """
    Named segments for one image, masks may overlap
    """

    grid: ImageGrid
    segments: tuple
    image_id: str

    def __post_init__(self):

        segments = tuple(self.segments)

        names = set()

        for segment in segments:

            if segment.mask.shape != self.grid.shape:
                raise CoreError(self, f"mask for {segment.name} shape {segment.mask.shape} != grid {self.grid.shape}")

            if segment.name in names:
                raise CoreError(self, f"duplicate segment name {segment.name}")

            names.add(segment.name)

        object.__setattr__(self, "segments", segments)

    @property
    def names(self):
        """
        Segment names in order
        """
        return [segment.name for segment in self.segments]

@dataclasses.dataclass(frozen=True)
class SatRow:
    """
    One segment's row in a Segment Attribution Table
    """

    segment_name: str
    mean_attr: float
    abs_mean_attr: float
    total_attr: float
    mask_size: int
    rank: float
    position: str
    image_id: str
    segment_id: str
    method_tag: str
    filled: bool = False

    def __post_init__(self):

        if self.abs_mean_attr != abs(self.mean_attr):
            raise CoreError(self, f"abs_mean_attr {self.abs_mean_attr!r} != |{self.mean_attr!r}|")

        if self.rank < 1:
            raise CoreError(self, f"rank {self.rank} < 1 for {self.segment_name}")

        # Fill rows stand for segments an image doesn't have

        if self.filled:

            if self.mean_attr != 0 or self.total_attr != 0 or self.mask_size != 0 or self.position is not None:
                raise CoreError(self, f"fill row for {self.segment_name} must be zero with no position")

            return

        if self.mask_size < 1:
            raise CoreError(self, f"mask_size {self.mask_size} < 1 for {self.segment_name}")

        if not math.isclose(self.mean_attr * self.mask_size, self.total_attr, rel_tol=1e-9, abs_tol=1e-300):
            raise CoreError(self, f"mean_attr x mask_size != total_attr for {self.segment_name}")

        if self.position not in POSITIONS:
            raise CoreError(self, f"position {self.position} not in {POSITIONS}")

@dataclasses.dataclass(frozen=True)
class Sat:
    """
    Segment Attribution Table for one (image, method) pair

    Ranks of an unfilled SAT are the descending average ranks of abs_mean_attr.
    A filled SAT (see aggregate.fill_to_union) also carries fill rows, all
    ranked n + 1 for the n rows it had.
    """

    rows: tuple
    image_id: str
    method_tag: str
    filled: bool = False

    def __post_init__(self):

        rows = tuple(self.rows)

        object.__setattr__(self, "rows", rows)

        names = set()

        for row in rows:

            if row.image_id != self.image_id or row.method_tag != self.method_tag:
                raise CoreError(self, f"row {row.segment_name} belongs to {row.image_id}/{row.method_tag}")

            if row.segment_name in names:
                raise CoreError(self, f"duplicate segment name {row.segment_name}")

            names.add(row.segment_name)

        original = [row for row in rows if not row.filled]

        if len(original) < len(rows) and not self.filled:
            raise CoreError(self, f"fill rows in unfilled SAT {self.image_id}")

        count = len(original)

        if math.fsum(row.rank for row in original) != count * (count + 1) / 2:
            raise CoreError(self, f"ranks of {self.image_id} do not sum to {count * (count + 1) // 2}")

        for row in rows:
            if row.filled and row.rank != count + 1:
                raise CoreError(self, f"fill row {row.segment_name} ranked {row.rank}, not {count + 1}")

    def __len__(self):
        return len(self.rows)

    @property
    def names(self):
        """
        Segment names in row order
        """
        return [row.segment_name for row in self.rows]

    @property
    def original_size(self):
        """
        Rows the image itself has, fill rows excluded
        """
        return sum(1 for row in self.rows if not row.filled)

    def row(self, name):
        """
        Row by segment name, None if absent
        """

        for row in self.rows:
            if row.segment_name == name:
                return row

        return None

@dataclasses.dataclass(frozen=True)
class AggregateRow:
    """
    Summary of one segment name across a corpus of SATs

    Families not computed (relative or absolute) are None.
    """

    name: str
    relative_mean_attr: float
    absolute_mean_attr: float
    relative_mean_rank: float
    absolute_mean_rank: float
    appearance_count: int
    corpus_size: int
    relative_signed_mean_attr: float = None
    absolute_signed_mean_attr: float = None

    def __post_init__(self):

        if not 0 <= self.appearance_count <= self.corpus_size:
            raise CoreError(self, f"appearance_count {self.appearance_count} outside [0, {self.corpus_size}]")

@dataclasses.dataclass(frozen=True)
class AggregateSat:
    """
    Aggregate SAT for one stratum of a corpus
    """

    rows: tuple
    corpus_size: int
    method_tag: str = None
    class_label: str = None

    def __post_init__(self):

        object.__setattr__(self, "rows", tuple(self.rows))

        for row in self.rows:
            if row.corpus_size != self.corpus_size:
                raise CoreError(self, f"row {row.name} corpus_size {row.corpus_size} != {self.corpus_size}")

    def __len__(self):
        return len(self.rows)

    @property
    def names(self):
        """
        Segment names in row order
        """
        return [row.name for row in self.rows]

    def row(self, name):
        """
        Row by segment name, None if absent
        """

        for row in self.rows:
            if row.name == name:
                return row

        return None

@dataclasses.dataclass(frozen=True, eq=False)
class SignificanceReport:
    """
    Pairwise Wilcoxon results behind a critical difference diagram

    Names are in diagram order (ascending absolute mean rank, ties by name).
    Matrices are indexed like segment_names; diagonal entries are 1.0 and ignored.
    n_paired counts the images whose rank difference for the pair is nonzero.
    """

    segment_names: tuple
    mean_ranks: dict
    p_matrix: np.ndarray
    adjusted_matrix: np.ndarray
    rejected: np.ndarray
    cliques: tuple
    alpha: float
    n_paired: np.ndarray
    relative_mean_ranks: dict = None
    appearance_counts: dict = None
    corpus_size: int = None
    zero_pairs: tuple = ()
    pair_modes: tuple = ()

    def __post_init__(self):

        if not 0 < self.alpha < 1:
            raise CoreError(self, f"alpha {self.alpha} not in (0, 1)")

        object.__setattr__(self, "segment_names", tuple(self.segment_names))
        object.__setattr__(self, "cliques", tuple(tuple(clique) for clique in self.cliques))
        object.__setattr__(self, "zero_pairs", tuple(tuple(pair) for pair in self.zero_pairs))
        object.__setattr__(self, "pair_modes", tuple(tuple(pair) for pair in self.pair_modes))

        count = len(self.segment_names)

        for name in ("p_matrix", "adjusted_matrix", "rejected", "n_paired"):

            dtype = bool if name == "rejected" else (int if name == "n_paired" else np.float64)
            matrix = frozen(getattr(self, name), dtype)

            if matrix.shape != (count, count):
                raise CoreError(self, f"{name} shape {matrix.shape} != ({count}, {count})")

            if not np.array_equal(matrix, matrix.T):
                raise CoreError(self, f"{name} is not symmetric")

            object.__setattr__(self, name, matrix)

        if np.any(self.p_matrix < 0) or np.any(self.p_matrix > 1):
            raise CoreError(self, "p values outside [0, 1]")

    def index(self, name):
        """
        Position of a name in the matrices
        """
        return self.segment_names.index(name)

    def p_value(self, name_a, name_b):
        """
        Raw p value of a pair
        """
        return float(self.p_matrix[self.index(name_a), self.index(name_b)])

    def different(self, name_a, name_b):
        """
        Whether the pair is rejected after Holm adjustment
        """
        return bool(self.rejected[self.index(name_a), self.index(name_b)])

class SatSchema(sats.schema.Schema):
    """
    SAT CSV columns, in order
    """

    image_id = str, False
    segment_id = str, False
    segment_name = str, False
    method_tag = str, False
    mean_attr = float, False
    abs_mean_attr = {"kind": float, "validation": lambda value: value >= 0}
    total_attr = float, False
    mask_size = {"kind": int, "validation": lambda value: value >= 1}
    rank = {"kind": float, "validation": lambda value: value >= 1}
    position = POSITIONS

    ALIASES = {"name": "segment_name"}

class LabelledSatSchema(SatSchema):
    """
    SAT rows with the class label from a manifest, for queries
    """

    class_label = str

def sat_rows(sats, labels=None):
    """
    Flattens SATs to dict rows, optionally with class labels by image_id
    """

    rows = []

    for sat in sats:
        for row in sat.rows:
            values = dataclasses.asdict(row)
            if labels is not None:
                values["class_label"] = labels.get(row.image_id)
            rows.append(values)

    return rows
