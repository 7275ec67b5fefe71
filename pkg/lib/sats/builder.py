"""
sats module for turning a saliency map and a segmentation map into a SAT
"""

import math
import logging
import dataclasses
import concurrent.futures

import numpy as np
import scipy.stats

import sats.core
import sats.ingest

logger = logging.getLogger(__name__)

class BuildError(Exception):
    """
    Build Error which captures what couldn't be built from
    """

    def __init__(self, subject, message):

        self.subject = subject
        self.message = message
        super().__init__(self.message)

    def __reduce__(self):
        return (self.__class__, (self.subject, self.message))

class EmptyMask(BuildError):
    """
    Mask without a single pixel
    """

@dataclasses.dataclass(frozen=True)
class SegmentMean:
    """
    Sum, pixel count and mean of saliency under a mask
    """

    mean: float
    total: float
    size: int

def mean_saliency(saliency, mask):
    """
    Mean attribution under a mask, summed with exact rounding
    """

    values = np.asarray(getattr(saliency, "values", saliency), dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)

    if values.shape != mask.shape:
        raise BuildError(mask, f"mask shape {mask.shape} != saliency shape {values.shape}")

    size = int(np.count_nonzero(mask))

    if not size:
        raise EmptyMask(mask, "mask is empty")

    total = math.fsum(values[mask].tolist())

    return SegmentMean(mean=total / size, total=total, size=size)

def abs_after_mean(mean):
    """
    Absolute value taken after averaging, so opposite signs cancel
    """

    return abs(mean)

def bucket(centroid, size):
    """
    Which third a pixel centre falls in, boundaries going to the lower third
    """

    centre = 3 * (centroid + 0.5)

    if centre <= size:
        return 0

    if centre <= 2 * size:
        return 1

    return 2

def position_bucket(mask, grid):
    """
    Position label of a mask's centroid, like "top-left" or "centre-centre"
    """

    rows, columns = np.nonzero(np.asarray(mask, dtype=bool))

    if not rows.size:
        raise EmptyMask(mask, "mask is empty")

    vertical = bucket(math.fsum(rows.tolist()) / rows.size, grid.height)
    horizontal = bucket(math.fsum(columns.tolist()) / columns.size, grid.width)

    return f"{sats.core.VERTICAL[vertical]}-{sats.core.HORIZONTAL[horizontal]}"

def rank_abs_means(abs_means):
    """
    Average ranks, 1 going to the largest value
    """

    return [float(rank) for rank in scipy.stats.rankdata(-np.asarray(abs_means, dtype=np.float64), method="average")]

def build_sat(saliency, segmentation, pad_radius=2):
    """
    One SAT row per segment, masks padded first, rows ordered by rank then name
    """

    if saliency.grid != segmentation.grid:
        raise BuildError(segmentation, f"saliency grid {saliency.grid} != segmentation grid {segmentation.grid}")

    if not segmentation.segments:
        raise BuildError(segmentation, f"no segments for {segmentation.image_id}")

    measured = []

    for segment in segmentation.segments:

        mask = sats.ingest.pad_mask(segment.mask, pad_radius)

        measured.append((segment.name, mean_saliency(saliency, mask), position_bucket(mask, segmentation.grid)))

    ranks = rank_abs_means([abs_after_mean(segment_mean.mean) for _, segment_mean, _ in measured])

    rows = [
        sats.core.SatRow(
            segment_name=name,
            mean_attr=segment_mean.mean,
            abs_mean_attr=abs_after_mean(segment_mean.mean),
            total_attr=segment_mean.total,
            mask_size=segment_mean.size,
            rank=rank,
            position=position,
            image_id=segmentation.image_id,
            segment_id=f"{segmentation.image_id}/{name}",
            method_tag=saliency.method_tag
        )
        for (name, segment_mean, position), rank in zip(measured, ranks)
    ]

    rows.sort(key=lambda row: (row.rank, row.segment_name))

    return sats.core.Sat(rows=tuple(rows), image_id=segmentation.image_id, method_tag=saliency.method_tag)

def build_entry(entry, pad_radius=2):
    """
    Reads one manifest entry from disk and builds its SAT
    """

    segmentation = sats.ingest.read_segmentation(entry.segmentation_path, image_id=entry.image_id)
    saliency = sats.ingest.read_saliency(entry.saliency_path, grid=segmentation.grid, method_tag=entry.method_tag)

    logger.info("building SAT for %s/%s", entry.image_id, entry.method_tag)

    try:
        return build_sat(saliency, segmentation, pad_radius=pad_radius)
    except (BuildError, sats.core.CoreError) as exception:
        raise BuildError(entry, f"{entry.image_id}/{entry.method_tag}: {exception.message}")

def build_corpus(manifest, pad_radius=2, jobs=1):
    """
    SATs for every manifest entry, in manifest order whatever the job count
    """

    entries = list(manifest)

    if jobs > 1 and len(entries) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(build_entry, entries, [pad_radius] * len(entries)))

    return [build_entry(entry, pad_radius) for entry in entries]
