"""
Unittest Tools for SATs
"""

# pylint: disable=too-many-arguments

import os

import numpy as np

import sats.core
import sats.ingest
import sats.builder

def sat(image_id, values, method_tag="unit", sizes=None, position="centre-centre"):
    """
    SAT straight from {name: mean_attr}, ranked the way the builder ranks

    Sizes default to 1 pixel so totals equal means.
    """

    sizes = sizes or {}
    names = list(values)

    ranks = sats.builder.rank_abs_means([abs(values[name]) for name in names])

    rows = [
        sats.core.SatRow(
            segment_name=name,
            mean_attr=float(values[name]),
            abs_mean_attr=abs(float(values[name])),
            total_attr=float(values[name]) * sizes.get(name, 1),
            mask_size=sizes.get(name, 1),
            rank=rank,
            position=position,
            image_id=image_id,
            segment_id=f"{image_id}/{name}",
            method_tag=method_tag
        )
        for name, rank in zip(names, ranks)
    ]

    rows.sort(key=lambda row: (row.rank, row.segment_name))

    return sats.core.Sat(rows=tuple(rows), image_id=image_id, method_tag=method_tag)

def table_one_corpus(method_tag="unit"):
    """
    Three images whose relative aggregate is, to 4 decimals,
    watermark 0.0135, mane 0.0051, eyes 0.0038, legs 0.0022, hooves 0.0013
    """

    return [
        sat("img1", {"watermark": 0.0130, "mane": 0.0050, "eyes": 0.0040, "legs": 0.0020, "hooves": 0.0012}, method_tag),
        sat("img2", {"watermark": 0.0140, "mane": 0.0052, "eyes": 0.0036, "legs": 0.0024, "hooves": 0.0014}, method_tag),
        sat("img3", {"mane": 0.0051, "eyes": 0.0038, "legs": 0.0022, "hooves": 0.0013}, method_tag)
    ]

def overlap_corpus(method_tag="unit"):
    """
    20 images over A, B, C with mean ranks 1.7, 2.0 and 2.3

    Exact p values are 0.125 for A-B and B-C, 2/256 for A-C, so only A-C
    survives Holm at 0.05 and the cliques are (A, B) and (B, C).
    """

    corpus = []

    for index in range(4):
        corpus.append(sat(f"ab{index}", {"A": 0.9, "B": 0.9, "C": 0.1}, method_tag))

    for index in range(4):
        corpus.append(sat(f"bc{index}", {"A": 0.9, "B": 0.5, "C": 0.5}, method_tag))

    for index in range(12):
        corpus.append(sat(f"tie{index:02d}", {"A": 0.5, "B": 0.5, "C": 0.5}, method_tag))

    return corpus

def separated_corpus(count=20, method_tag="unit"):
    """
    count images over 12 names with the same strict order in each,
    A ranked 1 and B ranked 12 everywhere
    """

    names = ["A"] + [f"n{index:02d}" for index in range(1, 11)] + ["B"]

    return [
        sat(f"img{image:02d}", {name: (12 - position) / 12 for position, name in enumerate(names)}, method_tag)
        for image in range(count)
    ]

def tied_corpus(count=10, names=("A", "B", "C", "D"), method_tag="unit"):
    """
    count images where every name ties in every image
    """

    return [sat(f"img{image:02d}", {name: 0.25 for name in names}, method_tag) for image in range(count)]

def chihuahua_corpus(count=10, method_tag="unit"):
    """
    eyes always first, ears and head swapping second place image by image
    """

    return [
        sat(f"dog{image:02d}", {
            "eyes": 0.9,
            "ears": 0.6 if image % 2 else 0.5,
            "head": 0.5 if image % 2 else 0.6
        }, method_tag)
        for image in range(count)
    ]

def random_corpus(rng, count, names, dropout=0.3, method_tag="unit"):
    """
    count SATs over up to names names, each name dropped with probability
    dropout but every SAT keeping at least one, signed means
    """

    universe = [f"s{index:02d}" for index in range(names)]

    corpus = []

    for image in range(count):

        kept = [name for name in universe if rng.random() >= dropout] or [universe[int(rng.integers(names))]]

        values = {name: float(rng.normal(0, 1)) for name in kept}
        sizes = {name: int(rng.integers(1, 50)) for name in kept}

        corpus.append(sat(f"img{image:03d}", values, method_tag, sizes))

    return corpus

class MockCorpus:
    """
    Mock corpus written to a directory in the ingest formats
    """

    directory = None # Where files go
    entries = None   # Manifest entries so far

    def __init__(self, directory):

        self.directory = directory
        self.entries = []

        os.makedirs(directory, exist_ok=True)

    def add(self, image_id, saliency, masks, class_label="0", method_tag="unit", encoding="rle"):
        """
        Writes an image's saliency array and segmentation, masks as {name: mask}
        """

        saliency = np.asarray(saliency, dtype=np.float64)
        grid = sats.core.ImageGrid.of(saliency)

        stem = f"{image_id}-{method_tag}"

        sats.ingest.write_saliency(
            os.path.join(self.directory, f"{stem}.npy"),
            sats.core.SaliencyMap(grid=grid, values=saliency, method_tag=method_tag)
        )

        sats.ingest.write_segmentation(
            os.path.join(self.directory, f"{stem}.json"),
            sats.core.SegmentationMap(
                grid=grid,
                segments=tuple(sats.core.SegmentMask(name=name, mask=mask) for name, mask in masks.items()),
                image_id=image_id
            ),
            encoding=encoding
        )

        self.entries.append({
            "image_id": image_id,
            "class_label": class_label,
            "saliency_path": f"{stem}.npy",
            "segmentation_path": f"{stem}.json",
            "method_tag": method_tag
        })

    def write(self, name="manifest.json"):
        """
        Writes the manifest, returning its path
        """

        path = os.path.join(self.directory, name)

        sats.ingest.write_manifest(path, self.entries)

        return path

def quadrants(size=4):
    """
    Masks for the four quadrants of a size x size grid
    """

    half = size // 2

    masks = {}

    for name, rows, columns in (
        ("top_left", slice(0, half), slice(0, half)),
        ("top_right", slice(0, half), slice(half, size)),
        ("bottom_left", slice(half, size), slice(0, half)),
        ("bottom_right", slice(half, size), slice(half, size))
    ):
        mask = np.zeros((size, size), dtype=bool)
        mask[rows, columns] = True
        masks[name] = mask

    return masks
