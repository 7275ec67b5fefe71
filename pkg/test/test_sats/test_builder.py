"""
Unittests for building SATs
"""

import pickle
import tempfile
import unittest
import unittest.mock

import numpy as np

import sats
import sats.ingest
import sats.builder
import sats.unittest

def quadrant_saliency():

    values = np.zeros((4, 4))

    values[:2, :2] = 1.0
    values[:2, 2:] = 0.5
    values[2:, :2] = -2.0
    values[2:, 2:] = 0.25

    return values

def quadrant_segmentation(image_id="img"):

    return sats.SegmentationMap(
        grid=sats.ImageGrid(4, 4),
        segments=tuple(sats.SegmentMask(name, mask) for name, mask in sats.unittest.quadrants().items()),
        image_id=image_id
    )

def random_segmentation(rng, height, width, count=5):
    """
    Overlapping random masks, none empty
    """

    segments = []

    for index in range(count):

        mask = rng.random((height, width)) < 0.3
        mask[int(rng.integers(height)), int(rng.integers(width))] = True

        segments.append(sats.SegmentMask(f"s{index}", mask))

    return sats.SegmentationMap(grid=sats.ImageGrid(width, height), segments=tuple(segments), image_id="img")

class TestBuildError(unittest.TestCase):

    maxDiff = None

    def test___init__(self):

        error = sats.builder.BuildError("unittest", "oops")

        self.assertEqual(error.subject, "unittest")
        self.assertEqual(error.message, "oops")

    def test___reduce__(self):

        error = pickle.loads(pickle.dumps(sats.builder.EmptyMask("unittest", "oops")))

        self.assertIsInstance(error, sats.builder.EmptyMask)
        self.assertEqual(error.message, "oops")

class TestBuilder(unittest.TestCase):

    maxDiff = None

    def test_mean_saliency(self):

        values = np.array([[1.0, 2.0], [3.0, -4.0]])

        self.assertEqual(sats.builder.mean_saliency(values, [[True, True], [False, False]]), sats.builder.SegmentMean(mean=1.5, total=3.0, size=2))

        saliency = sats.SaliencyMap(grid=sats.ImageGrid(2, 2), values=values, method_tag="lrp")

        self.assertEqual(sats.builder.mean_saliency(saliency, np.ones((2, 2), dtype=bool)).mean, 0.5)

        self.assertRaisesRegex(sats.builder.EmptyMask, "mask is empty", sats.builder.mean_saliency, values, np.zeros((2, 2)))
        self.assertRaisesRegex(sats.builder.BuildError, r"mask shape \(1, 2\) != saliency shape \(2, 2\)", sats.builder.mean_saliency, values, [[True, True]])

    def test_mean_saliency_oracle(self):

        rng = np.random.default_rng(1234)

        for _ in range(1000):

            height, width = (int(side) for side in rng.integers(1, 65, size=2))

            values = rng.normal(0, 1, size=(height, width)) * 10.0 ** float(rng.integers(-6, 3))
            mask = rng.random((height, width)) < rng.uniform(0.05, 1.0)
            mask[int(rng.integers(height)), int(rng.integers(width))] = True

            total = 0.0
            magnitude = 0.0
            size = 0

            for value_row, mask_row in zip(values.tolist(), mask.tolist()):
                for value, member in zip(value_row, mask_row):
                    if member:
                        total += value
                        magnitude += abs(value)
                        size += 1

            measured = sats.builder.mean_saliency(values, mask)

            self.assertEqual(measured.size, size)
            self.assertLessEqual(abs(measured.mean - total / size), 1e-12 * magnitude / size)

    def test_abs_after_mean(self):

        segment_mean = sats.builder.mean_saliency(np.array([[1.0, -1.0]]), [[True, True]])

        self.assertEqual(sats.builder.abs_after_mean(segment_mean.mean), 0.0)
        self.assertEqual(sats.builder.abs_after_mean(-0.25), 0.25)

    def test_bucket(self):

        self.assertEqual(sats.builder.bucket(0, 3), 0)
        self.assertEqual(sats.builder.bucket(0.5, 3), 0)
        self.assertEqual(sats.builder.bucket(1, 3), 1)
        self.assertEqual(sats.builder.bucket(2, 3), 2)
        self.assertEqual(sats.builder.bucket(0, 1), 1)
        self.assertEqual(sats.builder.bucket(1.5, 4), 1)

    def test_position_bucket(self):

        grid = sats.ImageGrid(9, 9)

        def at(row, column):
            mask = np.zeros((9, 9), dtype=bool)
            mask[row, column] = True
            return sats.builder.position_bucket(mask, grid)

        self.assertEqual(at(0, 0), "top-left")
        self.assertEqual(at(4, 4), "centre-centre")
        self.assertEqual(at(8, 0), "bottom-left")
        self.assertEqual(at(0, 8), "top-right")
        self.assertEqual(at(8, 5), "bottom-centre")

        self.assertEqual(sats.builder.position_bucket(np.ones((9, 9)), grid), "centre-centre")

        self.assertRaises(sats.builder.EmptyMask, sats.builder.position_bucket, np.zeros((9, 9)), grid)

    def test_rank_abs_means(self):

        self.assertEqual(sats.builder.rank_abs_means([0.5, 0.5, 0.1]), [1.5, 1.5, 3.0])
        self.assertEqual(sats.builder.rank_abs_means([0.1, 0.3, 0.2]), [3.0, 1.0, 2.0])
        self.assertEqual(sats.builder.rank_abs_means([0.0]), [1.0])

    def test_build_sat(self):

        saliency = sats.SaliencyMap(grid=sats.ImageGrid(4, 4), values=quadrant_saliency(), method_tag="lrp")

        table = sats.builder.build_sat(saliency, quadrant_segmentation(), pad_radius=0)

        self.assertEqual(table.image_id, "img")
        self.assertEqual(table.method_tag, "lrp")
        self.assertEqual(table.names, ["bottom_left", "top_left", "top_right", "bottom_right"])

        self.assertEqual(table.row("bottom_left"), sats.SatRow(
            segment_name="bottom_left",
            mean_attr=-2.0,
            abs_mean_attr=2.0,
            total_attr=-8.0,
            mask_size=4,
            rank=1.0,
            position="bottom-left",
            image_id="img",
            segment_id="img/bottom_left",
            method_tag="lrp"
        ))

        self.assertEqual(table.row("top_right").position, "top-right")
        self.assertEqual(table.row("bottom_right").rank, 4.0)

        padded = sats.builder.build_sat(saliency, quadrant_segmentation(), pad_radius=1)

        top_left = padded.row("top_left")

        self.assertEqual(top_left.mask_size, 9)
        self.assertEqual(top_left.total_attr, 1.25)
        self.assertEqual(top_left.mean_attr, 1.25 / 9)
        self.assertEqual(top_left.position, "centre-centre")

        covered = sats.builder.build_sat(saliency, quadrant_segmentation(), pad_radius=2)

        self.assertEqual([row.mask_size for row in covered.rows], [16, 16, 16, 16])
        self.assertEqual([row.rank for row in covered.rows], [2.5, 2.5, 2.5, 2.5])

        other = sats.SaliencyMap(grid=sats.ImageGrid(2, 2), values=np.zeros((2, 2)), method_tag="lrp")

        self.assertRaisesRegex(sats.builder.BuildError, "saliency grid", sats.builder.build_sat, other, quadrant_segmentation())

        empty = sats.SegmentationMap(grid=sats.ImageGrid(4, 4), segments=(), image_id="img")

        self.assertRaisesRegex(sats.builder.BuildError, "no segments for img", sats.builder.build_sat, saliency, empty)

        self.assertRaisesRegex(sats.ingest.IngestError, "pad radius -1 < 0", sats.builder.build_sat, saliency, quadrant_segmentation(), -1)

    def test_build_sat_scale(self):

        rng = np.random.default_rng(31)

        for _ in range(20):

            values = rng.normal(0, 1, size=(8, 9))
            segmentation = random_segmentation(rng, 8, 9)

            table = sats.builder.build_sat(sats.SaliencyMap(grid=sats.ImageGrid(9, 8), values=values, method_tag="lrp"), segmentation, pad_radius=0)

            for scale in (2.0, 0.5, -0.25, -8.0):

                scaled = sats.builder.build_sat(
                    sats.SaliencyMap(grid=sats.ImageGrid(9, 8), values=scale * values, method_tag="lrp"), segmentation, pad_radius=0
                )

                self.assertEqual(scaled.names, table.names)

                for row in table.rows:
                    other = scaled.row(row.segment_name)
                    self.assertEqual(other.mean_attr, scale * row.mean_attr)
                    self.assertEqual(other.abs_mean_attr, abs(scale) * row.abs_mean_attr)
                    self.assertEqual(other.rank, row.rank)

    def test_build_sat_translation(self):

        rng = np.random.default_rng(37)

        for _ in range(20):

            pattern = rng.normal(0, 1, size=(5, 6))
            masks = random_segmentation(rng, 5, 6).segments

            tables = []

            for top, left in ((0, 0), (3, 7), (6, 2)):

                values = np.zeros((11, 13))
                values[top:top + 5, left:left + 6] = pattern

                segments = []

                for segment in masks:
                    mask = np.zeros((11, 13), dtype=bool)
                    mask[top:top + 5, left:left + 6] = segment.mask
                    segments.append(sats.SegmentMask(segment.name, mask))

                segmentation = sats.SegmentationMap(grid=sats.ImageGrid(13, 11), segments=tuple(segments), image_id="img")

                tables.append(sats.builder.build_sat(sats.SaliencyMap(grid=sats.ImageGrid(13, 11), values=values, method_tag="lrp"), segmentation, pad_radius=0))

            for table in tables[1:]:
                for row in tables[0].rows:
                    other = table.row(row.segment_name)
                    self.assertAlmostEqual(other.mean_attr, row.mean_attr, delta=1e-12)
                    self.assertEqual(other.mask_size, row.mask_size)
                    self.assertEqual(other.rank, row.rank)

    def test_build_sat_segment_order(self):

        rng = np.random.default_rng(47)

        for _ in range(20):

            values = rng.normal(0, 1, size=(6, 6))
            saliency = sats.SaliencyMap(grid=sats.ImageGrid(6, 6), values=values, method_tag="lrp")
            segmentation = random_segmentation(rng, 6, 6)

            table = sats.builder.build_sat(saliency, segmentation, pad_radius=1)

            shuffled = sats.SegmentationMap(
                grid=segmentation.grid,
                segments=tuple(segmentation.segments[index] for index in rng.permutation(len(segmentation.segments))),
                image_id=segmentation.image_id
            )

            other = sats.builder.build_sat(saliency, shuffled, pad_radius=1)

            self.assertEqual(sorted(other.rows, key=lambda row: row.segment_name), sorted(table.rows, key=lambda row: row.segment_name))

    def test_build_sat_ties(self):

        saliency = sats.SaliencyMap(grid=sats.ImageGrid(4, 4), values=np.full((4, 4), 0.5), method_tag="lrp")

        table = sats.builder.build_sat(saliency, quadrant_segmentation(), pad_radius=0)

        self.assertEqual(table.names, ["bottom_left", "bottom_right", "top_left", "top_right"])
        self.assertEqual([row.rank for row in table.rows], [2.5, 2.5, 2.5, 2.5])

    def test_build_entry(self):

        with tempfile.TemporaryDirectory() as directory:

            corpus = sats.unittest.MockCorpus(directory)
            corpus.add("img1", quadrant_saliency(), sats.unittest.quadrants(), method_tag="lrp")

            manifest = sats.ingest.load_manifest(corpus.write())

            table = sats.builder.build_entry(manifest.entries[0], pad_radius=0)

            saliency = sats.SaliencyMap(grid=sats.ImageGrid(4, 4), values=quadrant_saliency(), method_tag="lrp")

            self.assertEqual(table, sats.builder.build_sat(saliency, quadrant_segmentation("img1"), pad_radius=0))

            with unittest.mock.patch("sats.builder.build_sat", side_effect=sats.builder.BuildError("x", "oops")):
                self.assertRaisesRegex(sats.builder.BuildError, "img1/lrp: oops", sats.builder.build_entry, manifest.entries[0])

    def test_build_corpus(self):

        with tempfile.TemporaryDirectory() as directory:

            corpus = sats.unittest.MockCorpus(directory)

            rng = np.random.default_rng(5)

            for index in range(4):
                corpus.add(f"img{index}", rng.normal(0, 1, size=(4, 4)), sats.unittest.quadrants())

            manifest = sats.ingest.load_manifest(corpus.write())

            single = sats.builder.build_corpus(manifest, pad_radius=1)

            self.assertEqual([table.image_id for table in single], ["img0", "img1", "img2", "img3"])
            self.assertEqual(sats.builder.build_corpus(manifest, pad_radius=1, jobs=2), single)
