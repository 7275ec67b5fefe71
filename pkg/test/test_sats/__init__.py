import unittest
import unittest.mock

import sats

class TestSats(unittest.TestCase):

    maxDiff = None

    @unittest.mock.patch("sats.SOURCES", {})
    def test_register(self):

        source = unittest.mock.MagicMock()
        source.name = "a"

        sats.register(source)

        self.assertEqual(sats.SOURCES, {"a": source})

    @unittest.mock.patch("sats.SOURCES", {})
    def test_source(self):

        source = unittest.mock.MagicMock()

        sats.SOURCES["a"] = source

        self.assertEqual(sats.source("a"), source)
        self.assertIsNone(sats.source("b"))

    def test_builtin(self):

        self.assertIsInstance(sats.source("rle"), sats.RleSource)
        self.assertIsInstance(sats.source("mask_png"), sats.PngSource)
